#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cell.hpp"
#include "stencil.hpp"

namespace twoscale {

/// Homogenized coefficients per spatial node and the discrete operator H0.
///
/// The diagonal second-order part is discretized in compact flux form with
/// the cell-averaged coefficient ⟨A⟩ on edges; the corrector contribution
/// A2 − ⟨A⟩ and the mixed terms use centered differences.  With this split
/// H0 coincides exactly with the cell average of K_{-1}(Λ1B(∂x)+Λ0) + K_0
/// on the same grid, which keeps every downstream solvability condition at
/// roundoff level.
struct HomogenizedOperator {
  int d = 1, n = 1, m = 1;
  std::vector<CMatrix> A2;      ///< m×m per node
  std::vector<CMatrix> A_mean;  ///< ⟨A⟩, m×m per node
  std::vector<CMatrix> G0;      ///< ⟨A B(∂ξ)Λ0⟩, m×n per node
  std::vector<std::vector<CMatrix>> A1_first;  ///< [node][axis] n×n
  std::vector<CMatrix> A1_zero;                ///< n×n per node
  std::vector<CMatrix> A0;                     ///< n×n per node
  std::vector<std::vector<CMatrix>> a_mean;    ///< [axis][node] ⟨a_i⟩
  std::vector<std::vector<CMatrix>> b;         ///< [axis][node] b_i
  std::vector<CMatrix> B;                      ///< B_i
  CSparse H0;
  double symmetrization_defect = 0.0;
};

/// A2(x) = ⟨A (B(∂ξ)Λ1 + E_m)⟩.
inline std::vector<CMatrix> assemble_A2(const TwoScaleOps& ops, const CellSolution& cs) {
  const int m = ops.m();
  std::vector<CMatrix> out(ops.X(), CMatrix::Zero(m, m));
  for (int k = 0; k < m; ++k) {
    CMatrix w = cs.BLambda1[k];
    for (int q = 0; q < ops.Q(); ++q) w.row(q * m + k).array() += 1.0;
    const CMatrix mean = ops.mean(ops.mul_A(w), m);
    for (int j = 0; j < ops.X(); ++j) out[j].col(k) = mean.col(j);
  }
  return out;
}

/// ⟨A⟩ per node.
inline std::vector<CMatrix> assemble_A_mean(const TwoScaleOps& ops) {
  std::vector<CMatrix> out(ops.X());
  for (int j = 0; j < ops.X(); ++j) out[j] = cell_mean(ops.A(), j, ops.Q());
  return out;
}

/// G0(x) = ⟨A B(∂ξ)Λ0⟩, the integrand of the first two first-order terms.
inline std::vector<CMatrix> assemble_G0(const TwoScaleOps& ops, const CellSolution& cs) {
  const int m = ops.m(), n = ops.n();
  std::vector<CMatrix> out(ops.X(), CMatrix::Zero(m, n));
  for (int k = 0; k < n; ++k) {
    const CMatrix mean = ops.mean(ops.mul_A(cs.BLambda0[k]), m);
    for (int j = 0; j < ops.X(); ++j) out[j].col(k) = mean.col(j);
  }
  return out;
}

/// A0(x) = −⟨(B(∂ξ)Λ0)* A B(∂ξ)Λ0⟩ + ⟨V⟩.
inline std::vector<CMatrix> assemble_A0(const TwoScaleOps& ops, const CellSolution& cs) {
  const int n = ops.n();
  std::vector<CMatrix> out(ops.X(), CMatrix::Zero(n, n));
  std::vector<CMatrix> ABL0;
  for (int k = 0; k < n; ++k) ABL0.push_back(ops.mul_A(cs.BLambda0[k]));
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < n; ++k) {
      const Eigen::RowVectorXcd s =
          (cs.BLambda0[r].conjugate().cwiseProduct(ABL0[k])).colwise().sum() / static_cast<double>(ops.Q());
      for (int j = 0; j < ops.X(); ++j) out[j](r, k) = -s(j);
    }
  for (int j = 0; j < ops.X(); ++j) out[j] += cell_mean(ops.V(), j, ops.Q());
  return out;
}

/// First-order coefficients of A1(x, ∂) = B(∂)* G0 · + G0* B(∂) + ⟨a(x,ξ,∂)⟩,
/// split by the product rule into Σ A1_first[p] ∂_p + A1_zero.
inline void assemble_A1(const TwoScaleOps& ops, HomogenizedOperator& hom) {
  const int n = ops.n(), d = ops.d(), X = ops.X();
  hom.A1_first.assign(X, std::vector<CMatrix>(d, CMatrix::Zero(n, n)));
  hom.A1_zero.assign(X, CMatrix::Zero(n, n));
  // pack G0 for finite differences: each node column holds G0 column-major
  CMatrix G0pack(ops.m() * n, X);
  for (int j = 0; j < X; ++j) G0pack.col(j) = Eigen::Map<const CVector>(hom.G0[j].data(), ops.m() * n);
  for (int p = 0; p < d; ++p) {
    const CMatrix& Bp = ops.spec().B[p];
    const CMatrix dG = x_diff(ops.spatial(), G0pack, p);
    CMatrix apack, bpack;
    const bool first = !hom.a_mean.empty();
    if (first) {
      apack.resize(n * n, X);
      bpack.resize(n * n, X);
      for (int j = 0; j < X; ++j) {
        CMatrix ac = hom.a_mean[p][j].adjoint();
        apack.col(j) = Eigen::Map<const CVector>(ac.data(), n * n);
        bpack.col(j) = Eigen::Map<const CVector>(hom.b[p][j].data(), n * n);
      }
      apack = x_diff(ops.spatial(), apack, p);
      bpack = x_diff(ops.spatial(), bpack, p);
    }
    for (int j = 0; j < X; ++j) {
      CMatrix& F = hom.A1_first[j][p];
      F = -Bp.adjoint() * hom.G0[j] + hom.G0[j].adjoint() * Bp;
      const Eigen::Map<const CMatrix> dGj(dG.col(j).data(), ops.m(), n);
      hom.A1_zero[j] -= Bp.adjoint() * dGj;
      if (first) {
        const CMatrix& am = hom.a_mean[p][j];
        const CMatrix& bj = hom.b[p][j];
        F += am * bj - bj.adjoint() * am.adjoint();
        const Eigen::Map<const CMatrix> dac(apack.col(j).data(), n, n);
        const Eigen::Map<const CMatrix> db(bpack.col(j).data(), n, n);
        hom.A1_zero[j] += am * db - bj.adjoint() * dac;
      }
    }
  }
}

/// Residuals of the two integral identities linking Λ0, Λ1 and a_i:
///   ⟨(B(∂ξ)Λ0)* A⟩ = Σ ⟨a_i b_i ∂ξ_i Λ1⟩,
///   ⟨(B(∂ξ)Λ0)* A B(∂ξ)Λ0⟩ = −Σ ⟨a_i b_i ∂ξ_i Λ0⟩.
struct IdentityReport {
  double first = 0.0;
  double second = 0.0;
};

inline IdentityReport identity_residuals(const TwoScaleOps& ops, const CellSolution& cs) {
  const int n = ops.n(), m = ops.m(), X = ops.X();
  auto a_term = [&](const CMatrix& L) {
    CMatrix acc = CMatrix::Zero(L.rows(), L.cols());
    for (std::size_t i = 0; i < ops.a().size(); ++i) {
      if (ops.a()[i].zero) continue;
      acc += apply_pointwise(ops.a()[i], apply_pointwise(ops.b()[i], ops.xi_diff(static_cast<int>(i)) * L, ops.Q()),
                             ops.Q());
    }
    return CMatrix(ops.mean(acc, n));
  };
  std::vector<CMatrix> ABL0;
  for (int k = 0; k < n; ++k) ABL0.push_back(ops.mul_A(cs.BLambda0[k]));
  IdentityReport rep;
  // first identity, column k of the n×m matrices
  std::vector<CMatrix> lhs1(X, CMatrix::Zero(n, m)), rhs1(X, CMatrix::Zero(n, m));
  for (int k = 0; k < m; ++k) {
    CMatrix w = CMatrix::Zero(static_cast<Eigen::Index>(ops.Q()) * m, X);
    for (int q = 0; q < ops.Q(); ++q) w.row(q * m + k).setOnes();
    const CMatrix Aw = ops.mul_A(w);  // column k of A
    for (int r = 0; r < n; ++r) {
      const Eigen::RowVectorXcd s =
          (cs.BLambda0[r].conjugate().cwiseProduct(Aw)).colwise().sum() / static_cast<double>(ops.Q());
      for (int j = 0; j < X; ++j) lhs1[j](r, k) = s(j);
    }
    const CMatrix rk = a_term(cs.Lambda1[k]);
    for (int j = 0; j < X; ++j) rhs1[j].col(k) = rk.col(j);
  }
  for (int j = 0; j < X; ++j) rep.first = std::max(rep.first, (lhs1[j] - rhs1[j]).norm());
  std::vector<CMatrix> lhs2(X, CMatrix::Zero(n, n)), rhs2(X, CMatrix::Zero(n, n));
  for (int k = 0; k < n; ++k) {
    for (int r = 0; r < n; ++r) {
      const Eigen::RowVectorXcd s =
          (cs.BLambda0[r].conjugate().cwiseProduct(ABL0[k])).colwise().sum() / static_cast<double>(ops.Q());
      for (int j = 0; j < X; ++j) lhs2[j](r, k) = s(j);
    }
    const CMatrix rk = a_term(cs.Lambda0[k]);
    for (int j = 0; j < X; ++j) rhs2[j].col(k) = -rk.col(j);
  }
  for (int j = 0; j < X; ++j) rep.second = std::max(rep.second, (lhs2[j] - rhs2[j]).norm());
  return rep;
}

/// Throws IdentityViolation when either residual exceeds `tol`.
inline IdentityReport check_identities(const TwoScaleOps& ops, const CellSolution& cs, double tol = 1e-6) {
  const IdentityReport rep = identity_residuals(ops, cs);
  if (rep.first > tol || rep.second > tol)
    throw Error(ErrorCode::IdentityViolation, "corrector identities violated (" + std::to_string(rep.first) + ", " +
                                                  std::to_string(rep.second) + ")");
  return rep;
}

/// Discrete H0 = B(∂)*A2B(∂) + A1(x,∂) + A0 on the spatial grid, hard
/// symmetrized; the removed defect is recorded.
inline CSparse assemble_H0(HomogenizedOperator& hom, const SpatialGrid& sg) {
  const int d = hom.d, n = hom.n, X = sg.size();
  StencilAssembler st(sg, n);
  std::vector<CMatrix> G1(X);
  for (int j = 0; j < X; ++j) G1[j] = hom.A2[j] - hom.A_mean[j];
  for (int p = 0; p < d; ++p) {
    const CMatrix& Bp = hom.B[p];
    st.add_compact(
        p, Bp,
        [&](int j, int k) { return k < 0 ? CMatrix(hom.A_mean[j]) : CMatrix(0.5 * (hom.A_mean[j] + hom.A_mean[k])); },
        [&](int j) { return CMatrix(hom.A_mean[j]); });
    for (int q = 0; q < d; ++q) {
      if (q != p) st.add_centered(p, q, Bp, hom.B[q], [&](int k) { return CMatrix(hom.A_mean[k]); });
      st.add_centered(p, q, Bp, hom.B[q], [&](int k) { return CMatrix(G1[k]); });
    }
    // B(∂x)*(G0 ·) = −Σ B_p* D_p(G0 ·)
    const CMatrix mBpa = -Bp.adjoint();
    st.add_first_order(p, [&](int) { return mBpa; }, [&](int k) { return CMatrix(hom.G0[k]); });
    // G0* B(∂x)
    st.add_first_order(p, [&](int j) { return CMatrix(hom.G0[j].adjoint() * Bp); },
                       [&](int) { return CMatrix(CMatrix::Identity(n, n)); });
    if (!hom.a_mean.empty()) {
      st.add_first_order(p, [&](int j) { return CMatrix(hom.a_mean[p][j]); },
                         [&](int k) { return CMatrix(hom.b[p][k]); });
      st.add_first_order(p, [&](int j) { return CMatrix(-hom.b[p][j].adjoint()); },
                         [&](int k) { return CMatrix(hom.a_mean[p][k].adjoint()); });
    }
  }
  st.add_diagonal([&](int j) { return CMatrix(hom.A0[j]); });
  CSparse H = st.build();
  hom.symmetrization_defect = symmetrize(H);
  return H;
}

/// Runs every coefficient assembly and builds H0.
inline HomogenizedOperator homogenize(const TwoScaleOps& ops, const CellSolution& cs) {
  HomogenizedOperator hom;
  hom.d = ops.d();
  hom.n = ops.n();
  hom.m = ops.m();
  hom.B = ops.spec().B;
  hom.A2 = assemble_A2(ops, cs);
  hom.A_mean = assemble_A_mean(ops);
  hom.G0 = assemble_G0(ops, cs);
  hom.A0 = assemble_A0(ops, cs);
  if (!ops.a().empty()) {
    hom.a_mean.assign(ops.d(), {});
    hom.b.assign(ops.d(), {});
    for (int p = 0; p < ops.d(); ++p)
      for (int j = 0; j < ops.X(); ++j) {
        hom.a_mean[p].push_back(cell_mean(ops.a()[p], j, ops.Q()));
        hom.b[p].push_back(ops.b()[p].matrix(j, 0));
      }
  }
  assemble_A1(ops, hom);
  hom.H0 = assemble_H0(hom, ops.spatial());
  return hom;
}

/// Writes A2, A1 and A0 per node as CSV: coordinates followed by row-major
/// entries with real and imaginary parts in adjacent columns.
inline void write_homogenized_csv(std::ostream& os, const HomogenizedOperator& hom, const SpatialGrid& sg) {
  auto header_block = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        os << ',' << name << '_' << r + 1 << '_' << c + 1 << "_re," << name << '_' << r + 1 << '_' << c + 1 << "_im";
  };
  for (int a = 0; a < sg.dim(); ++a) os << (a ? "," : "") << 'x' << a + 1;
  header_block("A2", hom.m, hom.m);
  for (int p = 0; p < hom.d; ++p) header_block("A1d" + std::to_string(p + 1), hom.n, hom.n);
  header_block("A1z", hom.n, hom.n);
  header_block("A0", hom.n, hom.n);
  os << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.12e", v);
    os << buf;
  };
  auto put_block = [&](const CMatrix& M) {
    for (Eigen::Index r = 0; r < M.rows(); ++r)
      for (Eigen::Index c = 0; c < M.cols(); ++c) {
        put(M(r, c).real());
        put(M(r, c).imag());
      }
  };
  for (int j = 0; j < sg.size(); ++j) {
    for (int a = 0; a < sg.dim(); ++a) {
      std::snprintf(buf, sizeof buf, "%s%.12e", a ? "," : "", sg.coord(j, a));
      os << buf;
    }
    put_block(hom.A2[j]);
    for (int p = 0; p < hom.d; ++p) put_block(hom.A1_first[j][p]);
    put_block(hom.A1_zero[j]);
    put_block(hom.A0[j]);
    os << '\n';
  }
}

}  // namespace twoscale
