#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "operators.hpp"

namespace twoscale {

struct CellSolveOptions {
  double solvability_tol = 1e-8;  ///< relative size of the admissible cell mean
  double residual_tol = 1e-9;     ///< relative equation residual accepted
  int dense_limit = 2048;         ///< Q·n above which the Krylov path is used
  double krylov_tol = 1e-13;
  int krylov_max_iter = 4000;
  double zero_floor = 1e-11;      ///< right-hand sides with smaller norm are treated as zero
  std::size_t cache_bytes = std::size_t(1) << 29;
};

/// Orthonormal basis of the kernel of the collocation cell operator: the
/// constant mode and the Nyquist-type modes (±1 patterns along any subset of
/// axes), once per component.
inline CMatrix cell_kernel_basis(const CellGrid& cg, int comp) {
  const int d = cg.dim();
  const int patterns = 1 << d;
  CMatrix Z = CMatrix::Zero(static_cast<Eigen::Index>(cg.size()) * comp, patterns * comp);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cg.size()));
  for (int pat = 0; pat < patterns; ++pat)
    for (int q = 0; q < cg.size(); ++q) {
      int parity = 0;
      for (int a = 0; a < d; ++a)
        if (pat & (1 << a)) parity += cg.axis_index(q, a);
      const double v = (parity % 2 == 0 ? 1.0 : -1.0) * scale;
      for (int c = 0; c < comp; ++c) Z(q * comp + c, pat * comp + c) = v;
    }
  return Z;
}

/// Per-axis discrete Fourier transform on the cell grid, used by the
/// Krylov preconditioner.
class CellFourier {
 public:
  CellFourier(const CellGrid& cg, int comp) : cg_(cg), comp_(comp) {
    const double pi = std::numbers::pi;
    for (int a = 0; a < cg.dim(); ++a) {
      const int K = cg.points(a);
      CMatrix F(K, K);
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l) F(k, l) = std::polar(1.0, -2.0 * pi * k * l / K);
      fwd_.push_back(F);
      inv_.push_back(F.adjoint() / static_cast<double>(K));
      Eigen::VectorXd sym(K);
      for (int k = 0; k < K; ++k) {
        const int kk = k <= K / 2 ? k : k - K;
        sym(k) = (2 * k == K) ? 0.0 : 2.0 * pi * kk / cg.period(a);
      }
      symbols_.push_back(sym);
    }
  }

  CVector forward(const CVector& v) const { return apply(v, fwd_); }
  CVector inverse(const CVector& v) const { return apply(v, inv_); }
  double symbol(int axis, int k) const { return symbols_[axis](k); }

 private:
  CVector apply(const CVector& v, const std::vector<CMatrix>& mats) const {
    CVector cur = v, nxt(v.size());
    for (int a = 0; a < cg_.dim(); ++a) {
      const int K = cg_.points(a);
      const int s = cg_.stride(a);
      for (int q = 0; q < cg_.size(); ++q) {
        const int i = cg_.axis_index(q, a);
        const int base = q - i * s;
        for (int c = 0; c < comp_; ++c) {
          cplx acc = 0.0;
          for (int l = 0; l < K; ++l) acc += mats[a](i, l) * cur((base + l * s) * comp_ + c);
          nxt(q * comp_ + c) = acc;
        }
      }
      cur.swap(nxt);
    }
    return cur;
  }

  CellGrid cg_;
  int comp_;
  std::vector<CMatrix> fwd_, inv_;
  std::vector<Eigen::VectorXd> symbols_;
};

/// Periodic solver for B(∂ξ)* A(x, ·) B(∂ξ) v = f with zero-mean selection,
/// one independent problem per spatial node.  Uses a dense Cholesky of the
/// kernel-regularized operator at desk scale and preconditioned conjugate
/// gradients above `dense_limit` unknowns per node.
class CellSolver {
 public:
  CellSolver(const TwoScaleOps& ops, CellSolveOptions opt = {})
      : ops_(&ops), opt_(opt), Z_(cell_kernel_basis(ops.cell(), ops.n())) {
    size_ = ops.Q() * ops.n();
    dense_ = size_ <= opt_.dense_limit;
    x_dependent_ = ops.A().x_dependent;
    const std::size_t per_node = static_cast<std::size_t>(size_) * size_ * sizeof(cplx);
    const std::size_t nodes = x_dependent_ ? static_cast<std::size_t>(ops.X()) : 1;
    cache_all_ = dense_ && per_node * nodes <= opt_.cache_bytes;
    if (cache_all_) factors_.resize(nodes);
  }

  const CellSolveOptions& options() const { return opt_; }
  const CMatrix& kernel() const { return Z_; }
  bool uses_dense() const { return dense_; }

  /// Dense cell operator at spatial node j.
  CMatrix operator_at(int j) const {
    const auto& ops = *ops_;
    std::vector<CTriplet> t;
    const int m = ops.m();
    for (int q = 0; q < ops.Q(); ++q) {
      const cplx* a = ops.A().at(j, q);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) t.emplace_back(q * m + r, q * m + c, a[r + c * m]);
    }
    CSparse Ablk(ops.Q() * m, ops.Q() * m);
    Ablk.setFromTriplets(t.begin(), t.end());
    return CMatrix(ops.DB_adjoint() * Ablk * ops.DB());
  }

  /// Solves at every spatial node.  f is (Q·n) × X.  The solvability check
  /// compares the L2 norm of the cell mean with that of f over the whole
  /// spatial grid, so nodes where f is at roundoff level cannot trip it.
  /// When f is assembled from several terms that cancel, `scale` is the
  /// combined norm of those terms; the mean is then judged against it, since
  /// cancellation leaves a roundoff mean that is large only relative to f.
  CMatrix solve(const CMatrix& f, double scale = 0.0) const {
    const auto& ops = *ops_;
    require(f.rows() == size_ && f.cols() == ops.X(), ErrorCode::InvalidArgument, "cell rhs has wrong shape");
    const double fn = f.norm();
    last_solvability_ = 0.0;
    last_residual_ = 0.0;
    if (fn <= opt_.zero_floor) return CMatrix::Zero(f.rows(), f.cols());
    const double ref = std::max(fn, scale);
    const double mn = ops.mean(f, ops.n()).norm() * std::sqrt(static_cast<double>(ops.Q()));
    last_solvability_ = mn / ref;
    if (mn > opt_.solvability_tol * ref)
      throw Error(ErrorCode::NonSolvable, "cell right-hand side has nonzero mean (relative " +
                                              std::to_string(mn / ref) + ")");
    CMatrix fp = f - Z_ * (Z_.adjoint() * f);
    // nothing but roundoff left once the admissible mean is removed
    if (fp.norm() <= 1e-14 * ref) return CMatrix::Zero(f.rows(), f.cols());
    CMatrix v(f.rows(), f.cols());
    if (dense_ && !x_dependent_) {
      v = factor(0).solve(fp);
    } else {
      for (int j = 0; j < ops.X(); ++j) v.col(j) = solve_projected(j, fp.col(j));
    }
    v -= Z_ * (Z_.adjoint() * v);
    const CMatrix r = ops.cell_op(v) - fp;
    last_residual_ = r.norm() / std::max(fp.norm(), 1e-300);
    if (last_residual_ > opt_.residual_tol)
      throw Error(ErrorCode::SolverBreakdown, "cell solve residual " + std::to_string(last_residual_));
    return v;
  }

  /// Single-node solve with a per-node solvability check.
  CVector solve_node(int j, const CVector& f) const {
    const auto& ops = *ops_;
    require(f.size() == size_, ErrorCode::InvalidArgument, "cell rhs has wrong size");
    const double fn = f.norm();
    if (fn == 0.0) return CVector::Zero(size_);
    const double mn = ops.mean(f, ops.n()).norm() * std::sqrt(static_cast<double>(ops.Q()));
    if (mn > opt_.solvability_tol * fn)
      throw Error(ErrorCode::NonSolvable, "cell right-hand side has nonzero mean");
    const CVector fp = f - Z_ * (Z_.adjoint() * f);
    CVector v = solve_projected(j, fp);
    v -= Z_ * (Z_.adjoint() * v);
    const CVector r = operator_at(j) * v - fp;
    const double res = r.norm() / std::max(fp.norm(), 1e-300);
    if (res > opt_.residual_tol) throw Error(ErrorCode::SolverBreakdown, "cell solve residual too large");
    return v;
  }

  double last_residual() const { return last_residual_; }
  double last_solvability_ratio() const { return last_solvability_; }

 private:
  using Factor = Eigen::LLT<CMatrix>;

  Factor make_factor(int j) const {
    CMatrix L = operator_at(j);
    const double s = std::max(L.diagonal().real().cwiseAbs().mean(), 1.0);
    L += s * (Z_ * Z_.adjoint());
    Factor llt(L);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SolverBreakdown, "cell operator factorization failed");
    return llt;
  }

  const Factor& factor(int j) const {
    const std::size_t idx = x_dependent_ ? static_cast<std::size_t>(j) : 0;
    if (cache_all_) {
      if (!factors_[idx]) factors_[idx] = std::make_unique<Factor>(make_factor(j));
      return *factors_[idx];
    }
    scratch_ = std::make_unique<Factor>(make_factor(j));
    return *scratch_;
  }

  CVector solve_projected(int j, const CVector& fp) const {
    if (dense_) return factor(j).solve(fp);
    return krylov(j, fp);
  }

  /// Conjugate gradients on the kernel-complement with a Fourier
  /// preconditioner built from the cell-averaged coefficient.
  CVector krylov(int j, const CVector& fp) const {
    const auto& ops = *ops_;
    if (!fourier_) fourier_ = std::make_unique<CellFourier>(ops.cell(), ops.n());
    const int m = ops.m(), n = ops.n(), d = ops.d();
    CMatrix Abar = CMatrix::Zero(m, m);
    for (int q = 0; q < ops.Q(); ++q) Abar += Eigen::Map<const CMatrix>(ops.A().at(j, q), m, m);
    Abar /= static_cast<double>(ops.Q());
    std::vector<CMatrix> blocks(ops.Q());
    for (int q = 0; q < ops.Q(); ++q) {
      CMatrix Bz = CMatrix::Zero(m, n);
      bool kernel_mode = true;
      for (int a = 0; a < d; ++a) {
        const double k = fourier_->symbol(a, ops.cell().axis_index(q, a));
        if (k != 0.0) kernel_mode = false;
        Bz += k * ops.spec().B[a];
      }
      blocks[q] = kernel_mode ? CMatrix(CMatrix::Identity(n, n)) : CMatrix((Bz.adjoint() * Abar * Bz).inverse());
    }
    auto precond = [&](const CVector& r) {
      CVector rh = fourier_->forward(r);
      CVector zh(rh.size());
      for (int q = 0; q < ops.Q(); ++q) zh.segment(q * n, n) = blocks[q] * rh.segment(q * n, n);
      CVector z = fourier_->inverse(zh);
      return CVector(z - Z_ * (Z_.adjoint() * z));
    };
    std::vector<CTriplet> t;
    for (int q = 0; q < ops.Q(); ++q) {
      const cplx* a = ops.A().at(j, q);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) t.emplace_back(q * m + r, q * m + c, a[r + c * m]);
    }
    CSparse Ablk(ops.Q() * m, ops.Q() * m);
    Ablk.setFromTriplets(t.begin(), t.end());
    auto apply = [&](const CVector& v) { return CVector(ops.DB_adjoint() * (Ablk * (ops.DB() * v))); };

    CVector x = CVector::Zero(fp.size());
    CVector r = fp;
    CVector z = precond(r);
    CVector p = z;
    cplx rz = r.dot(z);
    const double target = opt_.krylov_tol * std::max(fp.norm(), 1e-300);
    for (int it = 0; it < opt_.krylov_max_iter; ++it) {
      if (r.norm() <= target) return x;
      const CVector Ap = apply(p);
      const cplx alpha = rz / p.dot(Ap);
      x += alpha * p;
      r -= alpha * Ap;
      z = precond(r);
      const cplx rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    if (r.norm() <= 1e3 * target) return x;
    throw Error(ErrorCode::SolverBreakdown, "cell Krylov iteration did not converge");
  }

  const TwoScaleOps* ops_;
  CellSolveOptions opt_;
  CMatrix Z_;
  int size_ = 0;
  bool dense_ = true;
  bool x_dependent_ = false;
  bool cache_all_ = false;
  mutable std::vector<std::unique_ptr<Factor>> factors_;
  mutable std::unique_ptr<Factor> scratch_;
  mutable std::unique_ptr<CellFourier> fourier_;
  mutable double last_residual_ = 0.0;
  mutable double last_solvability_ = 0.0;
};

/// Correctors Λ1 (n×m) and Λ0 (n×n) stored column by column as two-scale
/// fields with n components, plus their cell gradients B(∂ξ)Λ.
struct CellSolution {
  std::vector<CMatrix> Lambda1;   ///< m entries, each (Q·n) × X
  std::vector<CMatrix> Lambda0;   ///< n entries, each (Q·n) × X
  std::vector<CMatrix> BLambda1;  ///< m entries, each (Q·m) × X
  std::vector<CMatrix> BLambda0;  ///< n entries, each (Q·m) × X
  double max_mean = 0.0;          ///< largest cell mean over all columns
  double max_residual = 0.0;      ///< largest relative equation residual
};

/// ∂ξ_i of the conjugate-transposed a_i samples, column k, as an
/// n-component two-scale field.
inline CMatrix lambda0_rhs(const TwoScaleOps& ops, int k) {
  const int n = ops.n();
  CMatrix rhs = CMatrix::Zero(static_cast<Eigen::Index>(ops.Q()) * n, ops.X());
  for (std::size_t i = 0; i < ops.a().size(); ++i) {
    const SampledField& a = ops.a()[i];
    if (a.zero || !a.xi_dependent) continue;
    CMatrix col(static_cast<Eigen::Index>(ops.Q()) * n, ops.X());
    for (int j = 0; j < ops.X(); ++j)
      for (int q = 0; q < ops.Q(); ++q) {
        const cplx* f = a.at(j, q);
        for (int r = 0; r < n; ++r) col(q * n + r, j) = std::conj(f[k + r * n]);  // (a*)_{r k}
      }
    const CMatrix dcol = ops.xi_diff(static_cast<int>(i)) * col;
    rhs += apply_pointwise(ops.b()[i], dcol, ops.Q(), true);
  }
  return rhs;
}

/// Λ1: B(∂ξ)*A B(∂ξ)Λ1 = −B(∂ξ)*A E_m;  Λ0: B(∂ξ)*A B(∂ξ)Λ0 = Σ b_i* ∂ξ_i a_i*.
inline CellSolution compute_correctors(const TwoScaleOps& ops, const CellSolver& solver) {
  CellSolution cs;
  const int m = ops.m(), n = ops.n(), Q = ops.Q();
  double res = 0.0;
  for (int k = 0; k < m; ++k) {
    CMatrix w = CMatrix::Zero(static_cast<Eigen::Index>(Q) * m, ops.X());
    if (ops.A().xi_dependent) {
      for (int j = 0; j < ops.X(); ++j)
        for (int q = 0; q < Q; ++q) {
          const cplx* a = ops.A().at(j, q);
          for (int r = 0; r < m; ++r) w(q * m + r, j) = a[r + k * m];
        }
    }
    const CMatrix rhs = -ops.xi_grad_adjoint(w);
    CMatrix L1 = solver.solve(rhs);
    res = std::max(res, solver.last_residual());
    cs.BLambda1.push_back(ops.xi_grad(L1));
    cs.Lambda1.push_back(std::move(L1));
  }
  for (int k = 0; k < n; ++k) {
    CMatrix L0 = ops.a().empty() ? CMatrix::Zero(static_cast<Eigen::Index>(Q) * n, ops.X())
                                 : solver.solve(lambda0_rhs(ops, k));
    res = std::max(res, solver.last_residual());
    cs.BLambda0.push_back(ops.xi_grad(L0));
    cs.Lambda0.push_back(std::move(L0));
  }
  double mx = 0.0;
  for (const auto& L : cs.Lambda1) mx = std::max(mx, max_abs(ops.mean(L, n)));
  for (const auto& L : cs.Lambda0) mx = std::max(mx, max_abs(ops.mean(L, n)));
  cs.max_mean = mx;
  cs.max_residual = res;
  return cs;
}

/// Corrector map (Λ1 B(∂x) + Λ0) φ for a spatial field φ (n × X).
inline CMatrix apply_corrector(const TwoScaleOps& ops, const CellSolution& cs, const CMatrix& phi) {
  const CMatrix g = ops.Bx(phi, 1);
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(ops.Q()) * ops.n(), ops.X());
  for (int k = 0; k < ops.m(); ++k) out += cs.Lambda1[k] * g.row(k).asDiagonal();
  for (int k = 0; k < ops.n(); ++k) out += cs.Lambda0[k] * phi.row(k).asDiagonal();
  return out;
}

/// Υ1^{(i)} = (Λ1 B(∂x) + Λ0) Ψ0^{(i)} for each basis function.
inline std::vector<CMatrix> compute_upsilon1(const TwoScaleOps& ops, const CellSolution& cs,
                                             const std::vector<CMatrix>& psi) {
  std::vector<CMatrix> out;
  for (const auto& p : psi) out.push_back(apply_corrector(ops, cs, p));
  return out;
}

/// Υ2^{(i)}: B(∂ξ)*A B(∂ξ)Υ2 = −K_{-1}Υ1 − K_0 Ψ0 + λ0 Ψ0.
inline std::vector<CMatrix> compute_upsilon2(const TwoScaleOps& ops, const CellSolver& solver,
                                             const std::vector<CMatrix>& upsilon1,
                                             const std::vector<CMatrix>& psi, double lambda0) {
  std::vector<CMatrix> out;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const CMatrix P = ops.lift(psi[i]);
    const CMatrix K1 = ops.K_minus1(upsilon1[i]), K0P = ops.K0(P);
    const CMatrix rhs = -K1 - K0P + lambda0 * P;
    out.push_back(solver.solve(rhs, K1.norm() + K0P.norm() + std::abs(lambda0) * P.norm()));
  }
  return out;
}

}  // namespace twoscale
