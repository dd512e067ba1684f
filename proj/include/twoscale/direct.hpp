#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "corrections.hpp"
#include "stencil.hpp"

namespace twoscale {

/// Fine grid on [−L, L]^d whose spacing along axis a is at most εP_a/p.
/// When 2L is a multiple of εP_a/p the nodes sit on a periodic sub-lattice
/// of the ε-cell.
inline SpatialGrid fine_grid(const std::vector<double>& periods, double L, double eps, int points_per_period) {
  require(eps > 0.0 && points_per_period > 0, ErrorCode::InvalidArgument, "fine grid needs ε > 0 and p > 0");
  std::vector<int> M;
  for (double P : periods) {
    const double h = eps * P / points_per_period;
    const long intervals = static_cast<long>(std::ceil(2.0 * L / h - 1e-9));
    require(intervals < (1L << 30), ErrorCode::InvalidArgument, "fine grid too large");
    M.push_back(static_cast<int>(intervals) + 1);
  }
  return SpatialGrid(L, M);
}

struct AssembledOperator {
  CSparse H;
  double hermiticity_defect = 0.0;  ///< before the final symmetrization
};

/// Discrete H_ε = B(∂)*A(x, x/ε)B(∂) + a_ε(x, ∂) + V(x, x/ε) with Dirichlet
/// ghosts.  Coefficients are evaluated through the closures at the exact
/// points: A on cell edges (midpoints) for the compact diagonal blocks and
/// at nodes for mixed derivatives, a, b and V at nodes.  Without any
/// ξ-dependence there is nothing to resolve: edge values are then the mean
/// of the two node values, which reproduces the homogenized stencil on the
/// same grid.
inline AssembledOperator assemble_H_eps(const ProblemSpec& spec, double eps, const SpatialGrid& fine) {
  const bool slow_only = spec.xi_independent();
  if (!slow_only) check_resolution(fine, spec.periods, eps);
  const int d = spec.d, n = spec.n, m = spec.m, X = fine.size();
  StencilAssembler st(fine, n);
  auto at = [&](const MatrixField& f, const double* x) {
    double xi[8];
    for (int a = 0; a < d; ++a) xi[a] = x[a] / eps;
    return f(x, xi);
  };
  auto node_value = [&](const MatrixField& f) {
    std::vector<CMatrix> out(X);
    std::vector<double> x(d);
    for (int j = 0; j < X; ++j) {
      fine.coords(j, x.data());
      out[j] = at(f, x.data());
    }
    return out;
  };
  std::vector<CMatrix> A_node;
  if (d > 1) A_node = node_value(spec.A);
  for (int p = 0; p < d; ++p) {
    const double h = fine.spacing(p);
    auto shifted = [&](int j, double shift) {
      std::vector<double> x(d);
      fine.coords(j, x.data());
      if (slow_only) {
        const CMatrix here = at(spec.A, x.data());
        x[p] += 2.0 * shift;
        return CMatrix(0.5 * (here + at(spec.A, x.data())));
      }
      x[p] += shift;
      return at(spec.A, x.data());
    };
    st.add_compact(
        p, spec.B[p], [&](int j, int) { return shifted(j, 0.5 * h); }, [&](int j) { return shifted(j, -0.5 * h); });
    for (int q = 0; q < d; ++q)
      if (q != p) st.add_centered(p, q, spec.B[p], spec.B[q], [&](int k) { return CMatrix(A_node[k]); });
  }
  (void)m;
  if (spec.has_first_order()) {
    for (int p = 0; p < d; ++p) {
      if (spec.a[p].zero) continue;
      const std::vector<CMatrix> ap = node_value(spec.a[p]);
      const std::vector<CMatrix> bp = node_value(spec.b[p]);
      st.add_first_order(p, [&](int j) { return CMatrix(ap[j]); }, [&](int k) { return CMatrix(bp[k]); });
      st.add_first_order(p, [&](int j) { return CMatrix(-bp[j].adjoint()); },
                         [&](int k) { return CMatrix(ap[k].adjoint()); });
    }
  }
  if (!spec.V.zero) {
    const std::vector<CMatrix> V = node_value(spec.V);
    st.add_diagonal([&](int j) { return CMatrix(V[j]); });
  }
  AssembledOperator out;
  out.H = st.build();
  out.hermiticity_defect = symmetrize(out.H);
  return out;
}

/// Eigenpairs of H in [center − radius, center + radius]; the count must
/// equal `expected`.
inline EigenPairs eigen_near(const CSparse& H, double center, double radius, int expected,
                             const EigenOptions& opt = {}) {
  EigenPairs ep = eigen_window(H, center - radius, center + radius, expected, opt);
  if (ep.values.size() != expected)
    throw Error(ErrorCode::CountMismatch, "found " + std::to_string(ep.values.size()) + " eigenvalues near " +
                                              std::to_string(center) + ", expected " + std::to_string(expected));
  return ep;
}

/// Permutation σ maximizing Σ_i overlap(i, σ(i)).
inline std::vector<int> best_assignment(const Eigen::MatrixXd& overlap) {
  const int N = static_cast<int>(overlap.rows());
  std::vector<int> perm(N), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_score = -1.0;
  do {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += overlap(i, perm[i]);
    if (s > best_score + 1e-14) {
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct SlopeFit {
  std::optional<double> slope;
  double intercept = 0.0;
  bool exact = false;            ///< every value below the exactness threshold
  bool dropped_largest = false;  ///< pre-asymptotic point discarded
  int points = 0;
};

/// Least-squares slope of log v against log ε.  The largest ε is discarded
/// when it deviates by more than 25% from the fit and at least three
/// points would remain with it.
inline SlopeFit fit_slope(const std::vector<double>& eps, const std::vector<double>& values, double exact_tol) {
  SlopeFit fit;
  int finite = 0;
  bool all_small = true;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!std::isfinite(values[k])) continue;
    ++finite;
    if (std::abs(values[k]) >= exact_tol) all_small = false;
  }
  if (finite > 0 && all_small) {
    fit.exact = true;
    return fit;
  }
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < eps.size(); ++k)
    if (std::isfinite(values[k]) && values[k] > 0.0) idx.push_back(k);
  auto solve = [&](std::size_t first, double& slope, double& icpt) {
    const std::size_t cnt = idx.size() - first;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = first; r < idx.size(); ++r) {
      const double x = std::log(eps[idx[r]]), y = std::log(values[idx[r]]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double den = cnt * sxx - sx * sx;
    slope = (cnt * sxy - sx * sy) / den;
    icpt = (sy - slope * sx) / cnt;
  };
  if (idx.size() < 2) return fit;
  double s = 0, c = 0;
  solve(0, s, c);
  if (idx.size() >= 3) {
    const std::size_t k0 = idx[0];  // ε sorted descending: first is the largest
    const double predicted = std::exp(c + s * std::log(eps[k0]));
    if (std::abs(values[k0] / predicted - 1.0) > 0.25) {
      fit.dropped_largest = true;
      solve(1, s, c);
    }
  }
  fit.slope = s;
  fit.intercept = c;
  fit.points = static_cast<int>(idx.size()) - (fit.dropped_largest ? 1 : 0);
  return fit;
}

struct SweepOptions {
  int points_per_period = 32;
  double radius = 0.0;           ///< eigen window half-width; 0 picks half the homogenized gap
  double L = 0.0;                ///< fine-grid half width; 0 reuses the coarse one
  EigenOptions eig;
  bool residuals = true;
};

struct SweepRow {
  double eps = 0.0;
  int branch = 0;
  double lambda_direct = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> lambda_exp;  ///< k = 0..K
  std::vector<double> err;         ///< k = 0..K
  std::vector<double> res;         ///< k = 1..K
  double overlap = 0.0;
};

struct SweepReport {
  std::string problem;
  std::vector<double> eps;   ///< strictly decreasing
  int K = 0;
  int N = 0;
  double lambda0 = 0.0;            ///< grid value used by the ledger
  double lambda0_reference = 0.0;  ///< value the eigenvalue errors refer to
  std::vector<std::vector<double>> tau_lambda;  ///< lambda[j][i], j ≥ 1
  std::vector<SweepRow> rows;      ///< ε-major, branch-minor
  std::vector<std::vector<SlopeFit>> err_slopes;  ///< [branch][k], k = 0..K
  std::vector<std::vector<SlopeFit>> res_slopes;  ///< [branch][k−1], k = 1..K
  std::vector<int> direct_count;
  std::vector<int> fine_points;
  double max_hermiticity_defect = 0.0;
  double exact_tol = 0.0;
  std::vector<std::string> warnings;

  const SweepRow& row(std::size_t e, int branch) const { return rows.at(e * N + branch); }
};

/// For every ε: assemble H_ε, find the N eigenvalues near λ0, match them to
/// the expansion branches by eigenvector overlap with ψ_{ε,1}, and tabulate
/// expansion values, errors and two-scale residual norms; finally fit
/// log-log slopes per branch and order.
inline SweepReport run_sweep(const CorrectionEngine& eng, std::vector<double> eps_list, int K,
                             const SweepOptions& opt = {}) {
  const auto& L = eng.ledger();
  const auto& ops = eng.ops();
  const ProblemSpec& spec = ops.spec();
  require(K <= L.order, ErrorCode::InvalidArgument, "sweep order exceeds the computed ledger");
  require(!eps_list.empty(), ErrorCode::InvalidArgument, "empty ε list");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  for (std::size_t k = 1; k < eps_list.size(); ++k)
    require(eps_list[k] < eps_list[k - 1], ErrorCode::InvalidArgument, "ε values must be distinct");

  SweepReport rep;
  rep.problem = spec.name;
  rep.eps = eps_list;
  rep.K = K;
  rep.N = L.N;
  rep.lambda0 = L.lambda0;
  // Without fast-scale dependence H_ε is H0 on the coarse grid, so the grid
  // value is the exact reference; otherwise the fine direct solves are
  // compared with the grid-converged λ0 when it is available.
  rep.lambda0_reference = spec.xi_independent() ? L.lambda0 : L.lambda0_extrapolated.value_or(L.lambda0);
  rep.exact_tol = 1e-8 * (1.0 + std::abs(L.lambda0));
  for (int j = 1; j <= K; ++j) rep.tau_lambda.push_back(L.lambda.at(j));
  double radius = opt.radius;
  if (radius <= 0.0) radius = 0.5 * eng.cluster().gap;
  require(std::isfinite(radius) && radius > 0.0, ErrorCode::InvalidArgument, "eigen window radius undetermined");
  const double half = opt.L > 0.0 ? opt.L : ops.spatial().half_width();

  std::vector<ExpansionTerms> terms;
  if (opt.residuals && K >= 1)
    for (int i = 0; i < L.N; ++i) terms.push_back(expansion_terms(eng, i, K));

  for (double eps : eps_list) {
    const SpatialGrid fine =
        spec.xi_independent() ? ops.spatial() : fine_grid(spec.periods, half, eps, opt.points_per_period);
    rep.fine_points.push_back(fine.points(0));
    const AssembledOperator Heps = assemble_H_eps(spec, eps, fine);
    rep.max_hermiticity_defect = std::max(rep.max_hermiticity_defect, Heps.hermiticity_defect);
    const TwoScaleEvaluator ev(ops.spatial(), ops.cell(), fine, eps, ops.n());
    std::optional<EigenPairs> ep;
    try {
      ep = eigen_near(Heps.H, L.lambda0, radius, L.N, opt.eig);
      rep.direct_count.push_back(L.N);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CountMismatch) throw;
      rep.warnings.push_back("eps=" + std::to_string(eps) + ": " + e.what());
      rep.direct_count.push_back(-1);
    }
    std::vector<int> perm(L.N);
    std::iota(perm.begin(), perm.end(), 0);
    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(L.N, L.N);
    if (ep) {
      const Expansion e1 = assemble_expansion(eng, std::min(1, L.order), eps, fine);
      for (int i = 0; i < L.N; ++i) {
        const CVector v = flatten(e1.psi[i]);
        for (int c = 0; c < L.N; ++c) overlap(i, c) = std::abs(v.dot(ep->vectors.col(c))) / v.norm();
      }
      perm = best_assignment(overlap);
    }
    for (int i = 0; i < L.N; ++i) {
      SweepRow row;
      row.eps = eps;
      row.branch = i;
      if (ep) {
        row.lambda_direct = ep->values(perm[i]);
        row.overlap = overlap(i, perm[i]);
      }
      for (int k = 0; k <= K; ++k) {
        const double lk = expansion_eigenvalue(L, i, k, eps, rep.lambda0_reference);
        row.lambda_exp.push_back(lk);
        row.err.push_back(ep ? std::abs(row.lambda_direct - lk) : std::numeric_limits<double>::quiet_NaN());
      }
      for (int k = 1; k <= K; ++k)
        row.res.push_back(opt.residuals ? two_scale_residual(eng, terms[i], i, k, eps, ev, fine)
                                        : std::numeric_limits<double>::quiet_NaN());
      rep.rows.push_back(std::move(row));
    }
  }

  rep.err_slopes.assign(L.N, {});
  rep.res_slopes.assign(L.N, {});
  for (int i = 0; i < L.N; ++i) {
    for (int k = 0; k <= K; ++k) {
      std::vector<double> v;
      for (std::size_t e = 0; e < rep.eps.size(); ++e) v.push_back(rep.row(e, i).err[k]);
      rep.err_slopes[i].push_back(fit_slope(rep.eps, v, rep.exact_tol));
    }
    for (int k = 1; k <= K; ++k) {
      std::vector<double> v;
      for (std::size_t e = 0; e < rep.eps.size(); ++e) v.push_back(rep.row(e, i).res[k - 1]);
      rep.res_slopes[i].push_back(fit_slope(rep.eps, v, 0.0));
    }
  }
  if (rep.eps.size() < 2) rep.warnings.push_back("a single ε value was given; slopes are omitted");
  return rep;
}

}  // namespace twoscale
