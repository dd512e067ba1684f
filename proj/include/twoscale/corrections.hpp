#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cell.hpp"
#include "homogenize.hpp"
#include "interpolate.hpp"
#include "spectra.hpp"

namespace twoscale {

struct CorrectionOptions {
  int max_order = 4;
  double degenerate_tol = 1e-8;    ///< relative τ separation demanded
  double route_tol = 1e-5;         ///< first-order cross-check tolerance
  double solvability_tol = 1e-5;   ///< admissible projection defect
};

/// Order-by-order record of the asymptotic construction.  Branch i refers
/// to the rotated basis Ψ0^{(i)} ordered by ascending τ_i.  Conventions for
/// absent entries: Φ_0 = Φ_1 = 0, Φ_2 = Υ2, φ̃_0 = φ_0 = Ψ0, S^{(j)} = 0 for
/// j ≤ 0, and every quantity with a negative index vanishes.
struct CorrectionLedger {
  double lambda0 = 0.0;
  std::optional<double> lambda0_extrapolated;
  double boundary_ratio = 0.0;  ///< edge-to-peak modulus of the cluster vectors
  int N = 0;
  std::vector<CMatrix> psi_input;     ///< cluster basis as delivered by the eigensolver
  CMatrix T;
  double T_hermiticity_defect = 0.0;
  RVector tau;
  CMatrix S0;
  std::vector<CMatrix> psi;           ///< rotated basis Ψ0^{(i)}
  std::vector<CMatrix> upsilon1;      ///< two-scale
  std::vector<CMatrix> upsilon2;      ///< two-scale
  std::vector<CMatrix> g1;            ///< ⟨K_{-1}Υ2 + K_0Υ1⟩ per branch
  CMatrix route;                      ///< (⟨K_{-1}Υ2^{(i)} + K_0Υ1^{(i)}⟩, Ψ0^{(k)})
  double route_residual = 0.0;
  std::vector<std::vector<double>> lambda;            ///< lambda[j][i], lambda[0][i] = λ0
  std::map<int, CMatrix> S;                           ///< S^{(j)}, j ≥ 1
  std::map<int, std::vector<CMatrix>> phi_tilde;      ///< φ̃_j, j ≥ 1
  std::map<int, std::vector<CMatrix>> Phi;            ///< Φ_j, j ≥ 3
  std::map<int, std::vector<CMatrix>> g;              ///< g_j, j ≥ 2
  std::map<int, double> solvability_defect;           ///< max ‖P·rhs‖ of the φ̃_j equation
  std::map<int, double> cell_solvability;             ///< mean/size ratio of the Φ_j right-hand side
  std::optional<double> lambda2_explicit;             ///< λ2 from the dedicated second-order path
  int order = 0;
  int max_order = 4;
};

/// Holds the pipeline objects the correction stages operate on.
class CorrectionEngine {
 public:
  CorrectionEngine(const TwoScaleOps& ops, const CellSolver& solver, const CellSolution& cells, const CSparse& H0,
                   const EigenCluster& cluster, CorrectionOptions opt = {})
      : ops_(ops), solver_(solver), cells_(cells), H0_(H0), cluster_(cluster), opt_(opt) {
    ledger_.lambda0 = cluster.lambda0;
    ledger_.N = cluster.N;
    ledger_.psi_input = cluster.psi;
    ledger_.boundary_ratio = boundary_ratio(cluster.psi, ops.spatial());
    ledger_.max_order = opt.max_order;
  }

  const TwoScaleOps& ops() const { return ops_; }
  const CellSolver& solver() const { return solver_; }
  const CellSolution& cells() const { return cells_; }
  const EigenCluster& cluster() const { return cluster_; }
  const CorrectionOptions& options() const { return opt_; }
  CorrectionLedger& ledger() { return ledger_; }
  const CorrectionLedger& ledger() const { return ledger_; }

  CMatrix zero2() const { return CMatrix::Zero(static_cast<Eigen::Index>(ops_.Q()) * ops_.n(), ops_.X()); }
  CMatrix zero1() const { return CMatrix::Zero(ops_.n(), ops_.X()); }

  /// Rotated cluster basis for the resolvent (built on first use).
  const ReducedResolvent& resolvent() const {
    if (!resolvent_) {
      EigenCluster rotated = cluster_;
      rotated.psi = ledger_.psi.empty() ? cluster_.psi : ledger_.psi;
      resolvent_ = std::make_unique<ReducedResolvent>(H0_, rotated);
    }
    return *resolvent_;
  }

  // ---- ledger accessors implementing the index conventions ---------------

  CMatrix Phi(int j, int i) const {
    if (j <= 1) return zero2();
    if (j == 2) return ledger_.upsilon2.at(i);
    return ledger_.Phi.at(j).at(i);
  }

  CMatrix phi_tilde(int j, int i) const {
    if (j < 0) return zero1();
    if (j == 0) return ledger_.psi.at(i);
    return ledger_.phi_tilde.at(j).at(i);
  }

  /// S^{(j)}; when `strict` is false a missing matrix counts as zero.
  CMatrix S(int j, bool strict = true) const {
    const int N = ledger_.N;
    if (j <= 0) return CMatrix::Zero(N, N);
    auto it = ledger_.S.find(j);
    if (it == ledger_.S.end()) {
      if (strict) throw Error(ErrorCode::InvalidArgument, "S^(" + std::to_string(j) + ") not yet determined");
      return CMatrix::Zero(N, N);
    }
    return it->second;
  }

  double lambda(int j, int i) const { return ledger_.lambda.at(j).at(i); }

  /// φ_j = φ̃_j + Σ_k S^{(j)}_{ik} Ψ0^{(k)}.
  CMatrix phi(int j, int i, bool strict = true) const {
    if (j < 0) return zero1();
    if (j == 0) return ledger_.psi.at(i);
    CMatrix out = phi_tilde(j, i);
    const CMatrix Sj = S(j, strict);
    for (int k = 0; k < ledger_.N; ++k) out += Sj(i, k) * ledger_.psi[k];
    return out;
  }

  /// Σ_k S^{(j)}_{ik} Υ2^{(k)}.
  CMatrix S_upsilon2(int j, int i, bool strict = true) const {
    CMatrix out = zero2();
    if (j <= 0) return out;
    const CMatrix Sj = S(j, strict);
    for (int k = 0; k < ledger_.N; ++k)
      if (Sj(i, k) != cplx(0.0)) out += Sj(i, k) * ledger_.upsilon2[k];
    return out;
  }

  CMatrix corrector(const CMatrix& f) const { return apply_corrector(ops_, cells_, f); }

  /// Full two-scale term Ψ_j = Φ_j + (Λ1B(∂x)+Λ0)φ_{j−1} + Σ S^{(j−2)}Υ2 + φ_j.
  CMatrix Psi(int j, int i, bool strict = true) const {
    if (j < 0) return zero2();
    CMatrix out = Phi(j, i);
    if (j >= 1) out += corrector(phi(j - 1, i, strict));
    out += S_upsilon2(j - 2, i, strict);
    out += ops_.lift(phi(j, i, strict));
    return out;
  }

 private:
  const TwoScaleOps& ops_;
  const CellSolver& solver_;
  const CellSolution& cells_;
  const CSparse& H0_;
  const EigenCluster& cluster_;
  CorrectionOptions opt_;
  CorrectionLedger ledger_;
  mutable std::unique_ptr<ReducedResolvent> resolvent_;
};

/// T_ij = ⟨⟨K_{-1}Υ1^i, Υ1^j⟩⟩ + ⟨⟨ψ^i, K_0Υ1^j⟩⟩ + ⟨⟨K_0Υ1^i, ψ^j⟩⟩ with
/// Υ1 = (Λ1B(∂x)+Λ0)ψ.  Returns the raw matrix; the caller symmetrizes.
inline CMatrix compute_T(const TwoScaleOps& ops, const CellSolution& cells, const std::vector<CMatrix>& psi) {
  const int N = static_cast<int>(psi.size());
  const std::vector<CMatrix> U = compute_upsilon1(ops, cells, psi);
  std::vector<CMatrix> KU, K0m;
  for (const auto& u : U) {
    KU.push_back(ops.K_minus1(u));
    K0m.push_back(ops.mean(ops.K0(u), ops.n()));
  }
  CMatrix T(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      T(i, j) = ops.inner2(KU[i], U[j]) + ops.inner(psi[i], K0m[j]) + ops.inner(K0m[i], psi[j]);
  return T;
}

struct TDiagonalization {
  RVector tau;
  CMatrix S0;
};

/// τ ascending and unitary S0 with S0 T S0* = diag(τ); eigenvector phases
/// fixed so the largest entry is real positive.
inline TDiagonalization diagonalize_T(const CMatrix& T, double tol = 1e-8) {
  const CMatrix Th = (T + CMatrix(T.adjoint())) * 0.5;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(Th);
  CMatrix U = es.eigenvectors();
  fix_phases(U);
  TDiagonalization out;
  out.tau = es.eigenvalues();
  out.S0 = U.adjoint();
  const int N = static_cast<int>(T.rows());
  if (N >= 2) {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i + 1 < N; ++i) gap = std::min(gap, out.tau(i + 1) - out.tau(i));
    const double scale = 1.0 + out.tau.cwiseAbs().maxCoeff();
    if (gap < tol * scale)
      throw Error(ErrorCode::DegenerateT,
                  "eigenvalues of T coincide (gap " + std::to_string(gap) +
                      "); the expansion requires pairwise distinct first-order corrections");
  }
  return out;
}

/// Computes T and τ, rotates the basis, builds Υ1 and Υ2 and checks that
/// (⟨K_{-1}Υ2^{(i)} + K_0Υ1^{(i)}⟩, Ψ0^{(k)}) = τ_i δ_ik.  Sets λ_1 = τ.
inline void first_order(CorrectionEngine& eng) {
  auto& L = eng.ledger();
  const auto& ops = eng.ops();
  const int N = L.N;
  const CMatrix Traw = compute_T(ops, eng.cells(), L.psi_input);
  L.T_hermiticity_defect = max_abs(Traw - CMatrix(Traw.adjoint()));
  L.T = (Traw + CMatrix(Traw.adjoint())) * 0.5;
  const TDiagonalization td = diagonalize_T(L.T, eng.options().degenerate_tol);
  L.tau = td.tau;
  L.S0 = td.S0;
  L.psi.assign(N, eng.zero1());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) L.psi[i] += L.S0(i, j) * L.psi_input[j];
  L.upsilon1 = compute_upsilon1(ops, eng.cells(), L.psi);
  L.upsilon2 = compute_upsilon2(ops, eng.solver(), L.upsilon1, L.psi, L.lambda0);
  L.g1.clear();
  L.route = CMatrix(N, N);
  for (int i = 0; i < N; ++i) {
    L.g1.push_back(ops.mean(ops.K_minus1(L.upsilon2[i]) + ops.K0(L.upsilon1[i]), ops.n()));
    for (int k = 0; k < N; ++k) L.route(i, k) = ops.inner(L.g1[i], L.psi[k]);
  }
  CMatrix expect = CMatrix::Zero(N, N);
  for (int i = 0; i < N; ++i) expect(i, i) = L.tau(i);
  L.route_residual = max_abs(L.route - expect);
  if (L.route_residual > eng.options().route_tol)
    throw Error(ErrorCode::FirstOrderRouteMismatch,
                "first-order cross-check residual " + std::to_string(L.route_residual));
  L.lambda.assign(2, std::vector<double>(N, L.lambda0));
  for (int i = 0; i < N; ++i) L.lambda[1][i] = L.tau(i);
  L.order = 1;
}

/// Solves the macroscopic equation for φ̃_j and records its projection
/// defect.
inline CMatrix solve_macroscopic(CorrectionEngine& eng, int j, const CMatrix& rhs) {
  const auto res = eng.resolvent().solve(rhs);
  auto& defect = eng.ledger().solvability_defect[j];
  defect = std::max(defect, res.defect);
  if (res.defect > eng.options().solvability_tol * std::max(1.0, eng.ops().norm(rhs)))
    throw Error(ErrorCode::SolvabilityDefect,
                "order " + std::to_string(j) + " projection defect " + std::to_string(res.defect));
  return res.u;
}

/// Cell field Φ_J of branch i (J ≥ 2):
///   LΦ_J = −K_{-1}(Φ_{J−1} + Mφ̃_{J−2} + ΣS^{(J−3)}Υ2)
///          −(K_0 − λ0)(Φ_{J−2} + Mφ_{J−3} + ΣS^{(J−4)}Υ2 + φ̃_{J−2})
///          + Σ_{k=1}^{J−2} λ_k Ψ_{J−2−k},
/// with M = Λ1B(∂x) + Λ0 and L the cell operator.
inline CMatrix compute_phi_cell_j(const CorrectionEngine& eng, int i, int J) {
  require(J >= 2, ErrorCode::InvalidArgument, "cell fields are indexed from 2");
  const auto& ops = eng.ops();
  const double l0 = eng.ledger().lambda0;
  const CMatrix first = eng.Phi(J - 1, i) + eng.corrector(eng.phi_tilde(J - 2, i)) + eng.S_upsilon2(J - 3, i);
  const CMatrix second = eng.Phi(J - 2, i) + eng.corrector(eng.phi(J - 3, i)) + eng.S_upsilon2(J - 4, i) +
                         ops.lift(eng.phi_tilde(J - 2, i));
  const CMatrix Kf = ops.K_minus1(first), Ks = ops.K0(second);
  CMatrix rhs = -Kf - Ks + l0 * second;
  double scale = Kf.norm() + Ks.norm() + std::abs(l0) * second.norm();
  for (int k = 1; k <= J - 2; ++k) {
    const CMatrix term = eng.lambda(k, i) * eng.Psi(J - 2 - k, i);
    rhs += term;
    scale += term.norm();
  }
  return eng.solver().solve(rhs, scale);
}

struct SecondOrderResult {
  std::vector<CMatrix> phi1;  ///< φ̃_1 per branch
  std::vector<CMatrix> Phi3;  ///< cell field Φ_3 per branch
  CMatrix S1;
  std::vector<double> lambda2;
};

/// φ̃_1 from (H0 − λ0)φ1 = λ1Ψ0 − ⟨K_{-1}Υ2 + K_0Υ1⟩, then the dedicated
/// second-order formulas: LΦ3 = −K_{-1}(Υ2 + Mφ̃1) − (K_0 − λ0)(Υ1 + φ̃1) +
/// λ1Ψ0, g2 = ⟨K_{-1}Φ3 + K_0(Υ2 + Mφ̃1)⟩, λ2 = (g2, Ψ0^{(i)}),
/// S^{(1)}_{ik} = (g2, Ψ0^{(k)})/(τ_i − τ_k).
inline SecondOrderResult second_order(CorrectionEngine& eng) {
  auto& L = eng.ledger();
  require(L.order >= 1, ErrorCode::InvalidArgument, "first order must run before second order");
  const auto& ops = eng.ops();
  const int N = L.N;
  SecondOrderResult out;
  std::vector<CMatrix> phi1;
  for (int i = 0; i < N; ++i) phi1.push_back(solve_macroscopic(eng, 1, L.tau(i) * L.psi[i] - L.g1[i]));
  L.phi_tilde[1] = phi1;
  out.phi1 = phi1;
  out.S1 = CMatrix::Zero(N, N);
  std::vector<CMatrix> g2(N), Phi3(N);
  for (int i = 0; i < N; ++i) {
    const CMatrix Mphi = eng.corrector(phi1[i]);
    const CMatrix a = L.upsilon2[i] + Mphi;
    const CMatrix b = L.upsilon1[i] + ops.lift(phi1[i]);
    const CMatrix Ka = ops.K_minus1(a), Kb = ops.K0(b), tl = L.tau(i) * ops.lift(L.psi[i]);
    const CMatrix rhs = -Ka - Kb + L.lambda0 * b + tl;
    Phi3[i] = eng.solver().solve(rhs, Ka.norm() + Kb.norm() + std::abs(L.lambda0) * b.norm() + tl.norm());
    g2[i] = ops.mean(ops.K_minus1(Phi3[i]) + ops.K0(a), ops.n());
    out.lambda2.push_back(ops.inner(g2[i], L.psi[i]).real());
    for (int k = 0; k < N; ++k)
      if (k != i) out.S1(i, k) = ops.inner(g2[i], L.psi[k]) / (L.tau(i) - L.tau(k));
  }
  out.Phi3 = Phi3;
  L.lambda2_explicit = out.lambda2.empty() ? 0.0 : out.lambda2[0];
  if (L.order < 2) {
    L.Phi[3] = Phi3;
    L.g[2] = g2;
    L.S[1] = out.S1;
    L.lambda.resize(3, std::vector<double>(N, 0.0));
    for (int i = 0; i < N; ++i) L.lambda[2][i] = out.lambda2[i];
  }
  return out;
}

/// Stage J ≥ 2 of the recursion: Φ_{J+1}, g_J, λ_J, S^{(J−1)} and φ̃_J.
inline void higher_order(CorrectionEngine& eng, int J) {
  auto& L = eng.ledger();
  if (J > L.max_order)
    throw Error(ErrorCode::OrderLimit, "order " + std::to_string(J) + " exceeds the configured maximum " +
                                           std::to_string(L.max_order));
  require(J >= 2, ErrorCode::InvalidArgument, "higher orders start at 2");
  require(L.order >= J - 1 && L.phi_tilde.count(J - 1), ErrorCode::InvalidArgument,
          "lower orders must be complete before order " + std::to_string(J));
  const auto& ops = eng.ops();
  const int N = L.N;
  std::vector<CMatrix> PhiN(N), gJ(N);
  double cell_ratio = 0.0;
  for (int i = 0; i < N; ++i) {
    PhiN[i] = compute_phi_cell_j(eng, i, J + 1);
    cell_ratio = std::max(cell_ratio, eng.solver().last_solvability_ratio());
  }
  L.Phi[J + 1] = PhiN;
  L.cell_solvability[J + 1] = cell_ratio;
  for (int i = 0; i < N; ++i) {
    const CMatrix inner = eng.Phi(J, i) + eng.corrector(eng.phi_tilde(J - 1, i)) + eng.S_upsilon2(J - 2, i);
    gJ[i] = ops.mean(ops.K_minus1(PhiN[i]) + ops.K0(inner), ops.n());
  }
  L.g[J] = gJ;
  L.lambda.resize(std::max<std::size_t>(L.lambda.size(), J + 1), std::vector<double>(N, 0.0));
  CMatrix Sprev = CMatrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    L.lambda[J][i] = ops.inner(gJ[i], L.psi[i]).real();
    for (int l = 0; l < N; ++l) {
      if (l == i) continue;
      cplx num = ops.inner(gJ[i], L.psi[l]);
      for (int k = 2; k <= J - 1; ++k) num -= L.lambda[k][i] * eng.S(J - k)(i, l);
      Sprev(i, l) = num / (L.tau(i) - L.tau(l));
    }
  }
  L.S[J - 1] = Sprev;
  std::vector<CMatrix> phiJ(N);
  for (int i = 0; i < N; ++i) {
    const double l1 = L.lambda[1][i];
    CMatrix rhs = -gJ[i] + L.lambda[J][i] * L.psi[i] + l1 * eng.phi_tilde(J - 1, i);
    for (int k = 2; k <= J - 1; ++k) rhs += L.lambda[k][i] * eng.phi(J - k, i);
    for (int k = 0; k < N; ++k)
      if (Sprev(i, k) != cplx(0.0)) rhs += Sprev(i, k) * (l1 * L.psi[k] - L.g1[k]);
    phiJ[i] = solve_macroscopic(eng, J, rhs);
  }
  L.phi_tilde[J] = phiJ;
  L.order = J;
}

/// Runs first order, the dedicated second-order path and the generic
/// recursion up to order k.
inline void run_corrections(CorrectionEngine& eng, int k) {
  auto& L = eng.ledger();
  if (k > L.max_order)
    throw Error(ErrorCode::OrderLimit, "order " + std::to_string(k) + " exceeds the configured maximum " +
                                           std::to_string(L.max_order));
  first_order(eng);
  if (k >= 1 && !L.phi_tilde.count(1)) {
    // φ̃_1 is always produced so that the first-order eigenfunction exists
    std::vector<CMatrix> phi1;
    for (int i = 0; i < L.N; ++i) phi1.push_back(solve_macroscopic(eng, 1, L.tau(i) * L.psi[i] - L.g1[i]));
    L.phi_tilde[1] = phi1;
  }
  if (k >= 2) {
    second_order(eng);
    for (int j = 2; j <= k; ++j) higher_order(eng, j);
  }
}

/// Truncated expansion λ_{ε,k} = Σ_{j≤k} ε^j λ_j for branch i.
inline double expansion_eigenvalue(const CorrectionLedger& L, int i, int k, double eps, double lambda0) {
  double v = lambda0, e = 1.0;
  for (int j = 1; j <= k; ++j) {
    e *= eps;
    v += e * L.lambda.at(j).at(i);
  }
  return v;
}

/// Fine-grid check: at least 8 points per ε-period along every axis.
inline void check_resolution(const SpatialGrid& fine, const std::vector<double>& periods, double eps) {
  for (int a = 0; a < fine.dim(); ++a) {
    const double ppp = eps * periods[a] / fine.spacing(a);
    if (ppp < 8.0 - 1e-9)
      throw Error(ErrorCode::ResolutionError,
                  "fine grid has " + std::to_string(ppp) + " points per period along axis " + std::to_string(a + 1));
  }
}

struct Expansion {
  std::vector<double> lambda;   ///< λ_{ε,k} per branch
  std::vector<CMatrix> psi;     ///< ψ_{ε,k} on the fine grid, per branch
};

/// λ_{ε,k} and ψ_{ε,k}(x) = Σ_{j≤k} ε^j Ψ_j(x, x/ε) on a fine grid.
inline Expansion assemble_expansion(const CorrectionEngine& eng, int k, double eps, const SpatialGrid& fine,
                                    std::optional<double> lambda0 = std::nullopt) {
  const auto& L = eng.ledger();
  require(k <= L.order, ErrorCode::InvalidArgument, "expansion order exceeds the computed ledger");
  if (!eng.ops().spec().xi_independent()) check_resolution(fine, eng.ops().spec().periods, eps);
  const TwoScaleEvaluator ev(eng.ops().spatial(), eng.ops().cell(), fine, eps, eng.ops().n());
  Expansion out;
  for (int i = 0; i < L.N; ++i) {
    out.lambda.push_back(expansion_eigenvalue(L, i, k, eps, lambda0.value_or(L.lambda0)));
    CMatrix W = eng.Psi(0, i);
    double e = 1.0;
    for (int j = 1; j <= k; ++j) {
      e *= eps;
      W += e * eng.Psi(j, i, false);
    }
    out.psi.push_back(ev.evaluate(W));
  }
  return out;
}

/// Two-scale pieces of ψ_{ε,k} for one branch with the operator parts
/// already applied, so that residuals for many ε cost one evaluation each.
struct ExpansionTerms {
  std::vector<CMatrix> Psi, LPsi, KmPsi, K0Psi;
};

inline ExpansionTerms expansion_terms(const CorrectionEngine& eng, int i, int k) {
  const auto& ops = eng.ops();
  ExpansionTerms t;
  for (int j = 0; j <= k; ++j) {
    t.Psi.push_back(eng.Psi(j, i, false));
    t.LPsi.push_back(ops.cell_op(t.Psi.back()));
    t.KmPsi.push_back(ops.K_minus1(t.Psi.back()));
    t.K0Psi.push_back(ops.K0(t.Psi.back()));
  }
  return t;
}

/// Residual (H_ε − λ_{ε,k})ψ_{ε,k} evaluated through the two-scale chain
/// rule ∂_x ↦ ∂_x + ε^{-1}∂_ξ, grouped by powers of ε before evaluation on
/// the fine grid; returns its discrete L2 norm there.
inline double two_scale_residual(const CorrectionEngine& eng, const ExpansionTerms& t, int i, int k, double eps,
                                 const TwoScaleEvaluator& ev, const SpatialGrid& fine) {
  const auto& L = eng.ledger();
  const int pmin = -2, pmax = 2 * k;
  std::vector<CMatrix> R(pmax - pmin + 1, eng.zero2());
  for (int j = 0; j <= k; ++j) {
    R[j - 2 - pmin] += t.LPsi[j];
    R[j - 1 - pmin] += t.KmPsi[j];
    R[j - pmin] += t.K0Psi[j];
    for (int l = 0; l <= k; ++l) R[j + l - pmin] -= L.lambda.at(l).at(i) * t.Psi[j];
  }
  CMatrix total = eng.zero2();
  for (int p = pmin; p <= pmax; ++p) total += std::pow(eps, p) * R[p - pmin];
  const CMatrix r = ev.evaluate(total);
  return std::sqrt(fine.cell_volume()) * r.norm();
}

}  // namespace twoscale
