#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "config.hpp"

namespace twoscale {

using ordered_json = nlohmann::ordered_json;

/// Real rounded to 13 significant digits (printed precision 1e-12 relative)
/// so that roundoff below that level never reaches an output file.
inline ordered_json json_real(double v) {
  if (!std::isfinite(v)) return nullptr;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return std::strtod(buf, nullptr);
}

inline ordered_json json_reals(const std::vector<double>& v) {
  ordered_json a = ordered_json::array();
  for (double x : v) a.push_back(json_real(x));
  return a;
}

inline std::string csv_real(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

/// Identity and corrector report of the homogenize command.
inline ordered_json homogenize_json(Pipeline& p) {
  const auto& hom = p.homogenized();
  const auto& id = p.identities();
  ordered_json j;
  j["problem"] = p.spec().name;
  j["d"] = p.spec().d;
  j["n"] = p.spec().n;
  j["m"] = p.spec().m;
  j["K"] = p.config().K;
  j["M"] = p.config().M;
  j["corrector_max_mean"] = json_real(p.cells().max_mean);
  j["corrector_max_residual"] = json_real(p.cells().max_residual);
  j["identity_residual_first"] = json_real(id.first);
  j["identity_residual_second"] = json_real(id.second);
  j["identity_tol"] = json_real(p.config().identity_tol);
  j["identities_hold"] = id.first < p.config().identity_tol && id.second < p.config().identity_tol;
  j["H0_symmetrization_defect"] = json_real(hom.symmetrization_defect);
  j["ellipticity_bounds"] = json_reals({p.validated().c1, p.validated().c2});
  return j;
}

/// Ledger export: λ0, τ and λ_j^{(i)} as lambda[j−1][i].
inline ordered_json ledger_json(const CorrectionLedger& L, const std::string& problem) {
  ordered_json j;
  j["problem"] = problem;
  j["N"] = L.N;
  j["order"] = L.order;
  j["lambda0"] = json_real(L.lambda0);
  j["lambda0_extrapolated"] = L.lambda0_extrapolated ? json_real(*L.lambda0_extrapolated) : ordered_json(nullptr);
  std::vector<double> tau(L.tau.data(), L.tau.data() + L.tau.size());
  j["tau"] = json_reals(tau);
  ordered_json lam = ordered_json::array();
  for (int k = 1; k <= L.order && k < static_cast<int>(L.lambda.size()); ++k) lam.push_back(json_reals(L.lambda[k]));
  j["lambda"] = lam;
  j["T_hermiticity_defect"] = json_real(L.T_hermiticity_defect);
  j["route_residual"] = json_real(L.route_residual);
  j["boundary_ratio"] = json_real(L.boundary_ratio);
  ordered_json sd = ordered_json::object();
  for (const auto& [k, v] : L.solvability_defect) sd[std::to_string(k)] = json_real(v);
  j["projection_defects"] = sd;
  if (L.lambda2_explicit) j["lambda2_explicit_branch1"] = json_real(*L.lambda2_explicit);
  return j;
}

inline ordered_json slope_json(const SlopeFit& s) {
  ordered_json j;
  j["slope"] = s.slope ? json_real(*s.slope) : ordered_json(nullptr);
  j["exact"] = s.exact;
  j["dropped_largest_eps"] = s.dropped_largest;
  j["points"] = s.points;
  return j;
}

struct ValidateVerdict {
  bool pass = true;
  std::vector<std::string> reasons;
};

/// Acceptance rule of the validate command: every branch must either be
/// exact or show the k = 1 error decaying with slope ≥ min_slope_k1, and
/// the order-2 residual with slope ≥ min_res_slope_k2; a count mismatch at
/// any ε fails.
inline ValidateVerdict judge_sweep(const SweepReport& rep, const ValidateThresholds& th) {
  ValidateVerdict v;
  for (std::size_t e = 0; e < rep.eps.size(); ++e)
    if (rep.direct_count[e] < 0) {
      v.pass = false;
      v.reasons.push_back("branch count mismatch at eps=" + csv_real(rep.eps[e]));
    }
  for (int i = 0; i < rep.N; ++i) {
    if (rep.K >= 1) {
      const SlopeFit& s = rep.err_slopes[i][1];
      if (!s.exact && s.slope && *s.slope < th.min_slope_k1) {
        v.pass = false;
        v.reasons.push_back("branch " + std::to_string(i + 1) + ": err_k1 slope " + csv_real(*s.slope));
      }
    }
    if (rep.K >= 2 && !rep.err_slopes[i][0].exact) {
      const SlopeFit& s = rep.res_slopes[i][1];
      if (s.slope && *s.slope < th.min_res_slope_k2) {
        v.pass = false;
        v.reasons.push_back("branch " + std::to_string(i + 1) + ": res_k2 slope " + csv_real(*s.slope));
      }
    }
  }
  return v;
}

inline ordered_json sweep_json(const SweepReport& rep, const ValidateVerdict& verdict) {
  ordered_json j;
  j["problem"] = rep.problem;
  j["N"] = rep.N;
  j["order"] = rep.K;
  j["eps"] = json_reals(rep.eps);
  j["lambda0"] = json_real(rep.lambda0);
  j["lambda0_reference"] = json_real(rep.lambda0_reference);
  ordered_json lam = ordered_json::array();
  for (const auto& l : rep.tau_lambda) lam.push_back(json_reals(l));
  j["lambda"] = lam;
  j["fine_points_axis1"] = rep.fine_points;
  j["direct_count"] = rep.direct_count;
  j["H_eps_hermiticity_defect"] = json_real(rep.max_hermiticity_defect);
  j["exact_threshold"] = json_real(rep.exact_tol);
  ordered_json rows = ordered_json::array();
  for (const auto& r : rep.rows) {
    ordered_json o;
    o["eps"] = json_real(r.eps);
    o["branch"] = r.branch + 1;
    o["lambda_direct"] = json_real(r.lambda_direct);
    o["lambda_exp"] = json_reals(r.lambda_exp);
    o["err"] = json_reals(r.err);
    o["res"] = json_reals(r.res);
    o["overlap"] = json_real(r.overlap);
    rows.push_back(o);
  }
  j["rows"] = rows;
  ordered_json slopes = ordered_json::array();
  for (int i = 0; i < rep.N; ++i) {
    ordered_json b;
    b["branch"] = i + 1;
    ordered_json err = ordered_json::object(), res = ordered_json::object();
    for (int k = 0; k <= rep.K; ++k) err["k" + std::to_string(k)] = slope_json(rep.err_slopes[i][k]);
    for (int k = 1; k <= rep.K; ++k) res["k" + std::to_string(k)] = slope_json(rep.res_slopes[i][k - 1]);
    b["err"] = err;
    b["res"] = res;
    slopes.push_back(b);
  }
  j["slopes"] = slopes;
  bool exact = true;
  for (int i = 0; i < rep.N; ++i) exact = exact && rep.err_slopes[i][0].exact;
  j["exact"] = exact;
  j["warnings"] = rep.warnings;
  j["acceptance"] = {{"pass", verdict.pass}, {"reasons", verdict.reasons}};
  return j;
}

/// `eps, branch, lambda_direct, lambda_exp_k0..kK, err_k0..kK, res_k1..kK`.
inline void write_sweep_csv(std::ostream& os, const SweepReport& rep) {
  os << "eps,branch,lambda_direct";
  for (int k = 0; k <= rep.K; ++k) os << ",lambda_exp_k" << k;
  for (int k = 0; k <= rep.K; ++k) os << ",err_k" << k;
  for (int k = 1; k <= rep.K; ++k) os << ",res_k" << k;
  os << '\n';
  for (const auto& r : rep.rows) {
    os << csv_real(r.eps) << ',' << r.branch + 1 << ',' << csv_real(r.lambda_direct);
    for (double v : r.lambda_exp) os << ',' << csv_real(v);
    for (double v : r.err) os << ',' << csv_real(v);
    for (double v : r.res) os << ',' << csv_real(v);
    os << '\n';
  }
}

}  // namespace twoscale
