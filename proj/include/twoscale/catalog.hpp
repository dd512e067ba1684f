#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "fields.hpp"

namespace twoscale {

using Params = std::map<std::string, double>;

/// Run settings a catalog problem is tuned for; every one can be
/// overridden from a config file.
struct ProblemDefaults {
  double L = 12.0;          ///< half width of the box [−L, L]^d
  int M = 2001;             ///< coarse nodes per axis
  int K = 64;               ///< cell points per axis
  double target = 0.0;      ///< centre of the eigenvalue window
  double radius = 0.4;      ///< half width of the eigenvalue window
  int points_per_period = 32;
  int order = 4;
  std::vector<double> eps{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
};

struct CatalogEntry {
  std::string name;
  std::string description;
  Params params;  ///< tunable numbers with their default values
  ProblemDefaults defaults;
  std::function<ProblemSpec(const Params&)> build;
};

namespace detail {

constexpr double two_pi = 2.0 * std::numbers::pi;

inline ProblemSpec scalar_1d(const std::string& name) {
  ProblemSpec s;
  s.name = name;
  s.d = 1;
  s.n = 1;
  s.m = 1;
  s.B = {CMatrix::Identity(1, 1)};
  s.periods = {1.0};
  return s;
}

inline MatrixField cosine_A(double alpha, double beta) {
  return MatrixField::scalar(false, true, [=](const double*, const double* xi) {
    return alpha + beta * std::cos(two_pi * xi[0]);
  });
}

inline MatrixField gaussian_V(double depth) {
  return MatrixField::scalar(true, false, [=](const double* x, const double*) {
    return -depth * std::exp(-x[0] * x[0]);
  });
}

inline ProblemSpec well_1d(const std::string& name, const Params& p, bool asymmetric) {
  ProblemSpec s = scalar_1d(name);
  const double alpha = p.at("alpha"), beta = p.at("beta"), depth = p.at("depth"), mod = p.at("modulation");
  s.A = cosine_A(alpha, beta);
  const double skew = asymmetric ? p.at("skew") : 0.0;
  s.V = MatrixField::scalar(true, true, [=](const double* x, const double* xi) {
    const double g = std::exp(-x[0] * x[0]);
    double v = -depth * g * (1.0 + mod * std::cos(two_pi * xi[0]));
    if (skew != 0.0) v += skew * std::sin(2.0 * x[0] + 0.7) * std::exp(-0.5 * x[0] * x[0]) * std::sin(two_pi * xi[0]);
    return v;
  });
  return s;
}

/// Two-axis well with period 2 cells, A = diag(α + β cos πξ1, α + β cos πξ2)
/// and B(∂) the gradient.  The potential is separable with an
/// odd-in-x ξ-modulation along axis 1 (and axis 2 for the symmetric form).
inline ProblemSpec separable_well_2d(const std::string& name, const Params& p, bool symmetric) {
  ProblemSpec s;
  s.name = name;
  s.d = 2;
  s.n = 1;
  s.m = 2;
  CMatrix B1 = CMatrix::Zero(2, 1), B2 = CMatrix::Zero(2, 1);
  B1(0, 0) = 1.0;
  B2(1, 0) = 1.0;
  s.B = {B1, B2};
  s.periods = {2.0, 2.0};
  const double alpha = p.at("alpha"), beta = p.at("beta"), depth = p.at("depth"), amp = p.at("modulation");
  const double w = std::numbers::pi;
  s.A = MatrixField::make(2, 2, false, true, [=](const double*, const double* xi, cplx* out) {
    out[0] = alpha + beta * std::cos(w * xi[0]);
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = alpha + beta * std::cos(w * xi[1]);
  });
  auto v1 = [=](double t) { return amp * std::sin(2.0 * t + 0.7) * std::exp(-0.5 * t * t); };
  s.V = MatrixField::scalar(true, true, [=](const double* x, const double* xi) {
    double v = -depth * (std::exp(-x[0] * x[0]) + std::exp(-x[1] * x[1])) + v1(x[0]) * std::sin(w * xi[0]);
    if (symmetric) v += v1(x[1]) * std::sin(w * xi[1]);
    return v;
  });
  return s;
}

}  // namespace detail

/// Built-in problems addressable by name from configs.
inline const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    std::vector<CatalogEntry> c;
    ProblemDefaults well;
    well.target = -0.76;
    well.radius = 0.4;

    c.push_back({"constant", "A = alpha, V = -depth exp(-x^2); nothing depends on the fast variable",
                 {{"alpha", 2.0}, {"depth", 2.0}}, [] {
                   ProblemDefaults d;
                   d.M = 1001;
                   d.K = 16;
                   d.target = -0.70;
                   d.radius = 0.4;
                   return d;
                 }(),
                 [](const Params& p) {
                   ProblemSpec s = detail::scalar_1d("constant");
                   s.A = MatrixField::constant(CMatrix::Constant(1, 1, p.at("alpha")));
                   s.V = detail::gaussian_V(p.at("depth"));
                   return s;
                 }});

    c.push_back({"cosine-1d", "A = alpha + beta cos(2 pi xi), V = -depth exp(-x^2)",
                 {{"alpha", 2.0}, {"beta", 1.0}, {"depth", 2.0}}, well, [](const Params& p) {
                   ProblemSpec s = detail::scalar_1d("cosine-1d");
                   s.A = detail::cosine_A(p.at("alpha"), p.at("beta"));
                   s.V = detail::gaussian_V(p.at("depth"));
                   return s;
                 }});

    c.push_back({"cosine-drift-1d",
                 "A = alpha + beta cos(2 pi xi), first-order part a = drift cos(2 pi xi), b = 1, "
                 "V = -depth exp(-x^2)",
                 {{"alpha", 2.0}, {"beta", 1.0}, {"drift", 1.0}, {"depth", 2.0}}, [] {
                   ProblemDefaults d;
                   d.M = 1001;
                   d.K = 32;
                   d.target = -1.0;
                   d.radius = 0.6;
                   d.order = 2;
                   return d;
                 }(),
                 [](const Params& p) {
                   ProblemSpec s = detail::scalar_1d("cosine-drift-1d");
                   s.A = detail::cosine_A(p.at("alpha"), p.at("beta"));
                   const double drift = p.at("drift");
                   s.a = {MatrixField::scalar(false, true, [=](const double*, const double* xi) {
                     return drift * std::cos(detail::two_pi * xi[0]);
                   })};
                   s.b = {MatrixField::constant(CMatrix::Identity(1, 1))};
                   s.V = detail::gaussian_V(p.at("depth"));
                   return s;
                 }});

    const Params well_params{{"alpha", 2.0}, {"beta", 1.0}, {"depth", 2.0}, {"modulation", 0.5}};
    c.push_back({"well-1d", "A = alpha + beta cos(2 pi xi), V = -depth exp(-x^2)(1 + modulation cos(2 pi xi))",
                 well_params, well, [](const Params& p) { return detail::well_1d("well-1d", p, false); }});

    Params asym = well_params;
    asym["skew"] = 1.0;
    c.push_back({"well-1d-asym",
                 "well-1d plus skew sin(2x + 0.7) exp(-x^2/2) sin(2 pi xi); the ground state moves at first order",
                 asym, well, [](const Params& p) { return detail::well_1d("well-1d-asym", p, true); }});

    c.push_back({"checker-2d",
                 "scalar d=2 problem with a full oscillating A, first-order part "
                 "a = (drift cos 2 pi(xi1 + xi2), drift sin 2 pi(xi2 - xi1)), b = 1 and a Gaussian well",
                 {{"alpha", 2.0}, {"beta", 1.0}, {"shear", 0.3}, {"drift", 0.5}, {"depth", 6.0}}, [] {
                   ProblemDefaults d;
                   d.L = 3.0;
                   d.M = 61;
                   d.K = 16;
                   d.target = -1.42;
                   d.radius = 1.0;
                   d.order = 2;
                   d.points_per_period = 8;
                   d.eps = {1.0 / 4, 1.0 / 8};
                   return d;
                 }(),
                 [](const Params& p) {
                   ProblemSpec s;
                   s.name = "checker-2d";
                   s.d = 2;
                   s.n = 1;
                   s.m = 2;
                   CMatrix B1 = CMatrix::Zero(2, 1), B2 = CMatrix::Zero(2, 1);
                   B1(0, 0) = 1.0;
                   B2(1, 0) = 1.0;
                   s.B = {B1, B2};
                   s.periods = {1.0, 1.0};
                   const double alpha = p.at("alpha"), beta = p.at("beta"), shear = p.at("shear");
                   const double drift = p.at("drift"), depth = p.at("depth");
                   const double w = detail::two_pi;
                   s.A = MatrixField::make(2, 2, false, true, [=](const double*, const double* xi, cplx* out) {
                     const double c = shear * std::sin(w * (xi[0] + xi[1]));
                     out[0] = alpha + beta * std::cos(w * xi[0]);
                     out[1] = c;
                     out[2] = c;
                     out[3] = alpha + beta * std::cos(w * xi[1]);
                   });
                   s.a = {MatrixField::scalar(false, true,
                                              [=](const double*, const double* xi) { return drift * std::cos(w * (xi[0] + xi[1])); }),
                          MatrixField::scalar(false, true,
                                              [=](const double*, const double* xi) { return drift * std::sin(w * (xi[1] - xi[0])); })};
                   s.b = {MatrixField::constant(CMatrix::Identity(1, 1)), MatrixField::constant(CMatrix::Identity(1, 1))};
                   s.V = MatrixField::scalar(true, false, [=](const double* x, const double*) {
                     return -depth * std::exp(-x[0] * x[0] - x[1] * x[1]);
                   });
                   return s;
                 }});

    ProblemDefaults sep;
    sep.L = 3.0;
    sep.M = 81;
    sep.K = 16;
    sep.target = -3.0;
    sep.radius = 1.2;
    sep.order = 1;
    sep.points_per_period = 8;
    sep.eps = {1.0 / 32};
    const Params sep_params{{"alpha", 2.0}, {"beta", 1.0}, {"depth", 6.0}, {"modulation", 4.0}};
    c.push_back({"sep-well-2d",
                 "d=2 separable well, period-2 cells, A = diag(alpha + beta cos pi xi1, alpha + beta cos pi xi2), "
                 "V = -depth(exp(-x1^2) + exp(-x2^2)) + v(x1) sin(pi xi1) with v(t) = modulation sin(2t + 0.7) "
                 "exp(-t^2/2); its first excited cluster is a pair split at first order",
                 sep_params, sep, [](const Params& p) { return detail::separable_well_2d("sep-well-2d", p, false); }});
    c.push_back({"sep-well-2d-sym",
                 "sep-well-2d with the same modulation added along axis 2, so the pair stays degenerate at first order",
                 sep_params, sep, [](const Params& p) { return detail::separable_well_2d("sep-well-2d-sym", p, true); }});
    return c;
  }();
  return entries;
}

inline std::string canonical_problem_name(const std::string& name) {
  if (name == "gaussian-well") return "well-1d";
  return name;
}

inline const CatalogEntry& catalog_entry(const std::string& name) {
  const std::string key = canonical_problem_name(name);
  for (const auto& e : catalog())
    if (e.name == key) return e;
  throw Error(ErrorCode::InvalidArgument, "unknown catalog problem '" + name + "'");
}

/// Builds a catalog problem, applying numeric overrides on top of the
/// entry's parameter defaults.
inline ProblemSpec build_problem(const std::string& name, const Params& overrides = {}) {
  const CatalogEntry& e = catalog_entry(name);
  Params p = e.params;
  for (const auto& [k, v] : overrides) {
    if (!p.count(k))
      throw Error(ErrorCode::InvalidArgument, "problem '" + e.name + "' has no parameter '" + k + "'");
    p[k] = v;
  }
  ProblemSpec s = e.build(p);
  check_shapes(s);
  return s;
}

}  // namespace twoscale
