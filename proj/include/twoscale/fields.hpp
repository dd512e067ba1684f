#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"

namespace twoscale {

/// Matrix-valued coefficient f(x, ξ) supplied as an analytic closure.  The
/// closure writes a column-major rows×cols block into `out`.  The flags let
/// the samplers skip redundant evaluations and let the solvers reuse one
/// factorization when nothing depends on x.
struct MatrixField {
  int rows = 0;
  int cols = 0;
  bool x_dependent = false;
  bool xi_dependent = false;
  bool zero = true;
  std::function<void(const double* x, const double* xi, cplx* out)> eval;

  CMatrix operator()(const double* x, const double* xi) const {
    CMatrix out = CMatrix::Zero(rows, cols);
    if (!zero) eval(x, xi, out.data());
    return out;
  }

  static MatrixField zeros(int r, int c) {
    MatrixField f;
    f.rows = r;
    f.cols = c;
    f.eval = [r, c](const double*, const double*, cplx* out) {
      for (int k = 0; k < r * c; ++k) out[k] = 0.0;
    };
    return f;
  }

  static MatrixField constant(const CMatrix& value) {
    MatrixField f;
    f.rows = static_cast<int>(value.rows());
    f.cols = static_cast<int>(value.cols());
    f.zero = value.cwiseAbs().maxCoeff() == 0.0;
    f.eval = [value](const double*, const double*, cplx* out) {
      for (Eigen::Index k = 0; k < value.size(); ++k) out[k] = value.data()[k];
    };
    return f;
  }

  /// Generic closure; `xdep`/`xidep` declare which variables it reads.
  static MatrixField make(int r, int c, bool xdep, bool xidep,
                          std::function<void(const double*, const double*, cplx*)> fn) {
    MatrixField f;
    f.rows = r;
    f.cols = c;
    f.x_dependent = xdep;
    f.xi_dependent = xidep;
    f.zero = false;
    f.eval = std::move(fn);
    return f;
  }

  /// Scalar convenience wrapper for 1×1 fields.
  static MatrixField scalar(bool xdep, bool xidep, std::function<double(const double*, const double*)> fn) {
    return make(1, 1, xdep, xidep, [fn = std::move(fn)](const double* x, const double* xi, cplx* out) {
      out[0] = fn(x, xi);
    });
  }
};

/// Full description of the operator
///   H_ε = B(∂)* A(x, x/ε) B(∂) + a_ε(x, ∂) + V(x, x/ε)
/// with B(∂) = Σ B_i ∂_i and a(x,ξ,∂) = Σ a_i ∂_i b_i − b_i* ∂_i a_i*.
struct ProblemSpec {
  std::string name;
  int d = 1;
  int n = 1;
  int m = 1;
  std::vector<CMatrix> B;        ///< d constant m×n matrices
  MatrixField A;                 ///< hermitian m×m
  std::vector<MatrixField> a;    ///< d fields n×n (empty: no first-order part)
  std::vector<MatrixField> b;    ///< d fields n×n depending on x only
  MatrixField V;                 ///< hermitian n×n
  std::vector<double> periods;   ///< cell periods per axis

  bool has_first_order() const {
    for (const auto& f : a)
      if (!f.zero) return true;
    return false;
  }

  /// True when no coefficient depends on the fast variable.
  bool xi_independent() const {
    if (A.xi_dependent || V.xi_dependent) return false;
    for (const auto& f : a)
      if (!f.zero && f.xi_dependent) return false;
    return true;
  }
};

/// Uniform periodic grid on the cell box; node index is row-major with
/// axis 0 slowest.
class CellGrid {
 public:
  CellGrid() = default;

  CellGrid(std::vector<double> periods, std::vector<int> points)
      : periods_(std::move(periods)), points_(std::move(points)) {
    require(!periods_.empty() && periods_.size() == points_.size(), ErrorCode::InvalidArgument,
            "cell grid needs one point count per period");
    size_ = 1;
    for (std::size_t a = 0; a < points_.size(); ++a) {
      require(points_[a] >= 8 && points_[a] % 2 == 0, ErrorCode::InvalidArgument,
              "cell grid points per axis must be even and at least 8");
      require(periods_[a] > 0.0, ErrorCode::InvalidArgument, "cell periods must be positive");
      size_ *= points_[a];
    }
    strides_.assign(points_.size(), 1);
    for (int a = dim() - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * points_[a + 1];
  }

  CellGrid(std::vector<double> periods, int points)
      : CellGrid(periods, std::vector<int>(periods.size(), points)) {}

  int dim() const { return static_cast<int>(points_.size()); }
  int size() const { return size_; }
  int points(int axis) const { return points_[axis]; }
  int stride(int axis) const { return strides_[axis]; }
  double period(int axis) const { return periods_[axis]; }
  double spacing(int axis) const { return periods_[axis] / points_[axis]; }
  const std::vector<double>& periods() const { return periods_; }
  const std::vector<int>& point_counts() const { return points_; }

  double volume() const {
    double v = 1.0;
    for (double p : periods_) v *= p;
    return v;
  }
  double weight() const { return volume() / size_; }

  int axis_index(int q, int axis) const { return (q / strides_[axis]) % points_[axis]; }

  double coord(int q, int axis) const { return axis_index(q, axis) * spacing(axis); }

  void coords(int q, double* out) const {
    for (int a = 0; a < dim(); ++a) out[a] = coord(q, a);
  }

 private:
  std::vector<double> periods_;
  std::vector<int> points_;
  std::vector<int> strides_;
  int size_ = 0;
};

/// Tensor grid on [−L, L]^d with homogeneous Dirichlet data imposed through
/// zero ghost values one spacing outside the box.  Node index is row-major
/// with axis 0 slowest.
class SpatialGrid {
 public:
  SpatialGrid() = default;

  SpatialGrid(double half_width, std::vector<int> points) : half_width_(half_width), points_(std::move(points)) {
    require(half_width_ > 0.0, ErrorCode::InvalidArgument, "half width must be positive");
    size_ = 1;
    for (int p : points_) {
      require(p >= 16, ErrorCode::InvalidArgument, "spatial grid needs at least 16 points per axis");
      size_ *= p;
    }
    strides_.assign(points_.size(), 1);
    for (int a = dim() - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * points_[a + 1];
  }

  SpatialGrid(int d, double half_width, int points) : SpatialGrid(half_width, std::vector<int>(d, points)) {}

  int dim() const { return static_cast<int>(points_.size()); }
  int size() const { return size_; }
  int points(int axis) const { return points_[axis]; }
  int stride(int axis) const { return strides_[axis]; }
  double half_width() const { return half_width_; }
  double spacing(int axis) const { return 2.0 * half_width_ / (points_[axis] - 1); }
  const std::vector<int>& point_counts() const { return points_; }

  /// Volume element of the discrete L2 inner product.
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= spacing(a);
    return v;
  }

  int axis_index(int j, int axis) const { return (j / strides_[axis]) % points_[axis]; }
  double coord(int j, int axis) const { return -half_width_ + axis_index(j, axis) * spacing(axis); }

  void coords(int j, double* out) const {
    for (int a = 0; a < dim(); ++a) out[a] = coord(j, a);
  }

 private:
  double half_width_ = 1.0;
  std::vector<int> points_;
  std::vector<int> strides_;
  int size_ = 0;
};

/// A MatrixField sampled on SpatialGrid × CellGrid.  Each column holds the
/// blocks for one spatial node, cell nodes stacked; redundant axes collapse.
struct SampledField {
  int rows = 0;
  int cols = 0;
  bool x_dependent = false;
  bool xi_dependent = false;
  bool zero = true;
  CMatrix data;

  int block() const { return rows * cols; }

  const cplx* at(int j, int q) const {
    const int jj = x_dependent ? j : 0;
    const int qq = xi_dependent ? q : 0;
    return data.data() + static_cast<Eigen::Index>(jj) * data.rows() + static_cast<Eigen::Index>(qq) * block();
  }

  CMatrix matrix(int j, int q) const {
    return Eigen::Map<const CMatrix>(at(j, q), rows, cols);
  }
};

inline SampledField sample(const MatrixField& f, const SpatialGrid& sg, const CellGrid& cg) {
  SampledField s;
  s.rows = f.rows;
  s.cols = f.cols;
  s.x_dependent = f.x_dependent && !f.zero;
  s.xi_dependent = f.xi_dependent && !f.zero;
  s.zero = f.zero;
  const int nx = s.x_dependent ? sg.size() : 1;
  const int nq = s.xi_dependent ? cg.size() : 1;
  s.data = CMatrix::Zero(static_cast<Eigen::Index>(nq) * s.block(), nx);
  if (f.zero) return s;
  std::vector<double> x(sg.dim(), 0.0), xi(cg.dim(), 0.0);
  for (int j = 0; j < nx; ++j) {
    if (s.x_dependent) sg.coords(j, x.data());
    for (int q = 0; q < nq; ++q) {
      if (s.xi_dependent) cg.coords(q, xi.data());
      f.eval(x.data(), xi.data(), s.data.col(j).data() + static_cast<Eigen::Index>(q) * s.block());
    }
  }
  return s;
}

/// Cell average of a sampled field at spatial node j (equal-weight rule).
inline CMatrix cell_mean(const SampledField& f, int j, int cell_size) {
  if (!f.xi_dependent) return f.matrix(j, 0);
  CMatrix acc = CMatrix::Zero(f.rows, f.cols);
  for (int q = 0; q < cell_size; ++q) acc += f.matrix(j, q);
  return acc / static_cast<double>(cell_size);
}

struct RankCertificate {
  std::vector<std::vector<double>> directions;
  double min_singular_ratio = 0.0;  ///< min over ζ of σ_min/σ_max of B(ζ)
};

struct ValidatedProblem {
  ProblemSpec spec;
  double c1 = 0.0;
  double c2 = 0.0;
  double hermiticity_residual = 0.0;
  RankCertificate rank;
};

/// Deterministic ζ sample: the 2d signed axis directions followed by 32
/// pseudo-random unit vectors from a fixed seed.
inline std::vector<std::vector<double>> rank_directions(int d) {
  std::vector<std::vector<double>> dirs;
  for (int a = 0; a < d; ++a)
    for (double s : {1.0, -1.0}) {
      std::vector<double> z(d, 0.0);
      z[a] = s;
      dirs.push_back(z);
    }
  std::mt19937_64 rng(0x5eed2bad1dULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (static_cast<int>(dirs.size()) < 2 * d + 32) {
    std::vector<double> z(d);
    double nrm = 0.0;
    for (auto& v : z) {
      v = u(rng);
      nrm += v * v;
    }
    if (nrm < 1e-6 || nrm > 1.0) continue;
    for (auto& v : z) v /= std::sqrt(nrm);
    dirs.push_back(z);
  }
  return dirs;
}

inline CMatrix symbol(const ProblemSpec& spec, const std::vector<double>& zeta) {
  CMatrix Bz = CMatrix::Zero(spec.m, spec.n);
  for (int a = 0; a < spec.d; ++a) Bz += zeta[a] * spec.B[a];
  return Bz;
}

inline void check_shapes(const ProblemSpec& spec) {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::InvalidArgument, w); };
  if (spec.d < 1 || spec.n < 1 || spec.m < 1) bad("dimensions must be positive");
  if (static_cast<int>(spec.B.size()) != spec.d) bad("need one B matrix per axis");
  for (const auto& Bi : spec.B)
    if (Bi.rows() != spec.m || Bi.cols() != spec.n) bad("B matrices must be m×n");
  if (spec.A.rows != spec.m || spec.A.cols != spec.m) bad("A must be m×m");
  if (spec.V.rows != spec.n || spec.V.cols != spec.n) bad("V must be n×n");
  if (static_cast<int>(spec.periods.size()) != spec.d) bad("need one cell period per axis");
  if (!spec.a.empty() && static_cast<int>(spec.a.size()) != spec.d) bad("need zero or d first-order fields a_i");
  if (!spec.a.empty() && static_cast<int>(spec.b.size()) != spec.d) bad("need d fields b_i alongside a_i");
  for (const auto& f : spec.a)
    if (f.rows != spec.n || f.cols != spec.n) bad("a_i must be n×n");
  for (const auto& f : spec.b) {
    if (f.rows != spec.n || f.cols != spec.n) bad("b_i must be n×n");
    if (f.xi_dependent) bad("b_i may depend on x only");
  }
}

/// Checks hermiticity and uniform ellipticity of A on every sample node,
/// hermiticity of V, and rank B(ζ) = n over the deterministic ζ sample.
inline ValidatedProblem validate_problem(const ProblemSpec& spec, const SpatialGrid& sg, const CellGrid& cg) {
  check_shapes(spec);
  require(sg.dim() == spec.d && cg.dim() == spec.d, ErrorCode::InvalidArgument, "grid dimension mismatch");
  ValidatedProblem out;
  out.spec = spec;
  const SampledField A = sample(spec.A, sg, cg);
  const SampledField V = sample(spec.V, sg, cg);
  const int nx = A.x_dependent ? sg.size() : 1;
  const int nq = A.xi_dependent ? cg.size() : 1;
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = -std::numeric_limits<double>::infinity();
  double herm = 0.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es;
  for (int j = 0; j < nx; ++j)
    for (int q = 0; q < nq; ++q) {
      CMatrix a = A.matrix(j, q);
      for (Eigen::Index k = 0; k < a.size(); ++k)
        require(std::isfinite(a.data()[k].real()) && std::isfinite(a.data()[k].imag()),
                ErrorCode::EllipticityViolation, "non-finite coefficient sample");
      herm = std::max(herm, max_abs(a - a.adjoint()));
      es.compute(a, Eigen::EigenvaluesOnly);
      c1 = std::min(c1, es.eigenvalues().minCoeff());
      c2 = std::max(c2, es.eigenvalues().maxCoeff());
    }
  const int vx = V.x_dependent ? sg.size() : 1;
  const int vq = V.xi_dependent ? cg.size() : 1;
  for (int j = 0; j < vx; ++j)
    for (int q = 0; q < vq; ++q) {
      CMatrix v = V.matrix(j, q);
      herm = std::max(herm, max_abs(v - v.adjoint()));
    }
  if (herm > 1e-12)
    throw Error(ErrorCode::EllipticityViolation, "coefficient not hermitian (residual " + std::to_string(herm) + ")");
  if (!(c1 > 0.0))
    throw Error(ErrorCode::EllipticityViolation, "A not positive definite (min eigenvalue " + std::to_string(c1) + ")");
  out.c1 = c1;
  out.c2 = c2;
  out.hermiticity_residual = herm;

  out.rank.directions = rank_directions(spec.d);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& z : out.rank.directions) {
    Eigen::JacobiSVD<CMatrix> svd(symbol(spec, z));
    const auto& s = svd.singularValues();
    const double ratio = (s.size() < spec.n || s(0) == 0.0) ? 0.0 : s(spec.n - 1) / s(0);
    worst = std::min(worst, ratio);
  }
  out.rank.min_singular_ratio = worst;
  require(worst > 1e-10, ErrorCode::RankDeficiency, "B(ζ) loses rank on a sampled direction");
  return out;
}

}  // namespace twoscale
