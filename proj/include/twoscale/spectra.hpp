#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "core.hpp"

namespace twoscale {

struct EigenOptions {
  int dense_limit = 1200;      ///< unknowns below which a dense solver is used
  double residual_tol = 1e-10; ///< relative eigen-residual for convergence
  int max_iterations = 400;
  int min_block = 8;
  unsigned long long seed = 0x7e57c0de;
};

/// Eigenpairs of a hermitian matrix sorted by eigenvalue.  Vectors are
/// Euclidean-normalized columns.
struct EigenPairs {
  RVector values;
  CMatrix vectors;
  std::vector<double> all_values;  ///< every Ritz/eigenvalue that was resolved
};

namespace detail {

inline bool is_real(const CSparse& H) {
  for (int k = 0; k < H.outerSize(); ++k)
    for (CSparse::InnerIterator it(H, k); it; ++it)
      if (it.value().imag() != 0.0) return false;
  return true;
}

/// Shift-invert subspace iteration around σ.  Returns the block's Ritz
/// pairs sorted by distance to σ together with their residual norms.
template <class Scalar>
struct ShiftInvert {
  using Sparse = Eigen::SparseMatrix<Scalar>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  ShiftInvert(const Sparse& H, double sigma) : H_(H), sigma_(sigma) {
    Sparse S = H;
    Sparse I(H.rows(), H.cols());
    I.setIdentity();
    S -= Scalar(sigma) * I;
    ldlt_.compute(S);
    use_lu_ = ldlt_.info() != Eigen::Success;
    if (!use_lu_) {
      // Accept the pivot-free factorization only if it reproduces a probe.
      Mat probe = Mat::Ones(H.rows(), 1);
      Mat x = ldlt_.solve(probe);
      if (!x.allFinite() || (S * x - probe).norm() > 1e-6 * probe.norm()) use_lu_ = true;
    }
    if (use_lu_) {
      lu_.analyzePattern(S);
      lu_.factorize(S);
      if (lu_.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "shifted operator is singular");
    }
  }

  Mat solve(const Mat& B) const { return use_lu_ ? Mat(lu_.solve(B)) : Mat(ldlt_.solve(B)); }

  const Sparse& H_;
  double sigma_;
  Eigen::SimplicialLDLT<Sparse> ldlt_;
  Eigen::SparseLU<Sparse> lu_;
  bool use_lu_ = false;
};

template <class Scalar>
EigenPairs subspace_near(const Eigen::SparseMatrix<Scalar>& H, double lo, double hi, int expected,
                         const EigenOptions& opt) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index N = H.rows();
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  // Offset the shift so it cannot coincide with an eigenvalue exactly.
  const double sigma = center + 1e-7 * (1.0 + std::abs(center)) * std::numbers::sqrt2;
  ShiftInvert<Scalar> op(H, sigma);
  int block = std::max(opt.min_block, expected + 6);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  while (true) {
    block = static_cast<int>(std::min<Eigen::Index>(block, N));
    Mat X(N, block);
    for (Eigen::Index c = 0; c < block; ++c)
      for (Eigen::Index r = 0; r < N; ++r) {
        if constexpr (std::is_same_v<Scalar, double>)
          X(r, c) = nd(rng);
        else
          X(r, c) = Scalar(nd(rng), nd(rng));
      }
    Eigen::VectorXd theta;
    Mat V;
    std::vector<double> res(block, 1.0);
    const int guard = std::max(2, block / 4);
    for (int it = 0; it < opt.max_iterations; ++it) {
      Mat Y = op.solve(X);
      Eigen::HouseholderQR<Mat> qr(Y);
      X = qr.householderQ() * Mat::Identity(N, block);
      const Mat HX = H * X;
      Mat Hs = X.adjoint() * HX;
      Hs = (Hs + Mat(Hs.adjoint())) * 0.5;
      Eigen::SelfAdjointEigenSolver<Mat> es(Hs);
      // order Ritz pairs by distance to σ
      std::vector<int> idx(block);
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(es.eigenvalues()(a) - sigma) < std::abs(es.eigenvalues()(b) - sigma);
      });
      Mat U(block, block);
      theta.resize(block);
      for (int c = 0; c < block; ++c) {
        U.col(c) = es.eigenvectors().col(idx[c]);
        theta(c) = es.eigenvalues()(idx[c]);
      }
      X = X * U;
      const Mat R = HX * U - X * theta.asDiagonal();
      for (int c = 0; c < block; ++c) res[c] = R.col(c).norm() / (1.0 + std::abs(theta(c)));
      // converged once every pair inside the trusted part of the block is
      bool done = true;
      for (int c = 0; c < block - guard; ++c)
        if (res[c] > opt.residual_tol) done = false;
      if (done) break;
    }
    const int trusted = block - guard;
    const double reach = std::abs(theta(trusted - 1) - sigma);
    const bool covers = reach > half + std::abs(sigma - center) || block == N;
    bool converged = true;
    for (int c = 0; c < trusted; ++c)
      if (res[c] > 1e3 * opt.residual_tol) converged = false;
    if (!converged) throw Error(ErrorCode::SolveFailure, "eigen iteration did not converge");
    if (covers) {
      EigenPairs out;
      std::vector<int> order(trusted);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return theta(a) < theta(b); });
      std::vector<int> inside;
      for (int c : order) {
        out.all_values.push_back(theta(c));
        if (theta(c) >= lo && theta(c) <= hi) inside.push_back(c);
      }
      out.values.resize(static_cast<Eigen::Index>(inside.size()));
      out.vectors.resize(N, static_cast<Eigen::Index>(inside.size()));
      for (std::size_t c = 0; c < inside.size(); ++c) {
        out.values(c) = theta(inside[c]);
        out.vectors.col(c) = X.col(inside[c]).template cast<cplx>();
      }
      return out;
    }
    block *= 2;
  }
}

}  // namespace detail

/// All eigenpairs of the hermitian matrix H in [lo, hi], plus every other
/// eigenvalue that was resolved on the way (used to measure gaps).
inline EigenPairs eigen_window(const CSparse& H, double lo, double hi, int expected = 1,
                               const EigenOptions& opt = {}) {
  require(hi > lo, ErrorCode::InvalidArgument, "empty eigen window");
  const Eigen::Index N = H.rows();
  if (N <= opt.dense_limit) {
    CMatrix Hd = CMatrix(H);
    Hd = (Hd + CMatrix(Hd.adjoint())) * 0.5;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(Hd);
    EigenPairs out;
    std::vector<int> inside;
    for (Eigen::Index k = 0; k < N; ++k) {
      out.all_values.push_back(es.eigenvalues()(k));
      if (es.eigenvalues()(k) >= lo && es.eigenvalues()(k) <= hi) inside.push_back(static_cast<int>(k));
    }
    out.values.resize(static_cast<Eigen::Index>(inside.size()));
    out.vectors.resize(N, static_cast<Eigen::Index>(inside.size()));
    for (std::size_t c = 0; c < inside.size(); ++c) {
      out.values(c) = es.eigenvalues()(inside[c]);
      out.vectors.col(c) = es.eigenvectors().col(inside[c]);
    }
    return out;
  }
  if (detail::is_real(H)) {
    const RSparse Hr = H.real();
    return detail::subspace_near<double>(Hr, lo, hi, expected, opt);
  }
  return detail::subspace_near<cplx>(H, lo, hi, expected, opt);
}

/// Rotates each column so that its largest-magnitude entry is real positive.
inline void fix_phases(CMatrix& V) {
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    Eigen::Index arg = 0;
    V.col(c).cwiseAbs().maxCoeff(&arg);
    const cplx z = V(arg, c);
    if (std::abs(z) > 0.0) V.col(c) *= std::conj(z) / std::abs(z);
  }
}

/// Isolated eigenvalue cluster of a discrete operator.  Vectors are stored
/// as n × X spatial fields normalized in the discrete L2 product with
/// volume element `weight`.
struct EigenCluster {
  double lambda0 = 0.0;
  int N = 0;
  RVector eigenvalues;
  std::vector<CMatrix> psi;
  double gap = 0.0;
  double tolerance = 0.0;
  double max_residual = 0.0;
  double gram_defect = 0.0;
  double weight = 1.0;
};

/// Truncation diagnostic for the box [−L, L]^d: the largest modulus of the
/// cluster vectors on the outermost grid nodes relative to their overall
/// maximum.  Values that are not small signal that L is too small for the
/// eigenfunctions to have decayed before the Dirichlet walls.
inline double boundary_ratio(const std::vector<CMatrix>& psi, const SpatialGrid& sg) {
  double edge = 0.0, peak = 0.0;
  for (const auto& p : psi)
    for (int j = 0; j < sg.size(); ++j) {
      const double v = p.col(j).norm();
      peak = std::max(peak, v);
      for (int a = 0; a < sg.dim(); ++a) {
        const int k = sg.axis_index(j, a);
        if (k == 0 || k == sg.points(a) - 1) {
          edge = std::max(edge, v);
          break;
        }
      }
    }
  return peak > 0.0 ? edge / peak : 0.0;
}

struct ClusterOptions {
  double group_tol = 1e-6;  ///< relative grouping threshold
  EigenOptions eig;
};

/// Extracts the eigenvalues of H in [target − radius, target + radius] as
/// one cluster, checks that they group within the threshold and that the
/// rest of the resolved spectrum stays clear.
inline EigenCluster eigen_cluster(const CSparse& H, int n, double weight, double target, double radius,
                                  const ClusterOptions& opt = {}) {
  EigenPairs ep = eigen_window(H, target - radius, target + radius, 1, opt.eig);
  if (ep.values.size() == 0) throw Error(ErrorCode::EmptyCluster, "no eigenvalue in the requested window");
  EigenCluster cl;
  cl.N = static_cast<int>(ep.values.size());
  cl.eigenvalues = ep.values;
  cl.lambda0 = ep.values.mean();
  cl.tolerance = opt.group_tol * (1.0 + std::abs(cl.lambda0));
  cl.weight = weight;
  if (ep.values.maxCoeff() - ep.values.minCoeff() > cl.tolerance)
    throw Error(ErrorCode::NotIsolated, "window holds eigenvalues that do not group into one cluster");
  double gap = std::numeric_limits<double>::infinity();
  for (double v : ep.all_values)
    if (v < ep.values.minCoeff() - cl.tolerance || v > ep.values.maxCoeff() + cl.tolerance)
      gap = std::min(gap, std::min(std::abs(v - ep.values.minCoeff()), std::abs(v - ep.values.maxCoeff())));
  cl.gap = gap;
  if (!(gap > 10.0 * cl.tolerance)) throw Error(ErrorCode::NotIsolated, "cluster is not separated from the spectrum");
  CMatrix V = ep.vectors;
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    for (Eigen::Index p = 0; p < c; ++p) V.col(c) -= V.col(p) * (V.col(p).dot(V.col(c)));
    V.col(c).normalize();
  }
  fix_phases(V);
  const CMatrix G = V.adjoint() * V;
  cl.gram_defect = max_abs(G - CMatrix::Identity(cl.N, cl.N));
  double res = 0.0;
  for (int c = 0; c < cl.N; ++c) {
    const CVector r = H * V.col(c) - cl.lambda0 * V.col(c);
    res = std::max(res, r.norm());
  }
  cl.max_residual = res;
  const double s = 1.0 / std::sqrt(weight);
  const Eigen::Index X = V.rows() / n;
  for (int c = 0; c < cl.N; ++c) {
    CMatrix f(n, X);
    for (Eigen::Index j = 0; j < X; ++j)
      for (int r = 0; r < n; ++r) f(r, j) = V(j * n + r, c) * s;
    cl.psi.push_back(f);
  }
  return cl;
}

/// Flattens an n × X spatial field into node-major vector form.
inline CVector flatten(const CMatrix& f) { return Eigen::Map<const CVector>(f.data(), f.size()); }

inline CMatrix unflatten(const CVector& v, int n) {
  return Eigen::Map<const CMatrix>(v.data(), n, v.size() / n);
}

/// Solver for (H − λ0) u = P⊥ g with u ⊥ span Ψ0, built as a bordered
/// saddle-point system so the orthogonality constraint holds exactly.
class ReducedResolvent {
 public:
  ReducedResolvent(const CSparse& H, const EigenCluster& cl) : H_(H), cl_(cl) {
    const Eigen::Index X = H.rows();
    const int N = cl.N;
    P_.resize(X, N);
    const double s = std::sqrt(cl.weight);
    for (int c = 0; c < N; ++c) P_.col(c) = flatten(cl.psi[c]) * s;  // Euclidean-orthonormal
    std::vector<CTriplet> t;
    t.reserve(static_cast<std::size_t>(H.nonZeros() + 2 * X * N + X));
    for (int k = 0; k < H.outerSize(); ++k)
      for (CSparse::InnerIterator it(H, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index r = 0; r < X; ++r) t.emplace_back(r, r, -cl.lambda0);
    for (int c = 0; c < N; ++c)
      for (Eigen::Index r = 0; r < X; ++r) {
        if (P_(r, c) == cplx(0.0)) continue;
        t.emplace_back(r, X + c, P_(r, c));
        t.emplace_back(X + c, r, std::conj(P_(r, c)));
      }
    CSparse Bm(X + N, X + N);
    Bm.setFromTriplets(t.begin(), t.end());
    Bm.makeCompressed();
    lu_.analyzePattern(Bm);
    lu_.factorize(Bm);
    if (lu_.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "bordered system factorization failed");
  }

  struct Result {
    CMatrix u;           ///< n × X spatial field
    double defect = 0;   ///< ‖P g‖ in the discrete L2 norm
    double residual = 0; ///< relative residual of the constrained equation
    double orthogonality = 0;
  };

  Result solve(const CMatrix& g) const {
    const Eigen::Index X = H_.rows();
    const int N = cl_.N;
    const CVector gv = flatten(g);
    const CVector coef = P_.adjoint() * gv;
    const CVector gp = gv - P_ * coef;
    CVector rhs = CVector::Zero(X + N);
    rhs.head(X) = gp;
    const CVector sol = lu_.solve(rhs);
    CVector u = sol.head(X);
    Result r;
    r.defect = coef.norm() * std::sqrt(cl_.weight);
    const CVector res = H_ * u - cl_.lambda0 * u - gp;
    r.residual = res.norm() / std::max(gv.norm(), 1e-300);
    r.orthogonality = (P_.adjoint() * u).cwiseAbs().maxCoeff() * std::sqrt(cl_.weight);
    if (!(r.residual <= 1e-8) && gp.norm() > 0.0)
      throw Error(ErrorCode::SolveFailure, "reduced resolvent residual " + std::to_string(r.residual));
    r.u = unflatten(u, g.rows() == 0 ? 1 : static_cast<int>(g.rows()));
    return r;
  }

 private:
  CSparse H_;
  EigenCluster cl_;
  CMatrix P_;
  Eigen::SparseLU<CSparse> lu_;
};

}  // namespace twoscale
