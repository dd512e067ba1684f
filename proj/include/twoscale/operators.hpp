#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "fields.hpp"

namespace twoscale {

/// Fourier collocation derivative on K equispaced points of a period P
/// (K even).  Real, antisymmetric, annihilates constants and the Nyquist
/// mode.
inline Eigen::MatrixXd spectral_diff(int K, double P) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(K, K);
  const double pi = std::numbers::pi;
  for (int j = 0; j < K; ++j)
    for (int l = 0; l < K; ++l) {
      if (j == l) continue;
      const int k = j - l;
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      D(j, l) = (pi / P) * sign / std::tan(pi * k / K);
    }
  return D;
}

/// Derivative along one cell axis acting on fields with `comp` components
/// per cell node (component index fastest).
inline RSparse cell_axis_diff(const CellGrid& cg, int axis, int comp) {
  const Eigen::MatrixXd D = spectral_diff(cg.points(axis), cg.period(axis));
  const int K = cg.points(axis);
  const int s = cg.stride(axis);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(cg.size()) * K * comp);
  for (int q = 0; q < cg.size(); ++q) {
    const int i = cg.axis_index(q, axis);
    for (int l = 0; l < K; ++l) {
      if (l == i) continue;
      const int q2 = q + (l - i) * s;
      for (int c = 0; c < comp; ++c) t.emplace_back(q * comp + c, q2 * comp + c, D(i, l));
    }
  }
  RSparse M(cg.size() * comp, cg.size() * comp);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

/// Block-diagonal I_Q ⊗ B as a sparse matrix.
inline CSparse kron_identity(int Q, const CMatrix& B) {
  std::vector<CTriplet> t;
  for (int q = 0; q < Q; ++q)
    for (Eigen::Index r = 0; r < B.rows(); ++r)
      for (Eigen::Index c = 0; c < B.cols(); ++c)
        if (B(r, c) != cplx(0.0)) t.emplace_back(q * B.rows() + r, q * B.cols() + c, B(r, c));
  CSparse M(Q * B.rows(), Q * B.cols());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

/// Pointwise product with a sampled matrix field.  Fields are stored as
/// (Q·comp) × X with one column per spatial node; `Q` may be 1 for purely
/// spatial data.  With `adjoint` the conjugate transpose block is applied.
inline CMatrix apply_pointwise(const SampledField& F, const CMatrix& u, int Q, bool adjoint = false) {
  const int r = adjoint ? F.cols : F.rows;
  const int c = adjoint ? F.rows : F.cols;
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(Q) * r, u.cols());
  if (F.zero) return out;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const cplx* uj = u.col(j).data();
    cplx* oj = out.col(j).data();
    for (int q = 0; q < Q; ++q) {
      const cplx* f = F.at(static_cast<int>(j), q);
      const cplx* uq = uj + q * c;
      cplx* oq = oj + q * r;
      if (!adjoint) {
        for (int i = 0; i < r; ++i) {
          cplx acc = 0.0;
          for (int k = 0; k < c; ++k) acc += f[i + k * F.rows] * uq[k];
          oq[i] = acc;
        }
      } else {
        for (int i = 0; i < r; ++i) {
          cplx acc = 0.0;
          for (int k = 0; k < c; ++k) acc += std::conj(f[k + i * F.rows]) * uq[k];
          oq[i] = acc;
        }
      }
    }
  }
  return out;
}

/// Centered difference along a spatial axis with zero ghost values.  Works
/// for any per-node block layout because it only combines columns.
inline CMatrix x_diff(const SpatialGrid& sg, const CMatrix& u, int axis) {
  CMatrix out(u.rows(), u.cols());
  const int s = sg.stride(axis);
  const int M = sg.points(axis);
  const double inv = 1.0 / (2.0 * sg.spacing(axis));
  for (int j = 0; j < sg.size(); ++j) {
    const int i = sg.axis_index(j, axis);
    if (i > 0 && i < M - 1)
      out.col(j) = (u.col(j + s) - u.col(j - s)) * inv;
    else if (i == 0)
      out.col(j) = u.col(j + s) * inv;
    else
      out.col(j) = -u.col(j - s) * inv;
  }
  return out;
}

/// Sampled coefficients and precomputed cell operators for a problem on a
/// given SpatialGrid × CellGrid pair.  Two-scale fields are dense matrices
/// of shape (Q·comp) × X; spatial fields are comp × X.
class TwoScaleOps {
 public:
  TwoScaleOps(const ProblemSpec& spec, const SpatialGrid& sg, const CellGrid& cg)
      : spec_(spec), sg_(sg), cg_(cg) {
    check_shapes(spec_);
    require(sg_.dim() == spec_.d && cg_.dim() == spec_.d, ErrorCode::InvalidArgument, "grid dimension mismatch");
    Q_ = cg_.size();
    X_ = sg_.size();
    A_ = sample(spec_.A, sg_, cg_);
    V_ = sample(spec_.V, sg_, cg_);
    if (spec_.has_first_order()) {
      for (int i = 0; i < spec_.d; ++i) {
        a_.push_back(sample(spec_.a[i], sg_, cg_));
        b_.push_back(sample(spec_.b[i], sg_, cg_));
      }
    }
    for (int p = 0; p < spec_.d; ++p) {
      dxi_n_.push_back(cell_axis_diff(cg_, p, spec_.n).cast<cplx>());
      BQ_.push_back(kron_identity(Q_, spec_.B[p]));
      BQadj_.push_back(CSparse(BQ_.back().adjoint()));
    }
    DB_ = CSparse(Q_ * spec_.m, Q_ * spec_.n);
    for (int p = 0; p < spec_.d; ++p) DB_ += BQ_[p] * dxi_n_[p];
    DBadj_ = CSparse(DB_.adjoint());
  }

  const ProblemSpec& spec() const { return spec_; }
  const SpatialGrid& spatial() const { return sg_; }
  const CellGrid& cell() const { return cg_; }
  int Q() const { return Q_; }
  int X() const { return X_; }
  int n() const { return spec_.n; }
  int m() const { return spec_.m; }
  int d() const { return spec_.d; }
  const SampledField& A() const { return A_; }
  const SampledField& V() const { return V_; }
  const std::vector<SampledField>& a() const { return a_; }
  const std::vector<SampledField>& b() const { return b_; }
  const CSparse& DB() const { return DB_; }
  const CSparse& DB_adjoint() const { return DBadj_; }
  const CSparse& xi_diff(int axis) const { return dxi_n_[axis]; }
  const CSparse& BQ(int axis) const { return BQ_[axis]; }

  // ---- basic building blocks -------------------------------------------

  /// Replicates a spatial field (n × X) over the cell nodes.
  CMatrix lift(const CMatrix& f) const {
    CMatrix out(static_cast<Eigen::Index>(Q_) * f.rows(), f.cols());
    for (int q = 0; q < Q_; ++q) out.middleRows(q * f.rows(), f.rows()) = f;
    return out;
  }

  /// Cell mean of a two-scale field with `comp` components.
  CMatrix mean(const CMatrix& u, int comp) const {
    CMatrix out = CMatrix::Zero(comp, u.cols());
    for (int q = 0; q < Q_; ++q) out += u.middleRows(q * comp, comp);
    return out / static_cast<double>(Q_);
  }

  /// ⟨⟨u, v⟩⟩ = h^d Σ_x mean_ξ(u · v̄), linear in the first slot.
  cplx inner2(const CMatrix& u, const CMatrix& v) const {
    return sg_.cell_volume() / Q_ * (v.conjugate().cwiseProduct(u)).sum();
  }

  /// Discrete L2 product of spatial fields, linear in the first slot.
  cplx inner(const CMatrix& u, const CMatrix& v) const {
    return sg_.cell_volume() * (v.conjugate().cwiseProduct(u)).sum();
  }

  double norm(const CMatrix& u) const { return std::sqrt(sg_.cell_volume() * u.squaredNorm()); }
  double norm2(const CMatrix& u) const { return std::sqrt(sg_.cell_volume() / Q_ * u.squaredNorm()); }

  /// B(∂x) u on two-scale (Qcell = Q) or spatial (Qcell = 1) fields.
  CMatrix Bx(const CMatrix& u, int Qcell) const {
    CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(Qcell) * spec_.m, u.cols());
    for (int p = 0; p < spec_.d; ++p) {
      const CMatrix du = x_diff(sg_, u, p);
      if (Qcell == Q_)
        out += BQ_[p] * du;
      else
        out += kron_identity(Qcell, spec_.B[p]) * du;
    }
    return out;
  }

  /// Discrete adjoint of Bx: −Σ B_p* D_p w.
  CMatrix Bx_adjoint(const CMatrix& w, int Qcell) const {
    CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(Qcell) * spec_.n, w.cols());
    for (int p = 0; p < spec_.d; ++p) {
      const CMatrix dw = x_diff(sg_, w, p);
      if (Qcell == Q_)
        out -= BQadj_[p] * dw;
      else
        out -= CSparse(kron_identity(Qcell, spec_.B[p]).adjoint()) * dw;
    }
    return out;
  }

  /// B(∂ξ) u for n-component two-scale fields.
  CMatrix xi_grad(const CMatrix& u) const { return DB_ * u; }
  /// B(∂ξ)* w for m-component two-scale fields.
  CMatrix xi_grad_adjoint(const CMatrix& w) const { return DBadj_ * w; }

  CMatrix mul_A(const CMatrix& w) const { return apply_pointwise(A_, w, Q_); }

  /// Cell operator L = B(∂ξ)* A B(∂ξ) applied at every spatial node.
  CMatrix cell_op(const CMatrix& u) const { return xi_grad_adjoint(mul_A(xi_grad(u))); }

  /// a(x, ξ, ∂ξ) u = Σ a_i b_i ∂ξ_i u − b_i* ∂ξ_i (a_i* u).
  CMatrix a_xi(const CMatrix& u) const {
    CMatrix out = CMatrix::Zero(u.rows(), u.cols());
    for (std::size_t i = 0; i < a_.size(); ++i) {
      if (a_[i].zero) continue;
      const int ii = static_cast<int>(i);
      out += apply_pointwise(a_[i], apply_pointwise(b_[i], dxi_n_[ii] * u, Q_), Q_);
      out -= apply_pointwise(b_[i], dxi_n_[ii] * apply_pointwise(a_[i], u, Q_, true), Q_, true);
    }
    return out;
  }

  /// a(x, ξ, ∂x) u = Σ a_i D_i (b_i u) − b_i* D_i (a_i* u).
  CMatrix a_x(const CMatrix& u) const {
    CMatrix out = CMatrix::Zero(u.rows(), u.cols());
    for (std::size_t i = 0; i < a_.size(); ++i) {
      if (a_[i].zero) continue;
      const int ii = static_cast<int>(i);
      out += apply_pointwise(a_[i], x_diff(sg_, apply_pointwise(b_[i], u, Q_), ii), Q_);
      out -= apply_pointwise(b_[i], x_diff(sg_, apply_pointwise(a_[i], u, Q_, true), ii), Q_, true);
    }
    return out;
  }

  /// Second-order slow part B(∂x)* A B(∂x) u.  Diagonal axis terms use the
  /// compact flux form with A averaged onto cell edges; mixed terms are
  /// centered.
  CMatrix slow_second_order(const CMatrix& u) const {
    CMatrix out = CMatrix::Zero(u.rows(), u.cols());
    for (int p = 0; p < spec_.d; ++p) {
      const CMatrix G = BQ_[p] * u;
      const int s = sg_.stride(p);
      const int M = sg_.points(p);
      const double h = sg_.spacing(p);
      CMatrix flux(G.rows(), G.cols());  // flux on edge (j, j+s)
      CMatrix tmp(G.rows(), 1);
      for (int j = 0; j < X_; ++j) {
        const int i = sg_.axis_index(j, p);
        const bool inner = i < M - 1;
        const Eigen::VectorXcd diff = inner ? Eigen::VectorXcd((G.col(j + s) - G.col(j)) / h)
                                            : Eigen::VectorXcd(-G.col(j) / h);
        edge_A(j, inner ? j + s : j, diff, flux.col(j));
      }
      CMatrix div(G.rows(), G.cols());
      for (int j = 0; j < X_; ++j) {
        const int i = sg_.axis_index(j, p);
        if (i > 0) {
          div.col(j) = (flux.col(j) - flux.col(j - s)) / h;
        } else {
          edge_A(j, j, G.col(j) / h, tmp.col(0));
          div.col(j) = (flux.col(j) - tmp.col(0)) / h;
        }
      }
      out -= BQadj_[p] * div;
    }
    for (int p = 0; p < spec_.d; ++p)
      for (int r = 0; r < spec_.d; ++r) {
        if (p == r) continue;
        const CMatrix w = mul_A(BQ_[r] * x_diff(sg_, u, r));
        out -= BQadj_[p] * x_diff(sg_, w, p);
      }
    return out;
  }

  /// K_{-1} u = B(∂ξ)* A B(∂x) u + B(∂x)* A B(∂ξ) u + a(x, ξ, ∂ξ) u.
  CMatrix K_minus1(const CMatrix& u) const {
    CMatrix out = xi_grad_adjoint(mul_A(Bx(u, Q_)));
    out += Bx_adjoint(mul_A(xi_grad(u)), Q_);
    if (!a_.empty()) out += a_xi(u);
    return out;
  }

  /// K_0 u = B(∂x)* A B(∂x) u + a(x, ξ, ∂x) u + V u.
  CMatrix K0(const CMatrix& u) const {
    CMatrix out = slow_second_order(u);
    if (!a_.empty()) out += a_x(u);
    out += apply_pointwise(V_, u, Q_);
    return out;
  }

 private:
  /// out = ½(A(j1) + A(j2)) v blockwise over cell nodes.
  template <class In, class Out>
  void edge_A(int j1, int j2, const In& v, Out&& out) const {
    const int m = spec_.m;
    for (int q = 0; q < Q_; ++q) {
      const cplx* a1 = A_.at(j1, q);
      const cplx* a2 = A_.at(j2, q);
      for (int r = 0; r < m; ++r) {
        cplx acc = 0.0;
        for (int c = 0; c < m; ++c) acc += 0.5 * (a1[r + c * m] + a2[r + c * m]) * v(q * m + c);
        out(q * m + r) = acc;
      }
    }
  }

  ProblemSpec spec_;
  SpatialGrid sg_;
  CellGrid cg_;
  int Q_ = 0;
  int X_ = 0;
  SampledField A_, V_;
  std::vector<SampledField> a_, b_;
  std::vector<CSparse> dxi_n_;
  std::vector<CSparse> BQ_, BQadj_;
  CSparse DB_, DBadj_;
};

}  // namespace twoscale
