#pragma once

#include <functional>
#include <vector>

#include "fields.hpp"

namespace twoscale {

/// Triplet accumulator for block finite-difference operators on a
/// SpatialGrid with n unknowns per node and zero ghost values outside the
/// box.  Row/column index of unknown c at node j is j·n + c.
class StencilAssembler {
 public:
  StencilAssembler(const SpatialGrid& sg, int n) : sg_(sg), n_(n) {}

  void add_block(int row, int col, const CMatrix& blk) {
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < n_; ++c)
        if (blk(r, c) != cplx(0.0)) t_.emplace_back(row * n_ + r, col * n_ + c, blk(r, c));
  }

  /// −B_p* D⁻(A_e B_p D⁺ u) along axis p.  `edge(j, k)` returns the m×m
  /// coefficient on the edge from node j to its +p neighbour k, where k = −1
  /// denotes the ghost beyond the box; `ghost_lo(j)` gives the edge from the
  /// ghost below a first node.
  void add_compact(int p, const CMatrix& Bp, const std::function<CMatrix(int, int)>& edge,
                   const std::function<CMatrix(int)>& ghost_lo) {
    const int s = sg_.stride(p), M = sg_.points(p);
    const double h2 = sg_.spacing(p) * sg_.spacing(p);
    const CMatrix Bpa = Bp.adjoint();
    for (int j = 0; j < sg_.size(); ++j) {
      const int i = sg_.axis_index(j, p);
      const CMatrix Ap = (i < M - 1) ? edge(j, j + s) : edge(j, -1);
      const CMatrix Am = (i > 0) ? edge(j - s, j) : ghost_lo(j);
      add_block(j, j, Bpa * (Ap + Am) * Bp / h2);
      if (i < M - 1) add_block(j, j + s, -(Bpa * Ap * Bp) / h2);
      if (i > 0) add_block(j, j - s, -(Bpa * Am * Bp) / h2);
    }
  }

  /// −B_p* D_p (G B_q D_q u) with centered differences and G at nodes.
  void add_centered(int p, int q, const CMatrix& Bp, const CMatrix& Bq, const std::function<CMatrix(int)>& G) {
    const int sp = sg_.stride(p), sq = sg_.stride(q);
    const int Mp = sg_.points(p), Mq = sg_.points(q);
    const double scale = 1.0 / (4.0 * sg_.spacing(p) * sg_.spacing(q));
    const CMatrix Bpa = Bp.adjoint();
    for (int j = 0; j < sg_.size(); ++j) {
      const int ip = sg_.axis_index(j, p);
      for (int dp : {1, -1}) {
        if (ip + dp < 0 || ip + dp >= Mp) continue;
        const int k = j + dp * sp;
        const CMatrix core = Bpa * G(k) * Bq;
        const int iq = sg_.axis_index(k, q);
        for (int dq : {1, -1}) {
          if (iq + dq < 0 || iq + dq >= Mq) continue;
          add_block(j, k + dq * sq, -(dp * dq * scale) * core);
        }
      }
    }
  }

  /// L_j D_p (R u) with centered differences: row j gets
  /// L_j (R_{j+s} u_{j+s} − R_{j−s} u_{j−s}) / (2h).
  void add_first_order(int p, const std::function<CMatrix(int)>& L, const std::function<CMatrix(int)>& R) {
    const int s = sg_.stride(p), M = sg_.points(p);
    const double inv = 1.0 / (2.0 * sg_.spacing(p));
    for (int j = 0; j < sg_.size(); ++j) {
      const int i = sg_.axis_index(j, p);
      const CMatrix Lj = L(j);
      if (i < M - 1) add_block(j, j + s, inv * Lj * R(j + s));
      if (i > 0) add_block(j, j - s, -inv * Lj * R(j - s));
    }
  }

  void add_diagonal(const std::function<CMatrix(int)>& C) {
    for (int j = 0; j < sg_.size(); ++j) add_block(j, j, C(j));
  }

  CSparse build() const {
    CSparse H(sg_.size() * n_, sg_.size() * n_);
    H.setFromTriplets(t_.begin(), t_.end());
    H.makeCompressed();
    return H;
  }

 private:
  SpatialGrid sg_;
  int n_;
  std::vector<CTriplet> t_;
};

/// max |H − H*| entrywise.
inline double hermiticity_defect(const CSparse& H) {
  const CSparse D = H - CSparse(H.adjoint());
  double mx = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (CSparse::InnerIterator it(D, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
  return mx;
}

/// Replaces H by (H + H*)/2 and returns the entrywise defect removed.
inline double symmetrize(CSparse& H) {
  const double defect = hermiticity_defect(H);
  H = (H + CSparse(H.adjoint())) * 0.5;
  H.prune(cplx(0.0));
  H.makeCompressed();
  return defect;
}

}  // namespace twoscale
