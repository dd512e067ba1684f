#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fields.hpp"

namespace twoscale {

/// Weights of the trigonometric interpolant through K equispaced samples of
/// a P-periodic function, evaluated at t (Nyquist term split evenly).
inline Eigen::VectorXd trig_weights(int K, double P, double t) {
  Eigen::VectorXd w(K);
  const double pi = std::numbers::pi;
  for (int l = 0; l < K; ++l) {
    const double s = t - l * P / K;
    double acc = 1.0;
    for (int k = 1; k < K / 2; ++k) acc += 2.0 * std::cos(2.0 * pi * k * s / P);
    acc += std::cos(pi * K * s / P);
    w(l) = acc / K;
  }
  return w;
}

/// Four-point Lagrange stencil around t on the nodes −L + i·h, i = 0..M−1,
/// with zero ghost values outside; indices outside the grid are reported
/// as −1 and must be skipped.
inline void cubic_stencil(double t, double L, double h, int M, int idx[4], double w[4]) {
  double u = (t + L) / h;
  int i = static_cast<int>(std::floor(u));
  i = std::clamp(i, -1, M - 1);
  const double s = u - i;  // position relative to node i
  const double xs[4] = {-1.0, 0.0, 1.0, 2.0};
  for (int a = 0; a < 4; ++a) {
    double v = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) v *= (s - xs[b]) / (xs[a] - xs[b]);
    w[a] = v;
    const int k = i - 1 + a;
    idx[a] = (k >= 0 && k < M) ? k : -1;
  }
}

/// Evaluates two-scale fields F(x, ξ) stored on a coarse SpatialGrid ×
/// CellGrid at the points (x, x/ε) of a fine grid: cubic interpolation in x,
/// trigonometric interpolation in ξ.  The distinct fast-variable values are
/// collected per axis so the trigonometric step is done once per value.
class TwoScaleEvaluator {
 public:
  TwoScaleEvaluator(const SpatialGrid& coarse, const CellGrid& cg, const SpatialGrid& fine, double eps, int n)
      : coarse_(coarse), cg_(cg), fine_(fine), n_(n) {
    const int d = coarse.dim();
    classes_.resize(d);
    weights_.resize(d);
    class_of_.resize(d);
    stencil_idx_.resize(d);
    stencil_w_.resize(d);
    for (int a = 0; a < d; ++a) {
      const int Mf = fine.points(a);
      const double P = cg.period(a);
      std::vector<double> xi(Mf);
      for (int i = 0; i < Mf; ++i) {
        const double x = -fine.half_width() + i * fine.spacing(a);
        double v = std::fmod(x / eps, P);
        if (v < 0) v += P;
        if (P - v < 1e-10 * P) v = 0.0;
        xi[i] = v;
      }
      std::vector<double> uniq = xi;
      std::sort(uniq.begin(), uniq.end());
      std::vector<double> kept;
      for (double v : uniq)
        if (kept.empty() || v - kept.back() > 1e-10 * P) kept.push_back(v);
      classes_[a] = kept;
      class_of_[a].resize(Mf);
      for (int i = 0; i < Mf; ++i) {
        auto it = std::lower_bound(kept.begin(), kept.end(), xi[i] - 1e-10 * P);
        class_of_[a][i] = static_cast<int>(it - kept.begin());
      }
      weights_[a].resize(static_cast<Eigen::Index>(kept.size()), cg.points(a));
      for (std::size_t c = 0; c < kept.size(); ++c)
        weights_[a].row(static_cast<Eigen::Index>(c)) = trig_weights(cg.points(a), P, kept[c]).transpose();
      stencil_idx_[a].resize(static_cast<std::size_t>(Mf) * 4);
      stencil_w_[a].resize(static_cast<std::size_t>(Mf) * 4);
      for (int i = 0; i < Mf; ++i) {
        const double x = -fine.half_width() + i * fine.spacing(a);
        cubic_stencil(x, coarse.half_width(), coarse.spacing(a), coarse.points(a), &stencil_idx_[a][4 * i],
                      &stencil_w_[a][4 * i]);
      }
    }
  }

  /// field: (Q·n) × X_coarse  →  n × X_fine.
  CMatrix evaluate(const CMatrix& field) const {
    const int d = coarse_.dim();
    // contract the cell axes one at a time
    std::vector<int> dims(cg_.point_counts());
    CMatrix cur = field;
    for (int a = 0; a < d; ++a) {
      const int Ka = dims[a];
      const int Ca = static_cast<int>(classes_[a].size());
      int outer = 1, inner = n_;
      for (int b = 0; b < a; ++b) outer *= dims[b];
      for (int b = a + 1; b < d; ++b) inner *= dims[b];
      CMatrix nxt(static_cast<Eigen::Index>(outer) * Ca * inner, cur.cols());
      for (Eigen::Index j = 0; j < cur.cols(); ++j)
        for (int o = 0; o < outer; ++o)
          for (int c = 0; c < Ca; ++c)
            for (int in = 0; in < inner; ++in) {
              cplx acc = 0.0;
              for (int l = 0; l < Ka; ++l) acc += weights_[a](c, l) * cur((o * Ka + l) * inner + in, j);
              nxt((o * Ca + c) * inner + in, j) = acc;
            }
      cur.swap(nxt);
      dims[a] = Ca;
    }
    // spatial interpolation
    CMatrix out = CMatrix::Zero(n_, fine_.size());
    std::vector<int> cstride(d, 1);
    for (int a = d - 2; a >= 0; --a) cstride[a] = cstride[a + 1] * dims[a + 1];
    int combos = 1;
    for (int a = 0; a < d; ++a) combos *= 4;
    for (int f = 0; f < fine_.size(); ++f) {
      int cls = 0;
      std::vector<int> fi(d);
      for (int a = 0; a < d; ++a) {
        fi[a] = fine_.axis_index(f, a);
        cls += class_of_[a][fi[a]] * cstride[a];
      }
      for (int combo = 0; combo < combos; ++combo) {
        int rest = combo, node = 0;
        double w = 1.0;
        bool inside = true;
        for (int a = d - 1; a >= 0; --a) {
          const int s = rest % 4;
          rest /= 4;
          const int k = stencil_idx_[a][4 * fi[a] + s];
          if (k < 0) {
            inside = false;
            break;
          }
          w *= stencil_w_[a][4 * fi[a] + s];
          node += k * coarse_.stride(a);
        }
        if (!inside || w == 0.0) continue;
        out.col(f) += w * cur.col(node).segment(static_cast<Eigen::Index>(cls) * n_, n_);
      }
    }
    return out;
  }

  /// Cubic interpolation of a spatial field (n × X_coarse) onto the fine grid.
  CMatrix evaluate_spatial(const CMatrix& f) const {
    CMatrix lifted(static_cast<Eigen::Index>(cg_.size()) * n_, f.cols());
    for (int q = 0; q < cg_.size(); ++q) lifted.middleRows(q * n_, n_) = f;
    return evaluate(lifted);
  }

 private:
  SpatialGrid coarse_;
  CellGrid cg_;
  SpatialGrid fine_;
  int n_;
  std::vector<std::vector<double>> classes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<std::vector<int>> class_of_;
  std::vector<std::vector<int>> stencil_idx_;
  std::vector<std::vector<double>> stencil_w_;
};

}  // namespace twoscale
