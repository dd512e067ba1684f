#include "test_support.hpp"

using namespace twoscale;
using namespace twoscale::testing;

namespace {

double sparse_max_diff(const CSparse& a, const CSparse& b) { return max_abs(CMatrix(a) - CMatrix(b)); }

/// Ground eigenvalue of the direct operator at one ε.
double direct_ground_state(const ProblemSpec& spec, double L, double eps, double target, double radius) {
  const SpatialGrid fine = fine_grid(spec.periods, L, eps, 32);
  const AssembledOperator op = assemble_H_eps(spec, eps, fine);
  return eigen_near(op.H, target, radius, 1).values(0);
}

}  // namespace

TEST(DirectOperator, SlowCoefficientsReproduceTheHomogenizedOperator) {
  RunConfig c = defaults_for("constant");
  c.M = 201;
  Pipeline p(c);
  const CSparse& H0 = p.homogenized().H0;
  for (double eps : {0.5, 1.0 / 16, 1.0 / 128}) {
    const AssembledOperator op = assemble_H_eps(p.spec(), eps, p.spatial());
    EXPECT_LT(sparse_max_diff(op.H, H0), 1e-14) << "eps " << eps;
  }
}

TEST(DirectOperator, UnitCoefficientGivesTheLaplacian) {
  const ProblemSpec spec = scalar_1d(MatrixField::constant(constant_1x1(1.0)), MatrixField::zeros(1, 1));
  const SpatialGrid fine = fine_grid({1.0}, 2.0, 0.25, 16);
  const AssembledOperator op = assemble_H_eps(spec, 0.25, fine);
  const double h = fine.spacing(0);
  const CSparse lap = dirichlet_laplacian(fine);
  EXPECT_LT(sparse_max_diff(op.H, lap) * h * h, 1e-13);
  EXPECT_NEAR(op.H.coeff(3, 3).real(), 2.0 / (h * h), 1e-9);
  EXPECT_NEAR(op.H.coeff(3, 4).real(), -1.0 / (h * h), 1e-9);
}

TEST(DirectOperator, OscillatingWellIsHermitian) {
  const ProblemSpec spec = build_problem("well-1d");
  const SpatialGrid fine = fine_grid(spec.periods, 12.0, 1.0 / 16, 32);
  const AssembledOperator op = assemble_H_eps(spec, 1.0 / 16, fine);
  EXPECT_LT(op.hermiticity_defect, 1e-12);
  EXPECT_LT(max_abs(CMatrix(op.H) - CMatrix(CSparse(op.H.adjoint()))), 1e-12);
}

TEST(DirectOperator, UnderResolvedGridIsRejected) {
  const ProblemSpec spec = build_problem("well-1d");
  try {
    assemble_H_eps(spec, 1.0 / 16, fine_grid(spec.periods, 12.0, 1.0 / 16, 4));
    FAIL() << "expected ResolutionError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ResolutionError);
  }
}

TEST(DirectOperator, WindowInASpectralGapIsACountMismatch) {
  const SpatialGrid sg(1, 10.0, 201);
  const CSparse H = dirichlet_laplacian(sg);
  const double mid = 0.5 * (laplacian_eigenvalue(sg, 0) + laplacian_eigenvalue(sg, 1));
  const double r = 0.2 * (laplacian_eigenvalue(sg, 1) - laplacian_eigenvalue(sg, 0));
  try {
    eigen_near(H, mid, r, 1);
    FAIL() << "expected CountMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CountMismatch);
  }
  const EigenPairs ep = eigen_near(H, laplacian_eigenvalue(sg, 0), r, 1);
  EXPECT_NEAR(ep.values(0), laplacian_eigenvalue(sg, 0), 1e-10);
}

TEST(SlopeFitting, RecoversAPowerLaw) {
  const std::vector<double> eps{0.25, 0.125, 0.0625, 0.03125};
  std::vector<double> v;
  for (double e : eps) v.push_back(3.0 * e * e);
  const SlopeFit f = fit_slope(eps, v, 1e-14);
  ASSERT_TRUE(f.slope.has_value());
  EXPECT_NEAR(*f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_FALSE(f.dropped_largest);
  EXPECT_FALSE(f.exact);
  EXPECT_EQ(f.points, 4);
}

TEST(SlopeFitting, DiscardsAPreAsymptoticLargestEps) {
  const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625};
  std::vector<double> v;
  for (double e : eps) v.push_back(e * e);
  v[0] = 10.0;
  const SlopeFit f = fit_slope(eps, v, 1e-14);
  ASSERT_TRUE(f.slope.has_value());
  EXPECT_TRUE(f.dropped_largest);
  EXPECT_NEAR(*f.slope, 2.0, 1e-12);
  EXPECT_EQ(f.points, 3);
}

TEST(SlopeFitting, ReportsExactAgreement) {
  const SlopeFit f = fit_slope({0.1, 0.05}, {1e-15, 0.0}, 1e-8);
  EXPECT_TRUE(f.exact);
  EXPECT_FALSE(f.slope.has_value());
}

TEST(SlopeFitting, NeedsTwoUsablePoints) {
  const SlopeFit f = fit_slope({0.1, 0.05}, {1e-3, std::numeric_limits<double>::quiet_NaN()}, 1e-8);
  EXPECT_FALSE(f.slope.has_value());
  EXPECT_FALSE(f.exact);
}

TEST(BranchMatching, PicksTheLargestTotalOverlap) {
  Eigen::MatrixXd ov(3, 3);
  ov << 0.1, 0.9, 0.0,
        0.2, 0.3, 0.95,
        0.8, 0.1, 0.1;
  EXPECT_EQ(best_assignment(ov), (std::vector<int>{1, 2, 0}));
  EXPECT_EQ(best_assignment(Eigen::MatrixXd::Identity(2, 2)), (std::vector<int>{0, 1}));
}

TEST(Sweep, SingleEpsOmitsSlopesWithAWarning) {
  RunConfig c = defaults_for("constant");
  c.M = 201;
  c.order = 2;
  c.eps = {0.1};
  c.richardson = false;
  Pipeline p(c);
  const SweepReport rep = p.sweep();
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_FALSE(rep.warnings.empty());
  EXPECT_NEAR(rep.rows[0].lambda_direct, rep.lambda0, 1e-8 * (1.0 + std::abs(rep.lambda0)));
}

TEST(Sweep, SlowCoefficientsAreReproducedExactly) {
  RunConfig c = defaults_for("constant");
  c.M = 201;
  c.order = 2;
  c.eps = {0.2, 0.1, 0.05};
  c.richardson = false;
  Pipeline p(c);
  const SweepReport rep = p.sweep();
  for (const auto& f : rep.err_slopes[0]) EXPECT_TRUE(f.exact);
  for (const auto& r : rep.rows) EXPECT_LT(std::abs(r.lambda_direct - rep.lambda0), 1e-8);
}

TEST(DirectVsExpansion, FirstOrderShiftMatchesTheDirectSlope) {
  RunConfig c = defaults_for("well-1d-asym");
  c.order = 1;
  Pipeline p(c);
  const CorrectionLedger& L = p.ledger();
  ASSERT_TRUE(L.lambda0_extrapolated.has_value());
  const double l1 = L.lambda[1][0];
  ASSERT_GT(std::abs(l1), 1e-3);
  const double eps = 1.0 / 64;
  const double direct = direct_ground_state(p.spec(), c.L, eps, L.lambda0, 0.3);
  EXPECT_NEAR((direct - *L.lambda0_extrapolated) / eps, l1, 0.05 * std::abs(l1));
}

TEST(DirectVsExpansion, SecondOrderShiftMatchesTheDirectCurvature) {
  RunConfig c = defaults_for("well-1d");
  c.order = 2;
  Pipeline p(c);
  const CorrectionLedger& L = p.ledger();
  ASSERT_TRUE(L.lambda0_extrapolated.has_value());
  const double l2 = L.lambda[2][0];
  const double eps = 1.0 / 16;
  const double direct = direct_ground_state(p.spec(), c.L, eps, L.lambda0, 0.3);
  EXPECT_NEAR((direct - *L.lambda0_extrapolated - eps * L.lambda[1][0]) / (eps * eps), l2, 0.1 * std::abs(l2));
}
