#include "test_support.hpp"

using namespace twoscale;
using namespace twoscale::testing;

namespace {

RunConfig small_config(const std::string& name, int M, int order) {
  RunConfig c = defaults_for(name);
  c.M = M;
  c.order = order;
  c.richardson = false;
  return c;
}

}  // namespace

TEST(DiagonalizeT, ZeroMatrixIsDegenerate) {
  try {
    diagonalize_T(CMatrix::Zero(2, 2));
    FAIL() << "expected DegenerateT";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateT);
    EXPECT_NE(std::string(e.what()).find("distinct"), std::string::npos);
  }
}

TEST(DiagonalizeT, DiagonalInput) {
  CMatrix T = CMatrix::Zero(2, 2);
  T(0, 0) = 1.0;
  T(1, 1) = 2.0;
  const TDiagonalization td = diagonalize_T(T);
  EXPECT_NEAR(td.tau(0), 1.0, 1e-15);
  EXPECT_NEAR(td.tau(1), 2.0, 1e-15);
  EXPECT_LT(max_abs(CMatrix(td.S0.cwiseAbs().cast<cplx>()) - CMatrix::Identity(2, 2)), 1e-15);
}

TEST(DiagonalizeT, RandomHermitianIsDiagonalized) {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const CMatrix T = random_hermitian(4, seed);
    const TDiagonalization td = diagonalize_T(T);
    CMatrix D = td.S0 * T * td.S0.adjoint();
    for (int i = 0; i < 4; ++i) {
      EXPECT_NEAR(D(i, i).real(), td.tau(i), 1e-12);
      D(i, i) = 0.0;
    }
    EXPECT_LT(D.norm(), 1e-12);
    for (int i = 0; i + 1 < 4; ++i) EXPECT_LT(td.tau(i), td.tau(i + 1));
  }
}

TEST(Corrections, SlowCoefficientsGiveZeroCorrections) {
  for (int M : {201, 1001}) {
    Pipeline p(small_config("constant", M, 4));
    const CorrectionLedger& L = p.ledger();
    const double tol = 1e-8 * (1.0 + std::abs(L.lambda0));
    EXPECT_LT(max_abs(L.T), 1e-12) << "M " << M;
    for (int j = 1; j <= 4; ++j) EXPECT_LT(std::abs(L.lambda[j][0]), tol) << "order " << j << ", M " << M;
    EXPECT_LT(max_abs(L.phi_tilde.at(1)[0]), 1e-12);
    for (int j = 3; j <= 5; ++j) EXPECT_LT(max_abs(L.Phi.at(j)[0]), 1e-10) << "Phi_" << j << ", M " << M;
    EXPECT_EQ(L.S.at(1).size(), 1);
    EXPECT_LT(max_abs(L.upsilon2[0]), 1e-12);
  }
}

TEST(Corrections, GroundStateOfTheWell) {
  Pipeline p(small_config("well-1d", 401, 4));
  CorrectionEngine& eng = p.engine();
  const CorrectionLedger& L = p.ledger();
  EXPECT_EQ(L.N, 1);
  EXPECT_LT(L.T_hermiticity_defect, 1e-10);
  EXPECT_LT(L.route_residual, 1e-5);
  EXPECT_DOUBLE_EQ(L.lambda[1][0], L.T(0, 0).real());
  EXPECT_LT(std::abs(L.lambda[1][0]), 1e-10);  // even potential: no first-order shift
  ASSERT_TRUE(L.lambda2_explicit.has_value());
  EXPECT_NEAR(*L.lambda2_explicit, L.lambda[2][0], 1e-10);
  EXPECT_LT(L.lambda[2][0], -1e-3);
  for (const auto& [j, defect] : L.solvability_defect) EXPECT_LT(defect, 1e-6) << "order " << j;
  for (const auto& [j, ratio] : L.cell_solvability) EXPECT_LT(ratio, 1e-6) << "Phi_" << j;
  // the generic cell field of order 3 coincides with the dedicated one
  const SecondOrderResult so = second_order(eng);
  EXPECT_LT(max_abs(so.Phi3[0] - L.Phi.at(3)[0]), 1e-12 * std::max(1.0, max_abs(so.Phi3[0])));
  EXPECT_LT(max_abs(compute_phi_cell_j(eng, 0, 3) - L.Phi.at(3)[0]), 1e-12 * std::max(1.0, max_abs(so.Phi3[0])));
}

TEST(Corrections, TauIsGaugeInvariant) {
  Pipeline p(small_config("sep-well-2d", 41, 1));
  const CorrectionLedger& L = p.ledger();
  ASSERT_EQ(L.N, 2);
  EXPECT_GT(L.tau(1) - L.tau(0), 1e-2);
  EigenCluster mixed = p.cluster();
  const CMatrix U = random_unitary(2, 4242);
  for (int i = 0; i < 2; ++i) {
    mixed.psi[i] = CMatrix::Zero(p.cluster().psi[0].rows(), p.cluster().psi[0].cols());
    for (int k = 0; k < 2; ++k) mixed.psi[i] += U(i, k) * p.cluster().psi[k];
  }
  CorrectionEngine eng(p.ops(), p.solver(), p.cells(), p.homogenized().H0, mixed);
  first_order(eng);
  EXPECT_LT((eng.ledger().tau - L.tau).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(eng.ledger().route_residual, 1e-5);
}

TEST(Corrections, SymmetricPairIsDegenerate) {
  Pipeline p(small_config("sep-well-2d-sym", 41, 1));
  try {
    p.ledger();
    FAIL() << "expected DegenerateT";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateT);
  }
}

TEST(Corrections, OrderLimitIsEnforced) {
  Pipeline p(small_config("well-1d", 201, 2));
  p.ledger();
  EXPECT_THROW(higher_order(p.engine(), 5), Error);
  RunConfig c = small_config("well-1d", 201, 5);
  EXPECT_THROW(Pipeline{c}, Error);
  c.allow_high_order = true;
  EXPECT_NO_THROW(Pipeline{c});
}

TEST(Expansion, ZerothOrderIsTheHomogenizedPair) {
  Pipeline p(small_config("well-1d", 401, 2));
  p.ledger();
  const CorrectionEngine& eng = p.engine();
  const SpatialGrid fine = fine_grid({1.0}, 12.0, 1.0 / 16, 16);
  const Expansion e = assemble_expansion(eng, 0, 1.0 / 16, fine);
  EXPECT_DOUBLE_EQ(e.lambda[0], p.cluster().lambda0);
  const CMatrix direct = TwoScaleEvaluator(p.spatial(), p.cell(), fine, 1.0 / 16, 1).evaluate_spatial(p.ledger().psi[0]);
  EXPECT_LT(max_abs(e.psi[0] - direct), 1e-13);
}

TEST(Expansion, EigenvalueIsPolynomialInEps) {
  Pipeline p(small_config("well-1d-asym", 401, 2));
  const CorrectionLedger& L = p.ledger();
  const double e1 = 0.1, e2 = 0.05;
  const double d = expansion_eigenvalue(L, 0, 2, e1, L.lambda0) - expansion_eigenvalue(L, 0, 2, e2, L.lambda0);
  EXPECT_NEAR(d, L.lambda[1][0] * (e1 - e2) + L.lambda[2][0] * (e1 * e1 - e2 * e2), 1e-15);
}

TEST(Expansion, FirstOrderEigenfunctionStaysNormalized) {
  Pipeline p(small_config("well-1d", 801, 1));
  p.ledger();
  const CorrectionEngine& eng = p.engine();
  for (double eps : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
    const SpatialGrid fine = fine_grid({1.0}, 12.0, eps, 16);
    const Expansion e = assemble_expansion(eng, 1, eps, fine);
    const double nrm = std::sqrt(e.psi[0].squaredNorm() * fine.cell_volume());
    EXPECT_LT(std::abs(nrm - 1.0), 0.2 * eps) << "eps " << eps;
  }
}

TEST(Expansion, ResolutionIsChecked) {
  Pipeline p(small_config("well-1d", 201, 1));
  p.ledger();
  const CorrectionEngine& eng = p.engine();
  EXPECT_THROW(assemble_expansion(eng, 1, 1.0 / 16, fine_grid({1.0}, 12.0, 1.0 / 16, 4)), Error);
}

TEST(Corrections, BoundaryRatioFlagsATightBox) {
  RunConfig wide = small_config("well-1d", 401, 1);
  RunConfig tight = wide;
  tight.L = 4.0;
  tight.M = 135;
  Pipeline pw(wide), pt(tight);
  const double rw = pw.ledger().boundary_ratio, rt = pt.ledger().boundary_ratio;
  EXPECT_LT(rw, 1e-2);
  EXPECT_GT(rt, 10.0 * rw);
}
