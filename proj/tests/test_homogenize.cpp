#include "test_support.hpp"

using namespace twoscale;
using namespace twoscale::testing;

namespace {

ProblemSpec drift_1d(double drift = 1.0) {
  ProblemSpec s = scalar_1d(cosine_A(), gaussian_V());
  s.a = {MatrixField::scalar(false, true,
                             [=](const double*, const double* xi) { return drift * std::cos(kTwoPi * xi[0]); })};
  s.b = {MatrixField::constant(constant_1x1(1.0))};
  return s;
}

}  // namespace

TEST(EffectiveTensor, ConstantCoefficientIsReproduced) {
  CellSetup s(scalar_1d(MatrixField::constant(constant_1x1(2.5)), gaussian_V()), 4.0, 33, 16);
  const auto A2 = assemble_A2(*s.ops, *s.cs);
  for (const auto& a : A2) EXPECT_LT(std::abs(a(0, 0) - 2.5), 1e-14);
}

TEST(EffectiveTensor, CosineCoefficientGivesHarmonicMean) {
  CellSetup s(scalar_1d(cosine_A(), gaussian_V()), 4.0, 33, 64);
  const auto A2 = assemble_A2(*s.ops, *s.cs);
  // closed form ⟨1/A⟩^{-1} = √(α² − β²), cross-checked by midpoint quadrature
  double q = 0.0;
  const int Nq = 20000;
  for (int k = 0; k < Nq; ++k) q += 1.0 / (2.0 + std::cos(kTwoPi * (k + 0.5) / Nq));
  const double harmonic = Nq / q;
  EXPECT_NEAR(harmonic, std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(A2[0](0, 0).real(), harmonic, 1e-8);
  EXPECT_LT(std::abs(A2[0](0, 0).imag()), 1e-14);
}

TEST(EffectiveTensor, RandomHermitianCoefficientsGiveHermitianTensor) {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-0.3, 0.3);
    std::vector<double> c(12);
    for (auto& v : c) v = U(rng);
    ProblemSpec spec = build_problem("checker-2d");
    spec.a.clear();
    spec.b.clear();
    spec.A = MatrixField::make(2, 2, false, true, [c](const double*, const double* xi, cplx* out) {
      const double t1 = kTwoPi * xi[0], t2 = kTwoPi * xi[1];
      out[0] = 2.0 + c[0] * std::cos(t1) + c[1] * std::sin(t2) + c[2] * std::cos(t1 + t2);
      out[3] = 2.0 + c[3] * std::sin(t1) + c[4] * std::cos(t2) + c[5] * std::sin(t1 - t2);
      const cplx off(c[6] * std::cos(t1) + c[7] * std::sin(t2), c[8] + c[9] * std::sin(t1 + t2));
      out[1] = off;
      out[2] = std::conj(off);
    });
    CellSetup s(spec, 1.0, 16, 16);
    const auto A2 = assemble_A2(*s.ops, *s.cs);
    EXPECT_LT(max_abs(A2[0] - CMatrix(A2[0].adjoint())), 1e-12) << "seed " << seed;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(A2[0]);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(FirstOrderCoefficients, VanishWithoutFirstOrderPart) {
  CellSetup s(scalar_1d(cosine_A(), gaussian_V()), 4.0, 33, 16);
  const HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
  for (int j = 0; j < s.ops->X(); ++j) {
    EXPECT_EQ(max_abs(hom.A1_first[j][0]), 0.0);
    EXPECT_EQ(max_abs(hom.A1_zero[j]), 0.0);
  }
}

TEST(FirstOrderCoefficients, ConstantDriftReducesToItsMean) {
  ProblemSpec spec = scalar_1d(MatrixField::constant(constant_1x1(2.0)), gaussian_V());
  const cplx a0(1.0, 0.5);
  spec.a = {MatrixField::constant(CMatrix::Constant(1, 1, a0))};
  spec.b = {MatrixField::scalar(true, false, [](const double* x, const double*) { return 1.0 + 0.1 * x[0]; })};
  CellSetup s(spec, 4.0, 33, 16);
  const HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
  for (int j = 0; j < s.ops->X(); ++j) {
    const double b = 1.0 + 0.1 * s.sg.coord(j, 0);
    // a ∂(b ·) − b ∂(a* ·) = (a − a*) b ∂ + a b′
    EXPECT_LT(std::abs(hom.A1_first[j][0](0, 0) - (a0 - std::conj(a0)) * b), 1e-14);
    if (j > 0 && j < s.ops->X() - 1) EXPECT_LT(std::abs(hom.A1_zero[j](0, 0) - a0 * 0.1), 1e-12);  // a b′
  }
}

TEST(FirstOrderCoefficients, StableUnderCellRefinement) {
  CellSetup s(drift_1d(), 4.0, 33, 32);
  CellSetup t(drift_1d(), 4.0, 33, 64);
  const HomogenizedOperator h1 = homogenize(*s.ops, *s.cs), h2 = homogenize(*t.ops, *t.cs);
  double diff = 0.0, size = 0.0;
  for (int j = 0; j < s.ops->X(); ++j) {
    diff = std::max(diff, std::abs(h1.A1_first[j][0](0, 0) - h2.A1_first[j][0](0, 0)));
    diff = std::max(diff, std::abs(h1.A1_zero[j](0, 0) - h2.A1_zero[j](0, 0)));
    diff = std::max(diff, std::abs(h1.A0[j](0, 0) - h2.A0[j](0, 0)));
    size = std::max(size, std::abs(h1.G0[j](0, 0)));
  }
  EXPECT_LT(diff, 1e-8);
  EXPECT_GT(size, 1e-2);  // the first-order part is not trivially zero
}

TEST(PotentialTerm, ReducesToCellMeanOfV) {
  ProblemSpec spec = scalar_1d(cosine_A(), MatrixField::scalar(true, true, [](const double* x, const double* xi) {
                                 return -std::exp(-x[0] * x[0]) * (1.0 + 0.5 * std::cos(kTwoPi * xi[0]));
                               }));
  CellSetup s(spec, 4.0, 33, 32);
  const auto A0 = assemble_A0(*s.ops, *s.cs);
  for (int j = 0; j < s.ops->X(); ++j) {
    const double x = s.sg.coord(j, 0);
    EXPECT_NEAR(A0[j](0, 0).real(), -std::exp(-x * x), 1e-14);
  }
  CellSetup z(scalar_1d(cosine_A(), MatrixField::zeros(1, 1)), 4.0, 33, 32);
  for (const auto& a : assemble_A0(*z.ops, *z.cs)) EXPECT_EQ(std::abs(a(0, 0)), 0.0);
}

TEST(PotentialTerm, CorrectorContributionIsNegativeSemidefinite) {
  ProblemSpec spec = drift_1d();
  spec.V = MatrixField::zeros(1, 1);
  CellSetup s(spec, 4.0, 33, 32);
  const auto A0 = assemble_A0(*s.ops, *s.cs);
  double largest = -1.0, smallest = 0.0;
  for (const auto& a : A0) {
    largest = std::max(largest, a(0, 0).real());
    smallest = std::min(smallest, a(0, 0).real());
  }
  EXPECT_LE(largest, 1e-12);
  EXPECT_LT(smallest, -1e-3);
}

TEST(Identities, TrivialWithoutCorrectors) {
  CellSetup s(scalar_1d(MatrixField::constant(constant_1x1(2.0)), gaussian_V()), 4.0, 33, 16);
  const IdentityReport r = identity_residuals(*s.ops, *s.cs);
  EXPECT_EQ(r.first, 0.0);
  EXPECT_EQ(r.second, 0.0);
}

TEST(Identities, HoldForOneDimensionalDrift) {
  CellSetup s(drift_1d(), 4.0, 33, 64);
  const IdentityReport r = check_identities(*s.ops, *s.cs);
  EXPECT_LT(r.first, 1e-8);
  EXPECT_LT(r.second, 1e-8);
  EXPECT_GT(max_abs(s.cs->Lambda0[0]), 1e-2);
}

TEST(Identities, HoldForTwoDimensionalScalarProblem) {
  CellSetup s(build_problem("checker-2d"), 3.0, 17, 16);
  const IdentityReport r = check_identities(*s.ops, *s.cs);
  EXPECT_LT(r.first, 1e-6);
  EXPECT_LT(r.second, 1e-6);
  EXPECT_GT(max_abs(s.cs->Lambda0[0]), 1e-2);
}

TEST(Identities, CorruptedCorrectorIsDetected) {
  CellSetup s(drift_1d(), 4.0, 33, 32);
  CellSolution bad = *s.cs;
  // a mean shift is invisible to ∂ξ; a gradient distortion is not
  bad.Lambda1[0].array() += 0.3;
  for (int q = 0; q < s.ops->Q(); ++q) bad.Lambda1[0].row(q) *= 1.0 + 0.2 * std::sin(kTwoPi * q / s.ops->Q());
  EXPECT_THROW(check_identities(*s.ops, bad), Error);
}

TEST(HomogenizedOperator, LaplacianLimit) {
  ProblemSpec spec = scalar_1d(MatrixField::constant(constant_1x1(1.0)), MatrixField::zeros(1, 1));
  const double L = 10.0;
  double prev = 1e9;
  for (int M : {101, 201, 401}) {
    CellSetup s(spec, L, M, 8);
    const HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
    const double h = s.sg.spacing(0);
    EXPECT_NEAR(std::abs(hom.H0.coeff(5, 5) - 2.0 / (h * h)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(hom.H0.coeff(5, 6) + 1.0 / (h * h)), 0.0, 1e-9);
    const EigenCluster cl = eigen_cluster(hom.H0, 1, s.sg.cell_volume(), 0.02, 0.02);
    const double exact = std::pow(std::numbers::pi / (2.0 * (L + h)), 2);  // ghosts sit at ±(L + h)
    const double err = std::abs(cl.lambda0 - exact);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(HomogenizedOperator, ConstantPotentialShiftsSpectrum) {
  ProblemSpec spec = scalar_1d(cosine_A(), gaussian_V());
  CellSetup s(spec, 4.0, 61, 16);
  spec.V = MatrixField::scalar(true, false, [](const double* x, const double*) { return 0.75 - 2.0 * std::exp(-x[0] * x[0]); });
  CellSetup t(spec, 4.0, 61, 16);
  const HomogenizedOperator h1 = homogenize(*s.ops, *s.cs), h2 = homogenize(*t.ops, *t.cs);
  Eigen::SelfAdjointEigenSolver<CMatrix> e1{CMatrix(h1.H0)}, e2{CMatrix(h2.H0)};
  EXPECT_LT(((e2.eigenvalues() - e1.eigenvalues()).array() - 0.75).abs().maxCoeff(), 1e-10);
}

TEST(HomogenizedOperator, HermitianForSmoothRandomCoefficients) {
  for (unsigned seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.1, 0.5);
    const double c1 = U(rng), c2 = U(rng), c3 = U(rng);
    ProblemSpec spec = build_problem("checker-2d");
    spec.A = MatrixField::make(2, 2, true, true, [=](const double* x, const double* xi, cplx* out) {
      const double t1 = kTwoPi * xi[0], t2 = kTwoPi * xi[1];
      out[0] = 2.0 + c1 * std::cos(t1) * std::cos(x[1]);
      out[3] = 2.0 + c2 * std::sin(t2) * std::sin(x[0]);
      out[1] = cplx(c3 * std::sin(t1 + t2), 0.1 * std::cos(x[0]));
      out[2] = std::conj(out[1]);
    });
    CellSetup s(spec, 3.0, 17, 8);
    HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
    EXPECT_LT(hom.symmetrization_defect, 1e-10) << "seed " << seed;
  }
}

/// The discrete H0 is the cell average of the two-scale operator applied
/// to ψ + (Λ1B(∂x) + Λ0)ψ, which every downstream solvability condition
/// relies on.
TEST(HomogenizedOperator, MatchesCellAverageOfTwoScaleOperator) {
  for (const char* name : {"cosine-drift-1d", "checker-2d", "sep-well-2d"}) {
    const ProblemSpec spec = build_problem(name);
    CellSetup s(spec, spec.d == 1 ? 4.0 : 3.0, spec.d == 1 ? 81 : 17, 16);
    const HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
    const CMatrix psi = smooth_field(s.sg, 1, 17);
    const CMatrix U = apply_corrector(*s.ops, *s.cs, psi);
    const CMatrix avg = s.ops->mean(s.ops->K_minus1(U) + s.ops->K0(s.ops->lift(psi)), 1);
    const CVector direct = hom.H0 * flatten(psi);
    EXPECT_LT((flatten(avg) - direct).cwiseAbs().maxCoeff() / direct.cwiseAbs().maxCoeff(), 1e-12) << name;
  }
}

TEST(HomogenizedOperator, CsvDump) {
  CellSetup s(scalar_1d(cosine_A(), gaussian_V()), 4.0, 17, 64);
  const HomogenizedOperator hom = homogenize(*s.ops, *s.cs);
  std::ostringstream os;
  write_homogenized_csv(os, hom, s.sg);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x1,A2_1_1_re,A2_1_1_im,A1d1_1_1_re,A1d1_1_1_im,A1z_1_1_re,A1z_1_1_im,A0_1_1_re,A0_1_1_im");
  EXPECT_NE(text.find("1.732050807"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 18);
}
