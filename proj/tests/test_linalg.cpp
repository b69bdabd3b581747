#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vkd/error.hpp"
#include "vkd/linalg.hpp"

namespace vkd {
namespace {

using linalg::InvSqrtMethod;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng = make_stream(1, "test");
  const Matrix m = random_normal(3, 4, 1.0, rng);
  EXPECT_EQ(linalg::matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, HandArithmetic) {
  const Matrix c = linalg::matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{0}, {1}});
  EXPECT_EQ(c, (Matrix{{2}, {4}}));
}

TEST(Matmul, MatchesNaiveLoopExactly) {
  Rng rng = make_stream(2, "test");
  const Matrix a = random_normal(7, 5, 1.0, rng);
  const Matrix b = random_normal(5, 3, 1.0, rng);
  EXPECT_EQ(linalg::matmul(a, b), oracle::naive_matmul(a, b));
}

TEST(Matmul, ParallelAndSerialKernelsAreBitIdentical) {
  Rng rng = make_stream(3, "test");
  // Shapes straddle the tile sizes so edge tiles are exercised.
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {33, 129, 17}, {70, 300, 520}, {128, 128, 128}}) {
    const Matrix a = random_normal(m, k, 1.0, rng);
    const Matrix b = random_normal(k, n, 1.0, rng);
    const Matrix bt = transpose(b);
    const Matrix at = transpose(a);
    for (int threads : {1, 4}) {
      linalg::set_num_threads(threads);
      EXPECT_EQ(linalg::matmul(a, b), linalg::serial::matmul(a, b));
      EXPECT_EQ(linalg::matmul_nt(a, bt), linalg::serial::matmul_nt(a, bt));
      EXPECT_EQ(linalg::matmul_tn(at, b), linalg::serial::matmul_tn(at, b));
    }
    EXPECT_EQ(linalg::serial::matmul(a, b), oracle::naive_matmul(a, b));
  }
  linalg::set_num_threads(1);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    linalg::matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4x2"), std::string::npos);
  }
}

TEST(Matmul, FlopCounter) {
  linalg::reset_flop_count();
  linalg::matmul(Matrix(2, 3), Matrix(3, 4));
  EXPECT_EQ(linalg::flop_count(), 2u * 2 * 3 * 4);
}

TEST(Solve, RecoversKnownSolution) {
  Rng rng = make_stream(4, "test");
  const Matrix a = random_normal(6, 6, 1.0, rng) + 6.0 * Matrix::identity(6);
  const Matrix x = random_normal(6, 2, 1.0, rng);
  EXPECT_LT(oracle::rel_err(linalg::solve(a, oracle::naive_matmul(a, x)), x), 1e-12);
}

TEST(Solve, SingularMatrixIsNumericError) {
  EXPECT_THROW(linalg::solve(Matrix{{1, 2}, {2, 4}}, Matrix{{1}, {1}}), NumericError);
}

TEST(Expm, ZeroGivesIdentity) {
  EXPECT_EQ(linalg::expm(Matrix(4, 4)), Matrix::identity(4));
}

TEST(Expm, PlaneRotation) {
  const double h = std::numbers::pi / 2;
  const Matrix r = linalg::expm(Matrix{{0, h}, {-h, 0}});
  EXPECT_LT(max_abs(r - Matrix{{0, 1}, {-1, 0}}), 1e-12);
}

TEST(Expm, NonSquareIsShapeError) { EXPECT_THROW(linalg::expm(Matrix(2, 3)), ShapeError); }

TEST(Expm, MatchesTaylorSeriesOnUnitEntries) {
  Rng rng = make_stream(5, "test");
  for (int t = 0; t < 10; ++t) {
    Matrix w(6, 6);
    fill_uniform(w, -1.0, 1.0, rng);
    EXPECT_LT(oracle::rel_err(linalg::expm(w), oracle::taylor_expm(w)), 1e-10);
  }
}

// Every Padé branch (7, 9, 13 with and without scaling) against the scaled
// extended-precision series, up to ||w||_1 = 50.
TEST(Expm, AccurateAcrossNormRange) {
  Rng rng = make_stream(6, "test");
  for (double norm1 : {0.1, 0.9, 1.5, 2.0, 4.0, 5.3, 8.0, 20.0, 50.0}) {
    for (bool skew : {true, false}) {
      Matrix w = skew ? oracle::random_skew_norm1(8, norm1, rng) : random_normal(8, 8, 1.0, rng);
      if (!skew) w *= norm1 / norm_1(w);
      const Matrix want = oracle::taylor_expm(w, 40, 10);
      EXPECT_LT(oracle::rel_err(linalg::expm(w), want), 1e-10)
          << "norm1=" << norm1 << " skew=" << skew;
    }
  }
}

TEST(Expm, SkewGivesRotation) {
  Rng rng = make_stream(7, "test");
  for (int t = 0; t < 20; ++t) {
    const Matrix w = oracle::random_skew_norm1(12, 10.0 * (t + 1) / 20.0, rng);
    const Matrix e = linalg::expm(w);
    EXPECT_LE(frobenius_norm(oracle::naive_matmul(e, transpose(e)) - Matrix::identity(12)), 1e-9);
    EXPECT_LE(frobenius_norm(transpose(e) - linalg::expm(-w)), 1e-10);
    EXPECT_NEAR(linalg::determinant(e), 1.0, 1e-8);
  }
}

TEST(Frechet, ZeroDirection) {
  Rng rng = make_stream(8, "test");
  const Matrix w = random_normal(5, 5, 1.0, rng);
  const auto fr = linalg::expm_frechet(w, Matrix(5, 5));
  EXPECT_EQ(max_abs(fr.l), 0.0);
  EXPECT_LT(oracle::rel_err(fr.expw, linalg::expm(w)), 1e-13);
}

TEST(Frechet, AtOriginIsIdentityMap) {
  Rng rng = make_stream(9, "test");
  const Matrix e = random_normal(5, 5, 1.0, rng);
  EXPECT_LT(oracle::rel_err(linalg::expm_frechet(Matrix(5, 5), e).l, e), 1e-15);
}

TEST(Frechet, MatchesCentralDifferences) {
  Rng rng = make_stream(10, "test");
  for (int t = 0; t < 10; ++t) {
    const Matrix w = random_normal(5, 5, 0.5, rng);
    const Matrix e = random_normal(5, 5, 1.0, rng);
    const double h = 1e-5;
    const Matrix fd = (1.0 / (2.0 * h)) * (linalg::expm(w + h * e) - linalg::expm(w - h * e));
    EXPECT_LT(oracle::rel_err(linalg::expm_frechet(w, e).l, fd), 1e-5);
  }
}

TEST(Frechet, BlockIdentityAcrossNormRange) {
  Rng rng = make_stream(11, "test");
  for (double norm1 : {0.3, 0.8, 1.7, 3.0, 4.7, 9.0, 30.0}) {
    const Matrix w = oracle::random_skew_norm1(7, norm1, rng);
    const Matrix e = random_normal(7, 7, 1.0, rng);
    const auto fr = linalg::expm_frechet(w, e);
    EXPECT_LT(oracle::rel_err(fr.l, linalg::expm_frechet_block(w, e)), 1e-9) << norm1;
    EXPECT_LT(oracle::rel_err(fr.expw, oracle::taylor_expm(w, 40, 10)), 1e-10) << norm1;
  }
}

TEST(Frechet, ShapeMismatch) {
  EXPECT_THROW(linalg::expm_frechet(Matrix(3, 3), Matrix(2, 2)), ShapeError);
}

TEST(SymEig, Identity) {
  const auto eig = linalg::sym_eig(Matrix::identity(3));
  for (double v : eig.eigenvalues) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(SymEig, DiagonalGivesAxes) {
  const auto eig = linalg::sym_eig(Matrix{{4, 0}, {0, 1}});
  EXPECT_NEAR(eig.eigenvalues[0], 1.0, 1e-15);
  EXPECT_NEAR(eig.eigenvalues[1], 4.0, 1e-15);
  EXPECT_LT(max_abs(eig.eigenvectors - Matrix{{0, 1}, {1, 0}}), 1e-15);
}

TEST(SymEig, ReconstructionAndOrthonormality) {
  Rng rng = make_stream(12, "test");
  const Matrix a = random_normal(8, 8, 1.0, rng);
  const Matrix s = a + transpose(a);
  const auto eig = linalg::sym_eig(s);
  Matrix vd = eig.eigenvectors;
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t i = 0; i < 8; ++i) vd(i, k) *= eig.eigenvalues[k];
  EXPECT_LT(oracle::rel_err(oracle::naive_matmul(vd, transpose(eig.eigenvectors)), s), 1e-9);
  EXPECT_LT(max_abs(oracle::gram_tn(eig.eigenvectors) - Matrix::identity(8)), 1e-10);
  for (std::size_t k = 1; k < 8; ++k) EXPECT_LE(eig.eigenvalues[k - 1], eig.eigenvalues[k]);
  // Sign convention: largest-magnitude entry of every eigenvector is positive.
  for (std::size_t k = 0; k < 8; ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < 8; ++i)
      if (std::abs(eig.eigenvectors(i, k)) > std::abs(eig.eigenvectors(arg, k))) arg = i;
    EXPECT_GT(eig.eigenvectors(arg, k), 0.0);
  }
}

TEST(SymEig, NonSquare) { EXPECT_THROW(linalg::sym_eig(Matrix(2, 3)), ShapeError); }

TEST(InvSqrt, IdentityAndScalar) {
  EXPECT_LT(max_abs(linalg::inv_sqrt_psd(Matrix::identity(3), 0.0) - Matrix::identity(3)), 1e-15);
  EXPECT_NEAR(linalg::inv_sqrt_psd(Matrix{{4}}, 0.0)(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(linalg::inv_sqrt_psd(Matrix{{4}}, 0.0, InvSqrtMethod::newton_schulz())(0, 0), 0.5,
              1e-12);
}

TEST(InvSqrt, MultipliesBackToIdentity) {
  Rng rng = make_stream(13, "test");
  const Matrix a = random_normal(10, 6, 1.0, rng);
  const Matrix s = oracle::gram_tn(a);
  const double eps = 1e-3;
  Matrix shifted = s;
  for (std::size_t i = 0; i < 6; ++i) shifted(i, i) += eps;
  for (auto method : {InvSqrtMethod::eig(), InvSqrtMethod::newton_schulz()}) {
    const Matrix r = linalg::inv_sqrt_psd(s, eps, method);
    const Matrix rsr = oracle::naive_matmul(oracle::naive_matmul(r, shifted), r);
    const double tol = method.kind == InvSqrtMethod::Kind::kEig ? 1e-6 : 1e-3;
    EXPECT_LT(frobenius_norm(rsr - Matrix::identity(6)), tol);
  }
}

TEST(InvSqrt, MethodsAgreeUpToConditionHundred) {
  Rng rng = make_stream(14, "test");
  for (std::size_t n : {2, 8, 16, 32, 64}) {
    for (double cond : {1.0, 10.0, 100.0}) {
      const Matrix s = oracle::random_spd(n, cond, rng);
      const Matrix eig = linalg::inv_sqrt_psd(s, 0.0);
      const Matrix ns = linalg::inv_sqrt_psd(s, 0.0, InvSqrtMethod::newton_schulz());
      EXPECT_LT(frobenius_norm(ns - eig), 1e-3) << "n=" << n << " cond=" << cond;
    }
  }
}

TEST(InvSqrt, NotPsdIsNumericError) {
  EXPECT_THROW(linalg::inv_sqrt_psd(Matrix{{1, 0}, {0, -1e-3}}, 0.0), NumericError);
  // Round-off sized negatives are clamped.
  EXPECT_NO_THROW(linalg::inv_sqrt_psd(Matrix{{1, 0}, {0, -1e-12}}, 1e-5));
}

}  // namespace
}  // namespace vkd
