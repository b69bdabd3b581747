#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vkd/error.hpp"
#include "vkd/linalg.hpp"
#include "vkd/normalizer.hpp"
#include "vkd/objective.hpp"
#include "vkd/projector.hpp"

namespace vkd::objective {
namespace {

double col_dist(const Matrix& a, std::size_t j, const Matrix& b, std::size_t i) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) s += (a(r, j) - b(r, i)) * (a(r, j) - b(r, i));
  return std::sqrt(s);
}

// Literal pairwise evaluation of the loss and both bound forms.
struct BruteBound {
  double loss = 0.0;
  double relaxed = 0.0;
  double cauchy_schwarz = 0.0;
  bool all_pairs_long = true;
};

BruteBound brute_bound(const Matrix& zs, const Matrix& zt) {
  const std::size_t d = zs.cols();
  BruteBound out;
  out.relaxed = 2.0 * d * (d - 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      for (std::size_t r = 0; r < zs.rows(); ++r) {
        const double x = zs(r, j) - zt(r, i);
        const double u = zt(r, j) - zt(r, i);
        out.loss += (x - u) * (x - u);
      }
      const double x = col_dist(zs, j, zt, i);
      const double u = col_dist(zt, j, zt, i);
      out.relaxed -= 3.0 * x * x;
      out.cauchy_schwarz += x * x + u * u - 2.0 * x * u;
      out.all_pairs_long = out.all_pairs_long && x >= 1.0;
    }
  }
  return out;
}

Matrix shift_columns(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t j = 0; j < z.cols(); ++j) out(r, j) = z(r, (j + 1) % z.cols());
  return out;
}

TEST(Gram, HandCases) {
  EXPECT_EQ(gram(Matrix::identity(3)), Matrix::identity(3));
  EXPECT_EQ(gram(Matrix{{1, 0}, {0, 2}}), (Matrix{{1, 0}, {0, 4}}));
}

TEST(Gram, SymmetricPsd) {
  Rng rng = make_stream(1, "test");
  const Matrix k = gram(random_normal(12, 5, 1.0, rng));
  EXPECT_EQ(k, transpose(k));
  for (double l : linalg::sym_eig(k).eigenvalues) EXPECT_GE(l, -1e-10);
}

TEST(L2Loss, EqualInputs) {
  Rng rng = make_stream(2, "test");
  const Matrix z = random_normal(4, 3, 1.0, rng);
  const auto r = l2_distill_loss(z, z);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(max_abs(r.grad), 0.0);
}

TEST(L2Loss, ScalarCase) {
  const auto r = l2_distill_loss(Matrix{{2}}, Matrix{{5}});
  EXPECT_EQ(r.loss, 9.0);
  EXPECT_EQ(r.grad, (Matrix{{-6}}));
}

TEST(L2Loss, GradientMatchesFiniteDifferences) {
  Rng rng = make_stream(3, "test");
  const Matrix zp = random_normal(6, 5, 1.0, rng);
  const Matrix zt = random_normal(6, 5, 1.0, rng);
  auto f = [&](const Matrix& x) { return l2_distill_loss(x, zt).loss; };
  EXPECT_LT(oracle::rel_err(l2_distill_loss(zp, zt).grad, oracle::fd_gradient(zp, f)), 1e-6);
}

TEST(L2Loss, RotationInvariant) {
  Rng rng = make_stream(4, "test");
  const Matrix zp = random_normal(8, 6, 1.0, rng);
  const Matrix zt = random_normal(8, 6, 1.0, rng);
  const Matrix r = linalg::expm(oracle::random_skew(6, 1.0, rng));
  EXPECT_NEAR(l2_distill_loss(oracle::naive_matmul(zp, r), oracle::naive_matmul(zt, r)).loss,
              l2_distill_loss(zp, zt).loss, 1e-9);
}

TEST(L2Loss, ShapeMismatch) {
  EXPECT_THROW(l2_distill_loss(Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST(CrossCorr, MatchingColumnsHaveZeroDiagonal) {
  Rng rng = make_stream(5, "test");
  const Matrix z = random_normal(7, 4, 1.0, rng);
  const Matrix c = cross_corr(z, z);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c(i, i), 0.0);
}

TEST(CrossCorr, HandArithmetic) {
  EXPECT_EQ(cross_corr(Matrix{{1, 0}}, Matrix{{0, 0}}), (Matrix{{1, 0}, {1, 0}}));
}

TEST(CrossCorr, MatchesBruteForceAndIsAsymmetric) {
  Rng rng = make_stream(6, "test");
  const Matrix zs = random_normal(16, 4, 1.0, rng);
  const Matrix zt = random_normal(16, 4, 1.0, rng);
  const Matrix c = cross_corr(zs, zt);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(c(i, j), col_dist(zs, j, zt, i));
      EXPECT_GE(c(i, j), 0.0);
    }
  EXPECT_NE(c, transpose(c));
}

TEST(KernelPreservation, OrthogonalZeroAndRandom) {
  Rng rng = make_stream(7, "test");
  const Matrix z = random_normal(10, 4, 1.0, rng);
  const Matrix p = projector::build_projection(projector::SkewParam::random(4, 9, 0.5, rng));
  EXPECT_LE(kernel_preservation_error(z, p), 1e-8);
  EXPECT_EQ(kernel_preservation_error(z, Matrix(4, 9)), 1.0);
  EXPECT_GT(kernel_preservation_error(z, random_normal(4, 9, 1.0, rng)), 1e-4);
  EXPECT_THROW(kernel_preservation_error(z, Matrix(3, 9)), ShapeError);
}

TEST(KernelPreservation, GramDistortionOfIdentityImageIsZero) {
  Rng rng = make_stream(8, "test");
  const Matrix z = random_normal(5, 3, 1.0, rng);
  EXPECT_EQ(gram_distortion(z, z), 0.0);
}

TEST(DiversityBound, EqualInputsHold) {
  Rng rng = make_stream(9, "test");
  const Matrix zt = norm::whiten(random_normal(32, 8, 1.0, rng), 1e-5);
  const auto r = diversity_bound(zt, zt);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.constant, 2.0 * 8 * 7);
  EXPECT_EQ(r.lambda, 3.0);
}

TEST(DiversityBound, HandBuiltTwoColumns) {
  // Orthonormal, zero-mean columns in R^3.
  const double a = 1.0 / std::sqrt(2.0);
  const double b = 1.0 / std::sqrt(6.0);
  const Matrix zt{{a, b}, {-a, b}, {0.0, -2.0 * b}};
  Matrix zs = zt;
  for (double& v : zs.data()) v += 1.0;
  const auto r = diversity_bound(zs, zt);
  const auto want = brute_bound(zs, zt);
  EXPECT_NEAR(r.loss, want.loss, 1e-12);
  // Shifting every entry by 1 moves each pairwise term by exactly b = 3.
  EXPECT_NEAR(r.loss, 2.0 * 3.0, 1e-12);
  ASSERT_TRUE(want.all_pairs_long);
  EXPECT_EQ(r.form, BoundForm::kRelaxed);
  EXPECT_NEAR(r.bound, want.relaxed, 1e-12);
  EXPECT_TRUE(r.holds);
}

TEST(DiversityBound, MonteCarloAgreesWithBruteForce) {
  Rng rng = make_stream(10, "test");
  std::size_t relaxed = 0;
  std::size_t fallback = 0;
  for (int t = 0; t < 1000; ++t) {
    const Matrix zt = norm::whiten(random_normal(32, 8, 1.0, rng), 1e-5);
    // Alternate far students with ones whose column j sits next to teacher
    // column j+1, so that both forms are exercised.
    const Matrix zs = t % 2 == 0 ? random_normal(32, 8, 0.5 + t % 5, rng)
                                 : shift_columns(zt) + random_normal(32, 8, 0.02, rng);
    const auto r = diversity_bound(zs, zt);
    const auto want = brute_bound(zs, zt);
    ASSERT_TRUE(r.holds) << "trial " << t;
    EXPECT_NEAR(r.loss, want.loss, 1e-9 * std::max(1.0, want.loss));
    if (want.all_pairs_long) {
      ++relaxed;
      EXPECT_EQ(r.form, BoundForm::kRelaxed);
      EXPECT_NEAR(r.bound, want.relaxed, 1e-9 * std::abs(want.relaxed));
    } else {
      ++fallback;
      EXPECT_EQ(r.form, BoundForm::kCauchySchwarz);
      EXPECT_NEAR(r.bound, want.cauchy_schwarz, 1e-9 * std::max(1.0, want.cauchy_schwarz));
    }
  }
  EXPECT_GT(relaxed, 0u);
  EXPECT_GT(fallback, 0u);
}

TEST(DiversityBound, UnwhitenedTeacherIsPreconditionError) {
  Rng rng = make_stream(11, "test");
  const Matrix zt = random_normal(32, 8, 1.0, rng);
  try {
    diversity_bound(zt, zt);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("Z^T Z - I"), std::string::npos);
  }
}

TEST(DiversityBound, CsvRow) {
  DiversityBoundReport r;
  r.loss = 1.5;
  r.bound = -2.0;
  r.constant = 4.0;
  r.holds = true;
  EXPECT_EQ(diversity_csv_header(), "loss,bound,const,lambda,holds,form");
  EXPECT_EQ(diversity_csv_row(r), "1.5,-2,4,3,1,relaxed");
}

}  // namespace
}  // namespace vkd::objective
