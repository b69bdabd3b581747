#pragma once

#include <cstddef>
#include <string>

#include "vkd/matrix.hpp"

// Distillation objective and the diagnostics built around it.
namespace vkd::objective {

// K = z z^T (b x b). Exactly symmetric.
Matrix gram(const Matrix& z);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

// sum((z_proj - z_t)^2) / b with gradient 2 (z_proj - z_t) / b.
LossAndGrad l2_distill_loss(const Matrix& z_proj, const Matrix& z_t);

// C(i, j) = || z_s[:, j] - z_t[:, i] ||_2, d x d.
Matrix cross_corr(const Matrix& z_s, const Matrix& z_t);

// ||(z p)(z p)^T - z z^T||_F / ||z z^T||_F
double kernel_preservation_error(const Matrix& z, const Matrix& p);

// Gram-matrix distortion between any input batch and its image:
// ||y y^T - z z^T||_F / ||z z^T||_F.
double gram_distortion(const Matrix& z, const Matrix& y);

enum class BoundForm {
  kRelaxed,        // const - 3 sum_{i!=j} C_{j,i}^2 (every pair distance >= 1)
  kCauchySchwarz,  // sum_{i!=j} (x^2 + u^2 - 2 x u), before the sqrt relaxation
};

std::string to_string(BoundForm form);

struct DiversityBoundReport {
  // sum_{i!=j} ||(zs_j - zt_i) - (zt_j - zt_i)||^2 = (d-1) ||z_s - z_t||_F^2,
  // the pairwise form of the raw (unreduced) L2 loss.
  double loss = 0.0;
  double bound = 0.0;
  double constant = 0.0;  // 2 d (d-1)
  double lambda = 3.0;
  bool holds = false;  // loss >= bound - 1e-8
  BoundForm form = BoundForm::kRelaxed;
  double cross_sum = 0.0;            // sum_{i!=j} C_{j,i}^2
  std::size_t short_pairs = 0;       // pairs with C_{j,i} < 1
  double whitening_residual = 0.0;   // ||z_t^T z_t - I||_F
};

// Whitened-teacher lower bound on the L2 loss. Throws PreconditionError when
// ||z_t^T z_t - I||_F exceeds kWhiteningTolerance.
DiversityBoundReport diversity_bound(const Matrix& z_s, const Matrix& z_t_whitened);

inline constexpr double kWhiteningTolerance = 1e-2;
inline constexpr double kBoundSlack = 1e-8;

// "loss,bound,const,lambda,holds,form"
std::string diversity_csv_header();
std::string diversity_csv_row(const DiversityBoundReport& r);

}  // namespace vkd::objective
