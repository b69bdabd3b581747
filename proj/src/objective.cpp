#include "vkd/objective.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "vkd/error.hpp"
#include "vkd/linalg.hpp"

namespace vkd::objective {
namespace {

double column_distance_sq(const Matrix& a, std::size_t ja, const Matrix& b, std::size_t jb) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double diff = a(r, ja) - b(r, jb);
    s += diff * diff;
  }
  return s;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Matrix gram(const Matrix& z) { return linalg::matmul_nt(z, z); }

LossAndGrad l2_distill_loss(const Matrix& z_proj, const Matrix& z_t) {
  require_same_shape(z_proj, z_t, "l2_distill_loss");
  LossAndGrad out{0.0, Matrix(z_proj.rows(), z_proj.cols())};
  if (z_proj.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(z_proj.rows());
  for (std::size_t i = 0; i < z_proj.size(); ++i) {
    const double diff = z_proj.data()[i] - z_t.data()[i];
    out.loss += diff * diff;
    out.grad.data()[i] = 2.0 * diff * inv_b;
  }
  out.loss *= inv_b;
  return out;
}

Matrix cross_corr(const Matrix& z_s, const Matrix& z_t) {
  require_same_shape(z_s, z_t, "cross_corr");
  const std::size_t d = z_s.cols();
  Matrix c(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) c(i, j) = std::sqrt(column_distance_sq(z_s, j, z_t, i));
  return c;
}

double gram_distortion(const Matrix& z, const Matrix& y) {
  if (z.rows() != y.rows()) {
    throw ShapeError("gram_distortion: batch sizes differ " + z.shape_str() + " vs " +
                     y.shape_str());
  }
  const Matrix kz = gram(z);
  const double denom = frobenius_norm(kz);
  if (denom == 0.0) return 0.0;
  return frobenius_norm(gram(y) - kz) / denom;
}

double kernel_preservation_error(const Matrix& z, const Matrix& p) {
  if (z.cols() != p.rows()) {
    throw ShapeError("kernel_preservation_error: features " + z.shape_str() +
                     " incompatible with projection " + p.shape_str());
  }
  return gram_distortion(z, linalg::matmul(z, p));
}

std::string to_string(BoundForm form) {
  return form == BoundForm::kRelaxed ? "relaxed" : "cauchy_schwarz";
}

DiversityBoundReport diversity_bound(const Matrix& z_s, const Matrix& z_t) {
  require_same_shape(z_s, z_t, "diversity_bound");
  const std::size_t d = z_t.cols();

  Matrix g = linalg::matmul_tn(z_t, z_t);
  for (std::size_t i = 0; i < d; ++i) g(i, i) -= 1.0;
  DiversityBoundReport r;
  r.whitening_residual = frobenius_norm(g);
  if (!(r.whitening_residual <= kWhiteningTolerance)) {
    throw PreconditionError("diversity_bound: teacher features are not whitened, ||Z^T Z - I||_F = " +
                            fmt_double(r.whitening_residual));
  }

  const double dd = static_cast<double>(d);
  r.constant = 2.0 * dd * (dd - 1.0);
  r.lambda = 3.0;

  double cs_bound = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      // x = zs_j - zt_i, u = zt_j - zt_i; the pair term is ||x - u||^2.
      double pair = 0.0;
      for (std::size_t b = 0; b < z_s.rows(); ++b) {
        const double v = z_s(b, j) - z_t(b, j);
        pair += v * v;
      }
      r.loss += pair;
      const double x2 = column_distance_sq(z_s, j, z_t, i);
      const double u2 = column_distance_sq(z_t, j, z_t, i);
      r.cross_sum += x2;
      if (x2 < 1.0) ++r.short_pairs;
      cs_bound += x2 + u2 - 2.0 * std::sqrt(x2 * u2);
    }
  }
  if (r.short_pairs == 0) {
    r.form = BoundForm::kRelaxed;
    r.bound = r.constant - r.lambda * r.cross_sum;
  } else {
    r.form = BoundForm::kCauchySchwarz;
    r.bound = cs_bound;
  }
  r.holds = r.loss >= r.bound - kBoundSlack;
  return r;
}

std::string diversity_csv_header() { return "loss,bound,const,lambda,holds,form"; }

std::string diversity_csv_row(const DiversityBoundReport& r) {
  return fmt_double(r.loss) + "," + fmt_double(r.bound) + "," + fmt_double(r.constant) + "," +
         fmt_double(r.lambda) + "," + (r.holds ? "1" : "0") + "," + to_string(r.form);
}

}  // namespace vkd::objective
