#include "vkd/normalizer.hpp"

#include <algorithm>
#include <cmath>

#include "vkd/error.hpp"

namespace vkd::norm {
namespace {

// Standardises each row of a row-major matrix in place.
void standardize_rows(Matrix& z, double eps) {
  const double n = static_cast<double>(z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double denom = std::max(std::sqrt(var), eps);
    for (double& v : row) v = (v - mean) / denom;
  }
}

}  // namespace

void NormalizerKind::validate() const {
  if (variant != Variant::kNone && !(eps > 0.0)) {
    throw ConfigError("normalizer eps must be > 0", ConfigError::Kind::kInvariant);
  }
  if (variant == Variant::kWhiten && method.kind == linalg::InvSqrtMethod::Kind::kNewtonSchulz &&
      method.iters < 1) {
    throw ConfigError("Newton-Schulz whitening needs ns_iters >= 1", ConfigError::Kind::kInvariant);
  }
}

NormalizerKind::Variant parse_variant(const std::string& name) {
  using V = NormalizerKind::Variant;
  if (name == "none") return V::kNone;
  if (name == "standardize") return V::kStandardize;
  if (name == "layernorm" || name == "layer_norm") return V::kLayerNorm;
  if (name == "whiten") return V::kWhiten;
  throw ConfigError("unknown normalizer '" + name + "'", ConfigError::Kind::kBadValue);
}

std::string to_string(NormalizerKind::Variant v) {
  using V = NormalizerKind::Variant;
  switch (v) {
    case V::kNone:
      return "none";
    case V::kStandardize:
      return "standardize";
    case V::kLayerNorm:
      return "layernorm";
    case V::kWhiten:
      return "whiten";
  }
  return "none";
}

Matrix standardize(const Matrix& z, double eps) {
  if (z.rows() < 2) {
    throw ConfigError("standardize needs a batch of at least 2 rows, got " + z.shape_str());
  }
  Matrix t = transpose(z);
  standardize_rows(t, eps);
  return transpose(t);
}

Matrix layer_norm(const Matrix& z, double eps) {
  if (z.cols() < 2) {
    throw ConfigError("layer_norm needs at least 2 features, got " + z.shape_str());
  }
  Matrix out = z;
  standardize_rows(out, eps);
  return out;
}

Matrix whiten(const Matrix& z, double eps, linalg::InvSqrtMethod method) {
  Matrix centred = z;
  const double b = static_cast<double>(z.rows());
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, j);
    mean /= b;
    for (std::size_t i = 0; i < z.rows(); ++i) centred(i, j) -= mean;
  }
  const Matrix gram = linalg::matmul_tn(centred, centred);
  return linalg::matmul(centred, linalg::inv_sqrt_psd(gram, eps, method));
}

Matrix apply(const NormalizerKind& kind, const Matrix& z) {
  using V = NormalizerKind::Variant;
  switch (kind.variant) {
    case V::kNone:
      return z;
    case V::kStandardize:
      return standardize(z, kind.eps);
    case V::kLayerNorm:
      return layer_norm(z, kind.eps);
    case V::kWhiten:
      return whiten(z, kind.eps, kind.method);
  }
  return z;
}

}  // namespace vkd::norm
