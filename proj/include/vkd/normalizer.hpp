#pragma once

#include <string>

#include "vkd/linalg.hpp"
#include "vkd/matrix.hpp"

// Teacher-feature normalisation. Applied to the frozen teacher branch only;
// nothing here is differentiated.
namespace vkd::norm {

struct NormalizerKind {
  enum class Variant { kNone, kStandardize, kLayerNorm, kWhiten };

  Variant variant = Variant::kStandardize;
  double eps = 1e-5;
  linalg::InvSqrtMethod method = linalg::InvSqrtMethod::eig();  // whiten only

  void validate() const;
};

NormalizerKind::Variant parse_variant(const std::string& name);
std::string to_string(NormalizerKind::Variant v);

// Per column: (x - mean) / max(std, eps), population variance. Constant
// columns map to (numerically) zero. Needs b >= 2.
Matrix standardize(const Matrix& z, double eps);

// Per row, same convention. Needs d >= 2.
Matrix layer_norm(const Matrix& z, double eps);

// Centre columns, then right-multiply by (Z_c^T Z_c + eps I)^{-1/2}. No 1/b
// factor: the output satisfies Z^T Z = I, so every column has unit norm.
Matrix whiten(const Matrix& z, double eps,
              linalg::InvSqrtMethod method = linalg::InvSqrtMethod::eig());

Matrix apply(const NormalizerKind& kind, const Matrix& z);

}  // namespace vkd::norm
