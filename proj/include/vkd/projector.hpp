#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vkd/activation.hpp"
#include "vkd/matrix.hpp"
#include "vkd/random.hpp"

namespace vkd::projector {

enum class OrthMethod { kExpm, kCayley };

// Trainable parameter of the orthogonal projector. The skew matrix is
// W = a - a^T; P is the first d_s rows of exp(W) (or of the Cayley map).
struct SkewParam {
  Matrix a;  // d_t x d_t, unconstrained
  std::size_t d_s = 0;
  std::size_t d_t = 0;

  static SkewParam zeros(std::size_t d_s, std::size_t d_t);
  // Entries of a drawn from N(0, stddev^2).
  static SkewParam random(std::size_t d_s, std::size_t d_t, double stddev, Rng& rng);

  // Throws ConfigError for d_s > d_t, ShapeError if a is not d_t x d_t.
  void validate() const;
};

// W = a - a^T.
Matrix skew(const Matrix& a);

// d_s x d_t matrix with orthonormal rows.
Matrix build_projection(const SkewParam& p, OrthMethod method = OrthMethod::kExpm);

// z_s * p.
Matrix project(const Matrix& z_s, const Matrix& p);

// d(loss)/d(a) for the exp parameterisation, given upstream = d(loss)/dP
// (d_s x d_t). Uses the adjoint identity <L(W,E), G> = <E, L(W^T, G)>.
Matrix grad_orthogonal(const SkewParam& p, const Matrix& upstream);

// Same for the Cayley parameterisation P_full = (I + W)^{-1}(I - W).
Matrix grad_cayley(const SkewParam& p, const Matrix& upstream);

// ||P P^T - I||_F.
double orthogonality_error(const Matrix& p);

// b x rank: centred teacher features expressed in their top-`rank`
// right-singular directions (eigenvectors of z_c^T z_c, largest first).
Matrix svd_teacher_target(const Matrix& z_t, std::size_t rank);

// ---------------------------------------------------------------------------
// Projector families
// ---------------------------------------------------------------------------

enum class Kind { kOrthogonal, kLinear, kMlp, kEnsemble, kSvdTarget };

struct ProjectorSpec {
  Kind kind = Kind::kOrthogonal;
  OrthMethod method = OrthMethod::kExpm;
  std::size_t d_s = 32;
  std::size_t d_t = 128;
  std::size_t mlp_hidden = 0;  // 0 means d_t
  Activation mlp_activation = Activation::kRelu;
  std::size_t ensemble_n = 3;
  std::size_t svd_rank = 0;  // 0 means d_s
  double init_stddev = 0.01;  // orthogonal: entries of a

  std::size_t hidden() const { return mlp_hidden == 0 ? d_t : mlp_hidden; }
  std::size_t rank() const { return svd_rank == 0 ? d_s : svd_rank; }
  // Width of the space the distillation loss lives in.
  std::size_t output_dim() const { return kind == Kind::kSvdTarget ? rank() : d_t; }
};

Kind parse_kind(const std::string& name);
std::string to_string(Kind kind);
OrthMethod parse_method(const std::string& name);
std::string to_string(OrthMethod method);

// Parameters in a fixed order per kind:
//   orthogonal: {a}
//   linear:     {P}                     (d_s x d_t)
//   mlp:        {W1, b1, W2, b2}        (d_s x h, 1 x h, h x d_t, 1 x d_t)
//   ensemble:   {P_1, ..., P_n}
//   svd_target: {}
std::vector<Matrix> init_params(const ProjectorSpec& spec, Rng& rng);

// linear / mlp / ensemble forward pass.
Matrix forward_baseline(const ProjectorSpec& spec, std::span<const Matrix> params,
                        const Matrix& z_s);

struct Backward {
  Matrix grad_input;
  std::vector<Matrix> grad_params;  // same order as params
};

// Trainable projector with a uniform forward/backward interface over every
// family. The trainer is the only mutator of the parameters.
class Projector {
 public:
  Projector(ProjectorSpec spec, std::vector<Matrix> params);
  Projector(const ProjectorSpec& spec, Rng& rng) : Projector(spec, init_params(spec, rng)) {}

  const ProjectorSpec& spec() const { return spec_; }
  std::vector<Matrix>& params() { return params_; }
  const std::vector<Matrix>& params() const { return params_; }

  // Student features (b x d_s) to loss space (b x output_dim).
  Matrix forward(const Matrix& z_s) const;
  Backward backward(const Matrix& z_s, const Matrix& grad_out) const;

  // svd_target replaces the teacher target by its truncated SVD coordinates;
  // every other family leaves the target unchanged.
  Matrix prepare_target(const Matrix& z_t) const;

  // Effective d_s x d_t linear map (orthogonal / linear / ensemble mean).
  // Empty matrix for mlp and svd_target.
  Matrix linear_map() const;

 private:
  SkewParam skew_param() const;

  ProjectorSpec spec_;
  std::vector<Matrix> params_;
};

}  // namespace vkd::projector
