#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vkd/activation.hpp"
#include "vkd/matrix.hpp"
#include "vkd/random.hpp"

namespace vkd::nets {

// Fully connected network. layer_dims = {input, hidden..., feature, classes}.
// Every layer but the last is followed by the activation; the output of the
// last activated layer is the feature tap (the input itself for a single
// affine layer).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> layer_dims, Activation act);
  // He-normal weights, zero biases.
  static Mlp random(std::vector<std::size_t> layer_dims, Activation act, Rng& rng);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  Activation activation() const { return act_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t feature_dim() const { return dims_[dims_.size() - 2]; }
  std::size_t num_classes() const { return dims_.back(); }

  const Matrix& weight(std::size_t l) const { return weights_[l]; }  // in x out
  const std::vector<double>& bias(std::size_t l) const { return biases_[l]; }

  // Mutable access invalidates outstanding forward caches.
  Matrix& weight_mut(std::size_t l);
  std::vector<double>& bias_mut(std::size_t l);
  // weights and biases interleaved: W0, b0, W1, b1, ...
  std::vector<std::span<double>> parameter_spans();

  std::uint64_t generation() const { return generation_; }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.dims_ == b.dims_ && a.act_ == b.act_ && a.weights_ == b.weights_ &&
           a.biases_ == b.biases_;
  }

 private:
  std::vector<std::size_t> dims_;
  Activation act_ = Activation::kRelu;
  std::vector<Matrix> weights_;
  std::vector<std::vector<double>> biases_;
  std::uint64_t generation_ = 0;
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each affine layer
  std::vector<Matrix> pre;     // pre-activation of each activated layer
  std::uint64_t generation = 0;
  const Mlp* net = nullptr;
};

struct ForwardResult {
  Matrix features;
  Matrix logits;
  ForwardCache cache;
};

ForwardResult forward(const Mlp& net, const Matrix& x);

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::vector<std::span<const double>> spans() const;
};

// grad_features (may be empty) is added to the gradient flowing into the
// feature tap from the classifier. Throws PreconditionError if the net was
// modified after the cache was produced.
MlpGrads backward(const Mlp& net, const ForwardCache& cache, const Matrix& grad_logits,
                  const Matrix& grad_features);

struct CeResult {
  double loss = 0.0;
  Matrix grad_logits;  // (softmax - onehot) / b
};

CeResult softmax_ce(const Matrix& logits, std::span<const std::uint32_t> labels);

std::vector<std::uint32_t> argmax_rows(const Matrix& logits);
double accuracy(const Matrix& logits, std::span<const std::uint32_t> labels);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Dataset {
  Matrix x;
  std::vector<std::uint32_t> y;
  std::size_t n_classes = 0;

  std::size_t size() const { return x.rows(); }
};

struct SyntheticTask {
  std::size_t n_classes = 10;
  std::size_t input_dim = 32;
  std::size_t n_train = 2048;
  std::size_t n_test = 1024;
  std::uint64_t seed = 0;
  double cluster_spread = 1.0;

  void validate() const;
};

struct SplitData {
  Dataset train;
  Dataset test;
  Matrix class_means;  // n_classes x input_dim
};

// Gaussian mixture: class means ~ N(0, I), rescaled if needed so every pair is
// at least 4 * cluster_spread apart; samples are mean + cluster_spread * N(0, I).
// Labels are balanced (counts differ by at most one) and shuffled.
SplitData gen_synthetic(const SyntheticTask& task);

// ---------------------------------------------------------------------------
// Token pooling
// ---------------------------------------------------------------------------

// b x t x d token stack, row-major (batch, token, feature).
struct TokenStack {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  double& at(std::size_t b, std::size_t t, std::size_t d) {
    return data[(b * tokens + t) * dim + d];
  }
  double at(std::size_t b, std::size_t t, std::size_t d) const {
    return data[(b * tokens + t) * dim + d];
  }
};

// Global average over the token axis; b x d.
Matrix mean_pool(const TokenStack& tokens);

}  // namespace vkd::nets
