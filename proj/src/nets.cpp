#include "vkd/nets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vkd/error.hpp"
#include "vkd/linalg.hpp"

namespace vkd::nets {
namespace {

void add_row_bias(Matrix& x, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

Dataset sample_split(const Matrix& means, std::size_t n, double spread, Rng& rng) {
  const std::size_t classes = means.rows();
  const std::size_t dim = means.cols();
  Dataset ds;
  ds.n_classes = classes;
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.y[i] = static_cast<std::uint32_t>(i % classes);
  std::shuffle(ds.y.begin(), ds.y.end(), rng);
  ds.x = Matrix(n, dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) ds.x(i, j) = means(ds.y[i], j) + spread * noise(rng);
  return ds;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation act)
    : dims_(std::move(layer_dims)), act_(act) {
  if (dims_.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] == 0 || dims_[l + 1] == 0) throw ConfigError("MLP layer widths must be positive");
    weights_.emplace_back(dims_[l], dims_[l + 1]);
    biases_.emplace_back(dims_[l + 1], 0.0);
  }
}

Mlp Mlp::random(std::vector<std::size_t> layer_dims, Activation act, Rng& rng) {
  Mlp net(std::move(layer_dims), act);
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(net.dims_[l]));
    fill_normal(net.weights_[l], stddev, rng);
  }
  return net;
}

Matrix& Mlp::weight_mut(std::size_t l) {
  ++generation_;
  return weights_.at(l);
}

std::vector<double>& Mlp::bias_mut(std::size_t l) {
  ++generation_;
  return biases_.at(l);
}

std::vector<std::span<double>> Mlp::parameter_spans() {
  ++generation_;
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(weights_[l].data());
    out.emplace_back(biases_[l]);
  }
  return out;
}

std::vector<std::span<const double>> MlpGrads::spans() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(weights[l].data());
    out.emplace_back(biases[l]);
  }
  return out;
}

ForwardResult forward(const Mlp& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) {
    throw ShapeError("forward: input " + x.shape_str() + " does not match input width " +
                     std::to_string(net.input_dim()));
  }
  ForwardResult res;
  res.cache.generation = net.generation();
  res.cache.net = &net;
  const std::size_t layers = net.num_layers();
  Matrix h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    res.cache.inputs.push_back(h);
    Matrix z = linalg::matmul(h, net.weight(l));
    add_row_bias(z, net.bias(l));
    if (l + 1 == layers) {
      res.logits = std::move(z);
      break;
    }
    res.cache.pre.push_back(z);
    for (double& v : z.data()) v = activate(net.activation(), v);
    h = std::move(z);
  }
  res.features = res.cache.inputs.back();
  return res;
}

MlpGrads backward(const Mlp& net, const ForwardCache& cache, const Matrix& grad_logits,
                  const Matrix& grad_features) {
  if (cache.net != &net || cache.generation != net.generation() ||
      cache.inputs.size() != net.num_layers()) {
    throw PreconditionError("backward: forward cache is stale for this network");
  }
  const std::size_t layers = net.num_layers();
  const std::size_t batch = cache.inputs.front().rows();
  if (grad_logits.rows() != batch || grad_logits.cols() != net.num_classes()) {
    throw ShapeError("backward: grad_logits " + grad_logits.shape_str() + " does not match logits");
  }
  const bool has_feature_grad = !grad_features.empty();
  if (has_feature_grad &&
      (grad_features.rows() != batch || grad_features.cols() != net.feature_dim())) {
    throw ShapeError("backward: grad_features " + grad_features.shape_str() +
                     " does not match features");
  }

  MlpGrads g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Matrix upstream = grad_logits;
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = linalg::matmul_tn(cache.inputs[l], upstream);
    g.biases[l].assign(upstream.cols(), 0.0);
    for (std::size_t i = 0; i < upstream.rows(); ++i)
      for (std::size_t j = 0; j < upstream.cols(); ++j) g.biases[l][j] += upstream(i, j);
    if (l == 0) break;
    Matrix down = linalg::matmul_nt(upstream, net.weight(l));
    if (l + 1 == layers && has_feature_grad) down += grad_features;
    const Matrix& pre = cache.pre[l - 1];
    for (std::size_t i = 0; i < down.size(); ++i)
      down.data()[i] *= activate_grad(net.activation(), pre.data()[i]);
    upstream = std::move(down);
  }
  return g;
}

CeResult softmax_ce(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_ce: " + std::to_string(labels.size()) + " labels for " +
                     logits.shape_str() + " logits");
  }
  CeResult out{0.0, Matrix(logits.rows(), logits.cols())};
  const std::size_t b = logits.rows();
  if (b == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= logits.cols()) {
      throw DataError("softmax_ce: label " + std::to_string(labels[i]) + " out of range for " +
                      std::to_string(logits.cols()) + " classes");
    }
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    out.loss += lse - row[labels[i]];
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double p = std::exp(row[j] - lse);
      out.grad_logits(i, j) = (p - (j == labels[i] ? 1.0 : 0.0)) * inv_b;
    }
  }
  out.loss *= inv_b;
  return out;
}

std::vector<std::uint32_t> argmax_rows(const Matrix& logits) {
  std::vector<std::uint32_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void SyntheticTask::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic task needs n_classes >= 2");
  if (input_dim == 0) throw ConfigError("synthetic task needs input_dim >= 1");
  if (n_train == 0) throw ConfigError("synthetic task needs n_train >= 1");
  if (!(cluster_spread >= 0.0)) throw ConfigError("cluster_spread must be >= 0");
}

SplitData gen_synthetic(const SyntheticTask& task) {
  task.validate();
  Rng rng = make_stream(task.seed, "task");
  SplitData out;
  out.class_means = random_normal(task.n_classes, task.input_dim, 1.0, rng);

  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < task.n_classes; ++a) {
    for (std::size_t b = a + 1; b < task.n_classes; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < task.input_dim; ++j) {
        const double d = out.class_means(a, j) - out.class_means(b, j);
        s += d * d;
      }
      min_dist = std::min(min_dist, std::sqrt(s));
    }
  }
  const double required = 4.0 * task.cluster_spread;
  if (min_dist < required) {
    if (min_dist == 0.0) throw ConfigError("synthetic task: coincident class means");
    out.class_means *= required / min_dist;
  }

  out.train = sample_split(out.class_means, task.n_train, task.cluster_spread, rng);
  out.test = sample_split(out.class_means, task.n_test, task.cluster_spread, rng);
  return out;
}

Matrix mean_pool(const TokenStack& tokens) {
  if (tokens.tokens == 0) throw ShapeError("mean_pool: token axis is empty");
  if (tokens.data.size() != tokens.batch * tokens.tokens * tokens.dim) {
    throw ShapeError("mean_pool: data length does not match b x t x d");
  }
  Matrix out(tokens.batch, tokens.dim);
  const double inv_t = 1.0 / static_cast<double>(tokens.tokens);
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t t = 0; t < tokens.tokens; ++t)
      for (std::size_t d = 0; d < tokens.dim; ++d) out(b, d) += tokens.at(b, t, d);
    for (std::size_t d = 0; d < tokens.dim; ++d) out(b, d) *= inv_t;
  }
  return out;
}

}  // namespace vkd::nets
