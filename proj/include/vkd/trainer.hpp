#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vkd/activation.hpp"
#include "vkd/nets.hpp"
#include "vkd/normalizer.hpp"
#include "vkd/projector.hpp"

namespace vkd::train {

enum class OptimizerKind { kSgdMomentum, kAdamW };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 50;
  std::size_t teacher_epochs = 30;
  std::size_t batch_size = 64;
  std::size_t eval_every = 1;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double momentum = 0.9;
  double beta = 1.0;  // weight of the distillation term
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  projector::ProjectorSpec projector;
  norm::NormalizerKind normalizer;
  nets::SyntheticTask task;  // task.seed is ignored; the data seed is `seed`
  std::vector<std::size_t> teacher_hidden = {256, 256};
  std::vector<std::size_t> student_hidden = {64};
  Activation activation = Activation::kRelu;
  bool record_wall_time = false;
  std::string train_features;  // optional FeatureDump datasets
  std::string test_features;
  std::size_t sweep_seeds = 3;
  std::vector<projector::Kind> sweep_projectors = {
      projector::Kind::kOrthogonal, projector::Kind::kLinear, projector::Kind::kMlp,
      projector::Kind::kEnsemble, projector::Kind::kSvdTarget};
  std::vector<norm::NormalizerKind::Variant> sweep_normalizers = {
      norm::NormalizerKind::Variant::kNone, norm::NormalizerKind::Variant::kStandardize,
      norm::NormalizerKind::Variant::kWhiten};
  double probe_delta = 0.0;  // > 0 enables the perturbation probe report
  std::size_t probe_samples = 16;

  // Throws ConfigError(kInvariant) naming the offending key.
  void validate() const;
};

struct MetricsRow {
  std::size_t epoch = 0;
  double train_ce = 0.0;
  double distill_loss = 0.0;
  double test_acc = 0.0;
  double gram_err = 0.0;
  double orth_err = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

// "epoch,train_ce,distill_loss,test_acc,gram_err,orth_err,wall_ms"
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);
std::string metrics_csv(std::span<const MetricsRow> rows);

// ---------------------------------------------------------------------------
// Optimisers
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerConfig from(const TrainConfig& cfg);
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first;   // momentum buffer / Adam m
  std::vector<std::vector<double>> second;  // Adam v
};

// In-place update; weight decay is decoupled (w <- w (1 - lr wd) before the
// gradient step). SGD: buf = momentum buf + g, w -= lr buf. AdamW: bias
// corrected moments, w -= lr m_hat / (sqrt(v_hat) + eps).
void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Synthetic task (seeded by cfg.seed) or the FeatureDump files named in cfg.
nets::SplitData load_data(const TrainConfig& cfg);

std::vector<std::size_t> teacher_dims(const TrainConfig& cfg, std::size_t input_dim,
                                      std::size_t classes);
std::vector<std::size_t> student_dims(const TrainConfig& cfg, std::size_t input_dim,
                                      std::size_t classes);

struct TeacherResult {
  nets::Mlp net;
  std::vector<MetricsRow> metrics;  // distill columns are nan
  double test_acc = 0.0;
};

// Cross-entropy training for cfg.teacher_epochs; row 0 is the initial net.
TeacherResult train_teacher(const TrainConfig& cfg);
TeacherResult train_teacher(const TrainConfig& cfg, const nets::SplitData& data);

struct DistillResult {
  nets::Mlp student;
  std::optional<projector::Projector> projector;  // empty when the branch is off
  std::vector<MetricsRow> metrics;
};

// Called after every optimiser step with the global step index.
using StepObserver = std::function<void(std::size_t step, const DistillResult& state)>;

// Student training with loss = CE + beta * L2(project(student features),
// normalise(teacher features)). The teacher is only read. With beta == 0 the
// distillation branch is switched off and the run is identical to
// train_plain().
DistillResult distill(const TrainConfig& cfg, const nets::Mlp& teacher,
                      const StepObserver& observer = {});
DistillResult distill(const TrainConfig& cfg, const nets::Mlp& teacher,
                      const nets::SplitData& data, const StepObserver& observer = {});

// Student trained on cross-entropy alone.
DistillResult train_plain(const TrainConfig& cfg);
DistillResult train_plain(const TrainConfig& cfg, const nets::SplitData& data);

// Per-batch diversity-bound reports for a trained student against whitened
// teacher features (fixed batch order over the training set). Batches with
// no more rows than the loss dimension, or whose teacher features are rank
// deficient, are skipped.
std::vector<std::string> diversity_report(const TrainConfig& cfg, const nets::Mlp& teacher,
                                          const DistillResult& run, const nets::SplitData& data);

// ---------------------------------------------------------------------------
// Sweeps and benchmarks
// ---------------------------------------------------------------------------

struct SweepRow {
  projector::Kind projector;
  norm::NormalizerKind::Variant normalizer;
  std::uint64_t seed;
  MetricsRow metrics;
};

// projector x normalizer x seed grid. Teachers are trained once per seed.
// Cells may run on `workers` threads; rows come back in grid order
// (projector-major, then normalizer, then seed, then epoch).
std::vector<SweepRow> ablation_sweep(const TrainConfig& base, int workers = 1);

std::string sweep_csv_header();
std::string sweep_csv(std::span<const SweepRow> rows);

struct BenchRow {
  projector::Kind kind;
  std::size_t d_s = 0;
  std::size_t d_t = 0;
  std::size_t batch = 0;
  std::size_t iters = 0;
  double median_ms = 0.0;
  std::uint64_t flops = 0;  // per forward + backward
};

// Median wall time of forward + backward for each projector family (first
// three iterations discarded). iters must be >= 10.
std::vector<BenchRow> bench_projectors(std::size_t d_s, std::size_t d_t, std::size_t batch,
                                       std::size_t iters, std::uint64_t seed = 0,
                                       std::span<const projector::Kind> kinds = {});

std::string bench_csv_header();
std::string bench_csv(std::span<const BenchRow> rows);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct ProbeRow {
  std::string normalizer;
  double mean_loss = 0.0;
  double variance = 0.0;
};

// Distillation loss of a trained run under input noise of size delta,
// with and without teacher standardisation. Report only.
std::vector<ProbeRow> perturbation_probe(const TrainConfig& cfg, const nets::Mlp& teacher,
                                         const DistillResult& run, const nets::SplitData& data);

}  // namespace vkd::train
