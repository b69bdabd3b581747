#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "vkd/error.hpp"
#include "vkd/objective.hpp"
#include "vkd/trainer.hpp"

namespace vkd::train {
namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 3;
  cfg.teacher_epochs = 3;
  cfg.batch_size = 32;
  cfg.task.n_classes = 4;
  cfg.task.input_dim = 8;
  cfg.task.n_train = 256;
  cfg.task.n_test = 128;
  cfg.teacher_hidden = {24};
  cfg.student_hidden = {12};
  cfg.projector.d_s = 12;
  cfg.projector.d_t = 24;
  return cfg;
}

std::string weights_of(const nets::Mlp& net) {
  std::string out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double v : net.weight(l).data()) out += std::to_string(std::bit_cast<std::uint64_t>(v)) + ",";
    for (double v : net.bias(l)) out += std::to_string(std::bit_cast<std::uint64_t>(v)) + ",";
  }
  return out;
}

void step_once(std::vector<double>& w, const std::vector<double>& g, OptimizerState& st,
               const OptimizerConfig& cfg) {
  const std::span<double> p(w);
  const std::span<const double> q(g);
  optimizer_step(std::span<const std::span<double>>(&p, 1),
                 std::span<const std::span<const double>>(&q, 1), st, cfg);
}

TEST(Optimizer, ZeroGradientWithoutDecayLeavesWeights) {
  for (auto kind : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdamW}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    std::vector<double> w{1.0, -2.0, 0.5};
    OptimizerState st;
    for (int i = 0; i < 3; ++i) step_once(w, {0.0, 0.0, 0.0}, st, cfg);
    EXPECT_EQ(w, (std::vector<double>{1.0, -2.0, 0.5}));
  }
}

TEST(Optimizer, SgdMomentumScalar) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgdMomentum;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  std::vector<double> w{1.0};
  OptimizerState st;
  step_once(w, {0.5}, st, cfg);
  EXPECT_DOUBLE_EQ(w[0], 0.95);
  // buf = 0.9 * 0.5 + 0.5
  step_once(w, {0.5}, st, cfg);
  EXPECT_DOUBLE_EQ(w[0], 0.95 - 0.1 * 0.95);
}

TEST(Optimizer, AdamWFirstStepClosedForm) {
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  std::vector<double> w{2.0, -1.0};
  OptimizerState st;
  step_once(w, {0.3, -4.0}, st, cfg);
  // Bias-corrected moments at step 1 are g and g^2.
  EXPECT_NEAR(w[0], 2.0 * (1.0 - 0.001) - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], -1.0 * (1.0 - 0.001) + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
}

TEST(Optimizer, ParseNames) {
  EXPECT_EQ(parse_optimizer("sgd_momentum"), OptimizerKind::kSgdMomentum);
  EXPECT_EQ(parse_optimizer("adamw"), OptimizerKind::kAdamW);
  EXPECT_THROW(parse_optimizer("lion"), ConfigError);
}

TEST(Teacher, ZeroEpochsGivesInitialRowOnly) {
  TrainConfig cfg = small_config();
  cfg.teacher_epochs = 0;
  const auto res = train_teacher(cfg);
  ASSERT_EQ(res.metrics.size(), 1u);
  EXPECT_EQ(res.metrics[0].epoch, 0u);
  EXPECT_TRUE(std::isnan(res.metrics[0].distill_loss));
}

TEST(Teacher, LearnsTheSyntheticTask) {
  const auto res = train_teacher(small_config());
  EXPECT_EQ(res.metrics.size(), 4u);
  EXPECT_LT(res.metrics.back().train_ce, res.metrics.front().train_ce);
  EXPECT_GT(res.test_acc, 0.5);
}

class DistillRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new TrainConfig(small_config());
    data_ = new nets::SplitData(load_data(*cfg_));
    teacher_ = new nets::Mlp(train_teacher(*cfg_, *data_).net);
  }
  static void TearDownTestSuite() {
    delete cfg_;
    delete data_;
    delete teacher_;
  }
  static TrainConfig* cfg_;
  static nets::SplitData* data_;
  static nets::Mlp* teacher_;
};

TrainConfig* DistillRun::cfg_ = nullptr;
nets::SplitData* DistillRun::data_ = nullptr;
nets::Mlp* DistillRun::teacher_ = nullptr;

TEST_F(DistillRun, SameSeedSameBytes) {
  const auto a = distill(*cfg_, *teacher_, *data_);
  const auto b = distill(*cfg_, *teacher_, *data_);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  EXPECT_EQ(weights_of(a.student), weights_of(b.student));
}

TEST_F(DistillRun, TeacherIsNotModified) {
  const std::string before = weights_of(*teacher_);
  distill(*cfg_, *teacher_, *data_);
  EXPECT_EQ(weights_of(*teacher_), before);
}

TEST_F(DistillRun, ZeroBetaMatchesPlainTraining) {
  TrainConfig cfg = *cfg_;
  cfg.beta = 0.0;
  const auto off = distill(cfg, *teacher_, *data_);
  const auto plain = train_plain(cfg, *data_);
  EXPECT_FALSE(off.projector.has_value());
  EXPECT_EQ(metrics_csv(off.metrics), metrics_csv(plain.metrics));
  EXPECT_EQ(weights_of(off.student), weights_of(plain.student));
  EXPECT_TRUE(std::isnan(off.metrics.back().distill_loss));
}

TEST_F(DistillRun, OrthogonalityHoldsAfterEveryStep) {
  for (auto method : {projector::OrthMethod::kExpm, projector::OrthMethod::kCayley}) {
    TrainConfig cfg = *cfg_;
    cfg.projector.method = method;
    double worst = 0.0;
    std::size_t steps = 0;
    const auto res = distill(cfg, *teacher_, *data_, [&](std::size_t, const DistillResult& s) {
      worst = std::max(worst, projector::orthogonality_error(s.projector->linear_map()));
      ++steps;
    });
    EXPECT_EQ(steps, cfg.epochs * 8);
    EXPECT_LE(worst, 1e-8);
    for (const auto& row : res.metrics) {
      EXPECT_LE(row.orth_err, 1e-8);
      EXPECT_LE(row.gram_err, 1e-8);
    }
  }
}

TEST_F(DistillRun, LinearProjectorDistortsTheKernel) {
  TrainConfig cfg = *cfg_;
  cfg.projector.kind = projector::Kind::kLinear;
  const auto res = distill(cfg, *teacher_, *data_);
  EXPECT_GT(res.metrics.back().gram_err, 1e-3);
}

TEST_F(DistillRun, DistillLossFalls) {
  const auto res = distill(*cfg_, *teacher_, *data_);
  EXPECT_LT(res.metrics.back().distill_loss, res.metrics.front().distill_loss);
}

TEST_F(DistillRun, EvalEverySkipsRows) {
  TrainConfig cfg = *cfg_;
  cfg.eval_every = 2;
  const auto res = distill(cfg, *teacher_, *data_);
  ASSERT_EQ(res.metrics.size(), 3u);
  EXPECT_EQ(res.metrics[1].epoch, 2u);
  EXPECT_EQ(res.metrics[2].epoch, 3u);
}

TEST_F(DistillRun, DiversityReportRowsAreWellFormed) {
  TrainConfig cfg = *cfg_;
  cfg.normalizer.variant = norm::NormalizerKind::Variant::kWhiten;
  const auto run = distill(cfg, *teacher_, *data_);
  const auto rows = diversity_report(cfg, *teacher_, run, *data_);
  EXPECT_LE(rows.size(), 8u);
  for (const auto& r : rows) EXPECT_EQ(std::count(r.begin(), r.end(), ','), 5);
}

TEST(DiversityReport, FullRankTeacherGivesOneRowPerBatch) {
  TrainConfig cfg = small_config();
  cfg.activation = Activation::kTanh;
  cfg.normalizer.variant = norm::NormalizerKind::Variant::kWhiten;
  const auto data = load_data(cfg);
  const auto teacher = train_teacher(cfg, data).net;
  const auto run = distill(cfg, teacher, data);
  const auto rows = diversity_report(cfg, teacher, run, data);
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) EXPECT_NE(r.find(",1,"), std::string::npos) << r;
}

TEST_F(DistillRun, WrongTeacherWidthIsConfigError) {
  TrainConfig cfg = *cfg_;
  cfg.projector.d_t = 25;
  EXPECT_THROW(distill(cfg, *teacher_, *data_), ConfigError);
}

TEST(Sweep, GridAccountingAndStandaloneCell) {
  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  cfg.sweep_seeds = 2;
  cfg.sweep_projectors = {projector::Kind::kOrthogonal, projector::Kind::kLinear};
  cfg.sweep_normalizers = {norm::NormalizerKind::Variant::kNone,
                           norm::NormalizerKind::Variant::kStandardize};
  const auto rows = ablation_sweep(cfg, 1);
  ASSERT_EQ(rows.size(), 2u * 2u * 2u * 3u);
  EXPECT_EQ(rows[0].projector, projector::Kind::kOrthogonal);
  EXPECT_EQ(rows[0].normalizer, norm::NormalizerKind::Variant::kNone);
  EXPECT_EQ(rows[3].seed, cfg.seed + 1);
  EXPECT_EQ(rows.back().projector, projector::Kind::kLinear);

  TrainConfig cell = cfg;
  cell.normalizer.variant = norm::NormalizerKind::Variant::kNone;
  const auto data = load_data(cell);
  const auto alone = distill(cell, train_teacher(cell, data).net, data);
  std::vector<MetricsRow> from_sweep;
  for (std::size_t i = 0; i < 3; ++i) from_sweep.push_back(rows[i].metrics);
  EXPECT_EQ(metrics_csv(from_sweep), metrics_csv(alone.metrics));

  EXPECT_EQ(sweep_csv(rows), sweep_csv(ablation_sweep(cfg, 4)));
}

TEST(Bench, RowsPerKindWithStableFlops) {
  const auto a = bench_projectors(8, 16, 32, 10, 0);
  const auto b = bench_projectors(8, 16, 32, 10, 0);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].flops, b[i].flops);
    EXPECT_GT(a[i].flops, 0u);
    EXPECT_GT(a[i].median_ms, 0.0);
  }
  EXPECT_THROW(bench_projectors(8, 16, 32, 9, 0), ConfigError);
}

TEST(Config, ValidateNamesTheKey) {
  TrainConfig cfg = small_config();
  cfg.batch_size = 0;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.kind(), ConfigError::Kind::kInvariant);
    EXPECT_EQ(e.key(), "batch_size");
  }
  cfg = small_config();
  cfg.projector.d_s = 30;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Metrics, CsvFormat) {
  EXPECT_EQ(metrics_csv_header(), "epoch,train_ce,distill_loss,test_acc,gram_err,orth_err,wall_ms");
  MetricsRow r;
  r.epoch = 2;
  r.train_ce = 0.5;
  r.distill_loss = std::nan("");
  const std::string row = metrics_csv_row(r);
  EXPECT_EQ(row.rfind("2,0.5,nan,", 0), 0u) << row;
}

}  // namespace
}  // namespace vkd::train
