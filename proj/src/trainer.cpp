#include "vkd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>

#include "vkd/error.hpp"
#include "vkd/io.hpp"
#include "vkd/linalg.hpp"
#include "vkd/objective.hpp"

namespace vkd::train {
namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::uint32_t> gather_labels(const std::vector<std::uint32_t>& y,
                                         std::span<const std::size_t> idx) {
  std::vector<std::uint32_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

// Consecutive batches over `order`; a trailing remainder smaller than two
// rows is dropped (batch statistics need b >= 2).
std::vector<std::vector<std::size_t>> split_batches(const std::vector<std::size_t>& order,
                                                    std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng) {
  auto order = iota(n);
  std::shuffle(order.begin(), order.end(), rng);
  return split_batches(order, batch_size);
}

std::vector<std::span<double>> matrix_spans(std::vector<Matrix>& ms) {
  std::vector<std::span<double>> out;
  for (auto& m : ms) out.emplace_back(m.data());
  return out;
}

std::vector<std::span<const double>> const_spans(const std::vector<Matrix>& ms) {
  std::vector<std::span<const double>> out;
  for (const auto& m : ms) out.emplace_back(m.data());
  return out;
}

void check_finite(double loss, std::size_t step, const char* what) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string(what) + " diverged (non-finite loss) at step " +
                       std::to_string(step));
  }
}

// Teacher features are fixed for the whole run, so they are extracted once.
Matrix extract_features(const nets::Mlp& net, const Matrix& x) {
  return nets::forward(net, x).features;
}

struct DistillBranch {
  const TrainConfig* cfg;
  const Matrix* teacher_train_features;

  Matrix target(std::span<const std::size_t> idx, const projector::Projector& proj) const {
    const Matrix raw = gather_rows(*teacher_train_features, idx);
    return proj.prepare_target(norm::apply(cfg->normalizer, raw));
  }
};

MetricsRow evaluate_student(const TrainConfig& cfg, const DistillResult& run,
                            const nets::SplitData& data, const DistillBranch* branch,
                            std::size_t epoch) {
  MetricsRow row;
  row.epoch = epoch;
  const auto train_fwd = nets::forward(run.student, data.train.x);
  row.train_ce = nets::softmax_ce(train_fwd.logits, data.train.y).loss;
  row.test_acc = nets::accuracy(nets::forward(run.student, data.test.x).logits, data.test.y);

  if (branch == nullptr) {
    row.distill_loss = kNaN;
    row.gram_err = kNaN;
    row.orth_err = kNaN;
    return row;
  }
  const auto& proj = *run.projector;
  // Every projector acts row by row, so one pass over the whole set matches
  // per-batch forwards and builds P once.
  const Matrix projected = proj.forward(train_fwd.features);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& idx : split_batches(iota(data.train.size()), cfg.batch_size)) {
    const Matrix target = branch->target(idx, proj);
    total += objective::l2_distill_loss(gather_rows(projected, idx), target).loss *
             static_cast<double>(idx.size());
    count += idx.size();
  }
  row.distill_loss = count == 0 ? kNaN : total / static_cast<double>(count);

  const std::size_t probe = std::min(cfg.batch_size, data.test.size());
  const auto first = iota(probe);
  const Matrix zs = gather_rows(nets::forward(run.student, data.test.x).features, first);
  row.gram_err = objective::gram_distortion(zs, proj.forward(zs));
  const Matrix map = proj.linear_map();
  row.orth_err = map.empty() ? kNaN : projector::orthogonality_error(map);
  return row;
}

DistillResult run_student(const TrainConfig& cfg, const nets::Mlp* teacher,
                          const nets::SplitData& data, const StepObserver& observer) {
  cfg.validate();
  const std::size_t classes = data.train.n_classes;
  Rng init_rng = make_stream(cfg.seed, "student_init");
  Rng shuffle_rng = make_stream(cfg.seed, "student_shuffle");

  DistillResult run;
  run.student = nets::Mlp::random(student_dims(cfg, data.train.x.cols(), classes), cfg.activation,
                                   init_rng);

  const bool branch_on = teacher != nullptr && cfg.beta != 0.0;
  Matrix teacher_features;
  DistillBranch branch{&cfg, &teacher_features};
  if (branch_on) {
    if (teacher->feature_dim() != cfg.projector.d_t) {
      throw ConfigError("teacher feature width " + std::to_string(teacher->feature_dim()) +
                            " does not match d_t = " + std::to_string(cfg.projector.d_t),
                        ConfigError::Kind::kInvariant, "d_t");
    }
    if (teacher->input_dim() != data.train.x.cols()) {
      throw ConfigError("teacher input width does not match the dataset",
                        ConfigError::Kind::kInvariant);
    }
    Rng proj_rng = make_stream(cfg.seed, "projector_init");
    run.projector.emplace(cfg.projector, proj_rng);
    teacher_features = extract_features(*teacher, data.train.x);
  }
  const DistillBranch* branch_ptr = branch_on ? &branch : nullptr;

  const OptimizerConfig opt = OptimizerConfig::from(cfg);
  OptimizerState student_state;
  OptimizerState proj_state;

  run.metrics.push_back(evaluate_student(cfg, run, data, branch_ptr, 0));

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double elapsed_ms = 0.0;
    std::size_t steps_this_epoch = 0;
    for (const auto& idx : shuffled_batches(data.train.size(), cfg.batch_size, shuffle_rng)) {
      const auto t0 = Clock::now();
      const Matrix xb = gather_rows(data.train.x, idx);
      const auto yb = gather_labels(data.train.y, idx);
      const auto fwd = nets::forward(run.student, xb);
      const auto ce = nets::softmax_ce(fwd.logits, yb);
      double loss = ce.loss;

      Matrix grad_features;
      projector::Backward proj_back;
      if (branch_on) {
        const auto& proj = *run.projector;
        const Matrix target = branch.target(idx, proj);
        const auto l2 = objective::l2_distill_loss(proj.forward(fwd.features), target);
        loss += cfg.beta * l2.loss;
        proj_back = proj.backward(fwd.features, cfg.beta * l2.grad);
        grad_features = std::move(proj_back.grad_input);
      }
      check_finite(loss, step, "distill");

      const auto grads = nets::backward(run.student, fwd.cache, ce.grad_logits, grad_features);
      optimizer_step(run.student.parameter_spans(), grads.spans(), student_state, opt);
      if (branch_on) {
        optimizer_step(matrix_spans(run.projector->params()), const_spans(proj_back.grad_params),
                       proj_state, opt);
      }
      if (cfg.record_wall_time) {
        elapsed_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      }
      ++steps_this_epoch;
      if (observer) observer(step, run);
      ++step;
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      MetricsRow row = evaluate_student(cfg, run, data, branch_ptr, epoch);
      if (cfg.record_wall_time && steps_this_epoch > 0) {
        row.wall_ms = elapsed_ms / static_cast<double>(steps_this_epoch);
      }
      run.metrics.push_back(row);
    }
  }
  return run;
}

}  // namespace

// ---------------------------------------------------------------------------

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "'", ConfigError::Kind::kBadValue);
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd_momentum";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError(key + ": " + msg, ConfigError::Kind::kInvariant, key);
  };
  if (!(beta >= 0.0)) fail("beta", "must be >= 0");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (batch_size < 2) fail("batch_size", "must be >= 2");
  if (eval_every < 1) fail("eval_every", "must be >= 1");
  if (projector.d_s == 0) fail("d_s", "must be >= 1");
  if (projector.d_s > projector.d_t) fail("d_s", "student wider than teacher unsupported");
  if (projector.kind == projector::Kind::kEnsemble && projector.ensemble_n == 0) {
    fail("ensemble_n", "must be >= 1");
  }
  if (projector.kind == projector::Kind::kSvdTarget && projector.rank() != projector.d_s) {
    fail("svd_rank", "must equal d_s (student features are matched directly)");
  }
  if (projector.kind == projector::Kind::kSvdTarget && projector.rank() > batch_size) {
    fail("svd_rank", "must not exceed batch_size");
  }
  if (!(normalizer.eps > 0.0)) fail("eps", "must be > 0");
  if (normalizer.method.kind == linalg::InvSqrtMethod::Kind::kNewtonSchulz &&
      normalizer.method.iters < 1) {
    fail("ns_iters", "must be >= 1");
  }
  if (task.n_classes < 2) fail("n_classes", "must be >= 2");
  if (task.input_dim == 0) fail("input_dim", "must be >= 1");
  if (task.n_train < 2) fail("n_train", "must be >= 2");
  if (!(task.cluster_spread >= 0.0)) fail("cluster_spread", "must be >= 0");
  if (sweep_seeds == 0) fail("sweep_seeds", "must be >= 1");
  if (!(probe_delta >= 0.0)) fail("probe_delta", "must be >= 0");
}

std::string metrics_csv_header() {
  return "epoch,train_ce,distill_loss,test_acc,gram_err,orth_err,wall_ms";
}

std::string metrics_csv_row(const MetricsRow& r) {
  return std::to_string(r.epoch) + "," + fmt(r.train_ce) + "," + fmt(r.distill_loss) + "," +
         fmt(r.test_acc) + "," + fmt(r.gram_err) + "," + fmt(r.orth_err) + "," + fmt(r.wall_ms);
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_row(r) + "\n";
  return out;
}

OptimizerConfig OptimizerConfig::from(const TrainConfig& cfg) {
  OptimizerConfig o;
  o.kind = cfg.optimizer;
  o.lr = cfg.lr;
  o.weight_decay = cfg.weight_decay;
  o.momentum = cfg.momentum;
  return o;
}

void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.size(), 0.0);
      if (cfg.kind == OptimizerKind::kAdamW) state.second.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) {
    throw ShapeError("optimizer_step: state was created for a different parameter set");
  }
  ++state.step;
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto p = params[k];
    const auto g = grads[k];
    if (p.size() != g.size() || state.first[k].size() != p.size()) {
      throw ShapeError("optimizer_step: parameter " + std::to_string(k) + " has " +
                       std::to_string(p.size()) + " values but gradient has " +
                       std::to_string(g.size()));
    }
    auto& m = state.first[k];
    if (cfg.kind == OptimizerKind::kSgdMomentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] *= decay;
        m[i] = cfg.momentum * m[i] + g[i];
        p[i] -= cfg.lr * m[i];
      }
    } else {
      auto& v = state.second[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] *= decay;
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      }
    }
  }
}

nets::SplitData load_data(const TrainConfig& cfg) {
  if (cfg.train_features.empty() != cfg.test_features.empty()) {
    throw ConfigError("train_features and test_features must be given together",
                      ConfigError::Kind::kInvariant, "train_features");
  }
  if (cfg.train_features.empty()) {
    nets::SyntheticTask task = cfg.task;
    task.seed = cfg.seed;
    return nets::gen_synthetic(task);
  }
  nets::SplitData out;
  auto load = [](const std::string& path) {
    auto dump = io::read_features(path);
    if (!dump.labels) throw DataError(path + ": dataset dump has no labels block");
    nets::Dataset ds;
    ds.x = std::move(dump.features);
    ds.y = std::move(*dump.labels);
    return ds;
  };
  out.train = load(cfg.train_features);
  out.test = load(cfg.test_features);
  if (out.train.x.cols() != out.test.x.cols()) {
    throw DataError("train and test dumps have different feature widths");
  }
  std::uint32_t max_label = 0;
  for (auto l : out.train.y) max_label = std::max(max_label, l);
  for (auto l : out.test.y) max_label = std::max(max_label, l);
  out.train.n_classes = out.test.n_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

std::vector<std::size_t> teacher_dims(const TrainConfig& cfg, std::size_t input_dim,
                                      std::size_t classes) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.teacher_hidden.begin(), cfg.teacher_hidden.end());
  dims.push_back(cfg.projector.d_t);
  dims.push_back(classes);
  return dims;
}

std::vector<std::size_t> student_dims(const TrainConfig& cfg, std::size_t input_dim,
                                      std::size_t classes) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.student_hidden.begin(), cfg.student_hidden.end());
  dims.push_back(cfg.projector.d_s);
  dims.push_back(classes);
  return dims;
}

TeacherResult train_teacher(const TrainConfig& cfg) { return train_teacher(cfg, load_data(cfg)); }

TeacherResult train_teacher(const TrainConfig& cfg, const nets::SplitData& data) {
  cfg.validate();
  Rng init_rng = make_stream(cfg.seed, "teacher_init");
  Rng shuffle_rng = make_stream(cfg.seed, "teacher_shuffle");
  TeacherResult res;
  res.net = nets::Mlp::random(teacher_dims(cfg, data.train.x.cols(), data.train.n_classes),
                              cfg.activation, init_rng);
  const OptimizerConfig opt = OptimizerConfig::from(cfg);
  OptimizerState state;

  auto evaluate = [&](std::size_t epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.train_ce = nets::softmax_ce(nets::forward(res.net, data.train.x).logits, data.train.y).loss;
    row.test_acc = nets::accuracy(nets::forward(res.net, data.test.x).logits, data.test.y);
    row.distill_loss = row.gram_err = row.orth_err = kNaN;
    return row;
  };

  res.metrics.push_back(evaluate(0));
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.teacher_epochs; ++epoch) {
    double elapsed_ms = 0.0;
    std::size_t steps_this_epoch = 0;
    for (const auto& idx : shuffled_batches(data.train.size(), cfg.batch_size, shuffle_rng)) {
      const auto t0 = Clock::now();
      const auto fwd = nets::forward(res.net, gather_rows(data.train.x, idx));
      const auto ce = nets::softmax_ce(fwd.logits, gather_labels(data.train.y, idx));
      check_finite(ce.loss, step, "teacher training");
      const auto grads = nets::backward(res.net, fwd.cache, ce.grad_logits, Matrix());
      optimizer_step(res.net.parameter_spans(), grads.spans(), state, opt);
      if (cfg.record_wall_time) {
        elapsed_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      }
      ++steps_this_epoch;
      ++step;
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.teacher_epochs) {
      MetricsRow row = evaluate(epoch);
      if (cfg.record_wall_time && steps_this_epoch > 0) {
        row.wall_ms = elapsed_ms / static_cast<double>(steps_this_epoch);
      }
      res.metrics.push_back(row);
    }
  }
  res.test_acc = res.metrics.back().test_acc;
  return res;
}

DistillResult distill(const TrainConfig& cfg, const nets::Mlp& teacher,
                      const StepObserver& observer) {
  return distill(cfg, teacher, load_data(cfg), observer);
}

DistillResult distill(const TrainConfig& cfg, const nets::Mlp& teacher,
                      const nets::SplitData& data, const StepObserver& observer) {
  return run_student(cfg, &teacher, data, observer);
}

DistillResult train_plain(const TrainConfig& cfg) { return train_plain(cfg, load_data(cfg)); }

DistillResult train_plain(const TrainConfig& cfg, const nets::SplitData& data) {
  return run_student(cfg, nullptr, data, {});
}

std::vector<std::string> diversity_report(const TrainConfig& cfg, const nets::Mlp& teacher,
                                          const DistillResult& run, const nets::SplitData& data) {
  std::vector<std::string> rows;
  if (!run.projector) return rows;
  const Matrix tf = extract_features(teacher, data.train.x);
  const Matrix sf = nets::forward(run.student, data.train.x).features;
  const std::size_t d = run.projector->spec().output_dim();
  for (const auto& idx : split_batches(iota(data.train.size()), cfg.batch_size)) {
    // Centred batches of b <= d rows cannot be whitened to the identity.
    if (idx.size() <= d) continue;
    const Matrix target = norm::whiten(run.projector->prepare_target(gather_rows(tf, idx)),
                                       cfg.normalizer.eps, linalg::InvSqrtMethod::eig());
    const Matrix proj = run.projector->forward(gather_rows(sf, idx));
    try {
      rows.push_back(objective::diversity_csv_row(objective::diversity_bound(proj, target)));
    } catch (const PreconditionError&) {
      // Rank-deficient teacher batch (dead units): not whitenable, skipped.
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> ablation_sweep(const TrainConfig& base, int workers) {
  base.validate();
  struct Cell {
    projector::Kind kind;
    norm::NormalizerKind::Variant variant;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (auto kind : base.sweep_projectors)
    for (auto variant : base.sweep_normalizers)
      for (std::size_t s = 0; s < base.sweep_seeds; ++s) cells.push_back({kind, variant, s});

  std::vector<TrainConfig> seed_cfgs;
  std::vector<nets::SplitData> seed_data;
  std::vector<nets::Mlp> teachers;
  for (std::size_t s = 0; s < base.sweep_seeds; ++s) {
    TrainConfig c = base;
    c.seed = base.seed + s;
    seed_data.push_back(load_data(c));
    teachers.push_back(train_teacher(c, seed_data.back()).net);
    seed_cfgs.push_back(c);
  }

  std::vector<std::vector<MetricsRow>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  const int team = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(team) if (team > 1)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cells.size()); ++c) {
    const Cell& cell = cells[static_cast<std::size_t>(c)];
    try {
      TrainConfig cfg = seed_cfgs[cell.seed_index];
      cfg.projector.kind = cell.kind;
      cfg.normalizer.variant = cell.variant;
      results[static_cast<std::size_t>(c)] =
          distill(cfg, teachers[cell.seed_index], seed_data[cell.seed_index]).metrics;
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SweepRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (const auto& m : results[c]) {
      rows.push_back({cells[c].kind, cells[c].variant, seed_cfgs[cells[c].seed_index].seed, m});
    }
  }
  return rows;
}

std::string sweep_csv_header() { return "projector,normalizer,seed," + metrics_csv_header(); }

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = sweep_csv_header() + "\n";
  for (const auto& r : rows) {
    out += projector::to_string(r.projector) + "," + norm::to_string(r.normalizer) + "," +
           std::to_string(r.seed) + "," + metrics_csv_row(r.metrics) + "\n";
  }
  return out;
}

std::vector<BenchRow> bench_projectors(std::size_t d_s, std::size_t d_t, std::size_t batch,
                                       std::size_t iters, std::uint64_t seed,
                                       std::span<const projector::Kind> kinds) {
  if (iters < 10) throw ConfigError("bench: iters must be >= 10", ConfigError::Kind::kInvariant);
  if (d_s > d_t) throw ConfigError("bench: d_s must not exceed d_t", ConfigError::Kind::kInvariant);
  static constexpr projector::Kind kAll[] = {
      projector::Kind::kOrthogonal, projector::Kind::kLinear, projector::Kind::kMlp,
      projector::Kind::kEnsemble, projector::Kind::kSvdTarget};
  if (kinds.empty()) kinds = kAll;

  std::vector<BenchRow> rows;
  for (const auto kind : kinds) {
    Rng rng = make_stream(seed, "bench");
    projector::ProjectorSpec spec;
    spec.kind = kind;
    spec.d_s = d_s;
    spec.d_t = d_t;
    const projector::Projector proj(spec, rng);
    const Matrix zs = random_normal(batch, d_s, 1.0, rng);
    const Matrix zt = random_normal(batch, d_t, 1.0, rng);
    const Matrix grad = random_normal(batch, spec.output_dim(), 1.0, rng);

    std::vector<double> times;
    std::uint64_t flops = 0;
    for (std::size_t it = 0; it < iters; ++it) {
      linalg::reset_flop_count();
      const auto t0 = Clock::now();
      const Matrix target = proj.prepare_target(zt);
      const Matrix out = proj.forward(zs);
      const auto back = proj.backward(zs, grad);
      const auto t1 = Clock::now();
      if (out.rows() != target.rows() || back.grad_input.rows() != batch) {
        throw NumericError("bench: unexpected projector output shape");
      }
      if (it >= 3) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (it == 3) flops = linalg::flop_count();
    }
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    const double median = n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    rows.push_back({kind, d_s, d_t, batch, iters, median, flops});
  }
  return rows;
}

std::string bench_csv_header() { return "projector,d_s,d_t,batch,iters,median_ms,flops"; }

std::string bench_csv(std::span<const BenchRow> rows) {
  std::string out = bench_csv_header() + "\n";
  for (const auto& r : rows) {
    out += projector::to_string(r.kind) + "," + std::to_string(r.d_s) + "," +
           std::to_string(r.d_t) + "," + std::to_string(r.batch) + "," + std::to_string(r.iters) +
           "," + fmt(r.median_ms) + "," + std::to_string(r.flops) + "\n";
  }
  return out;
}

std::vector<ProbeRow> perturbation_probe(const TrainConfig& cfg, const nets::Mlp& teacher,
                                         const DistillResult& run, const nets::SplitData& data) {
  std::vector<ProbeRow> rows;
  if (!run.projector || cfg.probe_delta <= 0.0 || cfg.probe_samples == 0) return rows;
  const std::size_t b = std::min(cfg.batch_size, data.train.size());
  const Matrix x0 = gather_rows(data.train.x, iota(b));

  using V = norm::NormalizerKind::Variant;
  for (const V variant : {V::kNone, V::kStandardize}) {
    norm::NormalizerKind kind = cfg.normalizer;
    kind.variant = variant;
    Rng rng = make_stream(cfg.seed, "probe");
    std::vector<double> losses;
    for (std::size_t s = 0; s < cfg.probe_samples; ++s) {
      Matrix x = x0;
      Matrix noise = random_normal(x.rows(), x.cols(), cfg.probe_delta, rng);
      x += noise;
      const Matrix target =
          run.projector->prepare_target(norm::apply(kind, extract_features(teacher, x)));
      const Matrix out = run.projector->forward(extract_features(run.student, x));
      losses.push_back(objective::l2_distill_loss(out, target).loss);
    }
    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double l : losses) var += (l - mean) * (l - mean);
    var /= static_cast<double>(losses.size());
    rows.push_back({norm::to_string(variant), mean, var});
  }
  return rows;
}

}  // namespace vkd::train
