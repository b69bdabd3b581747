// vkd: command-line harness for orthogonal-projection feature distillation.
//
//   vkd train-teacher --config cfg --out dir [--set key=value]...
//   vkd distill       --config cfg --out dir [--teacher teacher.json] [--plain]
//   vkd sweep         --config cfg --out dir
//   vkd bench         [--d-s 32] [--d-t 128] [--batch 64] [--iters 20] [--out dir]
//   vkd check         [--seed 0] [--trials 20]
//   vkd dump-features --config cfg --out dir [--teacher teacher.json]
//
// Exit codes: 0 success, 1 configuration / format / data errors, 2 numeric
// errors. VKD_THREADS caps kernel and sweep worker threads (default 1).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vkd/checks.hpp"
#include "vkd/error.hpp"
#include "vkd/io.hpp"
#include "vkd/linalg.hpp"
#include "vkd/objective.hpp"
#include "vkd/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::vector<std::string> overrides;
  std::string teacher;
  bool plain = false;
  std::size_t d_s = 32;
  std::size_t d_t = 128;
  std::size_t batch = 64;
  std::size_t iters = 20;
  std::uint64_t seed = 0;
  std::size_t trials = 20;
};

int env_threads() {
  const char* raw = std::getenv("VKD_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    throw vkd::ConfigError(std::string("VKD_THREADS must be a positive integer, got '") + raw + "'");
  }
  return static_cast<int>(n);
}

vkd::train::TrainConfig load_config(const Options& opt) {
  vkd::train::TrainConfig cfg =
      opt.config.empty() ? vkd::train::TrainConfig{} : vkd::io::parse_config(opt.config);
  vkd::io::apply_overrides(cfg, opt.overrides);
  return cfg;
}

fs::path output_dir(const Options& opt) {
  fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw vkd::IoError("cannot create output directory '" + opt.out + "': " + ec.message());
  return dir;
}

vkd::nets::Mlp obtain_teacher(const vkd::train::TrainConfig& cfg, const Options& opt,
                              const vkd::nets::SplitData& data) {
  if (!opt.teacher.empty()) return vkd::io::load_mlp(opt.teacher);
  auto res = vkd::train::train_teacher(cfg, data);
  std::cerr << "teacher trained in-process, test_acc " << res.test_acc << "\n";
  return std::move(res.net);
}

int cmd_train_teacher(const Options& opt) {
  const auto cfg = load_config(opt);
  const auto dir = output_dir(opt);
  const auto res = vkd::train::train_teacher(cfg);
  vkd::io::save_mlp((dir / "teacher.json").string(), res.net);
  vkd::io::write_metrics_csv((dir / "teacher_metrics.csv").string(), res.metrics);
  std::cout << "teacher test_acc " << res.test_acc << "\n";
  return 0;
}

int cmd_distill(const Options& opt) {
  const auto cfg = load_config(opt);
  const auto dir = output_dir(opt);
  const auto data = vkd::train::load_data(cfg);
  if (opt.plain) {
    const auto run = vkd::train::train_plain(cfg, data);
    vkd::io::write_metrics_csv((dir / "metrics.csv").string(), run.metrics);
    vkd::io::save_mlp((dir / "student.json").string(), run.student);
    return 0;
  }
  const auto teacher = obtain_teacher(cfg, opt, data);
  const auto run = vkd::train::distill(cfg, teacher, data);
  vkd::io::write_metrics_csv((dir / "metrics.csv").string(), run.metrics);
  vkd::io::save_mlp((dir / "student.json").string(), run.student);

  const auto diversity = vkd::train::diversity_report(cfg, teacher, run, data);
  if (!diversity.empty()) {
    std::string csv = vkd::objective::diversity_csv_header() + "\n";
    for (const auto& row : diversity) csv += row + "\n";
    vkd::io::write_file_atomic((dir / "diversity.csv").string(), csv);
  } else if (run.projector) {
    std::cerr << "diversity.csv skipped: no batch has more than "
              << run.projector->spec().output_dim()
              << " rows with full-rank teacher features\n";
  }

  const auto probe = vkd::train::perturbation_probe(cfg, teacher, run, data);
  if (!probe.empty()) {
    std::string csv = "normalizer,mean_loss,variance\n";
    for (const auto& r : probe) {
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.mean_loss, r.variance);
      csv += r.normalizer + buf;
    }
    vkd::io::write_file_atomic((dir / "probe.csv").string(), csv);
  }
  return 0;
}

int cmd_sweep(const Options& opt, int workers) {
  const auto cfg = load_config(opt);
  const auto dir = output_dir(opt);
  const auto rows = vkd::train::ablation_sweep(cfg, workers);
  vkd::io::write_file_atomic((dir / "sweep.csv").string(), vkd::train::sweep_csv(rows));
  return 0;
}

int cmd_bench(const Options& opt) {
  const auto rows = vkd::train::bench_projectors(opt.d_s, opt.d_t, opt.batch, opt.iters, opt.seed);
  const std::string csv = vkd::train::bench_csv(rows);
  std::cout << csv;
  if (opt.out != ".") {
    const auto dir = output_dir(opt);
    vkd::io::write_file_atomic((dir / "bench.csv").string(), csv);
  }
  return 0;
}

int cmd_check(const Options& opt) {
  bool ok = true;
  for (const auto& r : vkd::checks::run_all(opt.seed, opt.trials)) {
    std::cout << vkd::checks::format(r) << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 2;
}

int cmd_dump_features(const Options& opt) {
  const auto cfg = load_config(opt);
  const auto dir = output_dir(opt);
  const auto data = vkd::train::load_data(cfg);
  const auto teacher = obtain_teacher(cfg, opt, data);
  const auto train_f = vkd::nets::forward(teacher, data.train.x).features;
  const auto test_f = vkd::nets::forward(teacher, data.test.x).features;
  vkd::io::write_features((dir / "train_features.vkdf").string(), train_f, &data.train.y);
  vkd::io::write_features((dir / "test_features.vkdf").string(), test_f, &data.test.y);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vkd: orthogonal-projection feature distillation"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config,-c", opt.config, "config file (key = value)");
    sub->add_option("--out,-o", opt.out, "output directory");
    sub->add_option("--set", opt.overrides, "override a config key (key=value), repeatable")
        ->allow_extra_args(false);
  };

  auto* teacher = app.add_subcommand("train-teacher", "train the teacher network");
  add_common(teacher);

  auto* distill = app.add_subcommand("distill", "distil a student from a teacher");
  add_common(distill);
  distill->add_option("--teacher", opt.teacher, "teacher model json (trained in-process if absent)");
  distill->add_flag("--plain", opt.plain, "cross-entropy only, no teacher");

  auto* sweep = app.add_subcommand("sweep", "projector x normaliser x seed ablation grid");
  add_common(sweep);

  auto* bench = app.add_subcommand("bench", "per-projector forward+backward timing");
  bench->add_option("--d-s", opt.d_s, "student width");
  bench->add_option("--d-t", opt.d_t, "teacher width");
  bench->add_option("--batch", opt.batch, "batch size");
  bench->add_option("--iters", opt.iters, "timed iterations (>= 10)");
  bench->add_option("--seed", opt.seed, "seed");
  bench->add_option("--out,-o", opt.out, "also write bench.csv here");

  auto* check = app.add_subcommand("check", "randomised invariant suite");
  check->add_option("--seed", opt.seed, "seed");
  check->add_option("--trials", opt.trials, "trials per check");

  auto* dump = app.add_subcommand("dump-features", "write teacher features as VKDF dumps");
  add_common(dump);
  dump->add_option("--teacher", opt.teacher, "teacher model json (trained in-process if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const int threads = env_threads();
    vkd::linalg::set_num_threads(threads);
    if (*teacher) return cmd_train_teacher(opt);
    if (*distill) return cmd_distill(opt);
    if (*sweep) return cmd_sweep(opt, threads);
    if (*bench) return cmd_bench(opt);
    if (*check) return cmd_check(opt);
    if (*dump) return cmd_dump_features(opt);
  } catch (const vkd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const vkd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
