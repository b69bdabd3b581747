#include "vkd/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>

#include "json.hpp"
#include "vkd/error.hpp"

namespace vkd::io {
namespace {

using train::TrainConfig;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFULL) throw DataError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& where, const std::string& expected) {
  throw ConfigError(where + ": cannot parse value '" + value + "' for key '" + key +
                        "' (expected " + expected + ")",
                    ConfigError::Kind::kBadValue, key);
}

double parse_real(const std::string& key, const std::string& v, const std::string& where) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, where, "a real number");
  }
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad_value(key, v, where, "a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, where, "true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  // Empty items are kept so that "64,,32" fails to parse.
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::string item;
  std::istringstream in(v + ",");
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& v,
                                          const std::string& where) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) {
    const auto n = parse_count(key, item, where);
    if (n == 0) bad_value(key, v, where, "a comma-separated list of positive widths");
    out.push_back(static_cast<std::size_t>(n));
  }
  return out;
}

// Re-throws enum parse failures with the key and location attached.
template <typename F>
auto parse_enum(const std::string& key, const std::string& v, const std::string& where, F&& f) {
  try {
    return f(v);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what() + " for key '" + key + "'",
                      ConfigError::Kind::kBadValue, key);
  }
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value,
                                  const std::string& where)>;

struct KeySpec {
  std::string key;
  std::string default_value;
  Setter set;
};

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    auto real = [](double TrainConfig::*field) {
      return [field](TrainConfig& c, const std::string& k, const std::string& v,
                     const std::string& w) { c.*field = parse_real(k, v, w); };
    };
    auto count = [](std::size_t TrainConfig::*field) {
      return [field](TrainConfig& c, const std::string& k, const std::string& v,
                     const std::string& w) { c.*field = parse_count(k, v, w); };
    };
    t.push_back({"seed", "0", [](TrainConfig& c, const std::string& k, const std::string& v,
                                 const std::string& w) { c.seed = parse_count(k, v, w); }});
    t.push_back({"epochs", "50", count(&TrainConfig::epochs)});
    t.push_back({"teacher_epochs", "30", count(&TrainConfig::teacher_epochs)});
    t.push_back({"batch_size", "64", count(&TrainConfig::batch_size)});
    t.push_back({"eval_every", "1", count(&TrainConfig::eval_every)});
    t.push_back({"lr", "0.001", real(&TrainConfig::lr)});
    t.push_back({"weight_decay", "0.05", real(&TrainConfig::weight_decay)});
    t.push_back({"momentum", "0.9", real(&TrainConfig::momentum)});
    t.push_back({"beta", "1.0", real(&TrainConfig::beta)});
    t.push_back({"optimizer", "adamw",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.optimizer = parse_enum(k, v, w, train::parse_optimizer); }});
    t.push_back({"projector", "orthogonal",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.kind = parse_enum(k, v, w, projector::parse_kind); }});
    t.push_back({"orth_method", "expm",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.method = parse_enum(k, v, w, projector::parse_method); }});
    t.push_back({"d_s", "32", [](TrainConfig& c, const std::string& k, const std::string& v,
                                 const std::string& w) { c.projector.d_s = parse_count(k, v, w); }});
    t.push_back({"d_t", "128", [](TrainConfig& c, const std::string& k, const std::string& v,
                                  const std::string& w) { c.projector.d_t = parse_count(k, v, w); }});
    t.push_back({"mlp_hidden", "0",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.mlp_hidden = parse_count(k, v, w); }});
    t.push_back({"mlp_activation", "relu",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   c.projector.mlp_activation =
                       parse_enum(k, v, w, [](const std::string& s) { return parse_activation(s); });
                 }});
    t.push_back({"ensemble_n", "3",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.ensemble_n = parse_count(k, v, w); }});
    t.push_back({"svd_rank", "0",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.svd_rank = parse_count(k, v, w); }});
    t.push_back({"proj_init_std", "0.01",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.projector.init_stddev = parse_real(k, v, w); }});
    t.push_back({"normalizer", "standardize",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.normalizer.variant = parse_enum(k, v, w, norm::parse_variant); }});
    t.push_back({"whiten_method", "eig",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   using K = linalg::InvSqrtMethod::Kind;
                   if (v == "eig") {
                     c.normalizer.method.kind = K::kEig;
                   } else if (v == "ns" || v == "newton_schulz") {
                     c.normalizer.method.kind = K::kNewtonSchulz;
                   } else {
                     bad_value(k, v, w, "eig or ns");
                   }
                 }});
    t.push_back({"ns_iters", "15",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   c.normalizer.method.iters = static_cast<int>(parse_count(k, v, w));
                 }});
    t.push_back({"eps", "1e-05",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.normalizer.eps = parse_real(k, v, w); }});
    t.push_back({"n_classes", "10",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.task.n_classes = parse_count(k, v, w); }});
    t.push_back({"input_dim", "32",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.task.input_dim = parse_count(k, v, w); }});
    t.push_back({"n_train", "2048",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.task.n_train = parse_count(k, v, w); }});
    t.push_back({"n_test", "1024",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.task.n_test = parse_count(k, v, w); }});
    t.push_back({"cluster_spread", "1.0",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.task.cluster_spread = parse_real(k, v, w); }});
    t.push_back({"teacher_hidden", "256,256",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.teacher_hidden = parse_count_list(k, v, w); }});
    t.push_back({"student_hidden", "64",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.student_hidden = parse_count_list(k, v, w); }});
    t.push_back({"activation", "relu",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   c.activation =
                       parse_enum(k, v, w, [](const std::string& s) { return parse_activation(s); });
                 }});
    t.push_back({"record_wall_time", "false",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) { c.record_wall_time = parse_bool(k, v, w); }});
    t.push_back({"train_features", "",
                 [](TrainConfig& c, const std::string&, const std::string& v,
                    const std::string&) { c.train_features = v; }});
    t.push_back({"test_features", "",
                 [](TrainConfig& c, const std::string&, const std::string& v,
                    const std::string&) { c.test_features = v; }});
    t.push_back({"sweep_seeds", "3", count(&TrainConfig::sweep_seeds)});
    t.push_back({"sweep_projectors", "orthogonal,linear,mlp,ensemble,svd_target",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   c.sweep_projectors.clear();
                   for (const auto& item : split_list(v))
                     c.sweep_projectors.push_back(parse_enum(k, item, w, projector::parse_kind));
                   if (c.sweep_projectors.empty()) bad_value(k, v, w, "a non-empty list");
                 }});
    t.push_back({"sweep_normalizers", "none,standardize,whiten",
                 [](TrainConfig& c, const std::string& k, const std::string& v,
                    const std::string& w) {
                   c.sweep_normalizers.clear();
                   for (const auto& item : split_list(v))
                     c.sweep_normalizers.push_back(parse_enum(k, item, w, norm::parse_variant));
                   if (c.sweep_normalizers.empty()) bad_value(k, v, w, "a non-empty list");
                 }});
    t.push_back({"probe_delta", "0", real(&TrainConfig::probe_delta)});
    t.push_back({"probe_samples", "16", count(&TrainConfig::probe_samples)});
    return t;
  }();
  return table;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (k.key == key) return &k;
  return nullptr;
}

struct Assignment {
  std::string key;
  std::string value;
  std::string where;
};

TrainConfig apply_assignments(TrainConfig cfg, const std::vector<Assignment>& assignments) {
  std::map<std::string, std::string> last_where;
  for (const auto& a : assignments) {
    set_config_value(cfg, a.key, a.value, a.where);
    last_where[a.key] = a.where;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto it = last_where.find(e.key());
    const std::string where = it == last_where.end() ? "default value" : it->second;
    throw ConfigError(where + ": invalid configuration, " + e.what(), ConfigError::Kind::kInvariant,
                      e.key());
  }
  return cfg;
}

std::vector<Assignment> parse_lines(const std::string& text, const std::string& source) {
  std::vector<Assignment> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + content + "'",
                        ConfigError::Kind::kBadValue);
    }
    out.push_back({trim(content.substr(0, eq)), trim(content.substr(eq + 1)), where});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_features(const Matrix& z,
                                          const std::vector<std::uint32_t>* labels) {
  if (!z.all_finite()) throw DataError("write_features: matrix has non-finite entries");
  if (labels != nullptr && labels->size() != z.rows()) {
    throw ShapeError("write_features: " + std::to_string(labels->size()) + " labels for " +
                     std::to_string(z.rows()) + " rows");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * z.size() + (labels ? 1 + 4 * labels->size() : 0));
  out.insert(out.end(), {'V', 'K', 'D', 'F'});
  put_u32(out, kFeatureDumpVersion);
  put_u32(out, checked_u32(z.rows(), "row count"));
  put_u32(out, checked_u32(z.cols(), "column count"));
  for (double v : z.data()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw DataError("write_features: value overflows f32");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (labels != nullptr) {
    out.push_back(kLabelsMarker);
    for (auto l : *labels) put_u32(out, l);
  }
  return out;
}

FeatureDump decode_features(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 16) {
    throw FormatError(source + ": truncated header, expected at least 16 bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (!(bytes[0] == 'V' && bytes[1] == 'K' && bytes[2] == 'D' && bytes[3] == 'F')) {
    throw FormatError(source + ": bad magic, not a VKDF feature dump");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureDumpVersion) {
    throw FormatError(source + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  const std::uint64_t plain = 16 + 4 * rows * cols;
  const std::uint64_t labelled = plain + 1 + 4 * rows;
  const bool has_labels = bytes.size() == labelled && bytes[plain] == kLabelsMarker;
  if (bytes.size() != plain && !has_labels) {
    if (bytes.size() == labelled) {
      throw FormatError(source + ": bad labels marker");
    }
    throw FormatError(source + ": length mismatch, expected " + std::to_string(plain) + " or " +
                      std::to_string(labelled) + " bytes, got " + std::to_string(bytes.size()));
  }
  FeatureDump dump;
  dump.features = Matrix(rows, cols);
  auto data = dump.features.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
    if (!std::isfinite(f)) {
      throw DataError(source + ": non-finite payload value at index " + std::to_string(i));
    }
    data[i] = f;
  }
  if (has_labels) {
    std::vector<std::uint32_t> labels(rows);
    for (std::size_t i = 0; i < rows; ++i) labels[i] = get_u32(bytes, plain + 1 + 4 * i);
    dump.labels = std::move(labels);
  }
  return dump;
}

void write_features(const std::string& path, const Matrix& z,
                    const std::vector<std::uint32_t>* labels) {
  write_file_atomic(path, encode_features(z, labels));
}

FeatureDump read_features(const std::string& path) { return decode_features(read_file(path), path); }

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  write_file_atomic(path, std::vector<std::uint8_t>(content.begin(), content.end()));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_metrics_csv(const std::string& path, const std::vector<train::MetricsRow>& rows) {
  write_file_atomic(path, train::metrics_csv(rows));
}

void save_mlp(const std::string& path, const nets::Mlp& net) {
  nlohmann::json j;
  j["format"] = "vkd-mlp";
  j["version"] = 1;
  j["layer_dims"] = net.layer_dims();
  j["activation"] = to_string(net.activation());
  auto& layers = j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    layers.push_back({{"weight", net.weight(l).values()}, {"bias", net.bias(l)}});
  }
  write_file_atomic(path, j.dump() + "\n");
}

nets::Mlp load_mlp(const std::string& path) {
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  try {
    if (j.at("format") != "vkd-mlp" || j.at("version") != 1) {
      throw FormatError(path + ": not a vkd-mlp v1 file");
    }
    nets::Mlp net(j.at("layer_dims").get<std::vector<std::size_t>>(),
                  parse_activation(j.at("activation").get<std::string>()));
    const auto& layers = j.at("layers");
    if (layers.size() != net.num_layers()) throw FormatError(path + ": layer count mismatch");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      Matrix& wm = net.weight_mut(l);
      if (w.size() != wm.size() || b.size() != net.bias(l).size()) {
        throw FormatError(path + ": layer " + std::to_string(l) + " has the wrong size");
      }
      std::copy(w.begin(), w.end(), wm.data().begin());
      net.bias_mut(l) = b;
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value,
                      const std::string& where) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) {
    throw ConfigError(where + ": unknown key '" + key + "'", ConfigError::Kind::kUnknownKey, key);
  }
  spec->set(cfg, key, value, where);
}

TrainConfig parse_config_text(const std::string& text, const std::string& source) {
  return apply_assignments(TrainConfig{}, parse_lines(text, source));
}

TrainConfig parse_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()), path);
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  std::vector<Assignment> assignments;
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const std::string where = "--set #" + std::to_string(i + 1);
    const auto eq = overrides[i].find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value, got '" + overrides[i] + "'",
                        ConfigError::Kind::kBadValue);
    }
    assignments.push_back(
        {trim(overrides[i].substr(0, eq)), trim(overrides[i].substr(eq + 1)), where});
  }
  cfg = apply_assignments(cfg, assignments);
}

std::vector<std::pair<std::string, std::string>> config_defaults() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table()) out.emplace_back(k.key, k.default_value);
  return out;
}

}  // namespace vkd::io
