#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vkd/matrix.hpp"
#include "vkd/nets.hpp"
#include "vkd/trainer.hpp"

namespace vkd::io {

// ---------------------------------------------------------------------------
// FeatureDump, little-endian regardless of host:
//
//   offset  size   field
//   0       4      magic "VKDF"
//   4       4      version (u32) = 1
//   8       4      rows b (u32)
//   12      4      cols d (u32)
//   16      4bd    payload, f32, row-major
//   [16+4bd 1      0x4C ('L') labels marker
//    17+4bd 4b     labels (u32)]
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFeatureDumpVersion = 1;
inline constexpr std::uint8_t kLabelsMarker = 0x4C;

struct FeatureDump {
  Matrix features;
  std::optional<std::vector<std::uint32_t>> labels;
};

// Values are rounded to the nearest f32 (ties to even).
std::vector<std::uint8_t> encode_features(const Matrix& z,
                                          const std::vector<std::uint32_t>* labels = nullptr);
FeatureDump decode_features(const std::vector<std::uint8_t>& bytes,
                            const std::string& source = "<memory>");

void write_features(const std::string& path, const Matrix& z,
                    const std::vector<std::uint32_t>* labels = nullptr);
FeatureDump read_features(const std::string& path);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

// Writes to "<path>.tmp" and renames over path.
void write_file_atomic(const std::string& path, const std::string& content);
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

void write_metrics_csv(const std::string& path, const std::vector<train::MetricsRow>& rows);

// Network weights as JSON (doubles round-trip exactly).
void save_mlp(const std::string& path, const nets::Mlp& net);
nets::Mlp load_mlp(const std::string& path);

// ---------------------------------------------------------------------------
// Config: flat "key = value" lines, '#' starts a comment. Unknown keys are
// errors; later assignments of the same key win.
// ---------------------------------------------------------------------------

train::TrainConfig parse_config(const std::string& path);
train::TrainConfig parse_config_text(const std::string& text,
                                     const std::string& source = "<config>");

// Applies "key=value" overrides after the file (source names "--set #n").
void apply_overrides(train::TrainConfig& cfg, const std::vector<std::string>& overrides);

// Sets one key. `where` is used in error messages.
void set_config_value(train::TrainConfig& cfg, const std::string& key, const std::string& value,
                      const std::string& where);

// Every recognised key with its default value, in documentation order.
std::vector<std::pair<std::string, std::string>> config_defaults();

}  // namespace vkd::io
