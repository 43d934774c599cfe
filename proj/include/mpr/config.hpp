#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpr/descriptors.hpp"
#include "mpr/evaluation.hpp"
#include "mpr/matching.hpp"
#include "mpr/tuning.hpp"

namespace mpr {

enum class RunMode { Testing, Tuning, Sweep };

std::string_view run_mode_name(RunMode m) noexcept;

/// Everything a run needs. Paths are absolute once parsed.
struct RunConfig {
  RunMode mode = RunMode::Testing;

  // [dataset]
  std::filesystem::path query_root;
  std::filesystem::path database_root;
  std::optional<std::filesystem::path> ground_truth;
  std::optional<std::filesystem::path> query_cnn;
  std::optional<std::filesystem::path> database_cnn;
  std::size_t cnn_dim = 0;  // 0 accepts whatever length the files have
  std::optional<std::filesystem::path> vocabulary;
  int vocab_k = 10;
  int vocab_depth = 5;
  std::uint64_t vocab_seed = 1;

  // [channels]
  ChannelSet channels;
  FusionWeights weights;
  double alpha = kDefaultIlluminationAlpha;
  int max_keypoints = 500;

  // [matching]
  MatchParams match;
  Tolerance tolerance;

  // [tuning]
  GAConfig ga;
  double tuning_t = 0.0;
  std::map<SweepParameter, std::vector<double>> sweeps;
  bool chain_sweeps = false;

  // [output]
  std::filesystem::path output_dir;
  bool error_accepted_only = false;
  bool dump_scores = false;

  bool operator==(const RunConfig&) const = default;

  ExtractionConfig extraction() const;
};

/// Sectioned `key = value` file; `#` and `;` start comment lines. Relative paths
/// resolve against the file's directory.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir);

/// Text that parse_config_text reads back to an equal RunConfig.
std::string serialize_config(const RunConfig& config);

/// Values a sweep uses when the config does not list any.
std::vector<double> default_sweep_values(SweepParameter p);

}  // namespace mpr
