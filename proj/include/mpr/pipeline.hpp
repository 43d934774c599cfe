#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mpr/config.hpp"
#include "mpr/dataset.hpp"
#include "mpr/evaluation.hpp"
#include "mpr/tuning.hpp"
#include "mpr/vocabulary.hpp"

namespace mpr {

struct FrameTiming {
  std::size_t query_index = 0;
  double extraction_ms = 0.0;
  double matching_ms = 0.0;
};

struct RunReport {
  double database_ms = 0.0;    // database loading and indexing
  double extraction_ms = 0.0;  // query descriptor extraction, summed over frames
  double matching_ms = 0.0;    // query matching, summed over frames
  double overall_ms = 0.0;
  std::vector<FrameTiming> frames;

  std::vector<MatchDecision> decisions;
  std::optional<Evaluation> evaluation;

  std::vector<GARun> runs;
  std::optional<Genome> aggregated;
  double aggregated_fitness = 0.0;
  std::vector<SweepResult> sweeps;

  std::vector<std::filesystem::path> files;  // everything written, final locations
};

/// Index the database, then stream queries one at a time through the matcher.
/// Writes matches.csv, timing.csv, timing.txt and, with ground truth,
/// metrics.txt and visualization.csv. Nothing is left behind on failure.
RunReport run_testing(const RunConfig& config);

/// Single-row-cone channel scores, repeated GA runs, aggregation; writes
/// tuning_report.txt and ga_traces.csv, plus chained sweeps when enabled.
RunReport run_tuning(const RunConfig& config);

/// One parameter sweep with the configured weights; writes sweep_<param>.csv.
RunReport run_sweep(const RunConfig& config, SweepParameter parameter);

/// Vocabulary from the ORB features of every frame under `root` (color and,
/// when present, infrared).
Vocabulary train_vocabulary(const std::filesystem::path& root, int k, int depth, std::uint64_t seed,
                            int max_keypoints = 500);

/// Writes `<out>/{query,database}/`, `<out>/gt.csv`, placeholder CNN vectors
/// under `<out>/{query,database}_cnn/` and a ready-to-run `<out>/config.ini`.
void write_synthetic_dataset(const std::filesystem::path& out, std::uint64_t seed, std::size_t length,
                             const Perturbation& perturbation);

/// Placeholder "CNN" vector: mean-subtracted 16x16 grayscale thumbnail.
std::vector<float> thumbnail_vector(const cv::Mat& image);

}  // namespace mpr
