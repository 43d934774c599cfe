#pragma once

#include <cstddef>
#include <filesystem>
#include <span>

#include "mpr/dataset.hpp"
#include "mpr/matching.hpp"

namespace mpr {

struct Tolerance {
  std::size_t max_index_gap = 5;

  bool operator==(const Tolerance&) const = default;
};

enum class Outcome { TruePositive, FalsePositive, FalseNegative };

struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const EvalCounts&) const = default;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_error = 0.0;  // index units
};

/// Accepted within tolerance -> TP, accepted outside -> FP, rejected -> FN.
Outcome classify(const MatchDecision& decision, const GroundTruth& gt, Tolerance tol);
EvalCounts count_outcomes(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol);

/// Precision, recall and F1; zero denominators give 0. mean_error is left at 0.
Metrics compute_metrics(const EvalCounts& counts);

/// Mean |best_db_index - gt| over the decisions. By default every decision counts
/// (argmax index whether accepted or not); `accepted_only` restricts to positives
/// and returns 0 when there are none.
double mean_localization_error(std::span<const MatchDecision> decisions, const GroundTruth& gt,
                               bool accepted_only = false);

/// Counts, metrics and mean error in one go.
struct Evaluation {
  EvalCounts counts;
  Metrics metrics;
};
Evaluation evaluate(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol,
                    bool error_accepted_only = false);

/// CSV `query_index,db_index,label`: one `result` row per accepted decision and
/// the `ground_truth_band` rows gt-tol..gt+tol clipped to the database.
void export_visualization_matrix(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol,
                                 const std::filesystem::path& path);

void write_metrics_report(const std::filesystem::path& path, const Evaluation& eval);

}  // namespace mpr
