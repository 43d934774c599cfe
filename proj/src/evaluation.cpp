#include "mpr/evaluation.hpp"

#include <algorithm>
#include <fstream>

#include "mpr/error.hpp"
#include "text_util.hpp"

namespace mpr {

namespace {

std::size_t gap(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace

Outcome classify(const MatchDecision& decision, const GroundTruth& gt, Tolerance tol) {
  const std::size_t truth = gt.at(decision.query_index);
  if (!decision.accepted) return Outcome::FalseNegative;
  return gap(decision.best_db_index, truth) <= tol.max_index_gap ? Outcome::TruePositive : Outcome::FalsePositive;
}

EvalCounts count_outcomes(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol) {
  EvalCounts c;
  for (const auto& d : decisions) {
    switch (classify(d, gt, tol)) {
      case Outcome::TruePositive: ++c.tp; break;
      case Outcome::FalsePositive: ++c.fp; break;
      case Outcome::FalseNegative: ++c.fn; break;
    }
  }
  return c;
}

Metrics compute_metrics(const EvalCounts& counts) {
  Metrics m;
  const double tp = double(counts.tp);
  if (counts.tp + counts.fp > 0) m.precision = tp / double(counts.tp + counts.fp);
  if (counts.tp + counts.fn > 0) m.recall = tp / double(counts.tp + counts.fn);
  // 2PR/(P+R) reduced to counts, so the ratio is rounded once
  if (counts.tp > 0) m.f1 = 2.0 * tp / double(2 * counts.tp + counts.fp + counts.fn);
  return m;
}

double mean_localization_error(std::span<const MatchDecision> decisions, const GroundTruth& gt, bool accepted_only) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& d : decisions) {
    const std::size_t truth = gt.at(d.query_index);
    if (accepted_only && !d.accepted) continue;
    sum += double(gap(d.best_db_index, truth));
    ++count;
  }
  return count == 0 ? 0.0 : sum / double(count);
}

Evaluation evaluate(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol,
                    bool error_accepted_only) {
  Evaluation e;
  e.counts = count_outcomes(decisions, gt, tol);
  e.metrics = compute_metrics(e.counts);
  e.metrics.mean_error = mean_localization_error(decisions, gt, error_accepted_only);
  return e;
}

void export_visualization_matrix(std::span<const MatchDecision> decisions, const GroundTruth& gt, Tolerance tol,
                                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "query_index,db_index,label\n";
  for (const auto& d : decisions) {
    const std::size_t truth = gt.at(d.query_index);
    const std::size_t first = truth > tol.max_index_gap ? truth - tol.max_index_gap : 0;
    const std::size_t last = std::min(truth + tol.max_index_gap, gt.database_length == 0 ? truth : gt.database_length - 1);
    for (std::size_t j = first; j <= last; ++j) out << d.query_index << ',' << j << ",ground_truth_band\n";
    if (d.accepted) out << d.query_index << ',' << d.best_db_index << ",result\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_metrics_report(const std::filesystem::path& path, const Evaluation& eval) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "precision = " << detail::format_double(eval.metrics.precision) << '\n'
      << "recall = " << detail::format_double(eval.metrics.recall) << '\n'
      << "f1 = " << detail::format_double(eval.metrics.f1) << '\n'
      << "mean_error = " << detail::format_double(eval.metrics.mean_error) << '\n'
      << "tp = " << eval.counts.tp << '\n'
      << "fp = " << eval.counts.fp << '\n'
      << "fn = " << eval.counts.fn << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mpr
