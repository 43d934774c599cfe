#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mpr/dataset.hpp"
#include "mpr/descriptors.hpp"
#include "mpr/matrix.hpp"

namespace mpr {

/// Cone-search, gating and selection parameters.
struct MatchParams {
  std::size_t n_q = 10;      // cone length in query frames
  double v_min = 0.4;        // min database frames per query frame
  double v_max = 2.5;        // max database frames per query frame
  double gate_m = 15.0;      // GNSS gate; +inf disables gating
  double threshold_t = 0.16; // minimum fused score to accept
  /// Divide by n_q even where the cone is clipped by the sequence start.
  bool strict_eq4 = false;

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
  bool operator==(const MatchParams&) const = default;
};

/// Per-channel n x l distance matrix with the GNSS exclusion mask. Excluded cells
/// hold 0 and are never read.
struct GatedDistanceMatrix {
  Channel channel;
  double gate_m = std::numeric_limits<double>::infinity();
  Matrix<double> values;
  Matrix<std::uint8_t> excluded;

  std::size_t n() const noexcept { return values.rows(); }
  std::size_t l() const noexcept { return values.cols(); }
};

using ScoreMatrix = Matrix<double>;
using FusionWeights = std::map<Channel, double>;

/// Coefficients tuned on the two training walks (mean of both), keyed by channel.
FusionWeights tuned_fusion_weights();

struct MatchDecision {
  std::size_t query_index = 0;
  std::size_t best_db_index = 0;
  double best_score = 0.0;
  bool accepted = false;

  bool operator==(const MatchDecision&) const = default;
};

/// Row-minimum column of a gated row; nullopt when every column is excluded.
using RowMinimum = std::optional<std::size_t>;

/// Hamming (LDB), Euclidean (GIST, CNN) or L1 (BoW, degenerate -> 2).
double descriptor_distance(const DescriptorVector& a, const DescriptorVector& b);

/// excluded(i,j) = both fixes valid and geodesic distance > gate_m.
Matrix<std::uint8_t> gnss_exclusion_mask(std::span<const GnssFix> query_fixes, std::span<const GnssFix> db_fixes,
                                         double gate_m);

GatedDistanceMatrix compute_distance_matrix(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                                            const Channel& channel, std::span<const GnssFix> query_fixes,
                                            std::span<const GnssFix> db_fixes, double gate_m);
/// Same, with a precomputed mask shared between channels.
GatedDistanceMatrix compute_distance_matrix(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                                            const Channel& channel, const Matrix<std::uint8_t>& mask, double gate_m);

struct ConeRow {
  std::size_t row = 0;
  std::ptrdiff_t col_begin = 0;  // inclusive, already clipped to [0, l)
  std::ptrdiff_t col_end = 0;    // exclusive; col_begin >= col_end means no cells
};

/// Rows i, i-1, ... (at most n_q of them) with the database columns reachable from
/// anchor (i, j) at speeds in [v_min, v_max]: c with k*v_min <= j - c <= k*v_max.
std::vector<ConeRow> cone_rows(std::size_t i, std::size_t j, const MatchParams& params, std::size_t l);

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const Cell&) const = default;
};
/// Every (row, col) cell of the cone, row-descending then column-ascending.
std::vector<Cell> cone_region(std::size_t i, std::size_t j, const MatchParams& params, std::size_t n, std::size_t l);

RowMinimum row_minimum(const GatedDistanceMatrix& gated, std::size_t row);
std::vector<RowMinimum> row_minima(const GatedDistanceMatrix& gated);

/// n_match / n_eff for anchor (i, j).
double score_pair(std::size_t i, std::size_t j, const GatedDistanceMatrix& gated,
                  std::span<const RowMinimum> minima, const MatchParams& params);

/// Scores for every anchor; excluded anchors score 0. Row i reads rows <= i only.
ScoreMatrix compute_score_matrix(const GatedDistanceMatrix& gated, const MatchParams& params);

/// Weighted mean over channels with positive weight.
ScoreMatrix fuse_score_matrices(const std::map<Channel, ScoreMatrix>& channel_scores, const FusionWeights& weights);

/// Argmax per row (lowest index on ties), accepted when score >= threshold.
std::vector<MatchDecision> select_matches(const ScoreMatrix& fused, double threshold_t);

/// Streaming matcher: the database is indexed up front, queries arrive one at a
/// time and each decision uses only the queries seen so far.
class OnlineMatcher {
 public:
  OnlineMatcher(std::vector<DescriptorSet> database, std::vector<GnssFix> db_fixes, ChannelSet channels,
                MatchParams params, FusionWeights weights);

  MatchDecision push(const DescriptorSet& query, const GnssFix& fix);

  const std::vector<MatchDecision>& decisions() const noexcept { return decisions_; }
  std::size_t database_length() const noexcept { return database_.size(); }

 private:
  std::vector<DescriptorSet> database_;
  std::vector<GnssFix> db_fixes_;
  std::vector<Channel> channels_;
  MatchParams params_;
  std::vector<double> weights_;  // aligned with channels_
  double weight_sum_ = 0.0;
  std::vector<std::vector<RowMinimum>> minima_;  // per channel, per query row
  std::vector<MatchDecision> decisions_;
};

// --- file outputs -----------------------------------------------------------------

/// CSV `query_index,best_db_index,best_score,accepted`.
void write_matches_csv(const std::filesystem::path& path, std::span<const MatchDecision> decisions);
std::vector<MatchDecision> read_matches_csv(const std::filesystem::path& path);

/// Row-major float32 dump plus `<path>.txt` holding "n l channel".
void write_score_dump(const std::filesystem::path& path, const ScoreMatrix& scores, const Channel& channel);

namespace detail {

/// Shared by batch and streaming paths so both produce identical bits.
void score_row(std::size_t i, std::span<const std::uint8_t> excluded_row, std::span<const RowMinimum> minima,
               const MatchParams& params, std::span<double> out);
RowMinimum argmin_row(std::span<const double> values, std::span<const std::uint8_t> excluded);
MatchDecision select_row(std::size_t query_index, std::span<const double> fused_row, double threshold_t);
/// Validates weights against the channel list and returns (aligned weights, positive sum).
std::pair<std::vector<double>, double> align_weights(std::span<const Channel> channels, const FusionWeights& weights);
void fuse_row(std::span<const std::span<const double>> rows, std::span<const double> weights, double weight_sum,
              std::span<double> out);

}  // namespace detail

}  // namespace mpr
