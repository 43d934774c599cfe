#include "mpr/matching.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "mpr/error.hpp"
#include "mpr/kernels.hpp"
#include "text_util.hpp"

namespace mpr {

void MatchParams::validate() const {
  if (n_q < 1) throw Error(ErrorCode::InvalidArgument, "n_q must be >= 1");
  if (!std::isfinite(v_min) || !(v_min > 0.0)) throw Error(ErrorCode::InvalidArgument, "v_min must be > 0");
  if (!std::isfinite(v_max) || v_max < v_min) throw Error(ErrorCode::InvalidArgument, "v_max must be >= v_min");
  if (std::isnan(gate_m) || !(gate_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "gate must be > 0");
  if (!(threshold_t >= 0.0 && threshold_t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t must lie in [0,1]");
}

FusionWeights tuned_fusion_weights() {
  using enum DescriptorKind;
  using enum Modality;
  return {
      {{BoW, Color}, 1.245},  {{BoW, Infrared}, 1.685}, {{GIST, Color}, 1.579},
      {{GIST, Depth}, 1.091}, {{GIST, Infrared}, 0.987}, {{LDB, Color}, 0.526},
      {{LDB, Depth}, 0.623},  {{LDB, Infrared}, 0.840}, {{CNN, Color}, 1.422},
  };
}

namespace detail {

RowMinimum argmin_row(std::span<const double> values, std::span<const std::uint8_t> excluded) {
  RowMinimum best;
  double best_value = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (excluded[c]) continue;
    if (!best || values[c] < best_value) {
      best = c;
      best_value = values[c];
    }
  }
  return best;
}

void score_row(std::size_t i, std::span<const std::uint8_t> excluded_row, std::span<const RowMinimum> minima,
               const MatchParams& params, std::span<double> out) {
  const std::size_t l = out.size();
  const std::size_t rows = std::min(params.n_q, i + 1);
  const double n_eff = double(params.strict_eq4 ? params.n_q : rows);

  // A row minimum m at offset k lies in the cone of anchors j with
  // k*v_min <= j - m <= k*v_max, i.e. j in [m + ceil(k*v_min), m + floor(k*v_max)].
  std::vector<long> delta(l + 1, 0);
  for (std::size_t k = 0; k < rows; ++k) {
    const RowMinimum& m = minima[i - k];
    if (!m) continue;
    const auto lo = std::ptrdiff_t(*m) + std::ptrdiff_t(std::ceil(double(k) * params.v_min));
    const auto hi = std::ptrdiff_t(*m) + std::ptrdiff_t(std::floor(double(k) * params.v_max));
    const auto first = std::max<std::ptrdiff_t>(lo, 0);
    const auto last = std::min<std::ptrdiff_t>(hi, std::ptrdiff_t(l) - 1);
    if (first > last) continue;
    ++delta[std::size_t(first)];
    --delta[std::size_t(last) + 1];
  }
  long count = 0;
  for (std::size_t j = 0; j < l; ++j) {
    count += delta[j];
    out[j] = excluded_row[j] ? 0.0 : double(count) / n_eff;
  }
}

MatchDecision select_row(std::size_t query_index, std::span<const double> fused_row, double threshold_t) {
  MatchDecision d;
  d.query_index = query_index;
  for (std::size_t j = 0; j < fused_row.size(); ++j) {
    if (j == 0 || fused_row[j] > d.best_score) {
      d.best_db_index = j;
      d.best_score = fused_row[j];
    }
  }
  d.accepted = !fused_row.empty() && d.best_score >= threshold_t;
  return d;
}

std::pair<std::vector<double>, double> align_weights(std::span<const Channel> channels, const FusionWeights& weights) {
  for (const auto& [channel, w] : weights) {
    if (std::find(channels.begin(), channels.end(), channel) == channels.end()) {
      throw Error(ErrorCode::ChannelMismatch, "weight given for " + channel_label(channel) + " which has no scores");
    }
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "weight for " + channel_label(channel) + " must be finite and >= 0");
    }
  }
  std::vector<double> aligned;
  double sum = 0.0;
  for (const auto& c : channels) {
    const auto it = weights.find(c);
    const double w = it == weights.end() ? 0.0 : it->second;
    aligned.push_back(w);
    if (w > 0.0) sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::AllWeightsZero, "no channel has a positive fusion weight");
  return {aligned, sum};
}

void fuse_row(std::span<const std::span<const double>> rows, std::span<const double> weights, double weight_sum,
              std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (weights[c] > 0.0) acc += weights[c] * rows[c][j];
    }
    out[j] = acc / weight_sum;
  }
}

}  // namespace detail

GatedDistanceMatrix compute_distance_matrix(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                                            const Channel& channel, const Matrix<std::uint8_t>& mask, double gate_m) {
  GatedDistanceMatrix out;
  out.channel = channel;
  out.gate_m = gate_m;
  kernels::distance_matrix_parallel(query, db, channel, mask, out.values);
  out.excluded = mask;
  return out;
}

GatedDistanceMatrix compute_distance_matrix(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                                            const Channel& channel, std::span<const GnssFix> query_fixes,
                                            std::span<const GnssFix> db_fixes, double gate_m) {
  if (query_fixes.size() != query.size() || db_fixes.size() != db.size()) {
    throw Error(ErrorCode::DimensionMismatch, "GNSS track length differs from descriptor count");
  }
  return compute_distance_matrix(query, db, channel, gnss_exclusion_mask(query_fixes, db_fixes, gate_m), gate_m);
}

std::vector<ConeRow> cone_rows(std::size_t i, std::size_t j, const MatchParams& params, std::size_t l) {
  std::vector<ConeRow> rows;
  const std::size_t count = std::min(params.n_q, i + 1);
  rows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto lo = std::ptrdiff_t(j) - std::ptrdiff_t(std::floor(double(k) * params.v_max));
    const auto hi = std::ptrdiff_t(j) - std::ptrdiff_t(std::ceil(double(k) * params.v_min));
    rows.push_back({i - k, std::max<std::ptrdiff_t>(lo, 0), std::min<std::ptrdiff_t>(hi, std::ptrdiff_t(l) - 1) + 1});
  }
  return rows;
}

std::vector<Cell> cone_region(std::size_t i, std::size_t j, const MatchParams& params, std::size_t n, std::size_t l) {
  if (i >= n || j >= l) throw Error(ErrorCode::IndexOutOfRange, "cone anchor outside the matrix");
  std::vector<Cell> cells;
  for (const ConeRow& r : cone_rows(i, j, params, l)) {
    for (auto c = r.col_begin; c < r.col_end; ++c) cells.push_back({r.row, std::size_t(c)});
  }
  return cells;
}

RowMinimum row_minimum(const GatedDistanceMatrix& gated, std::size_t row) {
  return detail::argmin_row(gated.values.row(row), gated.excluded.row(row));
}

std::vector<RowMinimum> row_minima(const GatedDistanceMatrix& gated) { return kernels::row_minima_parallel(gated); }

double score_pair(std::size_t i, std::size_t j, const GatedDistanceMatrix& gated, std::span<const RowMinimum> minima,
                  const MatchParams& params) {
  if (gated.excluded(i, j)) return 0.0;
  std::size_t matches = 0;
  const auto rows = cone_rows(i, j, params, gated.l());
  for (const ConeRow& r : rows) {
    const RowMinimum& m = minima[r.row];
    if (m && std::ptrdiff_t(*m) >= r.col_begin && std::ptrdiff_t(*m) < r.col_end) ++matches;
  }
  const double n_eff = double(params.strict_eq4 ? params.n_q : rows.size());
  return double(matches) / n_eff;
}

ScoreMatrix compute_score_matrix(const GatedDistanceMatrix& gated, const MatchParams& params) {
  params.validate();
  const auto minima = kernels::row_minima_parallel(gated);
  return kernels::score_matrix_parallel(gated, minima, params);
}

ScoreMatrix fuse_score_matrices(const std::map<Channel, ScoreMatrix>& channel_scores, const FusionWeights& weights) {
  if (channel_scores.empty()) throw Error(ErrorCode::AllWeightsZero, "no channel score matrices to fuse");
  std::vector<Channel> channels;
  std::vector<const ScoreMatrix*> matrices;
  for (const auto& [c, m] : channel_scores) {
    channels.push_back(c);
    matrices.push_back(&m);
  }
  const auto [aligned, sum] = detail::align_weights(channels, weights);
  const std::size_t n = matrices.front()->rows();
  const std::size_t l = matrices.front()->cols();
  for (const auto* m : matrices) {
    if (m->rows() != n || m->cols() != l) throw Error(ErrorCode::DimensionMismatch, "score matrices differ in size");
  }
  ScoreMatrix fused(n, l, 0.0);
  std::vector<std::span<const double>> rows(matrices.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < matrices.size(); ++c) rows[c] = matrices[c]->row(i);
    detail::fuse_row(rows, aligned, sum, fused.row(i));
  }
  return fused;
}

std::vector<MatchDecision> select_matches(const ScoreMatrix& fused, double threshold_t) {
  std::vector<MatchDecision> out;
  out.reserve(fused.rows());
  for (std::size_t i = 0; i < fused.rows(); ++i) out.push_back(detail::select_row(i, fused.row(i), threshold_t));
  return out;
}

OnlineMatcher::OnlineMatcher(std::vector<DescriptorSet> database, std::vector<GnssFix> db_fixes, ChannelSet channels,
                             MatchParams params, FusionWeights weights)
    : database_(std::move(database)),
      db_fixes_(std::move(db_fixes)),
      channels_(channels.begin(), channels.end()),
      params_(params) {
  params_.validate();
  if (database_.empty()) throw Error(ErrorCode::InvalidArgument, "empty database");
  if (db_fixes_.size() != database_.size()) throw Error(ErrorCode::DimensionMismatch, "database GNSS track length");
  if (channels_.empty()) throw Error(ErrorCode::AllWeightsZero, "no channels enabled");
  for (const auto& set : database_) {
    for (const auto& c : channels_) {
      if (!set.contains(c)) throw Error(ErrorCode::ChannelMismatch, channel_label(c) + " missing from database");
    }
  }
  std::tie(weights_, weight_sum_) = detail::align_weights(channels_, weights);
  minima_.resize(channels_.size());
}

MatchDecision OnlineMatcher::push(const DescriptorSet& query, const GnssFix& fix) {
  const std::size_t i = decisions_.size();
  const std::size_t l = database_.size();
  const auto mask = gnss_exclusion_mask(std::span(&fix, 1), db_fixes_, params_.gate_m);
  const auto excluded = mask.row(0);

  std::vector<std::vector<double>> scores(channels_.size(), std::vector<double>(l, 0.0));
  std::vector<double> distances(l, 0.0);
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    const auto it = query.find(channels_[c]);
    if (it == query.end()) throw Error(ErrorCode::ChannelMismatch, channel_label(channels_[c]) + " missing from query");
    for (std::size_t j = 0; j < l; ++j) {
      distances[j] = excluded[j] ? 0.0 : descriptor_distance(it->second, database_[j].at(channels_[c]));
    }
    minima_[c].push_back(detail::argmin_row(distances, excluded));
    detail::score_row(i, excluded, minima_[c], params_, scores[c]);
  }
  std::vector<std::span<const double>> rows(scores.begin(), scores.end());
  std::vector<double> fused(l, 0.0);
  detail::fuse_row(rows, weights_, weight_sum_, fused);
  decisions_.push_back(detail::select_row(i, fused, params_.threshold_t));
  return decisions_.back();
}

void write_matches_csv(const std::filesystem::path& path, std::span<const MatchDecision> decisions) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "query_index,best_db_index,best_score,accepted\n";
  for (const auto& d : decisions) {
    out << d.query_index << ',' << d.best_db_index << ',' << detail::format_double(d.best_score) << ','
        << (d.accepted ? 1 : 0) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<MatchDecision> read_matches_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<MatchDecision> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 4) throw Error(ErrorCode::ParseError, path.string() + ": bad match row");
    const auto q = detail::parse_number<std::size_t>(f[0]);
    const auto j = detail::parse_number<std::size_t>(f[1]);
    const auto s = detail::parse_number<double>(f[2]);
    const auto a = detail::parse_number<int>(f[3]);
    if (!q || !j || !s || !a) throw Error(ErrorCode::ParseError, path.string() + ": bad match row");
    out.push_back({*q, *j, *s, *a != 0});
  }
  return out;
}

void write_score_dump(const std::filesystem::path& path, const ScoreMatrix& scores, const Channel& channel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (double v : scores.data()) {
    const auto raw = std::bit_cast<std::uint32_t>(float(v));
    const char bytes[4] = {char(raw), char(raw >> 8), char(raw >> 16), char(raw >> 24)};
    out.write(bytes, 4);
  }
  std::ofstream header(path.string() + ".txt");
  header << scores.rows() << ' ' << scores.cols() << ' ' << channel_label(channel) << '\n';
  if (!out || !header) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mpr
