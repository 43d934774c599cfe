#include "mpr/kernels.hpp"

#include <cmath>
#include <cstdlib>

#include <omp.h>

#include "mpr/error.hpp"
#include "text_util.hpp"

namespace mpr::kernels {

namespace {

void distance_row(std::size_t i, std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                  const Channel& channel, const Matrix<std::uint8_t>& mask, Matrix<double>& out) {
  const DescriptorVector& q = query[i].at(channel);
  auto row = out.row(i);
  const auto excluded = mask.row(i);
  for (std::size_t j = 0; j < db.size(); ++j) {
    row[j] = excluded[j] ? 0.0 : descriptor_distance(q, db[j].at(channel));
  }
}

void check_inputs(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db, const Channel& channel,
                  const Matrix<std::uint8_t>& mask) {
  if (mask.rows() != query.size() || mask.cols() != db.size()) {
    throw Error(ErrorCode::DimensionMismatch, "exclusion mask does not match sequence lengths");
  }
  const DescriptorVector* first = nullptr;
  const auto check = [&](const DescriptorSet& set) {
    const auto it = set.find(channel);
    if (it == set.end()) throw Error(ErrorCode::ChannelMismatch, channel_label(channel) + " missing from a descriptor set");
    if (first == nullptr) {
      first = &it->second;
    } else if (it->second.dimension != first->dimension || it->second.payload.index() != first->payload.index()) {
      throw Error(ErrorCode::DimensionMismatch, channel_label(channel) + " dimension differs between frames");
    }
    if (it->second.channel() != channel) throw Error(ErrorCode::ChannelMismatch, "descriptor filed under wrong channel");
  };
  for (const auto& s : query) check(s);
  for (const auto& s : db) check(s);
}

}  // namespace

void distance_matrix_serial(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                            const Channel& channel, const Matrix<std::uint8_t>& mask, Matrix<double>& out) {
  check_inputs(query, db, channel, mask);
  out = Matrix<double>(query.size(), db.size(), 0.0);
  for (std::size_t i = 0; i < query.size(); ++i) distance_row(i, query, db, channel, mask, out);
}

void distance_matrix_parallel(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                              const Channel& channel, const Matrix<std::uint8_t>& mask, Matrix<double>& out) {
  check_inputs(query, db, channel, mask);
  out = Matrix<double>(query.size(), db.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(query.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) distance_row(std::size_t(i), query, db, channel, mask, out);
}

std::vector<RowMinimum> row_minima_serial(const GatedDistanceMatrix& gated) {
  std::vector<RowMinimum> out(gated.n());
  for (std::size_t r = 0; r < gated.n(); ++r) out[r] = detail::argmin_row(gated.values.row(r), gated.excluded.row(r));
  return out;
}

std::vector<RowMinimum> row_minima_parallel(const GatedDistanceMatrix& gated) {
  std::vector<RowMinimum> out(gated.n());
  const auto n = static_cast<std::ptrdiff_t>(gated.n());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    out[std::size_t(r)] = detail::argmin_row(gated.values.row(std::size_t(r)), gated.excluded.row(std::size_t(r)));
  }
  return out;
}

ScoreMatrix score_matrix_serial(const GatedDistanceMatrix& gated, std::span<const RowMinimum> minima,
                                const MatchParams& params) {
  ScoreMatrix out(gated.n(), gated.l(), 0.0);
  for (std::size_t i = 0; i < gated.n(); ++i) {
    detail::score_row(i, gated.excluded.row(i), minima, params, out.row(i));
  }
  return out;
}

ScoreMatrix score_matrix_parallel(const GatedDistanceMatrix& gated, std::span<const RowMinimum> minima,
                                  const MatchParams& params) {
  ScoreMatrix out(gated.n(), gated.l(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(gated.n());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    detail::score_row(std::size_t(i), gated.excluded.row(std::size_t(i)), minima, params, out.row(std::size_t(i)));
  }
  return out;
}

int configure_threads_from_env() {
  if (const char* env = std::getenv("MPR_THREADS")) {
    if (const auto n = mpr::detail::parse_number<int>(env); n && *n > 0) omp_set_num_threads(*n);
  }
  return omp_get_max_threads();
}

}  // namespace mpr::kernels
