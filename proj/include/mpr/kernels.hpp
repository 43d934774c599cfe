// Data-parallel matching kernels. Each OpenMP kernel has a serial twin that
// runs the same per-row code in a plain loop; tests and the benchmark compare them.
#pragma once

#include <span>
#include <vector>

#include "mpr/matching.hpp"

namespace mpr::kernels {

void distance_matrix_serial(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                            const Channel& channel, const Matrix<std::uint8_t>& mask, Matrix<double>& out);
void distance_matrix_parallel(std::span<const DescriptorSet> query, std::span<const DescriptorSet> db,
                              const Channel& channel, const Matrix<std::uint8_t>& mask, Matrix<double>& out);

std::vector<RowMinimum> row_minima_serial(const GatedDistanceMatrix& gated);
std::vector<RowMinimum> row_minima_parallel(const GatedDistanceMatrix& gated);

ScoreMatrix score_matrix_serial(const GatedDistanceMatrix& gated, std::span<const RowMinimum> minima,
                                const MatchParams& params);
ScoreMatrix score_matrix_parallel(const GatedDistanceMatrix& gated, std::span<const RowMinimum> minima,
                                  const MatchParams& params);

/// Cap the OpenMP pool from MPR_THREADS when set to a positive integer. Returns the cap in effect.
int configure_threads_from_env();

}  // namespace mpr::kernels
