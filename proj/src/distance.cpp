#include <cmath>

#include "mpr/error.hpp"
#include "mpr/matching.hpp"

namespace mpr {

namespace {

double hamming_distance(const BitString& a, const BitString& b) {
  std::size_t d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::size_t(std::popcount(a.words[w] ^ b.words[w]));
  return double(d);
}

double euclidean_distance(const DenseVector& a, const DenseVector& b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double l1_distance(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.index.size() || j < b.index.size()) {
    if (j == b.index.size() || (i < a.index.size() && a.index[i] < b.index[j])) {
      sum += std::abs(a.value[i++]);
    } else if (i == a.index.size() || b.index[j] < a.index[i]) {
      sum += std::abs(b.value[j++]);
    } else {
      sum += std::abs(a.value[i++] - b.value[j++]);
    }
  }
  return sum;
}

}  // namespace

double descriptor_distance(const DescriptorVector& a, const DescriptorVector& b) {
  if (a.kind != b.kind || a.modality != b.modality || a.dimension != b.dimension ||
      a.payload.index() != b.payload.index()) {
    throw Error(ErrorCode::ChannelMismatch,
                "cannot compare " + channel_label(a.channel()) + " with " + channel_label(b.channel()));
  }
  switch (a.kind) {
    case DescriptorKind::LDB: return hamming_distance(a.bits(), b.bits());
    case DescriptorKind::GIST:
    case DescriptorKind::CNN: return euclidean_distance(a.dense(), b.dense());
    case DescriptorKind::BoW:
      if (a.degenerate || b.degenerate) return 2.0;
      return l1_distance(a.sparse(), b.sparse());
  }
  throw Error(ErrorCode::ChannelMismatch, "unknown descriptor kind");
}

Matrix<std::uint8_t> gnss_exclusion_mask(std::span<const GnssFix> query_fixes, std::span<const GnssFix> db_fixes,
                                         double gate_m) {
  Matrix<std::uint8_t> mask(query_fixes.size(), db_fixes.size(), 0);
  if (std::isinf(gate_m) && gate_m > 0) return mask;
  for (std::size_t i = 0; i < query_fixes.size(); ++i) {
    if (!query_fixes[i].valid) continue;
    for (std::size_t j = 0; j < db_fixes.size(); ++j) {
      if (!db_fixes[j].valid) continue;
      mask(i, j) = geodesic_distance(query_fixes[i], db_fixes[j]) > gate_m ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace mpr
