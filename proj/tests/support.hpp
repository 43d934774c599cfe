// Shared fixtures, generators and brute-force oracles for the test binaries.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mpr/evaluation.hpp"
#include "mpr/matching.hpp"

namespace mpr::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mpr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Great-circle distance via the atan2 form of the spherical law of cosines,
/// written independently of the library's haversine.
inline double oracle_distance(double lat1, double lon1, double lat2, double lon2) {
  const double rad = 3.14159265358979323846 / 180.0;
  const double p1 = lat1 * rad;
  const double p2 = lat2 * rad;
  const double dl = (lon2 - lon1) * rad;
  const double y = std::hypot(std::cos(p2) * std::sin(dl),
                              std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl));
  const double x = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return 6371000.0 * std::atan2(y, x);
}

/// Row minima by plain scan (lowest column on ties); -1 for fully excluded rows.
inline std::vector<long> oracle_row_minima(const GatedDistanceMatrix& g) {
  std::vector<long> out(g.n(), -1);
  for (std::size_t r = 0; r < g.n(); ++r) {
    for (std::size_t c = 0; c < g.l(); ++c) {
      if (g.excluded(r, c)) continue;
      if (out[r] < 0 || g.values(r, c) < g.values(r, std::size_t(out[r]))) out[r] = long(c);
    }
  }
  return out;
}

/// Every cell (r, c) with r = i - k, 0 <= k < min(n_q, i + 1) and
/// k * v_min <= j - c <= k * v_max, tested directly in real arithmetic.
inline bool oracle_in_cone(std::size_t i, std::size_t j, std::size_t r, std::size_t c, const MatchParams& p) {
  if (r > i) return false;
  const std::size_t k = i - r;
  if (k >= p.n_q) return false;
  const double shift = double(j) - double(c);
  return shift >= double(k) * p.v_min && shift <= double(k) * p.v_max;
}

inline ScoreMatrix oracle_scores(const GatedDistanceMatrix& g, const MatchParams& p) {
  const auto minima = oracle_row_minima(g);
  ScoreMatrix s(g.n(), g.l(), 0.0);
  for (std::size_t i = 0; i < g.n(); ++i) {
    for (std::size_t j = 0; j < g.l(); ++j) {
      if (g.excluded(i, j)) continue;
      std::size_t hits = 0;
      std::size_t rows = 0;
      for (std::size_t r = 0; r <= i; ++r) {
        if (i - r >= p.n_q) continue;
        ++rows;
        for (std::size_t c = 0; c < g.l(); ++c) {
          if (oracle_in_cone(i, j, r, c, p) && minima[r] == long(c)) ++hits;
        }
      }
      s(i, j) = double(hits) / double(p.strict_eq4 ? p.n_q : rows);
    }
  }
  return s;
}

/// Random gated matrix with small integer distances (plenty of ties) and a
/// random exclusion mask, some rows fully excluded.
inline GatedDistanceMatrix random_gated(std::mt19937_64& rng, std::size_t n, std::size_t l) {
  GatedDistanceMatrix g;
  g.channel = {DescriptorKind::GIST, Modality::Color};
  g.gate_m = 15.0;
  g.values = Matrix<double>(n, l, 0.0);
  g.excluded = Matrix<std::uint8_t>(n, l, 0);
  std::uniform_int_distribution<int> value(0, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double exclude_rate = unit(rng) * 0.5;
  for (std::size_t r = 0; r < n; ++r) {
    const bool blank = unit(rng) < 0.05;
    for (std::size_t c = 0; c < l; ++c) {
      g.excluded(r, c) = blank || unit(rng) < exclude_rate;
      if (!g.excluded(r, c)) g.values(r, c) = value(rng);
    }
  }
  return g;
}

inline MatchParams random_params(std::mt19937_64& rng) {
  MatchParams p;
  std::uniform_int_distribution<std::size_t> nq(1, 12);
  std::uniform_real_distribution<double> vmin(0.05, 1.5);
  std::uniform_real_distribution<double> spread(1.0, 4.0);
  std::uniform_int_distribution<int> coin(0, 3);
  p.n_q = nq(rng);
  // a quarter of the draws use exact-grid speeds so bounds land on integers
  p.v_min = coin(rng) == 0 ? 0.5 : vmin(rng);
  p.v_max = coin(rng) == 0 ? p.v_min * 2.0 : p.v_min * spread(rng);
  p.strict_eq4 = coin(rng) == 0;
  return p;
}

/// Descriptor set holding one dense GIST-c vector.
inline DescriptorSet dense_set(std::vector<double> v, Channel c = {DescriptorKind::GIST, Modality::Color}) {
  DescriptorVector d;
  d.kind = c.kind;
  d.modality = c.modality;
  d.dimension = v.size();
  d.payload = std::move(v);
  DescriptorSet s;
  s.emplace(c, std::move(d));
  return s;
}

/// Nine gated channels over a query walk that advances 1.3 database frames per
/// query frame. Each channel marks the true neighbourhood with its own strength,
/// so fusion weights change which column wins a row.
struct TrainingFixture {
  std::vector<GatedDistanceMatrix> gated;
  GroundTruth truth;
};

/// Channels carry a faint dip along the true path of varying strength; every third channel also
/// carries a stronger dip along a parallel wrong path, so equal weights mislocalize some queries.
inline TrainingFixture synthetic_training(std::uint64_t seed, std::size_t n) {
  constexpr std::size_t kDecoyShift = 9;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrainingFixture f;
  const std::size_t l = std::size_t(std::ceil(double(n) * 1.3)) + 3 + kDecoyShift;
  f.truth.query_length = n;
  f.truth.database_length = l;
  for (std::size_t i = 0; i < n; ++i) f.truth.db_index.push_back(std::size_t(std::lround(double(i) * 1.3)));
  for (std::size_t k = 0; k < kCanonicalChannels.size(); ++k) {
    const double strength = 0.02 + 0.025 * double(k);
    const double decoy = k % 3 == 0 ? 0.3 : 0.0;
    GatedDistanceMatrix g;
    g.channel = kCanonicalChannels[k];
    g.values = Matrix<double>(n, l, 0.0);
    g.excluded = Matrix<std::uint8_t>(n, l, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t truth = f.truth.db_index[i];
      for (std::size_t j = 0; j < l; ++j) {
        const std::size_t gap = j > truth ? j - truth : truth - j;
        const std::size_t wrong = truth + kDecoyShift;
        const std::size_t decoy_gap = j > wrong ? j - wrong : wrong - j;
        double v = unit(rng);
        if (gap <= 2) v -= strength * unit(rng);
        if (decoy_gap <= 2) v -= decoy * unit(rng);
        g.values(i, j) = v;
      }
    }
    f.gated.push_back(std::move(g));
  }
  return f;
}

}  // namespace mpr::test
