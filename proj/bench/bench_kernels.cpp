// Serial vs OpenMP matching kernels on random descriptors.
#include <random>

#include <benchmark/benchmark.h>

#include "mpr/kernels.hpp"

namespace {

using namespace mpr;

const Channel kChannel{DescriptorKind::GIST, Modality::Color};

std::vector<DescriptorSet> random_sets(std::size_t count, std::size_t dim, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<DescriptorSet> out(count);
  for (auto& set : out) {
    DescriptorVector v;
    v.kind = kChannel.kind;
    v.modality = kChannel.modality;
    v.dimension = dim;
    DenseVector d(dim);
    for (double& x : d) x = g(rng);
    v.payload = std::move(d);
    set.emplace(kChannel, std::move(v));
  }
  return out;
}

struct Fixture {
  std::vector<DescriptorSet> query;
  std::vector<DescriptorSet> db;
  GatedDistanceMatrix gated;
  std::vector<RowMinimum> minima;

  explicit Fixture(std::size_t n) : query(random_sets(n, 512, 1)), db(random_sets(n + n / 2, 512, 2)) {
    gated.channel = kChannel;
    gated.excluded = Matrix<std::uint8_t>(query.size(), db.size(), 0);
    kernels::distance_matrix_serial(query, db, kChannel, gated.excluded, gated.values);
    minima = kernels::row_minima_serial(gated);
  }
};

template <bool Parallel>
void BM_Distance(benchmark::State& state) {
  const Fixture f(std::size_t(state.range(0)));
  Matrix<double> out;
  for (auto _ : state) {
    if constexpr (Parallel) kernels::distance_matrix_parallel(f.query, f.db, kChannel, f.gated.excluded, out);
    else kernels::distance_matrix_serial(f.query, f.db, kChannel, f.gated.excluded, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Score(benchmark::State& state) {
  const Fixture f(std::size_t(state.range(0)));
  const MatchParams params;
  for (auto _ : state) {
    auto s = Parallel ? kernels::score_matrix_parallel(f.gated, f.minima, params)
                      : kernels::score_matrix_serial(f.gated, f.minima, params);
    benchmark::DoNotOptimize(s.data());
  }
}

}  // namespace

BENCHMARK(BM_Distance<false>)->Arg(100)->Arg(400);
BENCHMARK(BM_Distance<true>)->Arg(100)->Arg(400);
BENCHMARK(BM_Score<false>)->Arg(100)->Arg(400);
BENCHMARK(BM_Score<true>)->Arg(100)->Arg(400);

BENCHMARK_MAIN();
