#include <doctest.h>

#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "mpr/error.hpp"
#include "mpr/tuning.hpp"
#include "support.hpp"

using namespace mpr;
using test::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an mpr::Error");
  return ErrorCode::InvalidArgument;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Genome filled(double v) {
  Genome g;
  g.fill(v);
  return g;
}

TrainingSet self_training(std::size_t n) {
  std::vector<GatedDistanceMatrix> gated;
  GroundTruth gt;
  gt.query_length = n;
  gt.database_length = n;
  for (std::size_t k = 0; k < n; ++k) gt.db_index.push_back(k);
  for (const Channel& c : kCanonicalChannels) {
    GatedDistanceMatrix g;
    g.channel = c;
    g.values = Matrix<double>(n, n, 1.0);
    g.excluded = Matrix<std::uint8_t>(n, n, 0);
    for (std::size_t k = 0; k < n; ++k) g.values(k, k) = 0.0;
    gated.push_back(std::move(g));
  }
  return prepare_training(gated, gt, Tolerance{});
}

GAConfig small_ga() {
  GAConfig c;
  c.population = 12;
  c.generations = 15;
  c.runs = 2;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("genome layout") {
  const Genome g = {1, 2, 3, 4, 0.5, 0.25, 0.125, 3.5, 2.5};
  const ChannelSet all(kCanonicalChannels.begin(), kCanonicalChannels.end());
  const FusionWeights w = genome_to_weights(g, all);
  CHECK(w.at({DescriptorKind::BoW, Modality::Color}) == 1.0);
  CHECK(w.at({DescriptorKind::BoW, Modality::Infrared}) == 2.0);
  CHECK(w.at({DescriptorKind::CNN, Modality::Color}) == 2.5);
  CHECK(weights_to_genome(w) == g);
  const FusionWeights two = genome_to_weights(g, {{DescriptorKind::GIST, Modality::Depth}, {DescriptorKind::LDB, Modality::Infrared}});
  CHECK(two.size() == 2);
  CHECK(two.at({DescriptorKind::GIST, Modality::Depth}) == 4.0);

  const GAConfig defaults;
  CHECK(defaults.generations == 80);
  CHECK(defaults.runs == 15);
  CHECK(defaults.population == 50);
  CHECK(defaults.tournament == 3);
  GAConfig bad;
  bad.population = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
  bad = {};
  bad.mutation_rate = 1.5;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("fitness") {
  const TrainingSet self = self_training(20);
  CHECK(self.channels().size() == 9);
  for (const auto& [c, m] : self.channel_scores) {
    for (double v : m.data()) REQUIRE((v == 0.0 || v == 1.0));
  }
  CHECK(fitness(filled(1.0), self) == 1.0);
  CHECK(fitness(filled(0.0), self) == 0.0);

  const auto fx = test::synthetic_training(4, 40);
  const TrainingSet t = prepare_training(fx.gated, fx.truth, Tolerance{});
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> gene(0.0, 4.0);
  for (int trial = 0; trial < 30; ++trial) {
    Genome g;
    for (double& v : g) v = gene(rng);
    const double f = fitness(g, t);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(fitness(g, t) == f);
    for (double c : {0.1, 3.7}) {
      Genome scaled = g;
      for (double& v : scaled) v *= c;
      CHECK(fitness(scaled, t) == f);
    }
  }
}

TEST_CASE("genetic search") {
  const auto fx = test::synthetic_training(9, 50);
  const TrainingSet t = prepare_training(fx.gated, fx.truth, Tolerance{});

  SUBCASE("elitism and determinism") {
    const GAConfig c = small_ga();
    const GARun a = run_ga(c, t, 0);
    const GARun b = run_ga(c, t, 0);
    CHECK(a.best == b.best);
    CHECK(a.trace == b.trace);
    REQUIRE(a.trace.size() == c.generations);
    for (std::size_t g = 1; g < a.trace.size(); ++g) CHECK(a.trace[g] >= a.trace[g - 1]);
    CHECK(a.best_fitness == a.trace.back());
    CHECK(fitness(a.best, t) == a.best_fitness);
    for (double v : a.best) CHECK((v >= kGeneMin && v <= kGeneMax));

    const GARun other = run_ga(c, t, 1);
    CHECK(other.best != a.best);
  }
  SUBCASE("single-member population never changes") {
    GAConfig c;
    c.population = 1;
    c.mutation_rate = 0.0;
    c.crossover_rate = 0.0;
    c.generations = 1;
    const GARun first = run_ga(c, t);
    c.generations = 12;
    const GARun later = run_ga(c, t);
    CHECK(later.best == first.best);
    CHECK(later.trace == std::vector<double>(12, first.trace.front()));
  }
  SUBCASE("repeated runs") {
    const auto runs = run_ga_repeated(small_ga(), t);
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].best == run_ga(small_ga(), t, 0).best);
    CHECK(runs[1].best == run_ga(small_ga(), t, 1).best);
  }
}

TEST_CASE("aggregation") {
  const std::vector<Genome> pair = {filled(1.0), filled(3.0)};
  CHECK(aggregate_runs(pair) == filled(2.0));
  const std::vector<Genome> one = {Genome{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}};
  CHECK(aggregate_runs(one) == one[0]);
  CHECK(code_of([] { aggregate_runs({}); }) == ErrorCode::EmptyList);

  // per-walk coefficient means and their reported average
  const std::vector<Genome> walks = {
      Genome{1.359, 1.666, 2.269, 1.102, 0.986, 0.617, 0.469, 1.042, 0.491},
      Genome{1.132, 1.705, 0.889, 1.081, 0.989, 0.436, 0.778, 0.638, 2.353},
  };
  const Genome reported = {1.245, 1.685, 1.579, 1.091, 0.987, 0.526, 0.623, 0.840, 1.422};
  const Genome mean = aggregate_runs(walks);
  for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(mean[k] - reported[k]) <= 5e-4 + 1e-12);
  CHECK(mean[0] == doctest::Approx(1.2455));
}

TEST_CASE("tuning report files") {
  TempDir dir("report");
  const auto fx = test::synthetic_training(2, 30);
  const TrainingSet t = prepare_training(fx.gated, fx.truth, Tolerance{});
  const auto write = [&](const std::string& tag) {
    const auto runs = run_ga_repeated(small_ga(), t);
    std::vector<Genome> best;
    for (const auto& r : runs) best.push_back(r.best);
    const Genome agg = aggregate_runs(best);
    write_tuning_report(dir / ("r" + tag + ".txt"), small_ga(), runs, agg, fitness(agg, t));
    write_traces_csv(dir / ("t" + tag + ".csv"), runs);
  };
  write("1");
  write("2");
  CHECK(slurp(dir / "r1.txt") == slurp(dir / "r2.txt"));
  CHECK(slurp(dir / "t1.csv") == slurp(dir / "t2.csv"));

  const std::string report = slurp(dir / "r1.txt");
  CHECK(report.find("[runs]") != std::string::npos);
  CHECK(report.find("run 1 = ") != std::string::npos);
  CHECK(report.find("[aggregated]") != std::string::npos);
  CHECK(report.find("columns = BoW-c,BoW-i,GIST-c,GIST-d,GIST-i,LDB-c,LDB-d,LDB-i,CNN-c") != std::string::npos);

  std::istringstream traces(slurp(dir / "t1.csv"));
  std::string line;
  std::getline(traces, line);
  CHECK(line == "run,generation,best_f1");
  std::size_t rows = 0;
  while (std::getline(traces, line)) ++rows;
  CHECK(rows == 2 * small_ga().generations);
}

TEST_CASE("parameter sweeps") {
  const auto fx = test::synthetic_training(21, 60);
  const FusionWeights weights = tuned_fusion_weights();
  const SweepContext ctx(fx.gated, weights, MatchParams{}, fx.truth, Tolerance{});

  CHECK(parse_sweep_parameter("threshold_t") == SweepParameter::Threshold);
  CHECK(parse_sweep_parameter("n_q") == SweepParameter::NQ);
  CHECK_FALSE(parse_sweep_parameter("speed").has_value());

  SUBCASE("threshold reuses one fused matrix and nests the accepted set") {
    std::vector<double> ts;
    for (int k = 0; k <= 20; ++k) ts.push_back(k * 0.05);
    ts.back() = 1.0;
    const SweepResult r = sweep(SweepParameter::Threshold, ts, ctx);
    CHECK(r.score_builds == 1);
    REQUIRE(r.evaluations.size() == ts.size());
    for (std::size_t k = 1; k < ts.size(); ++k) {
      CHECK(r.evaluations[k].metrics.recall <= r.evaluations[k - 1].metrics.recall);
      for (std::size_t q = 0; q < r.decisions[k].size(); ++q) {
        if (r.decisions[k][q].accepted) CHECK(r.decisions[k - 1][q].accepted);
        CHECK(r.decisions[k][q].best_db_index == r.decisions[0][q].best_db_index);
      }
    }
  }
  SUBCASE("speed sweep locks the upper speed to the reciprocal") {
    CHECK(1.0 / 0.4 == 2.5);
    const std::vector<double> vs = {0.2, 0.4, 0.6};
    const SweepResult r = sweep(SweepParameter::VMin, vs, ctx);
    CHECK(r.score_builds == 3);
    MatchParams p;
    p.v_min = 0.4;
    p.v_max = 2.5;
    CHECK(r.decisions[1] == select_matches(ctx.fused_scores(p), p.threshold_t));
  }
  SUBCASE("single-row cones are row-minimum indicators") {
    const std::vector<double> one = {1.0};
    const SweepContext single({fx.gated[3]}, {{fx.gated[3].channel, 1.0}}, MatchParams{}, fx.truth, Tolerance{});
    const SweepResult r = sweep(SweepParameter::NQ, one, single);
    for (const auto& d : r.decisions[0]) CHECK((d.best_score == 0.0 || d.best_score == 1.0));
    MatchParams p;
    p.n_q = 1;
    const ScoreMatrix fused = single.fused_scores(p);
    for (double v : fused.data()) REQUIRE((v == 0.0 || v == 1.0));
  }
  SUBCASE("domain checks") {
    const std::vector<double> descending = {0.5, 0.4};
    CHECK(code_of([&] { sweep(SweepParameter::VMin, descending, ctx); }) == ErrorCode::InvalidRange);
    const std::vector<double> slow = {0.05};
    CHECK(code_of([&] { sweep(SweepParameter::VMin, slow, ctx); }) == ErrorCode::InvalidRange);
    const std::vector<double> fractional = {3.5};
    CHECK(code_of([&] { sweep(SweepParameter::NQ, fractional, ctx); }) == ErrorCode::InvalidRange);
    const std::vector<double> long_cone = {80.0};
    CHECK(code_of([&] { sweep(SweepParameter::NQ, long_cone, ctx); }) == ErrorCode::InvalidRange);
    const std::vector<double> high = {0.5, 1.2};
    CHECK(code_of([&] { sweep(SweepParameter::Threshold, high, ctx); }) == ErrorCode::InvalidRange);
    CHECK(code_of([&] { sweep(SweepParameter::Threshold, {}, ctx); }) == ErrorCode::InvalidRange);
  }
  SUBCASE("csv") {
    TempDir dir("sweep");
    const std::vector<double> ns = {3, 7, 11};
    write_sweep_csv(dir / "s.csv", sweep(SweepParameter::NQ, ns, ctx));
    std::istringstream in(slurp(dir / "s.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "n_q,precision,recall,f1,mean_error,tp,fp,fn");
    std::getline(in, line);
    CHECK(line.rfind("3,", 0) == 0);
  }
}
