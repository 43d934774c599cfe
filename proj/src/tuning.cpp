#include "mpr/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "mpr/error.hpp"
#include "mpr/kernels.hpp"
#include "text_util.hpp"

namespace mpr {

FusionWeights genome_to_weights(const Genome& genome, const ChannelSet& present) {
  FusionWeights w;
  for (std::size_t g = 0; g < genome.size(); ++g) {
    if (present.contains(kCanonicalChannels[g])) w[kCanonicalChannels[g]] = genome[g];
  }
  return w;
}

Genome weights_to_genome(const FusionWeights& weights) {
  Genome g{};
  for (const auto& [c, w] : weights) g[canonical_index(c)] = w;
  return g;
}

void GAConfig::validate() const {
  if (population < 1 || generations < 1 || runs < 1 || tournament < 1) {
    throw Error(ErrorCode::InvalidArgument, "GA population, generations, runs and tournament must be >= 1");
  }
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0) || !(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "GA rates must lie in [0,1]");
  }
  if (!(mutation_sigma >= 0.0) || !std::isfinite(mutation_sigma)) {
    throw Error(ErrorCode::InvalidArgument, "mutation sigma must be finite and >= 0");
  }
}

ChannelSet TrainingSet::channels() const {
  ChannelSet out;
  for (const auto& [c, m] : channel_scores) out.insert(c);
  return out;
}

TrainingSet prepare_training(std::span<const GatedDistanceMatrix> gated, const GroundTruth& gt, Tolerance tol,
                             double threshold_t) {
  MatchParams single;
  single.n_q = 1;  // cones degenerate to the anchor row: coefficients see no sequence effect
  TrainingSet t;
  for (const auto& g : gated) t.channel_scores.emplace(g.channel, compute_score_matrix(g, single));
  t.ground_truth = gt;
  t.tolerance = tol;
  t.threshold_t = threshold_t;
  return t;
}

double fitness(const Genome& genome, const TrainingSet& training) {
  const FusionWeights weights = genome_to_weights(genome, training.channels());
  if (std::none_of(weights.begin(), weights.end(), [](const auto& kv) { return kv.second > 0.0; })) return 0.0;
  const ScoreMatrix fused = fuse_score_matrices(training.channel_scores, weights);
  const auto decisions = select_matches(fused, training.threshold_t);
  return compute_metrics(count_outcomes(decisions, training.ground_truth, training.tolerance)).f1;
}

namespace {

std::mt19937_64 run_rng(std::uint64_t seed, std::size_t run) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(run), 0x6a09e667u};
  return std::mt19937_64(seq);
}

std::size_t best_index(const std::vector<double>& scores) {
  return std::size_t(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<double> evaluate_population(const std::vector<Genome>& population, const TrainingSet& training) {
  std::vector<double> scores(population.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(population.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < n; ++p) scores[std::size_t(p)] = fitness(population[std::size_t(p)], training);
  return scores;
}

}  // namespace

GARun run_ga(const GAConfig& config, const TrainingSet& training, std::size_t run_index) {
  config.validate();
  auto rng = run_rng(config.seed, run_index);
  std::uniform_real_distribution<double> gene(kGeneMin, kGeneMax);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, config.mutation_sigma);
  std::uniform_int_distribution<std::size_t> pick(0, config.population - 1);

  std::vector<Genome> population(config.population);
  for (auto& g : population) {
    for (double& v : g) v = gene(rng);
  }

  GARun run;
  std::vector<double> scores;
  for (std::size_t generation = 0;; ++generation) {
    scores = evaluate_population(population, training);
    const std::size_t elite = best_index(scores);
    run.trace.push_back(scores[elite]);
    if (generation + 1 == config.generations) break;

    const auto tournament = [&] {
      std::size_t winner = pick(rng);
      for (std::size_t t = 1; t < config.tournament; ++t) {
        const std::size_t challenger = pick(rng);
        if (scores[challenger] > scores[winner] || (scores[challenger] == scores[winner] && challenger < winner)) {
          winner = challenger;
        }
      }
      return winner;
    };

    std::vector<Genome> next;
    next.reserve(config.population);
    next.push_back(population[elite]);
    while (next.size() < config.population) {
      const Genome& a = population[tournament()];
      const Genome& b = population[tournament()];
      Genome child = a;
      if (unit(rng) < config.crossover_rate) {
        for (std::size_t k = 0; k < child.size(); ++k) {
          if (unit(rng) < 0.5) child[k] = b[k];
        }
      }
      for (double& v : child) {
        if (unit(rng) < config.mutation_rate) v = std::clamp(v + jitter(rng), kGeneMin, kGeneMax);
      }
      next.push_back(child);
    }
    population = std::move(next);
  }
  const std::size_t best = best_index(scores);
  run.best = population[best];
  run.best_fitness = scores[best];
  return run;
}

std::vector<GARun> run_ga_repeated(const GAConfig& config, const TrainingSet& training) {
  std::vector<GARun> runs;
  runs.reserve(config.runs);
  for (std::size_t r = 0; r < config.runs; ++r) runs.push_back(run_ga(config, training, r));
  return runs;
}

Genome aggregate_runs(std::span<const Genome> genomes) {
  if (genomes.empty()) throw Error(ErrorCode::EmptyList, "no genomes to aggregate");
  Genome mean{};
  for (const auto& g : genomes) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += g[k];
  }
  for (double& v : mean) v /= double(genomes.size());
  return mean;
}

namespace {

std::string genome_row(const Genome& g) {
  std::string out;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (k) out += ',';
    out += detail::format_double(g[k]);
  }
  return out;
}

}  // namespace

void write_tuning_report(const std::filesystem::path& path, const GAConfig& config, std::span<const GARun> runs,
                         const Genome& aggregated, double aggregated_fitness) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# fusion coefficient search\n"
      << "population = " << config.population << '\n'
      << "generations = " << config.generations << '\n'
      << "runs = " << config.runs << '\n'
      << "seed = " << config.seed << '\n'
      << "columns = ";
  for (std::size_t k = 0; k < kCanonicalChannels.size(); ++k) {
    out << (k ? "," : "") << channel_label(kCanonicalChannels[k]);
  }
  out << "\n\n[runs]\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out << "run " << r << " = " << genome_row(runs[r].best) << " ; f1 = " << detail::format_double(runs[r].best_fitness)
        << '\n';
  }
  out << "\n[aggregated]\n"
      << "genome = " << genome_row(aggregated) << '\n'
      << "f1 = " << detail::format_double(aggregated_fitness) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_traces_csv(const std::filesystem::path& path, std::span<const GARun> runs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "run,generation,best_f1\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (std::size_t g = 0; g < runs[r].trace.size(); ++g) {
      out << r << ',' << g << ',' << detail::format_double(runs[r].trace[g]) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// --- sweeps ---------------------------------------------------------------------------

std::string_view sweep_parameter_name(SweepParameter p) noexcept {
  switch (p) {
    case SweepParameter::VMin: return "v_min";
    case SweepParameter::NQ: return "n_q";
    case SweepParameter::Threshold: return "t";
  }
  return "?";
}

std::optional<SweepParameter> parse_sweep_parameter(std::string_view name) noexcept {
  if (name == "v_min") return SweepParameter::VMin;
  if (name == "n_q") return SweepParameter::NQ;
  if (name == "t" || name == "threshold_t") return SweepParameter::Threshold;
  return std::nullopt;
}

SweepContext::SweepContext(std::vector<GatedDistanceMatrix> gated, FusionWeights weights, MatchParams base,
                           GroundTruth gt, Tolerance tol, bool error_accepted_only)
    : gated_(std::move(gated)),
      weights_(std::move(weights)),
      base_(base),
      gt_(std::move(gt)),
      tol_(tol),
      error_accepted_only_(error_accepted_only) {
  base_.validate();
  if (gated_.empty()) throw Error(ErrorCode::AllWeightsZero, "sweep needs at least one channel");
  for (const auto& g : gated_) minima_.push_back(kernels::row_minima_parallel(g));
}

ScoreMatrix SweepContext::fused_scores(const MatchParams& params) const {
  params.validate();
  std::map<Channel, ScoreMatrix> scores;
  for (std::size_t c = 0; c < gated_.size(); ++c) {
    scores.emplace(gated_[c].channel, kernels::score_matrix_parallel(gated_[c], minima_[c], params));
  }
  return fuse_score_matrices(scores, weights_);
}

SweepResult sweep(SweepParameter parameter, std::span<const double> values, const SweepContext& context) {
  if (values.empty()) throw Error(ErrorCode::InvalidRange, "empty sweep");
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (k > 0 && !(v > values[k - 1])) throw Error(ErrorCode::InvalidRange, "sweep values must be strictly increasing");
    bool ok = false;
    switch (parameter) {
      case SweepParameter::VMin: ok = v >= 0.1 && v <= 0.75; break;
      case SweepParameter::NQ: ok = v >= 1.0 && v <= 79.0 && v == std::floor(v); break;
      case SweepParameter::Threshold: ok = v >= 0.0 && v <= 1.0; break;
    }
    if (!ok) {
      throw Error(ErrorCode::InvalidRange, detail::format_double(v) + " outside the " +
                                               std::string(sweep_parameter_name(parameter)) + " sweep domain");
    }
  }

  SweepResult result;
  result.parameter = parameter;
  result.values.assign(values.begin(), values.end());

  ScoreMatrix shared;
  if (parameter == SweepParameter::Threshold) {
    shared = context.fused_scores(context.base());
    result.score_builds = 1;
  }
  for (double v : values) {
    MatchParams params = context.base();
    std::vector<MatchDecision> decisions;
    switch (parameter) {
      case SweepParameter::Threshold:
        decisions = select_matches(shared, v);
        break;
      case SweepParameter::VMin:
        params.v_min = v;
        params.v_max = 1.0 / v;
        decisions = select_matches(context.fused_scores(params), params.threshold_t);
        ++result.score_builds;
        break;
      case SweepParameter::NQ:
        params.n_q = std::size_t(v);
        decisions = select_matches(context.fused_scores(params), params.threshold_t);
        ++result.score_builds;
        break;
    }
    result.evaluations.push_back(
        evaluate(decisions, context.ground_truth(), context.tolerance(), context.error_accepted_only()));
    result.decisions.push_back(std::move(decisions));
  }
  return result;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << sweep_parameter_name(result.parameter) << ",precision,recall,f1,mean_error,tp,fp,fn\n";
  for (std::size_t k = 0; k < result.values.size(); ++k) {
    const auto& e = result.evaluations[k];
    out << detail::format_double(result.values[k]) << ',' << detail::format_double(e.metrics.precision) << ','
        << detail::format_double(e.metrics.recall) << ',' << detail::format_double(e.metrics.f1) << ','
        << detail::format_double(e.metrics.mean_error) << ',' << e.counts.tp << ',' << e.counts.fp << ','
        << e.counts.fn << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mpr
