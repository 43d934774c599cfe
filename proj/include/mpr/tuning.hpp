#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mpr/evaluation.hpp"
#include "mpr/matching.hpp"

namespace mpr {

/// Nine fusion coefficients in kCanonicalChannels order.
using Genome = std::array<double, 9>;

inline constexpr double kGeneMin = 0.0;
inline constexpr double kGeneMax = 4.0;

FusionWeights genome_to_weights(const Genome& genome, const ChannelSet& present);
Genome weights_to_genome(const FusionWeights& weights);

struct GAConfig {
  std::size_t population = 50;
  std::size_t generations = 80;
  std::size_t runs = 15;
  double mutation_rate = 0.1;
  double crossover_rate = 0.9;
  double mutation_sigma = 0.4;
  std::size_t tournament = 3;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const GAConfig&) const = default;
};

/// Channel score matrices computed once with single-row cones, plus what the
/// fitness needs to evaluate a weighting.
struct TrainingSet {
  std::map<Channel, ScoreMatrix> channel_scores;
  GroundTruth ground_truth;
  Tolerance tolerance;
  double threshold_t = 0.0;

  ChannelSet channels() const;
};

TrainingSet prepare_training(std::span<const GatedDistanceMatrix> gated, const GroundTruth& gt, Tolerance tol,
                             double threshold_t = 0.0);

/// F1 of the decisions induced by fusing with the genome; 0 when every present
/// channel has a zero coefficient.
double fitness(const Genome& genome, const TrainingSet& training);

struct GARun {
  Genome best{};
  double best_fitness = 0.0;
  std::vector<double> trace;  // best fitness per generation
};

/// One elitist run (tournament selection, uniform crossover, clamped Gaussian
/// mutation). The run's RNG is seeded from (config.seed, run_index).
GARun run_ga(const GAConfig& config, const TrainingSet& training, std::size_t run_index = 0);

std::vector<GARun> run_ga_repeated(const GAConfig& config, const TrainingSet& training);

/// Per-gene arithmetic mean; throws EmptyList on no input.
Genome aggregate_runs(std::span<const Genome> genomes);

void write_tuning_report(const std::filesystem::path& path, const GAConfig& config, std::span<const GARun> runs,
                         const Genome& aggregated, double aggregated_fitness);
void write_traces_csv(const std::filesystem::path& path, std::span<const GARun> runs);

// --- parameter sweeps -----------------------------------------------------------------

enum class SweepParameter { VMin, NQ, Threshold };

std::string_view sweep_parameter_name(SweepParameter p) noexcept;
std::optional<SweepParameter> parse_sweep_parameter(std::string_view name) noexcept;

/// Immutable inputs shared by every sweep point.
class SweepContext {
 public:
  SweepContext(std::vector<GatedDistanceMatrix> gated, FusionWeights weights, MatchParams base, GroundTruth gt,
               Tolerance tol, bool error_accepted_only = false);

  const std::vector<GatedDistanceMatrix>& gated() const noexcept { return gated_; }
  const std::vector<std::vector<RowMinimum>>& minima() const noexcept { return minima_; }
  const FusionWeights& weights() const noexcept { return weights_; }
  const MatchParams& base() const noexcept { return base_; }
  const GroundTruth& ground_truth() const noexcept { return gt_; }
  Tolerance tolerance() const noexcept { return tol_; }
  bool error_accepted_only() const noexcept { return error_accepted_only_; }

  /// Fused scores for the given cone parameters.
  ScoreMatrix fused_scores(const MatchParams& params) const;

 private:
  std::vector<GatedDistanceMatrix> gated_;
  std::vector<std::vector<RowMinimum>> minima_;
  FusionWeights weights_;
  MatchParams base_;
  GroundTruth gt_;
  Tolerance tol_;
  bool error_accepted_only_;
};

struct SweepResult {
  SweepParameter parameter = SweepParameter::Threshold;
  std::vector<double> values;
  std::vector<Evaluation> evaluations;
  std::vector<std::vector<MatchDecision>> decisions;
  /// Times the fused score matrix was rebuilt (1 for threshold sweeps).
  std::size_t score_builds = 0;
};

/// Re-run matching and evaluation for each value with everything else fixed.
/// A v_min sweep sets v_max = 1 / v_min. Values must be strictly increasing and
/// inside the parameter domain (v_min in [0.1, 0.75], integral n_q in [1, 79],
/// t in [0, 1]), otherwise InvalidRange.
SweepResult sweep(SweepParameter parameter, std::span<const double> values, const SweepContext& context);

/// CSV `value,precision,recall,f1,mean_error,tp,fp,fn`.
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);

}  // namespace mpr
