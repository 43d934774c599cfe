// mpr: multimodal place recognition command line.
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mpr/config.hpp"
#include "mpr/error.hpp"
#include "mpr/kernels.hpp"
#include "mpr/pipeline.hpp"

namespace {

void print_files(const mpr::RunReport& report) {
  for (const auto& f : report.files) std::cout << "wrote " << f.string() << '\n';
}

void print_evaluation(const mpr::Evaluation& e) {
  std::cout << "precision " << e.metrics.precision << "  recall " << e.metrics.recall << "  f1 " << e.metrics.f1
            << "  mean_error " << e.metrics.mean_error << "  (tp " << e.counts.tp << ", fp " << e.counts.fp << ", fn "
            << e.counts.fn << ")\n";
}

mpr::RunConfig load_for(const std::string& path, mpr::RunMode expected) {
  mpr::RunConfig cfg = mpr::parse_config(path);
  if (cfg.mode != expected) {
    throw mpr::Error(mpr::ErrorCode::InvalidArgument, "config mode is " + std::string(mpr::run_mode_name(cfg.mode)) +
                                                          ", expected " + std::string(mpr::run_mode_name(expected)));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal sequence-based place recognition"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Match a query sequence against a database (testing mode)");
  run->add_option("--config", config_path, "Configuration file")->required();

  auto* tune = app.add_subcommand("tune", "Search fusion coefficients with a genetic algorithm");
  tune->add_option("--config", config_path, "Configuration file")->required();

  std::string sweep_param;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one matching parameter");
  sweep_cmd->add_option("--config", config_path, "Configuration file")->required();
  sweep_cmd->add_option("--param", sweep_param, "v_min, n_q or t")->required();

  std::uint64_t seed = 1;
  std::size_t length = 200;
  std::string out;
  mpr::Perturbation perturbation;
  auto* synth = app.add_subcommand("synth", "Render a synthetic query/database pair");
  synth->add_option("--seed", seed, "Random seed")->required();
  synth->add_option("--len", length, "Frames per sequence")->required()->check(CLI::PositiveNumber);
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--viewpoint", perturbation.viewpoint_px, "Max horizontal viewpoint shift (px)");
  synth->add_option("--brightness", perturbation.brightness_gain, "Exposure gain of the query (factor 1+gain)");
  synth->add_option("--occlusion", perturbation.occlusion_rate, "Probability of a passer-by per query frame");
  synth->add_option("--gnss-noise", perturbation.gnss_noise_m, "Radial RMS of query GNSS noise (m)");

  std::string train_dir;
  int k = 10;
  int depth = 5;
  std::uint64_t vocab_seed = 1;
  int max_keypoints = 500;
  auto* vocab = app.add_subcommand("vocab", "Train a binary vocabulary tree from a sequence");
  vocab->add_option("--train", train_dir, "Sequence root with color/ (and optional infrared/)")->required();
  vocab->add_option("--out", out, "Vocabulary file")->required();
  vocab->add_option("--k", k, "Branching factor");
  vocab->add_option("--L", depth, "Depth");
  vocab->add_option("--seed", vocab_seed, "Random seed");
  vocab->add_option("--max-keypoints", max_keypoints, "ORB features per image");

  CLI11_PARSE(app, argc, argv);

  try {
    mpr::kernels::configure_threads_from_env();
    if (*run) {
      const auto report = mpr::run_testing(load_for(config_path, mpr::RunMode::Testing));
      if (report.evaluation) print_evaluation(*report.evaluation);
      std::cout << "mean per query frame: "
                << (report.extraction_ms + report.matching_ms) / double(std::max<std::size_t>(report.frames.size(), 1))
                << " ms\n";
      print_files(report);
    } else if (*tune) {
      const auto report = mpr::run_tuning(load_for(config_path, mpr::RunMode::Tuning));
      std::cout << "aggregated f1 " << report.aggregated_fitness << '\n';
      print_files(report);
    } else if (*sweep_cmd) {
      const auto param = mpr::parse_sweep_parameter(sweep_param);
      if (!param) throw mpr::Error(mpr::ErrorCode::InvalidArgument, "unknown sweep parameter '" + sweep_param + "'");
      print_files(mpr::run_sweep(load_for(config_path, mpr::RunMode::Sweep), *param));
    } else if (*synth) {
      mpr::write_synthetic_dataset(out, seed, length, perturbation);
      std::cout << "wrote " << out << '\n';
    } else if (*vocab) {
      const auto v = mpr::train_vocabulary(train_dir, k, depth, vocab_seed, max_keypoints);
      v.save(out);
      std::cout << "wrote " << out << " (" << v.word_count() << " words)\n";
    }
  } catch (const mpr::Error& e) {
    std::cerr << "mpr: " << mpr::to_string(e.code()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mpr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
