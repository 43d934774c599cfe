#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "mpr/error.hpp"
#include "mpr/pipeline.hpp"
#include "support.hpp"

using namespace mpr;
using test::TempDir;
namespace fs = std::filesystem;

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

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t entries(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  return std::size_t(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

/// Small synthetic walk on disk, shared by the cases below.
const fs::path& dataset() {
  static TempDir dir("pipe");
  static const bool ready = [] {
    write_synthetic_dataset(dir.path(), 5, 40, {});
    return true;
  }();
  (void)ready;
  return dir.path();
}

RunConfig config_with(const std::string& extra, const fs::path& out) {
  RunConfig c = parse_config_text(
      "mode = testing\n[dataset]\nquery = query\ndatabase = database\nground_truth = gt.csv\n"
      "query_cnn = query_cnn\ndatabase_cnn = database_cnn\nvocab_k = 6\nvocab_L = 3\n" +
          extra,
      dataset());
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("synthetic dataset layout") {
  const fs::path& d = dataset();
  for (const char* sub : {"query/color", "query/depth", "query/infrared", "database/color", "query_cnn", "database_cnn"}) {
    CHECK(fs::is_directory(d / sub));
  }
  CHECK(fs::exists(d / "gt.csv"));
  CHECK(fs::exists(d / "query" / "gnss.csv"));
  const RunConfig c = parse_config(d / "config.ini");
  CHECK(c.mode == RunMode::Testing);
  CHECK(c.channels.size() == 9);
  CHECK(c.output_dir == d / "results");
}

TEST_CASE("testing mode self-match") {
  TempDir out("run");
  const RunConfig c = config_with("", out.path());
  const RunReport r = run_testing(c);
  REQUIRE(r.evaluation.has_value());
  CHECK(r.evaluation->metrics.precision == 1.0);
  CHECK(r.evaluation->metrics.recall == 1.0);
  CHECK(r.evaluation->metrics.mean_error == 0.0);
  REQUIRE(r.decisions.size() == 40);
  for (const auto& d : r.decisions) CHECK(d.best_db_index == d.query_index);
  REQUIRE(r.frames.size() == 40);
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    CHECK(r.frames[k].query_index == k);
    CHECK(r.frames[k].extraction_ms > 0.0);
    CHECK(r.frames[k].matching_ms >= 0.0);
  }
  for (const char* f : {"matches.csv", "metrics.txt", "visualization.csv", "timing.csv", "timing.txt"}) {
    CHECK(fs::exists(out / f));
  }
  for (const auto& f : r.files) CHECK(fs::exists(f));
  CHECK(r.files.size() == 5);
  CHECK_FALSE(fs::exists(out / ".mpr-staging"));
  CHECK(read_matches_csv(out / "matches.csv") == r.decisions);
}

TEST_CASE("streaming equals batch scoring") {
  TempDir out("dump");
  const RunConfig c = config_with("[channels]\nenabled = gist.c, ldb.d, gist.i\n[output]\ndump_scores = true\n", out.path());
  const RunReport r = run_testing(c);
  CHECK(fs::exists(out / "scores_GIST-c.f32"));
  CHECK(fs::exists(out / "scores_LDB-d.f32.txt"));

  // rebuild the fused matrix from the dumps and select offline
  std::map<Channel, ScoreMatrix> scores;
  for (const Channel& ch : c.channels) {
    std::ifstream in(out / ("scores_" + channel_label(ch) + ".f32"), std::ios::binary);
    ScoreMatrix m(40, 40);
    for (double& v : m.data()) {
      float x = 0;
      in.read(reinterpret_cast<char*>(&x), sizeof x);
      v = x;
    }
    scores.emplace(ch, m);
  }
  const auto offline = select_matches(fuse_score_matrices(scores, c.weights), c.match.threshold_t);
  for (std::size_t k = 0; k < offline.size(); ++k) CHECK(offline[k].best_db_index == r.decisions[k].best_db_index);
}

TEST_CASE("failures leave no outputs") {
  TempDir out("fail");
  const fs::path target = out / "results";

  RunConfig none = config_with("[channels]\nenabled = none\n", target);
  CHECK(code_of([&] { run_testing(none); }) == ErrorCode::AllWeightsZero);
  CHECK(entries(target) == 0);

  RunConfig missing = config_with("", target);
  missing.query_root = out / "nowhere";
  CHECK_THROWS_AS(run_testing(missing), Error);
  CHECK(entries(target) == 0);

  // a CNN vector vanishes halfway through the query walk
  TempDir broken("broken");
  fs::copy(dataset() / "query_cnn", broken.path(), fs::copy_options::recursive);
  fs::remove(broken / "000020.f32");
  RunConfig midway = config_with("[channels]\nenabled = cnn.c, gist.c\n", target);
  midway.query_cnn = broken.path();
  CHECK(code_of([&] { run_testing(midway); }) == ErrorCode::IoError);
  CHECK(entries(target) == 0);
}

TEST_CASE("tuning mode") {
  TempDir out("tune");
  const std::string tiny =
      "[channels]\nenabled = gist.c, ldb.c, gist.d\n"
      "[tuning]\npopulation = 1\ngenerations = 1\nruns = 1\n";
  RunConfig c = config_with(tiny, out / "a");
  c.mode = RunMode::Tuning;
  const RunReport r = run_tuning(c);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].trace.size() == 1);
  const std::string traces = slurp(out / "a" / "ga_traces.csv");
  CHECK(traces.find("run,generation,best_f1\n0,0,") == 0);
  CHECK(std::count(traces.begin(), traces.end(), '\n') == 2);

  RunConfig longer = config_with(
      "[channels]\nenabled = gist.c, ldb.c, gist.d\n"
      "[tuning]\npopulation = 6\ngenerations = 4\nruns = 2\nseed = 5\nchain_sweeps = true\nsweep.t = 0:0.5:1\n",
      out / "b");
  longer.mode = RunMode::Tuning;
  run_tuning(longer);
  const std::string first = slurp(out / "b" / "tuning_report.txt");
  longer.output_dir = out / "c";
  run_tuning(longer);
  CHECK(slurp(out / "c" / "tuning_report.txt") == first);
  CHECK(slurp(out / "c" / "ga_traces.csv") == slurp(out / "b" / "ga_traces.csv"));
  CHECK(fs::exists(out / "c" / "sweep_t.csv"));

  RunConfig no_truth = c;
  no_truth.ground_truth.reset();
  CHECK(code_of([&] { run_tuning(no_truth); }) == ErrorCode::MissingRequired);
}

TEST_CASE("sweep mode") {
  TempDir out("sweep");
  RunConfig c = config_with("[channels]\nenabled = gist.c, ldb.c\n[tuning]\nsweep.n_q = 1, 5, 9\n", out.path());
  c.mode = RunMode::Sweep;
  const RunReport r = run_sweep(c, SweepParameter::NQ);
  REQUIRE(r.sweeps.size() == 1);
  CHECK(r.sweeps[0].values == std::vector<double>{1, 5, 9});
  CHECK(fs::exists(out / "sweep_n_q.csv"));
  const RunReport t = run_sweep(c, SweepParameter::Threshold);
  CHECK(t.sweeps[0].values.size() == 21);
  for (std::size_t k = 1; k < t.sweeps[0].values.size(); ++k) {
    CHECK(t.sweeps[0].evaluations[k].metrics.recall <= t.sweeps[0].evaluations[k - 1].metrics.recall);
  }
}

TEST_CASE("vocabulary training from a walk") {
  const Vocabulary a = train_vocabulary(dataset() / "database", 5, 2, 3, 100);
  const Vocabulary b = train_vocabulary(dataset() / "database", 5, 2, 3, 100);
  CHECK(a == b);
  CHECK(a.word_count() <= 25);
  CHECK(a.word_count() > 1);
}

TEST_CASE("trained and loaded vocabularies give identical runs") {
  TempDir out("vocab-run");
  const RunConfig trained = config_with("[channels]\nenabled = bow.c, bow.i\n[output]\ndump_scores = true\n", out / "a");
  train_vocabulary(dataset() / "database", trained.vocab_k, trained.vocab_depth, trained.vocab_seed,
                   trained.max_keypoints)
      .save(out / "v.bin");
  RunConfig loaded = trained;
  loaded.vocabulary = out / "v.bin";
  loaded.output_dir = out / "b";
  const RunReport a = run_testing(trained);
  const RunReport b = run_testing(loaded);
  CHECK(a.decisions == b.decisions);
  for (const char* f : {"scores_BoW-c.f32", "scores_BoW-i.f32"}) CHECK(slurp(out / "a" / f) == slurp(out / "b" / f));
}

TEST_CASE("command line") {
  TempDir dir("cli");
  const std::string cli = MPR_CLI_PATH;
  const auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " >" + (dir / "log.txt").string() + " 2>&1").c_str());
  };
  CHECK(run("synth --seed 3 --len 12 --out " + (dir / "walk").string()) == 0);
  CHECK(fs::exists(dir / "walk" / "config.ini"));
  CHECK(run("run --config " + (dir / "walk" / "config.ini").string()) == 0);
  CHECK(fs::exists(dir / "walk" / "results" / "matches.csv"));
  CHECK(run("vocab --train " + (dir / "walk" / "database").string() + " --out " + (dir / "v.bin").string() +
            " --k 4 --L 2 --seed 1") == 0);
  CHECK(Vocabulary::load(dir / "v.bin").word_count() <= 16);

  // wrong mode for the subcommand and unknown parameters fail with a diagnostic
  CHECK(run("tune --config " + (dir / "walk" / "config.ini").string()) != 0);
  CHECK(slurp(dir / "log.txt").rfind("mpr: ", 0) == 0);
  CHECK(run("sweep --config " + (dir / "walk" / "config.ini").string() + " --param speed") != 0);
  CHECK(run("run") != 0);
  CHECK(run("bogus") != 0);
}
