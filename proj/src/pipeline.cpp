#include "mpr/pipeline.hpp"

#include <chrono>
#include <exception>
#include <fstream>
#include <map>

#include <opencv2/imgproc.hpp>

#include "mpr/error.hpp"
#include "mpr/kernels.hpp"
#include "text_util.hpp"

namespace mpr {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Files are written into a hidden staging directory and moved next to any
// earlier outputs only once the whole run has succeeded.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path dir) : dir_(std::move(dir)), staging_(dir_ / ".mpr-staging") {
    fs::create_directories(dir_);
    fs::remove_all(staging_);
    fs::create_directory(staging_);
  }
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;
  ~StagedOutput() {
    std::error_code ec;
    for (const auto& f : moved_) fs::remove(f, ec);
    fs::remove_all(staging_, ec);
  }

  fs::path file(const std::string& name) {
    names_.push_back(name);
    return staging_ / name;
  }

  std::vector<fs::path> commit() {
    for (const auto& name : names_) {
      fs::rename(staging_ / name, dir_ / name);
      moved_.push_back(dir_ / name);
    }
    std::vector<fs::path> done = std::move(moved_);
    moved_.clear();
    return done;
  }

 private:
  fs::path dir_;
  fs::path staging_;
  std::vector<std::string> names_;
  std::vector<fs::path> moved_;
};

bool needs_vocabulary(const ChannelSet& channels) {
  return std::any_of(channels.begin(), channels.end(), [](const Channel& c) { return c.kind == DescriptorKind::BoW; });
}

using FrameFeatures = std::map<Modality, std::vector<BinaryFeature>>;

std::vector<FrameFeatures> collect_features(const Sequence& seq, const ModalitySet& modalities, const OrbParams& orb) {
  std::vector<FrameFeatures> per_frame(seq.length());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(seq.length());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& frame = seq.frames[std::size_t(i)];
      for (Modality m : modalities) {
        if (!frame.has(m)) continue;
        auto& feats = per_frame[std::size_t(i)][m];
        for (const auto& kp : detect_and_describe(to_gray(frame.image(m)), orb)) feats.push_back(kp.descriptor);
      }
    } catch (...) {
#pragma omp critical(mpr_pipeline_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return per_frame;
}

std::vector<BinaryFeature> flatten(const std::vector<FrameFeatures>& per_frame) {
  std::vector<BinaryFeature> all;
  for (const auto& frame : per_frame) {
    for (const auto& [m, feats] : frame) all.insert(all.end(), feats.begin(), feats.end());
  }
  return all;
}

ModalitySet bow_modalities(const ChannelSet& channels) {
  ModalitySet out;
  for (const auto& c : channels) {
    if (c.kind == DescriptorKind::BoW) out.insert(c.modality);
  }
  return out;
}

// Vocabulary for the run, plus the database keypoints it was trained on so they are not detected twice.
struct DatabaseVocabulary {
  std::optional<Vocabulary> vocab;
  std::vector<FrameFeatures> features;  // empty when the vocabulary came from disk
  const Vocabulary* get() const { return vocab ? &*vocab : nullptr; }
};

DatabaseVocabulary obtain_vocabulary(const RunConfig& cfg, const Sequence& database) {
  DatabaseVocabulary out;
  if (!needs_vocabulary(cfg.channels)) return out;
  if (cfg.vocabulary) {
    out.vocab = Vocabulary::load(*cfg.vocabulary);
    return out;
  }
  out.features = collect_features(database, bow_modalities(cfg.channels), cfg.extraction().orb);
  out.vocab = Vocabulary::build(flatten(out.features), cfg.vocab_k, cfg.vocab_depth, cfg.vocab_seed);
  return out;
}

std::optional<ExternalSource> cnn_source(const std::optional<fs::path>& dir, std::size_t dim) {
  if (!dir) return std::nullopt;
  return ExternalSource{*dir, dim};
}

std::vector<DescriptorSet> extract_sequence(const Sequence& seq, const ExtractionConfig& ec, const Vocabulary* vocab,
                                            const std::optional<ExternalSource>& cnn,
                                            const std::vector<FrameFeatures>* cached = nullptr) {
  const bool reuse = cached != nullptr && !cached->empty() && vocab != nullptr;
  ExtractionConfig rest = ec;
  if (reuse) std::erase_if(rest.channels, [](const Channel& c) { return c.kind == DescriptorKind::BoW; });
  std::vector<DescriptorSet> out(seq.length());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(seq.length());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto k = std::size_t(i);
      out[k] = extract_all(seq.frames[k], rest, vocab, cnn);
      if (!reuse) continue;
      for (const Channel& c : ec.channels) {
        if (c.kind != DescriptorKind::BoW) continue;
        const auto it = (*cached)[k].find(c.modality);
        if (it == (*cached)[k].end()) {
          throw Error(ErrorCode::MissingModality, "frame " + std::to_string(seq.frames[k].index) + " has no " +
                                                      std::string(modality_name(c.modality)) + " image");
        }
        out[k].emplace(c, extract_bow(it->second, *vocab, c.modality));
      }
    } catch (...) {
#pragma omp critical(mpr_pipeline_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// Loaded and described sequences with gated per-channel distances.
struct Prepared {
  std::vector<GatedDistanceMatrix> gated;
  GroundTruth gt;
};

Prepared prepare(const RunConfig& cfg) {
  if (cfg.channels.empty()) throw Error(ErrorCode::AllWeightsZero, "no channels enabled");
  if (!cfg.ground_truth) throw Error(ErrorCode::MissingRequired, "ground truth is required");
  const ModalitySet mods = required_modalities(cfg.channels);
  const Sequence db = load_sequence(cfg.database_root, SequenceRole::Database, mods);
  const Sequence query = load_sequence(cfg.query_root, SequenceRole::Query, mods);
  Prepared p;
  p.gt = load_ground_truth(*cfg.ground_truth, query.length(), db.length());
  const auto vocab = obtain_vocabulary(cfg, db);
  const ExtractionConfig ec = cfg.extraction();
  const auto db_desc = extract_sequence(db, ec, vocab.get(), cnn_source(cfg.database_cnn, cfg.cnn_dim), &vocab.features);
  const auto q_desc = extract_sequence(query, ec, vocab.get(), cnn_source(cfg.query_cnn, cfg.cnn_dim));
  const auto q_fixes = query.fixes();
  const auto db_fixes = db.fixes();
  const auto mask = gnss_exclusion_mask(q_fixes, db_fixes, cfg.match.gate_m);
  for (const auto& c : cfg.channels) p.gated.push_back(compute_distance_matrix(q_desc, db_desc, c, mask, cfg.match.gate_m));
  return p;
}

void write_timing(const fs::path& csv, const fs::path& summary, const RunReport& r) {
  std::ofstream out(csv);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + csv.string());
  out << "query_index,extraction_ms,matching_ms\n";
  for (const auto& f : r.frames) {
    out << f.query_index << ',' << detail::format_double(f.extraction_ms) << ','
        << detail::format_double(f.matching_ms) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + csv.string());

  std::ofstream s(summary);
  if (!s) throw Error(ErrorCode::IoError, "cannot write " + summary.string());
  const double frames = r.frames.empty() ? 1.0 : double(r.frames.size());
  s << "database_ms = " << detail::format_double(r.database_ms) << '\n'
    << "extraction_ms = " << detail::format_double(r.extraction_ms) << '\n'
    << "matching_ms = " << detail::format_double(r.matching_ms) << '\n'
    << "overall_ms = " << detail::format_double(r.overall_ms) << '\n'
    << "mean_extraction_ms_per_query = " << detail::format_double(r.extraction_ms / frames) << '\n'
    << "mean_matching_ms_per_query = " << detail::format_double(r.matching_ms / frames) << '\n';
  if (!s) throw Error(ErrorCode::IoError, "write failed for " + summary.string());
}

std::string sweep_file_name(SweepParameter p) { return "sweep_" + std::string(sweep_parameter_name(p)) + ".csv"; }

}  // namespace

RunReport run_testing(const RunConfig& cfg) {
  const auto start = Clock::now();
  const std::vector<Channel> channel_list(cfg.channels.begin(), cfg.channels.end());
  if (channel_list.empty()) throw Error(ErrorCode::AllWeightsZero, "no channels enabled");
  detail::align_weights(channel_list, cfg.weights);

  RunReport report;
  const ModalitySet mods = required_modalities(cfg.channels);
  const Sequence db = load_sequence(cfg.database_root, SequenceRole::Database, mods);
  const Sequence query = load_sequence(cfg.query_root, SequenceRole::Query, mods);
  std::optional<GroundTruth> gt;
  if (cfg.ground_truth) gt = load_ground_truth(*cfg.ground_truth, query.length(), db.length());

  const auto vocab = obtain_vocabulary(cfg, db);
  const Vocabulary* vocab_ptr = vocab.get();
  const ExtractionConfig ec = cfg.extraction();
  std::vector<DescriptorSet> db_desc =
      extract_sequence(db, ec, vocab_ptr, cnn_source(cfg.database_cnn, cfg.cnn_dim), &vocab.features);
  OnlineMatcher matcher(cfg.dump_scores ? db_desc : std::move(db_desc), db.fixes(), cfg.channels, cfg.match,
                        cfg.weights);
  report.database_ms = ms_since(start);

  const auto query_cnn = cnn_source(cfg.query_cnn, cfg.cnn_dim);
  std::vector<DescriptorSet> query_desc;
  if (cfg.dump_scores) query_desc.reserve(query.length());
  for (const auto& frame : query.frames) {
    FrameTiming t;
    t.query_index = frame.index;
    auto stage = Clock::now();
    DescriptorSet d = extract_all(frame, ec, vocab_ptr, query_cnn);
    t.extraction_ms = ms_since(stage);
    stage = Clock::now();
    matcher.push(d, frame.gnss);
    t.matching_ms = ms_since(stage);
    report.extraction_ms += t.extraction_ms;
    report.matching_ms += t.matching_ms;
    report.frames.push_back(t);
    if (cfg.dump_scores) query_desc.push_back(std::move(d));
  }
  report.decisions = matcher.decisions();
  if (gt) report.evaluation = evaluate(report.decisions, *gt, cfg.tolerance, cfg.error_accepted_only);

  StagedOutput out(cfg.output_dir);
  write_matches_csv(out.file("matches.csv"), report.decisions);
  if (gt) {
    write_metrics_report(out.file("metrics.txt"), *report.evaluation);
    export_visualization_matrix(report.decisions, *gt, cfg.tolerance, out.file("visualization.csv"));
  }
  if (cfg.dump_scores) {
    const auto mask = gnss_exclusion_mask(query.fixes(), db.fixes(), cfg.match.gate_m);
    for (const auto& c : channel_list) {
      const auto gated = compute_distance_matrix(query_desc, db_desc, c, mask, cfg.match.gate_m);
      const std::string name = "scores_" + channel_label(c) + ".f32";
      const fs::path path = out.file(name);
      out.file(name + ".txt");
      write_score_dump(path, compute_score_matrix(gated, cfg.match), c);
    }
  }
  report.overall_ms = ms_since(start);
  write_timing(out.file("timing.csv"), out.file("timing.txt"), report);
  report.files = out.commit();
  return report;
}

RunReport run_tuning(const RunConfig& cfg) {
  const auto start = Clock::now();
  RunReport report;
  const Prepared p = prepare(cfg);
  const TrainingSet training = prepare_training(p.gated, p.gt, cfg.tolerance, cfg.tuning_t);
  report.runs = run_ga_repeated(cfg.ga, training);
  std::vector<Genome> bests;
  for (const auto& r : report.runs) bests.push_back(r.best);
  report.aggregated = aggregate_runs(bests);
  report.aggregated_fitness = fitness(*report.aggregated, training);

  if (cfg.chain_sweeps) {
    const SweepContext ctx(p.gated, genome_to_weights(*report.aggregated, cfg.channels), cfg.match, p.gt,
                           cfg.tolerance, cfg.error_accepted_only);
    for (const auto& [param, values] : cfg.sweeps) report.sweeps.push_back(sweep(param, values, ctx));
  }

  StagedOutput out(cfg.output_dir);
  write_tuning_report(out.file("tuning_report.txt"), cfg.ga, report.runs, *report.aggregated,
                      report.aggregated_fitness);
  write_traces_csv(out.file("ga_traces.csv"), report.runs);
  for (const auto& s : report.sweeps) write_sweep_csv(out.file(sweep_file_name(s.parameter)), s);
  report.overall_ms = ms_since(start);
  report.files = out.commit();
  return report;
}

RunReport run_sweep(const RunConfig& cfg, SweepParameter parameter) {
  const auto start = Clock::now();
  RunReport report;
  Prepared p = prepare(cfg);
  const auto it = cfg.sweeps.find(parameter);
  const std::vector<double> values = it != cfg.sweeps.end() ? it->second : default_sweep_values(parameter);
  const SweepContext ctx(std::move(p.gated), cfg.weights, cfg.match, p.gt, cfg.tolerance, cfg.error_accepted_only);
  report.sweeps.push_back(sweep(parameter, values, ctx));

  StagedOutput out(cfg.output_dir);
  write_sweep_csv(out.file(sweep_file_name(parameter)), report.sweeps.back());
  report.overall_ms = ms_since(start);
  report.files = out.commit();
  return report;
}

Vocabulary train_vocabulary(const fs::path& root, int k, int depth, std::uint64_t seed, int max_keypoints) {
  ModalitySet mods{Modality::Color};
  if (fs::is_directory(root / modality_name(Modality::Infrared))) mods.insert(Modality::Infrared);
  const Sequence seq = load_sequence(root, SequenceRole::Database, mods);
  OrbParams orb;
  orb.max_keypoints = max_keypoints;
  return Vocabulary::build(flatten(collect_features(seq, mods, orb)), k, depth, seed);
}

std::vector<float> thumbnail_vector(const cv::Mat& image) {
  cv::Mat small;
  cv::resize(to_gray(image), small, cv::Size(16, 16), 0, 0, cv::INTER_AREA);
  small.convertTo(small, CV_32F, 1.0 / 255.0);
  const float mean = float(cv::mean(small)[0]);
  std::vector<float> v(small.begin<float>(), small.end<float>());
  for (float& x : v) x -= mean;
  return v;
}

void write_synthetic_dataset(const fs::path& out, std::uint64_t seed, std::size_t length,
                             const Perturbation& perturbation) {
  const SyntheticPair pair = generate_synthetic_pair(seed, length, perturbation);
  fs::create_directories(out);
  write_sequence(out / "query", pair.query);
  write_sequence(out / "database", pair.database);
  write_ground_truth(out / "gt.csv", pair.ground_truth);
  const auto write_cnn = [](const fs::path& dir, const Sequence& seq) {
    fs::create_directories(dir);
    for (const auto& f : seq.frames) write_external_descriptor(external_descriptor_path(dir, f.index), thumbnail_vector(f.color));
  };
  write_cnn(out / "query_cnn", pair.query);
  write_cnn(out / "database_cnn", pair.database);

  std::ofstream cfg(out / "config.ini");
  cfg << "mode = testing\n\n[dataset]\n"
      << "query = query\ndatabase = database\nground_truth = gt.csv\n"
      << "query_cnn = query_cnn\ndatabase_cnn = database_cnn\n\n[output]\ndir = results\n";
  if (!cfg) throw Error(ErrorCode::IoError, "cannot write " + (out / "config.ini").string());
}

}  // namespace mpr
