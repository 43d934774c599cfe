#include "mpr/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mpr/error.hpp"
#include "text_util.hpp"

namespace mpr {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string_view run_mode_name(RunMode m) noexcept {
  switch (m) {
    case RunMode::Testing: return "testing";
    case RunMode::Tuning: return "tuning";
    case RunMode::Sweep: return "sweep";
  }
  return "?";
}

ExtractionConfig RunConfig::extraction() const {
  ExtractionConfig e;
  e.channels = channels;
  e.alpha = alpha;
  e.orb.max_keypoints = max_keypoints;
  return e;
}

std::vector<double> default_sweep_values(SweepParameter p) {
  std::vector<double> v;
  switch (p) {
    case SweepParameter::VMin:
      for (int k = 2; k <= 15; ++k) v.push_back(k * 0.05);
      break;
    case SweepParameter::NQ:
      for (int k = 3; k <= 79; k += 4) v.push_back(k);
      break;
    case SweepParameter::Threshold:
      for (int k = 0; k <= 20; ++k) v.push_back(k * 0.05);
      break;
  }
  return v;
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

template <typename T>
T number(const std::string& key, std::string_view text) {
  const auto v = detail::parse_number<T>(text);
  if (!v) fail(ErrorCode::ParseError, "bad value for " + key + ": '" + std::string(text) + "'");
  return *v;
}

std::size_t count(const std::string& key, std::string_view text) {
  const auto v = number<long long>(key, text);
  if (v < 0) fail(ErrorCode::ParseError, key + " must be non-negative");
  return std::size_t(v);
}

bool boolean(const std::string& key, std::string_view text) {
  const std::string t = lower(detail::trim(text));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  fail(ErrorCode::ParseError, "bad boolean for " + key + ": '" + std::string(text) + "'");
}

fs::path resolve(const fs::path& base, std::string_view text) {
  const fs::path p{std::string(detail::trim(text))};
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

// "a, b, c" or "start:step:stop".
std::vector<double> value_list(const std::string& key, std::string_view text) {
  std::vector<double> out;
  const auto range = detail::split(text, ':');
  if (range.size() == 3) {
    const double start = number<double>(key, range[0]);
    const double step = number<double>(key, range[1]);
    const double stop = number<double>(key, range[2]);
    if (!(step > 0.0) || !(stop >= start)) fail(ErrorCode::ParseError, "bad range for " + key);
    const auto n = std::size_t(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < n; ++k) out.push_back(start + double(k) * step);
    return out;
  }
  for (auto item : detail::split(text, ',')) out.push_back(number<double>(key, item));
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) out += (k ? ", " : "") + detail::format_double(values[k]);
  return out;
}

struct Raw {
  std::map<std::string, std::map<std::string, std::string>> sections;  // "" holds top-level keys
};

Raw read_ini(std::string_view text) {
  // The INI reader only knows ';' comments, so '#' lines are dropped first.
  std::string filtered;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    const auto t = detail::trim(line);
    if (!t.empty() && t.front() == '#') continue;
    filtered += line;
    filtered += '\n';
  }
  pt::ptree tree;
  try {
    std::istringstream stream(filtered);
    pt::read_ini(stream, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ParseError, "config line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> kSections = {"dataset", "channels", "matching", "tuning", "output"};
  Raw raw;
  for (const auto& [name, node] : tree) {
    if (kSections.contains(name)) {
      auto& sec = raw.sections[name];
      for (const auto& [key, leaf] : node) sec[key] = leaf.data();
    } else if (node.empty() && !node.data().empty()) {
      raw.sections[""][name] = node.data();
    } else {
      fail(ErrorCode::UnknownKey, "unknown section [" + name + "]");
    }
  }
  return raw;
}

}  // namespace

RunConfig parse_config_text(std::string_view text, const fs::path& base_dir) {
  const fs::path base = fs::absolute(base_dir);
  const Raw raw = read_ini(text);
  RunConfig cfg;
  cfg.output_dir = base / "output";

  bool has_mode = false;
  std::optional<ChannelSet> enabled;
  FusionWeights lambdas;

  using Handler = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Handler>> handlers = {
      {"",
       {{"mode",
         [&](const std::string& k, const std::string& v) {
           const std::string m = lower(detail::trim(v));
           if (m == "testing") cfg.mode = RunMode::Testing;
           else if (m == "tuning") cfg.mode = RunMode::Tuning;
           else if (m == "sweep") cfg.mode = RunMode::Sweep;
           else fail(ErrorCode::ParseError, "bad value for " + k + ": '" + v + "'");
           has_mode = true;
         }}}},
      {"dataset",
       {{"query", [&](auto&, auto& v) { cfg.query_root = resolve(base, v); }},
        {"database", [&](auto&, auto& v) { cfg.database_root = resolve(base, v); }},
        {"ground_truth", [&](auto&, auto& v) { cfg.ground_truth = resolve(base, v); }},
        {"query_cnn", [&](auto&, auto& v) { cfg.query_cnn = resolve(base, v); }},
        {"database_cnn", [&](auto&, auto& v) { cfg.database_cnn = resolve(base, v); }},
        {"cnn_dim", [&](auto& k, auto& v) { cfg.cnn_dim = count(k, v); }},
        {"vocabulary", [&](auto&, auto& v) { cfg.vocabulary = resolve(base, v); }},
        {"vocab_k", [&](auto& k, auto& v) { cfg.vocab_k = number<int>(k, v); }},
        {"vocab_L", [&](auto& k, auto& v) { cfg.vocab_depth = number<int>(k, v); }},
        {"vocab_seed", [&](auto& k, auto& v) { cfg.vocab_seed = number<std::uint64_t>(k, v); }}}},
      {"channels",
       {{"enabled",
         [&](auto& k, auto& v) {
           ChannelSet set;
           const auto t = detail::trim(v);
           if (!t.empty() && lower(t) != "none") {
             for (auto item : detail::split(t, ',')) {
               const auto c = parse_channel(item);
               if (!c || !is_valid_channel(*c)) fail(ErrorCode::ParseError, "bad channel in " + k + ": '" + std::string(item) + "'");
               set.insert(*c);
             }
           }
           enabled = std::move(set);
         }},
        {"alpha", [&](auto& k, auto& v) { cfg.alpha = number<double>(k, v); }},
        {"max_keypoints", [&](auto& k, auto& v) { cfg.max_keypoints = number<int>(k, v); }}}},
      {"matching",
       {{"n_q", [&](auto& k, auto& v) { cfg.match.n_q = count(k, v); }},
        {"v_min", [&](auto& k, auto& v) { cfg.match.v_min = number<double>(k, v); }},
        {"v_max", [&](auto& k, auto& v) { cfg.match.v_max = number<double>(k, v); }},
        {"g", [&](auto& k, auto& v) { cfg.match.gate_m = number<double>(k, v); }},
        {"t", [&](auto& k, auto& v) { cfg.match.threshold_t = number<double>(k, v); }},
        {"strict_eq4", [&](auto& k, auto& v) { cfg.match.strict_eq4 = boolean(k, v); }},
        {"tolerance", [&](auto& k, auto& v) { cfg.tolerance.max_index_gap = count(k, v); }}}},
      {"tuning",
       {{"population", [&](auto& k, auto& v) { cfg.ga.population = count(k, v); }},
        {"generations", [&](auto& k, auto& v) { cfg.ga.generations = count(k, v); }},
        {"runs", [&](auto& k, auto& v) { cfg.ga.runs = count(k, v); }},
        {"mutation_rate", [&](auto& k, auto& v) { cfg.ga.mutation_rate = number<double>(k, v); }},
        {"crossover_rate", [&](auto& k, auto& v) { cfg.ga.crossover_rate = number<double>(k, v); }},
        {"mutation_sigma", [&](auto& k, auto& v) { cfg.ga.mutation_sigma = number<double>(k, v); }},
        {"tournament", [&](auto& k, auto& v) { cfg.ga.tournament = count(k, v); }},
        {"seed", [&](auto& k, auto& v) { cfg.ga.seed = number<std::uint64_t>(k, v); }},
        {"t", [&](auto& k, auto& v) { cfg.tuning_t = number<double>(k, v); }},
        {"chain_sweeps", [&](auto& k, auto& v) { cfg.chain_sweeps = boolean(k, v); }}}},
      {"output",
       {{"dir", [&](auto&, auto& v) { cfg.output_dir = resolve(base, v); }},
        {"error_accepted_only", [&](auto& k, auto& v) { cfg.error_accepted_only = boolean(k, v); }},
        {"dump_scores", [&](auto& k, auto& v) { cfg.dump_scores = boolean(k, v); }}}},
  };

  for (const auto& [section, entries] : raw.sections) {
    const auto& table = handlers.at(section);
    for (const auto& [key, value] : entries) {
      const std::string where = section.empty() ? key : section + "." + key;
      if (const auto h = table.find(key); h != table.end()) {
        h->second(where, value);
      } else if (section == "channels" && key.starts_with("lambda.")) {
        const auto c = parse_channel(std::string_view(key).substr(7));
        if (!c || !is_valid_channel(*c)) fail(ErrorCode::UnknownKey, "unknown key " + where);
        lambdas[*c] = number<double>(where, value);
      } else if (section == "tuning" && key.starts_with("sweep.")) {
        const auto p = parse_sweep_parameter(std::string_view(key).substr(6));
        if (!p) fail(ErrorCode::UnknownKey, "unknown key " + where);
        cfg.sweeps[*p] = value_list(where, value);
      } else {
        fail(ErrorCode::UnknownKey, "unknown key " + where);
      }
    }
  }

  if (!has_mode) fail(ErrorCode::MissingRequired, "missing required key mode");
  if (cfg.query_root.empty()) fail(ErrorCode::MissingRequired, "missing required key dataset.query");
  if (cfg.database_root.empty()) fail(ErrorCode::MissingRequired, "missing required key dataset.database");
  if (cfg.mode != RunMode::Testing && !cfg.ground_truth) {
    fail(ErrorCode::MissingRequired, "missing required key dataset.ground_truth for " +
                                         std::string(run_mode_name(cfg.mode)) + " mode");
  }
  const bool have_cnn = cfg.query_cnn && cfg.database_cnn;
  if (cfg.query_cnn.has_value() != cfg.database_cnn.has_value()) {
    fail(ErrorCode::MissingRequired, "dataset.query_cnn and dataset.database_cnn go together");
  }

  if (enabled) {
    cfg.channels = *enabled;
  } else {
    for (const auto& c : kCanonicalChannels) {
      if (c.kind != DescriptorKind::CNN || have_cnn) cfg.channels.insert(c);
    }
  }
  if (!have_cnn && cfg.channels.contains(Channel{DescriptorKind::CNN, Modality::Color})) {
    fail(ErrorCode::MissingRequired, "CNN channel enabled without dataset.query_cnn/database_cnn");
  }

  const FusionWeights tuned = tuned_fusion_weights();
  for (const auto& c : cfg.channels) cfg.weights[c] = tuned.at(c);
  for (const auto& [c, w] : lambdas) {
    if (!cfg.channels.contains(c)) fail(ErrorCode::ParseError, "lambda given for disabled channel " + channel_label(c));
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::ParseError, "lambda for " + channel_label(c) + " must be finite and >= 0");
    cfg.weights[c] = w;
  }

  try {
    cfg.match.validate();
    cfg.ga.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ParseError, e.what());
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) fail(ErrorCode::ParseError, "channels.alpha must lie in [0,1]");
  if (cfg.max_keypoints < 1) fail(ErrorCode::ParseError, "channels.max_keypoints must be >= 1");
  if (cfg.vocab_k < 2 || cfg.vocab_depth < 1) fail(ErrorCode::ParseError, "vocab_k must be >= 2 and vocab_L >= 1");
  if (!(cfg.tuning_t >= 0.0 && cfg.tuning_t <= 1.0)) fail(ErrorCode::ParseError, "tuning.t must lie in [0,1]");
  return cfg;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), fs::absolute(path).parent_path());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "mode = " << run_mode_name(c.mode) << "\n\n[dataset]\n"
      << "query = " << c.query_root.string() << '\n'
      << "database = " << c.database_root.string() << '\n';
  if (c.ground_truth) out << "ground_truth = " << c.ground_truth->string() << '\n';
  if (c.query_cnn) out << "query_cnn = " << c.query_cnn->string() << '\n';
  if (c.database_cnn) out << "database_cnn = " << c.database_cnn->string() << '\n';
  out << "cnn_dim = " << c.cnn_dim << '\n';
  if (c.vocabulary) out << "vocabulary = " << c.vocabulary->string() << '\n';
  out << "vocab_k = " << c.vocab_k << '\n'
      << "vocab_L = " << c.vocab_depth << '\n'
      << "vocab_seed = " << c.vocab_seed << "\n\n[channels]\nenabled = ";
  if (c.channels.empty()) out << "none";
  bool first = true;
  for (const auto& ch : c.channels) {
    out << (first ? "" : ", ") << channel_key(ch);
    first = false;
  }
  out << '\n';
  for (const auto& [ch, w] : c.weights) out << "lambda." << channel_key(ch) << " = " << detail::format_double(w) << '\n';
  out << "alpha = " << detail::format_double(c.alpha) << '\n'
      << "max_keypoints = " << c.max_keypoints << "\n\n[matching]\n"
      << "n_q = " << c.match.n_q << '\n'
      << "v_min = " << detail::format_double(c.match.v_min) << '\n'
      << "v_max = " << detail::format_double(c.match.v_max) << '\n'
      << "g = " << detail::format_double(c.match.gate_m) << '\n'
      << "t = " << detail::format_double(c.match.threshold_t) << '\n'
      << "strict_eq4 = " << b(c.match.strict_eq4) << '\n'
      << "tolerance = " << c.tolerance.max_index_gap << "\n\n[tuning]\n"
      << "population = " << c.ga.population << '\n'
      << "generations = " << c.ga.generations << '\n'
      << "runs = " << c.ga.runs << '\n'
      << "mutation_rate = " << detail::format_double(c.ga.mutation_rate) << '\n'
      << "crossover_rate = " << detail::format_double(c.ga.crossover_rate) << '\n'
      << "mutation_sigma = " << detail::format_double(c.ga.mutation_sigma) << '\n'
      << "tournament = " << c.ga.tournament << '\n'
      << "seed = " << c.ga.seed << '\n'
      << "t = " << detail::format_double(c.tuning_t) << '\n'
      << "chain_sweeps = " << b(c.chain_sweeps) << '\n';
  for (const auto& [p, values] : c.sweeps) out << "sweep." << sweep_parameter_name(p) << " = " << join(values) << '\n';
  out << "\n[output]\n"
      << "dir = " << c.output_dir.string() << '\n'
      << "error_accepted_only = " << b(c.error_accepted_only) << '\n'
      << "dump_scores = " << b(c.dump_scores) << '\n';
  return out.str();
}

}  // namespace mpr
