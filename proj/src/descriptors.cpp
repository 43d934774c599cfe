#include "mpr/descriptors.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "mpr/error.hpp"
#include "mpr/vocabulary.hpp"

namespace mpr {

std::string_view kind_name(DescriptorKind k) noexcept {
  switch (k) {
    case DescriptorKind::GIST: return "GIST";
    case DescriptorKind::LDB: return "LDB";
    case DescriptorKind::BoW: return "BoW";
    case DescriptorKind::CNN: return "CNN";
  }
  return "?";
}

std::optional<DescriptorKind> parse_kind(std::string_view name) noexcept {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (lower == "gist") return DescriptorKind::GIST;
  if (lower == "ldb") return DescriptorKind::LDB;
  if (lower == "bow") return DescriptorKind::BoW;
  if (lower == "cnn") return DescriptorKind::CNN;
  return std::nullopt;
}

bool is_valid_channel(const Channel& c) noexcept {
  return std::find(kCanonicalChannels.begin(), kCanonicalChannels.end(), c) != kCanonicalChannels.end();
}

std::size_t canonical_index(const Channel& c) {
  const auto it = std::find(kCanonicalChannels.begin(), kCanonicalChannels.end(), c);
  if (it == kCanonicalChannels.end()) throw Error(ErrorCode::InvalidChannel, channel_label(c) + " is not a valid channel");
  return std::size_t(it - kCanonicalChannels.begin());
}

std::string channel_label(const Channel& c) {
  return std::string(kind_name(c.kind)) + "-" + std::string(modality_tag(c.modality));
}

std::string channel_key(const Channel& c) {
  std::string kind(kind_name(c.kind));
  std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
  return kind + "." + std::string(modality_name(c.modality));
}

std::optional<Channel> parse_channel(std::string_view text) noexcept {
  const auto sep = text.find_first_of(".-");
  if (sep == std::string_view::npos) return std::nullopt;
  const auto kind = parse_kind(text.substr(0, sep));
  const auto modality = parse_modality(text.substr(sep + 1));
  if (!kind || !modality) return std::nullopt;
  return Channel{*kind, *modality};
}

std::size_t BitString::popcount() const {
  std::size_t n = 0;
  for (auto w : words) n += std::size_t(std::popcount(w));
  return n;
}

DescriptorVector extract_bow(std::span<const BinaryFeature> features, const Vocabulary& vocab, Modality modality) {
  DescriptorVector out;
  out.kind = DescriptorKind::BoW;
  out.modality = modality;
  out.dimension = vocab.word_count();
  SparseVector hist;
  if (features.empty()) {
    out.degenerate = true;
    out.payload = std::move(hist);
    return out;
  }
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& f : features) ++counts[vocab.quantize(f)];
  const double total = double(features.size());
  for (const auto& [word, count] : counts) {
    hist.index.push_back(word);
    hist.value.push_back(double(count) / total);
  }
  out.payload = std::move(hist);
  return out;
}

std::filesystem::path external_descriptor_path(const std::filesystem::path& dir, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.f32", index);
  return dir / buf;
}

DescriptorVector ingest_external_descriptor(const std::filesystem::path& path, std::size_t expected_dim,
                                            Modality modality) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % 4 != 0) {
    throw Error(ErrorCode::ParseError, path.string() + ": size is not a whole number of float32 values");
  }
  const std::size_t dim = bytes.size() / 4;
  if (expected_dim != 0 && dim != expected_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                path.string() + ": " + std::to_string(dim) + " values, expected " + std::to_string(expected_dim));
  }
  DenseVector values(dim);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    std::uint32_t raw = 0;
    for (int b = 0; b < 4; ++b) raw |= std::uint32_t(std::uint8_t(bytes[i * 4 + std::size_t(b)])) << (8 * b);
    const float f = std::bit_cast<float>(raw);
    if (!std::isfinite(f)) throw Error(ErrorCode::ParseError, path.string() + ": non-finite value");
    values[i] = double(f);
    norm2 += values[i] * values[i];
  }
  if (!(norm2 > 0.0)) throw Error(ErrorCode::ParseError, path.string() + ": zero vector cannot be normalized");
  const double norm = std::sqrt(norm2);
  for (double& v : values) v /= norm;

  DescriptorVector out;
  out.kind = DescriptorKind::CNN;
  out.modality = modality;
  out.dimension = dim;
  out.payload = std::move(values);
  return out;
}

void write_external_descriptor(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto raw = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + std::size_t(b)] = char(std::uint8_t(raw >> (8 * b)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ModalitySet required_modalities(const ChannelSet& channels) {
  ModalitySet out;
  for (const auto& c : channels) {
    if (c.kind != DescriptorKind::CNN) out.insert(c.modality);
  }
  return out;
}

DescriptorSet extract_all(const MultimodalFrame& frame, const ExtractionConfig& config, const Vocabulary* vocab,
                          const std::optional<ExternalSource>& cnn) {
  DescriptorSet set;
  std::map<Modality, std::vector<BinaryFeature>> local_features;
  for (const Channel& c : config.channels) {
    if (!is_valid_channel(c)) throw Error(ErrorCode::InvalidChannel, channel_label(c) + " is not a valid channel");
    if (c.kind == DescriptorKind::CNN) {
      if (!cnn) throw Error(ErrorCode::InvalidArgument, "CNN channel enabled without a descriptor directory");
      set.emplace(c, ingest_external_descriptor(external_descriptor_path(cnn->dir, frame.index), cnn->dimension,
                                                c.modality));
      continue;
    }
    if (!frame.has(c.modality)) {
      throw Error(ErrorCode::MissingModality, "frame " + std::to_string(frame.index) + " has no " +
                                                  std::string(modality_name(c.modality)) + " image");
    }
    const cv::Mat& image = frame.image(c.modality);
    switch (c.kind) {
      case DescriptorKind::GIST: set.emplace(c, extract_gist(to_gray(image), config.gist, c.modality)); break;
      case DescriptorKind::LDB: {
        const cv::Mat input =
            c.modality == Modality::Color ? illumination_invariant_transform(image, config.alpha) : image;
        set.emplace(c, extract_ldb(input, config.ldb, c.modality));
        break;
      }
      case DescriptorKind::BoW: {
        if (vocab == nullptr || vocab->empty()) throw Error(ErrorCode::InvalidArgument, "BoW channel needs a vocabulary");
        auto& feats = local_features[c.modality];
        for (const auto& kp : detect_and_describe(to_gray(image), config.orb)) feats.push_back(kp.descriptor);
        set.emplace(c, extract_bow(feats, *vocab, c.modality));
        break;
      }
      case DescriptorKind::CNN: break;
    }
  }
  return set;
}

}  // namespace mpr
