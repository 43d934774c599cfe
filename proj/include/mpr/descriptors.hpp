#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <opencv2/core.hpp>

#include "mpr/dataset.hpp"

namespace mpr {

class Vocabulary;

enum class DescriptorKind : std::uint8_t { GIST = 0, LDB = 1, BoW = 2, CNN = 3 };

std::string_view kind_name(DescriptorKind k) noexcept;
std::optional<DescriptorKind> parse_kind(std::string_view name) noexcept;

/// A (descriptor kind, modality) pair.
struct Channel {
  DescriptorKind kind = DescriptorKind::GIST;
  Modality modality = Modality::Color;

  auto operator<=>(const Channel&) const = default;
};

/// The nine valid channels in report column order:
/// BoW-c, BoW-i, GIST-c, GIST-d, GIST-i, LDB-c, LDB-d, LDB-i, CNN-c.
inline constexpr std::array<Channel, 9> kCanonicalChannels = {{
    {DescriptorKind::BoW, Modality::Color},
    {DescriptorKind::BoW, Modality::Infrared},
    {DescriptorKind::GIST, Modality::Color},
    {DescriptorKind::GIST, Modality::Depth},
    {DescriptorKind::GIST, Modality::Infrared},
    {DescriptorKind::LDB, Modality::Color},
    {DescriptorKind::LDB, Modality::Depth},
    {DescriptorKind::LDB, Modality::Infrared},
    {DescriptorKind::CNN, Modality::Color},
}};

bool is_valid_channel(const Channel& c) noexcept;
/// Position in kCanonicalChannels; throws InvalidChannel for the three invalid pairs.
std::size_t canonical_index(const Channel& c);
/// "BoW-c", "GIST-d", ...
std::string channel_label(const Channel& c);
/// "bow.color", "gist.depth", ... (config key suffix)
std::string channel_key(const Channel& c);
std::optional<Channel> parse_channel(std::string_view text) noexcept;

using ChannelSet = std::set<Channel>;

/// Fixed-length bit string, LSB-first within 64-bit words. Unused high bits stay zero.
struct BitString {
  std::vector<std::uint64_t> words;
  std::size_t size = 0;

  explicit BitString(std::size_t bits = 0) : words((bits + 63) / 64, 0), size(bits) {}
  void set(std::size_t i) { words[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool test(std::size_t i) const { return (words[i / 64] >> (i % 64)) & 1U; }
  std::size_t popcount() const;
  bool operator==(const BitString&) const = default;
};

/// Sorted (index, value) entries of a mostly-zero vector.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  bool operator==(const SparseVector&) const = default;
};

using DenseVector = std::vector<double>;

struct DescriptorVector {
  DescriptorKind kind = DescriptorKind::GIST;
  Modality modality = Modality::Color;
  std::size_t dimension = 0;
  std::variant<BitString, DenseVector, SparseVector> payload;
  /// Set for BoW vectors built from an empty feature list.
  bool degenerate = false;

  Channel channel() const noexcept { return {kind, modality}; }
  const BitString& bits() const { return std::get<BitString>(payload); }
  const DenseVector& dense() const { return std::get<DenseVector>(payload); }
  const SparseVector& sparse() const { return std::get<SparseVector>(payload); }
  bool operator==(const DescriptorVector&) const = default;
};

using DescriptorSet = std::map<Channel, DescriptorVector>;

// --- preprocessing -------------------------------------------------------------

inline constexpr double kDefaultIlluminationAlpha = 0.48;

/// Per-pixel log-chromaticity response 0.5 + log G' - alpha log B' - (1-alpha) log R'
/// with X' = (X+1)/256, before any rescaling. Returns CV_64FC1.
cv::Mat illumination_invariant_response(const cv::Mat& bgr, double alpha = kDefaultIlluminationAlpha);

/// The response above rescaled linearly to [0,255]; a constant response maps to 0.
cv::Mat illumination_invariant_transform(const cv::Mat& bgr, double alpha = kDefaultIlluminationAlpha);

/// Any 8-bit image to 8-bit grayscale (BGR is converted, single channel passes through).
cv::Mat to_gray(const cv::Mat& image);

// --- GIST ---------------------------------------------------------------------

struct GistParams {
  int image_size = 128;
  int scales = 4;
  int orientations = 8;
  int grid = 4;

  std::size_t dimension() const noexcept { return std::size_t(scales) * orientations * grid * grid; }
};

DescriptorVector extract_gist(const cv::Mat& gray, const GistParams& params = {},
                              Modality modality = Modality::Color);

// --- LDB ----------------------------------------------------------------------

struct LdbParams {
  int image_size = 64;
  std::vector<int> levels = {2, 3, 4, 5};

  /// 3 * sum over levels of C(g*g, 2).
  std::size_t bit_count() const noexcept;
};

DescriptorVector extract_ldb(const cv::Mat& gray, const LdbParams& params = {},
                             Modality modality = Modality::Color);

// --- ORB local features ---------------------------------------------------------

using BinaryFeature = std::array<std::uint8_t, 32>;

inline int hamming(const BinaryFeature& a, const BinaryFeature& b) noexcept {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); i += 8) {
    std::uint64_t x = 0;
    std::uint64_t y = 0;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    d += std::popcount(x ^ y);
  }
  return d;
}

struct Keypoint {
  float x = 0.f;  // full-resolution pixel coordinates
  float y = 0.f;
  float angle = 0.f;  // radians
  float response = 0.f;
  int level = 0;
  BinaryFeature descriptor{};

  bool operator==(const Keypoint&) const = default;
};

struct OrbParams {
  int max_keypoints = 500;
  int fast_threshold = 20;
  int pyramid_levels = 4;
  float scale_factor = 1.2f;
};

/// Oriented FAST corners described with steered rBRIEF, strongest first.
std::vector<Keypoint> detect_and_describe(const cv::Mat& gray, const OrbParams& params = {});

// --- BoW ------------------------------------------------------------------------

DescriptorVector extract_bow(std::span<const BinaryFeature> features, const Vocabulary& vocab,
                             Modality modality = Modality::Color);

// --- externally computed vectors (CNN) -------------------------------------------

/// Read raw little-endian float32 values; L2-normalize.
DescriptorVector ingest_external_descriptor(const std::filesystem::path& path, std::size_t expected_dim,
                                            Modality modality = Modality::Color);
void write_external_descriptor(const std::filesystem::path& path, std::span<const float> values);
/// `<dir>/%06d.f32`
std::filesystem::path external_descriptor_path(const std::filesystem::path& dir, std::size_t index);

struct ExternalSource {
  std::filesystem::path dir;
  std::size_t dimension = 0;
};

// --- per-frame assembly -----------------------------------------------------------

struct ExtractionConfig {
  ChannelSet channels;
  GistParams gist;
  LdbParams ldb;
  OrbParams orb;
  double alpha = kDefaultIlluminationAlpha;
};

/// Populate exactly the configured channels. BoW needs `vocab`; CNN needs `cnn`.
DescriptorSet extract_all(const MultimodalFrame& frame, const ExtractionConfig& config, const Vocabulary* vocab,
                          const std::optional<ExternalSource>& cnn);

/// Modalities a channel set needs loaded.
ModalitySet required_modalities(const ChannelSet& channels);

}  // namespace mpr
