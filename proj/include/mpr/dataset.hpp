#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

namespace mpr {

enum class Modality : std::uint8_t { Color = 0, Depth = 1, Infrared = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {Modality::Color, Modality::Depth,
                                                           Modality::Infrared};

/// Lower-case name used for directories and config keys ("color", "depth", "infrared").
std::string_view modality_name(Modality m) noexcept;
/// One-letter tag used in report columns ("c", "d", "i").
std::string_view modality_tag(Modality m) noexcept;
std::optional<Modality> parse_modality(std::string_view name) noexcept;

struct GnssFix {
  double latitude = 0.0;   // degrees, WGS-84
  double longitude = 0.0;  // degrees, WGS-84
  bool valid = false;

  bool operator==(const GnssFix&) const = default;
};

inline constexpr double kEarthRadiusMeters = 6371000.0;

/// Haversine great-circle distance in meters. Throws InvalidFix if either fix is invalid.
double geodesic_distance(const GnssFix& a, const GnssFix& b);

/// Depth clamp range in millimeters for the 8-bit view.
inline constexpr std::uint16_t kDepthNearMm = 500;
inline constexpr std::uint16_t kDepthFarMm = 10000;

/// Map raw 16-bit depth (mm) to 8 bits: 0 stays 0 (missing), otherwise clamp to
/// [kDepthNearMm, kDepthFarMm] and scale linearly to [0, 255].
std::uint8_t normalize_depth_value(std::uint16_t raw_mm) noexcept;
cv::Mat normalize_depth(const cv::Mat& raw16);

struct MultimodalFrame {
  std::size_t index = 0;
  cv::Mat color;       // CV_8UC3, BGR
  cv::Mat depth_raw;   // CV_16UC1, millimeters
  cv::Mat depth;       // CV_8UC1, normalized view of depth_raw
  cv::Mat infrared;    // CV_8UC1
  GnssFix gnss;

  bool has(Modality m) const noexcept;
  /// Image a descriptor sees for a modality (depth -> normalized 8-bit view).
  const cv::Mat& image(Modality m) const;
};

enum class SequenceRole { Query, Database };

struct Sequence {
  SequenceRole role = SequenceRole::Query;
  std::vector<MultimodalFrame> frames;

  std::size_t length() const noexcept { return frames.size(); }
  std::vector<GnssFix> fixes() const;
};

using ModalitySet = std::set<Modality>;

/// Load `<root>/{color,depth,infrared}/%06d.png` plus `<root>/gnss.csv`.
/// The frame list is taken from the directory of the first enabled modality.
Sequence load_sequence(const std::filesystem::path& root, SequenceRole role,
                       const ModalitySet& enabled);

/// Write a sequence in the layout read by load_sequence. Absent modalities are skipped.
void write_sequence(const std::filesystem::path& root, const Sequence& seq);

/// Query index -> database index, complete over [0, query_length).
struct GroundTruth {
  std::size_t query_length = 0;
  std::size_t database_length = 0;
  std::vector<std::size_t> db_index;

  bool contains(std::size_t query_index) const noexcept { return query_index < db_index.size(); }
  std::size_t at(std::size_t query_index) const;

  bool operator==(const GroundTruth&) const = default;
};

GroundTruth load_ground_truth(const std::filesystem::path& path, std::size_t query_len,
                              std::size_t db_len);
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);

/// Appearance and position changes applied to the query rendering. All-zero means
/// the query is a byte-identical copy of the database.
struct Perturbation {
  double viewpoint_px = 0.0;     // max horizontal camera shift, pixels
  double brightness_gain = 0.0;  // exposure factor is 1 + brightness_gain
  double occlusion_rate = 0.0;   // probability a query frame contains a passer-by
  double gnss_noise_m = 0.0;     // radial RMS of GNSS noise, truncated at 3x

  bool operator==(const Perturbation&) const = default;
};

struct SyntheticPair {
  Sequence query;
  Sequence database;
  GroundTruth ground_truth;
};

/// Procedural street-walk rendering (320x240 color/depth/infrared + GNSS at ~1.5 m
/// spacing). Deterministic for a fixed seed.
SyntheticPair generate_synthetic_pair(std::uint64_t seed, std::size_t length,
                                      const Perturbation& perturbation);

/// Spacing between consecutive synthetic frames along the track, meters.
inline constexpr double kSyntheticStepMeters = 1.5;

}  // namespace mpr
