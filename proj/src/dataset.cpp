#include "mpr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "mpr/error.hpp"
#include "text_util.hpp"

namespace mpr {

namespace fs = std::filesystem;

std::string_view modality_name(Modality m) noexcept {
  switch (m) {
    case Modality::Color: return "color";
    case Modality::Depth: return "depth";
    case Modality::Infrared: return "infrared";
  }
  return "?";
}

std::string_view modality_tag(Modality m) noexcept {
  switch (m) {
    case Modality::Color: return "c";
    case Modality::Depth: return "d";
    case Modality::Infrared: return "i";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view name) noexcept {
  for (Modality m : kAllModalities) {
    if (name == modality_name(m) || name == modality_tag(m)) return m;
  }
  return std::nullopt;
}

double geodesic_distance(const GnssFix& a, const GnssFix& b) {
  if (!a.valid || !b.valid) throw Error(ErrorCode::InvalidFix, "geodesic distance needs two valid fixes");
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double phi1 = a.latitude * kDeg;
  const double phi2 = b.latitude * kDeg;
  const double dphi = (b.latitude - a.latitude) * kDeg;
  const double dlambda = (b.longitude - a.longitude) * kDeg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusMeters * std::asin(std::sqrt(h));
}

std::uint8_t normalize_depth_value(std::uint16_t raw_mm) noexcept {
  if (raw_mm == 0) return 0;
  const int clamped = std::clamp<int>(raw_mm, kDepthNearMm, kDepthFarMm);
  const double scaled = double(clamped - kDepthNearMm) * 255.0 / double(kDepthFarMm - kDepthNearMm);
  return static_cast<std::uint8_t>(std::lround(scaled));
}

cv::Mat normalize_depth(const cv::Mat& raw16) {
  CV_Assert(raw16.type() == CV_16UC1);
  cv::Mat out(raw16.size(), CV_8UC1);
  for (int y = 0; y < raw16.rows; ++y) {
    const auto* src = raw16.ptr<std::uint16_t>(y);
    auto* dst = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw16.cols; ++x) dst[x] = normalize_depth_value(src[x]);
  }
  return out;
}

bool MultimodalFrame::has(Modality m) const noexcept {
  switch (m) {
    case Modality::Color: return !color.empty();
    case Modality::Depth: return !depth.empty();
    case Modality::Infrared: return !infrared.empty();
  }
  return false;
}

const cv::Mat& MultimodalFrame::image(Modality m) const {
  switch (m) {
    case Modality::Color: return color;
    case Modality::Depth: return depth;
    case Modality::Infrared: return infrared;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown modality");
}

std::vector<GnssFix> Sequence::fixes() const {
  std::vector<GnssFix> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.gnss);
  return out;
}

namespace {

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

int expected_type(Modality m) {
  switch (m) {
    case Modality::Color: return CV_8UC3;
    case Modality::Depth: return CV_16UC1;
    case Modality::Infrared: return CV_8UC1;
  }
  return -1;
}

std::size_t count_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) return 0;
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") ++n;
  }
  return n;
}

std::vector<GnssFix> load_gnss(const fs::path& path, std::size_t frame_count) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MalformedGnss, "cannot open " + path.string());
  std::vector<GnssFix> fixes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = detail::split(trimmed, ',');
    if (line_no == 1 && !fields.empty() && !detail::parse_number<long long>(fields[0])) continue;  // header
    if (fields.size() != 4) {
      throw Error(ErrorCode::MalformedGnss, path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    const auto index = detail::parse_number<std::size_t>(fields[0]);
    const auto lat = detail::parse_number<double>(fields[1]);
    const auto lon = detail::parse_number<double>(fields[2]);
    const auto valid = detail::parse_number<int>(fields[3]);
    if (!index || !lat || !lon || !valid || (*valid != 0 && *valid != 1)) {
      throw Error(ErrorCode::MalformedGnss, path.string() + ":" + std::to_string(line_no) + ": bad field");
    }
    if (*index != fixes.size()) {
      throw Error(ErrorCode::MalformedGnss, path.string() + ": rows must be listed in index order without gaps");
    }
    GnssFix fix{*lat, *lon, *valid == 1};
    if (fix.valid && (std::abs(fix.latitude) > 90.0 || std::abs(fix.longitude) > 180.0)) {
      throw Error(ErrorCode::MalformedGnss, path.string() + ":" + std::to_string(line_no) + ": coordinate out of range");
    }
    fixes.push_back(fix);
  }
  if (fixes.size() != frame_count) {
    throw Error(ErrorCode::MalformedGnss, path.string() + ": " + std::to_string(fixes.size()) +
                                              " rows for " + std::to_string(frame_count) + " frames");
  }
  return fixes;
}

}  // namespace

Sequence load_sequence(const fs::path& root, SequenceRole role, const ModalitySet& enabled) {
  if (enabled.empty()) throw Error(ErrorCode::InvalidArgument, "no modality enabled for " + root.string());
  const Modality lead = *enabled.begin();
  const std::size_t n = count_frames(root / modality_name(lead));
  if (n == 0) throw Error(ErrorCode::MissingModality, "no frames under " + (root / modality_name(lead)).string());

  const auto fixes = load_gnss(root / "gnss.csv", n);

  Sequence seq;
  seq.role = role;
  seq.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& frame = seq.frames[i];
    frame.index = i;
    frame.gnss = fixes[i];
    cv::Size size;
    for (Modality m : enabled) {
      const fs::path file = root / modality_name(m) / frame_file_name(i);
      if (!fs::exists(file)) throw Error(ErrorCode::MissingModality, file.string() + " is missing");
      cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
      if (img.empty()) throw Error(ErrorCode::DecodeError, "cannot decode " + file.string());
      if (img.type() != expected_type(m)) {
        throw Error(ErrorCode::DecodeError, file.string() + " has an unexpected pixel format");
      }
      if (size.area() == 0) {
        size = img.size();
      } else if (img.size() != size) {
        throw Error(ErrorCode::DecodeError, file.string() + " resolution differs within frame");
      }
      switch (m) {
        case Modality::Color: frame.color = img; break;
        case Modality::Depth:
          frame.depth_raw = img;
          frame.depth = normalize_depth(img);
          break;
        case Modality::Infrared: frame.infrared = img; break;
      }
    }
  }
  return seq;
}

void write_sequence(const fs::path& root, const Sequence& seq) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + root.string());
  for (Modality m : kAllModalities) {
    const bool any = std::any_of(seq.frames.begin(), seq.frames.end(), [m](const auto& f) { return f.has(m); });
    if (!any) continue;
    fs::create_directories(root / modality_name(m), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + (root / modality_name(m)).string());
    for (const auto& frame : seq.frames) {
      if (!frame.has(m)) continue;
      const cv::Mat& img = m == Modality::Depth ? frame.depth_raw : frame.image(m);
      const fs::path file = root / modality_name(m) / frame_file_name(frame.index);
      if (!cv::imwrite(file.string(), img)) throw Error(ErrorCode::IoError, "cannot write " + file.string());
    }
  }
  std::ofstream out(root / "gnss.csv");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (root / "gnss.csv").string());
  out << "index,lat,lon,valid\n";
  for (const auto& frame : seq.frames) {
    out << frame.index << ',' << detail::format_double(frame.gnss.latitude) << ','
        << detail::format_double(frame.gnss.longitude) << ',' << (frame.gnss.valid ? 1 : 0) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for gnss.csv");
}

std::size_t GroundTruth::at(std::size_t query_index) const {
  if (!contains(query_index)) {
    throw Error(ErrorCode::MissingGroundTruth, "no ground truth for query " + std::to_string(query_index));
  }
  return db_index[query_index];
}

GroundTruth load_ground_truth(const fs::path& path, std::size_t query_len, std::size_t db_len) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::optional<std::size_t>> pairs(query_len);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = detail::split(trimmed, ',');
    if (line_no == 1 && !fields.empty() && !detail::parse_number<long long>(fields[0])) continue;
    if (fields.size() != 2) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    }
    const auto q = detail::parse_number<long long>(fields[0]);
    const auto d = detail::parse_number<long long>(fields[1]);
    if (!q || !d) throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad index");
    if (*q < 0 || std::size_t(*q) >= query_len || *d < 0 || std::size_t(*d) >= db_len) {
      throw Error(ErrorCode::IndexOutOfRange, path.string() + ":" + std::to_string(line_no) + ": pair " +
                                                  std::string(trimmed) + " outside sequence bounds");
    }
    auto& slot = pairs[std::size_t(*q)];
    if (slot) throw Error(ErrorCode::ParseError, path.string() + ": duplicate query index " + std::string(fields[0]));
    slot = std::size_t(*d);
  }
  GroundTruth gt{query_len, db_len, {}};
  gt.db_index.reserve(query_len);
  for (std::size_t q = 0; q < query_len; ++q) {
    if (!pairs[q]) {
      throw Error(ErrorCode::IncompleteGroundTruth, path.string() + ": no entry for query " + std::to_string(q));
    }
    gt.db_index.push_back(*pairs[q]);
  }
  return gt;
}

void write_ground_truth(const fs::path& path, const GroundTruth& gt) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "query_index,db_index\n";
  for (std::size_t q = 0; q < gt.db_index.size(); ++q) out << q << ',' << gt.db_index[q] << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mpr
