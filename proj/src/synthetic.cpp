#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "mpr/dataset.hpp"
#include "mpr/error.hpp"

namespace mpr {

namespace {

constexpr int kWidth = 320;
constexpr int kHeight = 240;
constexpr int kStepPx = 48;
constexpr int kHorizon = 110;
constexpr double kOriginLat = 30.2741;
constexpr double kOriginLon = 120.1551;

struct World {
  cv::Mat color;   // CV_8UC3
  cv::Mat depth;   // CV_16UC1
  cv::Mat ir;      // CV_8UC1
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(tag),
                    std::uint32_t(index), std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

cv::Scalar random_color(std::mt19937_64& rng, int lo, int hi) {
  return cv::Scalar(uniform_int(rng, lo, hi), uniform_int(rng, lo, hi), uniform_int(rng, lo, hi));
}

void fill(World& w, const cv::Rect& r, const cv::Scalar& bgr, int depth_mm, int ir) {
  const cv::Rect clipped = r & cv::Rect(0, 0, w.color.cols, w.color.rows);
  if (clipped.area() == 0) return;
  w.color(clipped).setTo(bgr);
  w.depth(clipped).setTo(depth_mm);
  w.ir(clipped).setTo(ir);
}

World render_world(std::uint64_t seed, int width) {
  World w{cv::Mat(kHeight, width, CV_8UC3), cv::Mat(kHeight, width, CV_16UC1), cv::Mat(kHeight, width, CV_8UC1)};
  auto rng = stream(seed, 0x5eed, 0);

  // sky: vertical gradient, no depth return
  for (int y = 0; y < kHorizon; ++y) {
    const auto b = cv::saturate_cast<std::uint8_t>(235 - y / 2);
    const auto g = cv::saturate_cast<std::uint8_t>(200 - y / 3);
    const auto r = cv::saturate_cast<std::uint8_t>(150 - y / 3);
    w.color.row(y).setTo(cv::Scalar(b, g, r));
    w.depth.row(y).setTo(0);
    w.ir.row(y).setTo(40);
  }
  // ground: depth grows toward the horizon, hashed speckle texture
  for (int y = kHorizon; y < kHeight; ++y) {
    const double t = double(y - kHorizon) / double(kHeight - kHorizon);
    const int depth = int(9500.0 - 8500.0 * std::sqrt(t));
    auto* c = w.color.ptr<cv::Vec3b>(y);
    auto* d = w.depth.ptr<std::uint16_t>(y);
    auto* i = w.ir.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) {
      const std::uint32_t h = std::uint32_t(x) * 73856093u ^ std::uint32_t(y) * 19349663u ^ std::uint32_t(seed);
      const int speckle = int((h >> 7) % 23) - 11;
      const auto v = cv::saturate_cast<std::uint8_t>(105 + speckle);
      c[x] = cv::Vec3b(v, v, cv::saturate_cast<std::uint8_t>(v + 6));
      d[x] = std::uint16_t(depth);
      i[x] = cv::saturate_cast<std::uint8_t>(90 + speckle / 2);
    }
  }
  // facades with window grids
  int x = 0;
  while (x < width) {
    const int bw = uniform_int(rng, 70, 200);
    const int top = uniform_int(rng, 8, 80);
    const int bottom = kHorizon + uniform_int(rng, 10, 30);
    const int depth = uniform_int(rng, 2500, 9000);
    const int ir = uniform_int(rng, 60, 210);
    fill(w, cv::Rect(x, top, bw, bottom - top), random_color(rng, 30, 230), depth, ir);

    const cv::Scalar window = random_color(rng, 0, 255);
    const int window_ir = uniform_int(rng, 0, 255);
    const int ww = uniform_int(rng, 6, 16);
    const int wh = uniform_int(rng, 8, 20);
    const int gap_x = uniform_int(rng, 6, 14);
    const int gap_y = uniform_int(rng, 6, 14);
    for (int wy = top + gap_y; wy + wh < bottom - 4; wy += wh + gap_y) {
      for (int wx = x + gap_x; wx + ww < x + bw - 2; wx += ww + gap_x) {
        if (uniform_int(rng, 0, 9) == 0) continue;  // some windows are missing
        fill(w, cv::Rect(wx, wy, ww, wh), window, depth + 150, window_ir);
      }
    }
    // occasional sign or door
    if (uniform_int(rng, 0, 2) == 0) {
      const int sw = uniform_int(rng, 14, 40);
      const int sx = x + uniform_int(rng, 0, std::max(0, bw - sw));
      fill(w, cv::Rect(sx, bottom - uniform_int(rng, 20, 45), sw, uniform_int(rng, 12, 30)),
           random_color(rng, 0, 255), depth - 100, uniform_int(rng, 0, 255));
    }
    x += bw + uniform_int(rng, 0, 12);
  }
  // street furniture in front of the facades
  for (int px = uniform_int(rng, 10, 90); px < width; px += uniform_int(rng, 60, 160)) {
    const int pw = uniform_int(rng, 3, 8);
    const int ptop = uniform_int(rng, 30, 120);
    fill(w, cv::Rect(px, ptop, pw, kHeight - 20 - ptop), random_color(rng, 10, 90), uniform_int(rng, 1200, 2500),
         uniform_int(rng, 100, 250));
    fill(w, cv::Rect(px - 6, ptop, pw + 12, 6), random_color(rng, 150, 255), uniform_int(rng, 1200, 2500),
         uniform_int(rng, 100, 250));
  }
  return w;
}

GnssFix track_fix(std::size_t i) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double east_m = double(i) * kSyntheticStepMeters;
  const double lon = kOriginLon + east_m / (kEarthRadiusMeters * std::cos(kOriginLat * kDeg) * kDeg);
  return GnssFix{kOriginLat, lon, true};
}

GnssFix add_gnss_noise(const GnssFix& fix, double sigma_m, std::mt19937_64& rng) {
  // per-axis sigma/sqrt(2) gives a radial RMS of sigma; resample beyond 3 sigma
  std::normal_distribution<double> axis(0.0, sigma_m / std::numbers::sqrt2);
  double north = 0.0;
  double east = 0.0;
  do {
    north = axis(rng);
    east = axis(rng);
  } while (std::hypot(north, east) > 3.0 * sigma_m);
  constexpr double kDeg = std::numbers::pi / 180.0;
  GnssFix out = fix;
  out.latitude += north / (kEarthRadiusMeters * kDeg);
  out.longitude += east / (kEarthRadiusMeters * std::cos(fix.latitude * kDeg) * kDeg);
  return out;
}

MultimodalFrame crop_frame(const World& w, std::size_t index, int x0) {
  const cv::Rect roi(x0, 0, kWidth, kHeight);
  MultimodalFrame f;
  f.index = index;
  f.color = w.color(roi).clone();
  f.depth_raw = w.depth(roi).clone();
  f.infrared = w.ir(roi).clone();
  return f;
}

}  // namespace

SyntheticPair generate_synthetic_pair(std::uint64_t seed, std::size_t length, const Perturbation& p) {
  if (length == 0) throw Error(ErrorCode::InvalidArgument, "synthetic sequence length must be >= 1");
  for (double v : {p.viewpoint_px, p.brightness_gain, p.occlusion_rate, p.gnss_noise_m}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "perturbation magnitudes must be finite");
  }
  if (p.viewpoint_px < 0 || p.gnss_noise_m < 0 || p.occlusion_rate < 0 || p.occlusion_rate > 1 ||
      p.brightness_gain <= -1.0) {
    throw Error(ErrorCode::InvalidArgument, "perturbation out of range");
  }

  const int margin = 16 + int(std::ceil(p.viewpoint_px));
  const int world_width = 2 * margin + int(length - 1) * kStepPx + kWidth;
  const World world = render_world(seed, world_width);

  SyntheticPair out;
  out.database.role = SequenceRole::Database;
  out.query.role = SequenceRole::Query;
  out.ground_truth = GroundTruth{length, length, {}};

  for (std::size_t i = 0; i < length; ++i) {
    const int x0 = margin + int(i) * kStepPx;

    MultimodalFrame db = crop_frame(world, i, x0);
    db.depth = normalize_depth(db.depth_raw);
    db.gnss = track_fix(i);

    // draws happen in a fixed order so the stream does not depend on magnitudes
    auto rng = stream(seed, 0x9e3779b9, i);
    const double shift_u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double occlusion_u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const int occ_w = uniform_int(rng, 30, 70);
    const int occ_h = uniform_int(rng, 100, 190);
    const int occ_x = uniform_int(rng, 0, kWidth - occ_w);
    const cv::Scalar occ_color = random_color(rng, 0, 255);
    const int occ_depth = uniform_int(rng, 1200, 2200);
    const int occ_ir = uniform_int(rng, 140, 240);

    const int shift = int(std::lround(shift_u * p.viewpoint_px));
    MultimodalFrame q = crop_frame(world, i, x0 + shift);
    if (p.brightness_gain != 0.0) {
      q.color.convertTo(q.color, CV_8UC3, 1.0 + p.brightness_gain);
      q.infrared.convertTo(q.infrared, CV_8UC1, 1.0 + p.brightness_gain);
    }
    if (occlusion_u < p.occlusion_rate) {
      const cv::Rect body(occ_x, kHeight - 10 - occ_h, occ_w, occ_h);
      q.color(body).setTo(occ_color);
      q.depth_raw(body).setTo(occ_depth);
      q.infrared(body).setTo(occ_ir);
      const cv::Rect head(occ_x + occ_w / 4, body.y - occ_w / 2, occ_w / 2, occ_w / 2);
      const cv::Rect head_clip = head & cv::Rect(0, 0, kWidth, kHeight);
      q.color(head_clip).setTo(occ_color * 0.7);
      q.depth_raw(head_clip).setTo(occ_depth);
      q.infrared(head_clip).setTo(occ_ir);
    }
    q.depth = normalize_depth(q.depth_raw);
    q.gnss = p.gnss_noise_m > 0.0 ? add_gnss_noise(db.gnss, p.gnss_noise_m, rng) : db.gnss;

    out.database.frames.push_back(std::move(db));
    out.query.frames.push_back(std::move(q));
    out.ground_truth.db_index.push_back(i);
  }
  return out;
}

}  // namespace mpr
