#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/imgproc.hpp>

#include "mpr/descriptors.hpp"
#include "mpr/error.hpp"
#include "orb_pattern.hpp"

namespace mpr {

namespace {

constexpr int kHalfPatch = 15;
// rotated pattern points reach sqrt(2)*13 from the centre; FAST needs 3
constexpr int kEdge = 19;
constexpr int kHarrisBlock = 7;
constexpr double kHarrisK = 0.04;

constexpr int kCircle[16][2] = {{0, 3},  {1, 3},   {2, 2},   {3, 1},   {3, 0},  {3, -1}, {2, -2}, {1, -3},
                                {0, -3}, {-1, -3}, {-2, -2}, {-3, -1}, {-3, 0}, {-3, 1}, {-2, 2}, {-1, 3}};

/// FAST-9 segment test: 9 contiguous circle pixels all brighter or all darker by > threshold.
bool is_fast_corner(const cv::Mat& img, int x, int y, int threshold) {
  const int c = img.at<std::uint8_t>(y, x);
  const auto differs = [&](int k) {
    const int v = img.at<std::uint8_t>(y + kCircle[k][1], x + kCircle[k][0]);
    return v > c + threshold || v < c - threshold;
  };
  // every arc of 9 covers pixel 0 or 8, and pixel 4 or 12
  if ((!differs(0) && !differs(8)) || (!differs(4) && !differs(12))) return false;
  int state[32];
  for (int k = 0; k < 16; ++k) {
    const int v = img.at<std::uint8_t>(y + kCircle[k][1], x + kCircle[k][0]);
    state[k] = v > c + threshold ? 1 : (v < c - threshold ? -1 : 0);
    state[k + 16] = state[k];
  }
  int run = 0;
  int last = 0;
  for (int k = 0; k < 32; ++k) {
    if (state[k] != 0 && state[k] == last) {
      if (++run >= 9) return true;
    } else {
      run = state[k] != 0 ? 1 : 0;
      last = state[k];
    }
  }
  return false;
}

double harris_response(const cv::Mat& img, int x, int y) {
  const int r = kHarrisBlock / 2;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int px = x + dx;
      const int py = y + dy;
      const double ix = double(img.at<std::uint8_t>(py, px + 1)) - double(img.at<std::uint8_t>(py, px - 1));
      const double iy = double(img.at<std::uint8_t>(py + 1, px)) - double(img.at<std::uint8_t>(py - 1, px));
      a += ix * ix;
      b += iy * iy;
      c += ix * iy;
    }
  }
  return a * b - c * c - kHarrisK * (a + b) * (a + b);
}

/// Intensity-centroid orientation over a disc of radius kHalfPatch.
float centroid_angle(const cv::Mat& img, int x, int y) {
  double m01 = 0.0;
  double m10 = 0.0;
  for (int dy = -kHalfPatch; dy <= kHalfPatch; ++dy) {
    const int span = int(std::sqrt(double(kHalfPatch * kHalfPatch - dy * dy)));
    const auto* row = img.ptr<std::uint8_t>(y + dy);
    for (int dx = -span; dx <= span; ++dx) {
      const double v = row[x + dx];
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  return float(std::atan2(m01, m10));
}

BinaryFeature steered_brief(const cv::Mat& blurred, int x, int y, float angle) {
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  BinaryFeature desc{};
  const auto& pattern = detail::kOrbPattern;
  for (int i = 0; i < 256; ++i) {
    const int* p = &pattern[std::size_t(i) * 4];
    const auto sample = [&](int px, int py) {
      const int rx = int(std::lround(px * ca - py * sa));
      const int ry = int(std::lround(px * sa + py * ca));
      return blurred.at<std::uint8_t>(y + ry, x + rx);
    };
    if (sample(p[0], p[1]) < sample(p[2], p[3])) desc[std::size_t(i / 8)] |= std::uint8_t(1u << (i % 8));
  }
  return desc;
}

struct Candidate {
  int x;
  int y;
  double response;
};

/// FAST corners surviving non-maximum suppression, with position and response only.
void detect_level(const cv::Mat& img, int level, float scale, int threshold, std::vector<Keypoint>& out) {
  if (img.cols <= 2 * kEdge || img.rows <= 2 * kEdge) return;
  std::vector<Candidate> candidates;
  cv::Mat score(img.size(), CV_64FC1, cv::Scalar(-std::numeric_limits<double>::infinity()));
  for (int y = kEdge; y < img.rows - kEdge; ++y) {
    for (int x = kEdge; x < img.cols - kEdge; ++x) {
      if (!is_fast_corner(img, x, y, threshold)) continue;
      const double r = harris_response(img, x, y);
      score.at<double>(y, x) = r;
      candidates.push_back({x, y, r});
    }
  }

  for (const auto& c : candidates) {
    // 3x3 non-maximum suppression; on equal scores the earlier (raster order) pixel wins
    bool keep = true;
    for (int dy = -1; dy <= 1 && keep; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const double other = score.at<double>(c.y + dy, c.x + dx);
        const bool earlier = dy < 0 || (dy == 0 && dx < 0);
        if (other > c.response || (other == c.response && earlier)) {
          keep = false;
          break;
        }
      }
    }
    if (!keep) continue;
    Keypoint kp;
    kp.x = float(c.x) * scale;
    kp.y = float(c.y) * scale;
    kp.response = float(c.response);
    kp.level = level;
    out.push_back(kp);
  }
}

}  // namespace

std::vector<Keypoint> detect_and_describe(const cv::Mat& gray_in, const OrbParams& params) {
  if (params.max_keypoints < 1) throw Error(ErrorCode::InvalidArgument, "max_keypoints must be >= 1");
  if (params.pyramid_levels < 1 || !(params.scale_factor > 1.0f)) {
    throw Error(ErrorCode::InvalidArgument, "bad ORB pyramid parameters");
  }
  if (gray_in.empty()) return {};
  const cv::Mat gray = to_gray(gray_in);

  std::vector<Keypoint> keypoints;
  std::vector<cv::Mat> levels;
  std::vector<float> scales;
  float scale = 1.0f;
  for (int level = 0; level < params.pyramid_levels; ++level) {
    cv::Mat level_img = gray;
    if (level > 0) {
      scale *= params.scale_factor;
      const cv::Size size(int(std::lround(gray.cols / scale)), int(std::lround(gray.rows / scale)));
      if (size.width <= 2 * kEdge || size.height <= 2 * kEdge) break;
      cv::resize(gray, level_img, size, 0, 0, cv::INTER_LINEAR);
    }
    levels.push_back(level_img);
    scales.push_back(scale);
    detect_level(level_img, level, scale, params.fast_threshold, keypoints);
  }

  std::sort(keypoints.begin(), keypoints.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.level != b.level) return a.level < b.level;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (keypoints.size() > std::size_t(params.max_keypoints)) keypoints.resize(std::size_t(params.max_keypoints));

  // orientation and descriptor only for the survivors
  std::vector<cv::Mat> blurred(levels.size());
  for (auto& kp : keypoints) {
    const auto lv = std::size_t(kp.level);
    if (blurred[lv].empty()) cv::GaussianBlur(levels[lv], blurred[lv], cv::Size(7, 7), 2.0, 2.0, cv::BORDER_REFLECT_101);
    const int x = int(std::lround(kp.x / scales[lv]));
    const int y = int(std::lround(kp.y / scales[lv]));
    kp.angle = centroid_angle(levels[lv], x, y);
    kp.descriptor = steered_brief(blurred[lv], x, y, kp.angle);
  }
  return keypoints;
}

}  // namespace mpr
