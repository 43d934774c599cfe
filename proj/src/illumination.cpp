#include <cmath>

#include <opencv2/imgproc.hpp>

#include "mpr/descriptors.hpp"
#include "mpr/error.hpp"

namespace mpr {

cv::Mat illumination_invariant_response(const cv::Mat& bgr, double alpha) {
  if (bgr.empty()) throw Error(ErrorCode::EmptyImage, "illumination transform of an empty image");
  if (bgr.channels() != 3 || bgr.depth() != CV_8U) {
    throw Error(ErrorCode::WrongChannelCount, "illumination transform needs an 8-bit 3-channel image");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");

  // log((v+1)/256) for every 8-bit value
  double lut[256];
  for (int v = 0; v < 256; ++v) lut[v] = std::log((v + 1.0) / 256.0);

  cv::Mat out(bgr.size(), CV_64FC1);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* src = bgr.ptr<cv::Vec3b>(y);
    auto* dst = out.ptr<double>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = src[x];
      dst[x] = 0.5 + lut[px[1]] - alpha * lut[px[0]] - (1.0 - alpha) * lut[px[2]];
    }
  }
  return out;
}

cv::Mat illumination_invariant_transform(const cv::Mat& bgr, double alpha) {
  const cv::Mat response = illumination_invariant_response(bgr, alpha);
  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(response, &lo, &hi);
  cv::Mat out(bgr.size(), CV_8UC1, cv::Scalar(0));
  if (hi > lo) response.convertTo(out, CV_8UC1, 255.0 / (hi - lo), -lo * 255.0 / (hi - lo));
  return out;
}

cv::Mat to_gray(const cv::Mat& image) {
  if (image.empty()) throw Error(ErrorCode::EmptyImage, "empty image");
  if (image.depth() != CV_8U) throw Error(ErrorCode::InvalidArgument, "expected an 8-bit image");
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "expected 1 or 3 channels");
  cv::Mat gray;
  cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  return gray;
}

}  // namespace mpr
