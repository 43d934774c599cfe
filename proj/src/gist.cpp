// GIST: log + whitening/local contrast normalization, a frequency-domain Gabor
// bank, and block-averaged response magnitudes.
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include <opencv2/imgproc.hpp>

#include "mpr/descriptors.hpp"
#include "mpr/error.hpp"

namespace mpr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPrefilterMinPad = 5;
constexpr double kPrefilterCutoff = 4.0;

/// Frequency coordinate of DFT bin u in a length-n transform (0 at DC, negative above n/2).
double bin_frequency(int u, int n) { return u < (n + 1) / 2 ? double(u) : double(u - n); }

cv::Mat whitening_filter(int rows, int cols) {
  const double s1 = kPrefilterCutoff / std::sqrt(std::log(2.0));
  cv::Mat g(rows, cols, CV_64FC1);
  for (int v = 0; v < rows; ++v) {
    const double fy = bin_frequency(v, rows);
    for (int u = 0; u < cols; ++u) {
      const double fx = bin_frequency(u, cols);
      g.at<double>(v, u) = std::exp(-(fx * fx + fy * fy) / (s1 * s1));
    }
  }
  return g;
}

/// Padded prefilter side: at least kPrefilterMinPad per border, rounded up to a fast DFT length.
int padded_size(int n) { return cv::getOptimalDFTSize(n + 2 * kPrefilterMinPad); }

struct GaborBank {
  cv::Mat whitening;             // padded prefilter size
  std::vector<cv::Mat> filters;  // image_size x image_size transfer functions
};

std::shared_ptr<const GaborBank> make_bank(const GistParams& p) {
  auto bank = std::make_shared<GaborBank>();
  const int n = p.image_size;
  bank->whitening = whitening_filter(padded_size(n), padded_size(n));
  for (int s = 0; s < p.scales; ++s) {
    const double radial_width = 0.35;
    const double peak = 0.3 / std::pow(1.85, s);
    const double angular_width = 16.0 * p.orientations * p.orientations / (32.0 * 32.0);
    for (int o = 0; o < p.orientations; ++o) {
      const double phase = kPi / p.orientations * o;
      cv::Mat g(n, n, CV_64FC1);
      for (int v = 0; v < n; ++v) {
        const double fy = bin_frequency(v, n);
        for (int u = 0; u < n; ++u) {
          const double fx = bin_frequency(u, n);
          const double fr = std::hypot(fx, fy);
          double t = std::atan2(fy, fx) + phase;
          if (t < -kPi) t += 2.0 * kPi;
          else if (t > kPi) t -= 2.0 * kPi;
          const double r = fr / n / peak - 1.0;
          g.at<double>(v, u) = std::exp(-10.0 * radial_width * r * r - 2.0 * angular_width * kPi * t * t);
        }
      }
      bank->filters.push_back(g);
    }
  }
  return bank;
}

const GaborBank& bank_for(const GistParams& p) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const GaborBank>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[{p.image_size, p.scales, p.orientations}];
  if (!slot) slot = make_bank(p);
  return *slot;
}

/// Multiply a two-channel spectrum by a real transfer function of the same depth.
template <typename T>
cv::Mat apply_filter(const cv::Mat& spectrum, const cv::Mat& filter) {
  cv::Mat out(spectrum.size(), spectrum.type());
  for (int y = 0; y < spectrum.rows; ++y) {
    const auto* s = spectrum.ptr<cv::Vec<T, 2>>(y);
    const auto* f = filter.ptr<T>(y);
    auto* o = out.ptr<cv::Vec<T, 2>>(y);
    for (int x = 0; x < spectrum.cols; ++x) o[x] = s[x] * f[x];
  }
  return out;
}

cv::Mat forward(const cv::Mat& real) {
  cv::Mat spectrum;
  cv::dft(real, spectrum, cv::DFT_COMPLEX_OUTPUT);
  return spectrum;
}

cv::Mat inverse(const cv::Mat& spectrum) {
  cv::Mat spatial;
  cv::dft(spectrum, spatial, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
  return spatial;
}

/// Log, whiten, and divide by local contrast. Input/output CV_64FC1, same size.
cv::Mat prefilter(const cv::Mat& image, const cv::Mat& whitening) {
  cv::Mat logged;
  cv::log(image + 1.0, logged);
  const int before = (whitening.rows - image.rows) / 2;
  const int after = whitening.rows - image.rows - before;
  cv::Mat padded;
  cv::copyMakeBorder(logged, padded, before, after, before, after, cv::BORDER_REFLECT);

  cv::Mat lowpass;
  cv::extractChannel(inverse(apply_filter<double>(forward(padded), whitening)), lowpass, 0);
  cv::Mat highpass = padded - lowpass;

  cv::Mat energy = inverse(apply_filter<double>(forward(highpass.mul(highpass)), whitening));
  cv::Mat out(highpass.size(), CV_64FC1);
  for (int y = 0; y < out.rows; ++y) {
    const auto* h = highpass.ptr<double>(y);
    const auto* e = energy.ptr<cv::Vec2d>(y);
    auto* o = out.ptr<double>(y);
    for (int x = 0; x < out.cols; ++x) o[x] = h[x] / (0.2 + std::sqrt(std::sqrt(e[x][0] * e[x][0] + e[x][1] * e[x][1])));
  }
  return out(cv::Rect(before, before, image.cols, image.rows)).clone();
}

}  // namespace

DescriptorVector extract_gist(const cv::Mat& gray_in, const GistParams& params, Modality modality) {
  if (gray_in.empty()) throw Error(ErrorCode::EmptyImage, "GIST of an empty image");
  if (params.image_size < 8 || params.scales < 1 || params.orientations < 1 || params.grid < 1 ||
      params.image_size % params.grid != 0) {
    throw Error(ErrorCode::InvalidArgument, "bad GIST parameters");
  }
  const cv::Mat gray = to_gray(gray_in);
  const int n = params.image_size;

  DescriptorVector out;
  out.kind = DescriptorKind::GIST;
  out.modality = modality;
  out.dimension = params.dimension();
  DenseVector values(out.dimension, 0.0);

  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(gray, &lo, &hi);
  if (lo == hi) {
    // no contrast: normalization leaves no signal
    out.payload = std::move(values);
    return out;
  }

  cv::Mat resized;
  const bool shrinking = gray.cols >= n && gray.rows >= n;
  cv::resize(gray, resized, cv::Size(n, n), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  cv::Mat image;
  resized.convertTo(image, CV_64FC1);

  const GaborBank& bank = bank_for(params);
  const cv::Mat spectrum = forward(prefilter(image, bank.whitening));

  const int block = n / params.grid;
  const double block_area = double(block) * block;
  std::size_t slot = 0;
  for (const cv::Mat& filter : bank.filters) {
    const cv::Mat response = inverse(apply_filter<double>(spectrum, filter));
    for (int by = 0; by < params.grid; ++by) {
      for (int bx = 0; bx < params.grid; ++bx) {
        double sum = 0.0;
        for (int y = by * block; y < (by + 1) * block; ++y) {
          const auto* r = response.ptr<cv::Vec2d>(y);
          for (int x = bx * block; x < (bx + 1) * block; ++x) sum += std::sqrt(r[x][0] * r[x][0] + r[x][1] * r[x][1]);
        }
        values[slot++] = sum / block_area;
      }
    }
  }
  out.payload = std::move(values);
  return out;
}

}  // namespace mpr
