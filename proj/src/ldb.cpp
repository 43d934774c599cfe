#include <opencv2/imgproc.hpp>

#include "mpr/descriptors.hpp"
#include "mpr/error.hpp"

namespace mpr {

std::size_t LdbParams::bit_count() const noexcept {
  std::size_t bits = 0;
  for (int g : levels) {
    const std::size_t cells = std::size_t(g) * std::size_t(g);
    bits += 3 * (cells * (cells - 1) / 2);
  }
  return bits;
}

namespace {

struct CellStats {
  double intensity;
  double dx;
  double dy;
};

/// Box sum over [x0,x1) x [y0,y1) from a (rows+1)x(cols+1) CV_64F integral image.
double box_sum(const cv::Mat& integral, int x0, int y0, int x1, int y1) {
  return integral.at<double>(y1, x1) - integral.at<double>(y0, x1) - integral.at<double>(y1, x0) +
         integral.at<double>(y0, x0);
}

}  // namespace

DescriptorVector extract_ldb(const cv::Mat& gray_in, const LdbParams& params, Modality modality) {
  if (gray_in.empty()) throw Error(ErrorCode::EmptyImage, "LDB of an empty image");
  const int n = params.image_size;
  for (int g : params.levels) {
    if (g < 1 || g > n) throw Error(ErrorCode::InvalidArgument, "LDB grid level out of range");
  }
  const cv::Mat gray = to_gray(gray_in);

  cv::Mat small;
  const bool shrinking = gray.cols >= n && gray.rows >= n;
  cv::resize(gray, small, cv::Size(n, n), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);

  // central differences, replicated borders
  cv::Mat dx(n, n, CV_64FC1);
  cv::Mat dy(n, n, CV_64FC1);
  for (int y = 0; y < n; ++y) {
    const auto* row = small.ptr<std::uint8_t>(y);
    const auto* up = small.ptr<std::uint8_t>(std::max(y - 1, 0));
    const auto* down = small.ptr<std::uint8_t>(std::min(y + 1, n - 1));
    for (int x = 0; x < n; ++x) {
      dx.at<double>(y, x) = double(row[std::min(x + 1, n - 1)]) - double(row[std::max(x - 1, 0)]);
      dy.at<double>(y, x) = double(down[x]) - double(up[x]);
    }
  }
  cv::Mat sum_i;
  cv::Mat sum_dx;
  cv::Mat sum_dy;
  cv::integral(small, sum_i, CV_64F);
  cv::integral(dx, sum_dx, CV_64F);
  cv::integral(dy, sum_dy, CV_64F);

  BitString bits(params.bit_count());
  std::size_t bit = 0;
  std::vector<CellStats> cells;
  for (int g : params.levels) {
    cells.clear();
    for (int cy = 0; cy < g; ++cy) {
      const int y0 = cy * n / g;
      const int y1 = (cy + 1) * n / g;
      for (int cx = 0; cx < g; ++cx) {
        const int x0 = cx * n / g;
        const int x1 = (cx + 1) * n / g;
        const double area = double(x1 - x0) * double(y1 - y0);
        cells.push_back({box_sum(sum_i, x0, y0, x1, y1) / area, box_sum(sum_dx, x0, y0, x1, y1) / area,
                         box_sum(sum_dy, x0, y0, x1, y1) / area});
      }
    }
    for (std::size_t a = 0; a < cells.size(); ++a) {
      for (std::size_t b = a + 1; b < cells.size(); ++b) {
        if (cells[a].intensity > cells[b].intensity) bits.set(bit);
        if (cells[a].dx > cells[b].dx) bits.set(bit + 1);
        if (cells[a].dy > cells[b].dy) bits.set(bit + 2);
        bit += 3;
      }
    }
  }

  DescriptorVector out;
  out.kind = DescriptorKind::LDB;
  out.modality = modality;
  out.dimension = bits.size;
  out.payload = std::move(bits);
  return out;
}

}  // namespace mpr
