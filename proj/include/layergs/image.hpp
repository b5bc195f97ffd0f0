#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace lgs {

/// Dense row-major H x W x C image of doubles. Channel-interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ &&
           channels_ == o.channels_;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Max absolute difference; images must be same shape.
double max_abs_diff(const Image& a, const Image& b);

/// Mean squared error over all entries.
double mse(const Image& a, const Image& b);

/// Peak signal-to-noise ratio in dB for a [0, 1] dynamic range.
double psnr(const Image& a, const Image& b);

}  // namespace lgs
