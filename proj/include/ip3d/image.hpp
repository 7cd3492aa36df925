// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ip3d {

/// Dense H x W x C raster of doubles, channels interleaved, row-major.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<size_t>(height) * width * channels, fill) {
    if (height < 0 || width < 0 || channels < 1) {
      throw std::invalid_argument("Image: bad dimensions");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  Image& operator+=(const Image& other) {
    require_same_shape(other, "operator+=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Image& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  /// this += s * other
  void add_scaled(const Image& other, double s) {
    require_same_shape(other, "add_scaled");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  }

  void require_same_shape(const Image& other, const char* where) const {
    if (!same_shape(other)) {
      throw std::invalid_argument(std::string(where) + ": shape mismatch");
    }
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

inline double mse(const Image& a, const Image& b) {
  a.require_same_shape(b, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

/// Peak signal-to-noise ratio for images in [0, 1].
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

/// Bilinear resample to (height, width). Channel count is preserved.
Image resize_bilinear(const Image& src, int height, int width);

}  // namespace ip3d
