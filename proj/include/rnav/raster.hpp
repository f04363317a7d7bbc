#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace rnav {

/// Row-major 2D grid. Pixel access is (i, j) = (column, row).
template <typename T>
class Raster {
public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {
    assert(width > 0 && height > 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& at(int i, int j) {
    assert(i >= 0 && i < width_ && j >= 0 && j < height_);
    return data_[static_cast<std::size_t>(j) * width_ + i];
  }
  const T& at(int i, int j) const {
    assert(i >= 0 && i < width_ && j >= 0 && j < height_);
    return data_[static_cast<std::size_t>(j) * width_ + i];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(int w, int h) const { return width_ == w && height_ == h; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthRaster = Raster<float>;

// Validity masks store 0 (invalid) or 255 (valid), matching the PGM encoding.
using MaskRaster = Raster<std::uint8_t>;

constexpr std::uint8_t kMaskValid = 255;
constexpr std::uint8_t kMaskInvalid = 0;

inline bool mask_valid(std::uint8_t m) { return m != 0; }

}  // namespace rnav
