#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scenefit/errors.hpp"

namespace scenefit {

/// Row-major interleaved image. Pixel (col, row) lives at (row * width + col) * channels.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) throw InvalidInput("image dimensions must be positive");
  }

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  T& at(int col, int row, int c = 0) { return data[offset(col, row, c)]; }
  const T& at(int col, int row, int c = 0) const { return data[offset(col, row, c)]; }
  bool same_shape(int w, int h) const { return width == w && height == h; }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height && a.channels == b.channels && a.data == b.data;
  }

 private:
  std::size_t offset(int col, int row, int c) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + c;
  }
};

using ImageD = Image<double>;
using Mask = Image<std::uint8_t>;

/// Flat pixel index for 0-based array coordinates. With 1-based (u, v) this is
/// the usual i = (v - 1) * U + u, shifted to start at zero.
inline std::size_t pixel_index(int col, int row, int width) {
  return static_cast<std::size_t>(row) * width + col;
}

inline std::size_t mask_count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

}  // namespace scenefit
