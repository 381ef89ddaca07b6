#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "slm/errors.hpp"

namespace slm {

/// Row-major 2D raster; row 0 is the top of the image.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw ParameterError("raster: negative size");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Camera-frame z in meters; background pixels hold +infinity.
using DepthImage = Raster<float>;
/// Nonzero marks a pixel whose 3D point lies inside the capture region.
using SubjectMask = Raster<std::uint8_t>;
using ColorImage = Raster<Rgb>;
using GrayImage = Raster<float>;

inline constexpr float kBackgroundDepth = std::numeric_limits<float>::infinity();

/// Rec.601 luma scaled to [0, 1].
GrayImage to_gray(const ColorImage& image);

/// Portable Float Map, single channel, little-endian (scale -1.0), rows
/// stored bottom-to-top as the format requires.
void write_pfm(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_pfm(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ColorImage& image);
/// 8-bit grayscale PNG; nonzero mask values are written as 255.
void write_png(const std::filesystem::path& path, const SubjectMask& mask);
ColorImage read_png_rgb(const std::filesystem::path& path);
SubjectMask read_png_mask(const std::filesystem::path& path);

}  // namespace slm
