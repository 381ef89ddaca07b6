#include "slm/image.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "slm/fileio.hpp"

namespace slm {

GrayImage to_gray(const ColorImage& image) {
  GrayImage out(image.width(), image.height());
  const auto& src = image.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = (0.299f * src[i].r + 0.587f * src[i].g + 0.114f * src[i].b) / 255.0f;
  }
  return out;
}

void write_pfm(const std::filesystem::path& path, const DepthImage& depth) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian");
  std::ostringstream out;
  out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
  std::string bytes = out.str();
  const std::size_t row_bytes = static_cast<std::size_t>(depth.width()) * sizeof(float);
  const std::size_t header = bytes.size();
  bytes.resize(header + row_bytes * depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    const int src_row = depth.height() - 1 - y;
    std::memcpy(bytes.data() + header + row_bytes * y, &depth.at(0, src_row), row_bytes);
  }
  write_file_atomic(path, bytes);
}

DepthImage read_pfm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || magic != "Pf" || width <= 0 || height <= 0) {
    throw FormatError(path.string() + ": not a single-channel PFM");
  }
  if (scale >= 0.0) throw FormatError(path.string() + ": big-endian PFM is not supported");
  in.get();  // single whitespace before the raster
  const auto offset = static_cast<std::size_t>(in.tellg());
  const std::size_t row_bytes = static_cast<std::size_t>(width) * sizeof(float);
  if (bytes.size() < offset + row_bytes * height) {
    throw FormatError(path.string() + ": truncated PFM raster");
  }
  DepthImage depth(width, height);
  for (int y = 0; y < height; ++y) {
    std::memcpy(&depth.at(0, height - 1 - y), bytes.data() + offset + row_bytes * y, row_bytes);
  }
  return depth;
}

namespace {

void write_png_raw(const std::filesystem::path& path, int width, int height, int format,
                   const void* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = static_cast<png_uint_32>(format);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, pixels, 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

template <typename T>
Raster<T> read_png_raw(const std::filesystem::path& path, int format) {
  const std::string bytes = read_file(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = static_cast<png_uint_32>(format);
  Raster<T> out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data().data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  return out;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ColorImage& image) {
  static_assert(sizeof(Rgb) == 3);
  write_png_raw(path, image.width(), image.height(), PNG_FORMAT_RGB, image.data().data());
}

void write_png(const std::filesystem::path& path, const SubjectMask& mask) {
  std::vector<std::uint8_t> gray(mask.data().size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.data()[i] ? 255 : 0;
  write_png_raw(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, gray.data());
}

ColorImage read_png_rgb(const std::filesystem::path& path) {
  return read_png_raw<Rgb>(path, PNG_FORMAT_RGB);
}

SubjectMask read_png_mask(const std::filesystem::path& path) {
  auto mask = read_png_raw<std::uint8_t>(path, PNG_FORMAT_GRAY);
  for (auto& v : mask.data()) v = v >= 128 ? 1 : 0;
  return mask;
}

}  // namespace slm
