#include "slm/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"

namespace slm {

std::string to_string(DetectionSource source) {
  switch (source) {
    case DetectionSource::log_baseline: return "log_baseline";
    case DetectionSource::external: return "external";
    case DetectionSource::ground_truth: return "ground_truth";
  }
  return "external";
}

DetectionSource detection_source_from_string(const std::string& text) {
  if (text == "log_baseline") return DetectionSource::log_baseline;
  if (text == "external") return DetectionSource::external;
  if (text == "ground_truth") return DetectionSource::ground_truth;
  throw FormatError("unknown detection source '" + text + "'");
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BBox clamp_to_image(const BBox& box, int width, int height) {
  const double x0 = std::clamp(box.x, -0.5, width - 0.5);
  const double y0 = std::clamp(box.y, -0.5, height - 0.5);
  const double x1 = std::clamp(box.x + box.w, -0.5, width - 0.5);
  const double y1 = std::clamp(box.y + box.h, -0.5, height - 0.5);
  return {x0, y0, x1 - x0, y1 - y0};
}

namespace {

std::vector<int> tile_origins(int extent, int tile_size, int stride) {
  if (extent <= tile_size) return {0};
  const int count = (extent - tile_size + stride - 1) / stride + 1;
  std::vector<int> origins;
  origins.reserve(count);
  for (int k = 0; k + 1 < count; ++k) origins.push_back(k * stride);
  origins.push_back(extent - tile_size);
  return origins;
}

}  // namespace

TileGrid tile(int width, int height, int tile_size, double overlap) {
  if (width < 1 || height < 1) throw ParameterError("tile: image size must be positive");
  if (tile_size < 1) throw ParameterError("tile: tile size must be at least 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ParameterError("tile: overlap must be in [0, 1)");
  TileGrid grid;
  grid.tile_size = tile_size;
  grid.overlap = overlap;
  grid.stride = static_cast<int>(std::lround(tile_size * (1.0 - overlap)));
  if (grid.stride < 1) throw ParameterError("tile: stride rounds to zero");
  grid.image_width = width;
  grid.image_height = height;
  grid.padded_width = std::max(width, tile_size);
  grid.padded_height = std::max(height, tile_size);
  const auto xs = tile_origins(width, tile_size, grid.stride);
  const auto ys = tile_origins(height, tile_size, grid.stride);
  for (int y : ys) {
    for (int x : xs) grid.offsets.push_back({x, y});
  }
  return grid;
}

namespace {

template <typename T>
Raster<T> crop_replicate(const Raster<T>& image, int ox, int oy, int size, int margin) {
  const int side = size + 2 * margin;
  Raster<T> out(side, side);
  for (int y = 0; y < side; ++y) {
    const int sy = std::clamp(oy - margin + y, 0, image.height() - 1);
    for (int x = 0; x < side; ++x) {
      const int sx = std::clamp(ox - margin + x, 0, image.width() - 1);
      out.at(x, y) = image.at(sx, sy);
    }
  }
  return out;
}

/// Gaussian weights integrated over each unit pixel, normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  const double s = sigma * std::numbers::sqrt2;
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = 0.5 * (std::erf((k + 0.5) / s) - std::erf((k - 0.5) / s));
    sum += w[k + radius];
  }
  for (auto& v : w) v /= sum;
  return w;
}

using Plane2 = std::vector<double>;

Plane2 blur(const Plane2& src, int width, int height, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int r = static_cast<int>(kernel.size() / 2);
  Plane2 tmp(src.size()), out(src.size());
  for (int y = 0; y < height; ++y) {
    const double* row = &src[static_cast<std::size_t>(y) * width];
    double* dst = &tmp[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      if (x >= r && x + r < width) {
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * row[x + k];
      } else {
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * row[std::clamp(x + k, 0, width - 1)];
      }
      dst[x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    double* dst = &out[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) dst[x] = 0.0;
    for (int k = -r; k <= r; ++k) {
      const int sy = std::clamp(y + k, 0, height - 1);
      const double* row = &tmp[static_cast<std::size_t>(sy) * width];
      const double wk = kernel[k + r];
      for (int x = 0; x < width; ++x) dst[x] += wk * row[x];
    }
  }
  return out;
}

/// sigma^2 times the 5-point Laplacian of the blurred image.
Plane2 normalized_log(const Plane2& image, int width, int height, double sigma) {
  const Plane2 s = blur(image, width, height, sigma);
  Plane2 out(s.size());
  const double norm = sigma * sigma;
  const auto at = [&](int x, int y) {
    return s[static_cast<std::size_t>(std::clamp(y, 0, height - 1)) * width +
             std::clamp(x, 0, width - 1)];
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double c = s[static_cast<std::size_t>(y) * width + x];
      out[static_cast<std::size_t>(y) * width + x] =
          norm * (at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * c);
    }
  }
  return out;
}

double parabolic_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (!(denom < 0.0)) return 0.0;
  // Kept below half a pixel so the refined center still rounds to its pixel.
  return std::clamp(0.5 * (left - right) / denom, -0.49, 0.49);
}

bool ranks_before(const Detection2D& a, const Detection2D& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.bbox.x != b.bbox.x) return a.bbox.x < b.bbox.x;
  if (a.bbox.y != b.bbox.y) return a.bbox.y < b.bbox.y;
  return a.det_id < b.det_id;
}

}  // namespace

GrayImage crop_tile(const GrayImage& image, int origin_x, int origin_y, int size, int margin) {
  return crop_replicate(image, origin_x, origin_y, size, margin);
}

SubjectMask crop_tile(const SubjectMask& mask, int origin_x, int origin_y, int size, int margin) {
  return crop_replicate(mask, origin_x, origin_y, size, margin);
}

std::vector<Detection2D> detect_blobs_log(const GrayImage& image, const LogParams& params,
                                          const SubjectMask& mask) {
  if (params.scales.empty()) throw ParameterError("detect_blobs_log: no scales");
  for (std::size_t i = 0; i < params.scales.size(); ++i) {
    if (!(params.scales[i] > 0.0) || (i > 0 && !(params.scales[i] > params.scales[i - 1]))) {
      throw ParameterError("detect_blobs_log: scales must be positive and ascending");
    }
  }
  const bool use_mask = !mask.empty();
  if (use_mask && (mask.width() != image.width() || mask.height() != image.height())) {
    throw ParameterError("detect_blobs_log: mask size differs from image");
  }
  const int width = image.width(), height = image.height();
  std::vector<Detection2D> out;
  if (width == 0 || height == 0) return out;

  Plane2 base(image.data().begin(), image.data().end());
  const std::size_t n_scales = params.scales.size();
  // Sliding window of three adjacent scale responses.
  std::vector<Plane2> window(3);
  const auto response = [&](std::size_t s) { return normalized_log(base, width, height, params.scales[s]); };
  window[1] = response(0);
  if (n_scales > 1) window[2] = response(1);

  constexpr double kDiskPeak = 2.0 / std::numbers::e;
  for (std::size_t s = 0; s < n_scales; ++s) {
    const Plane2* below = s > 0 ? &window[0] : nullptr;
    const Plane2& here = window[1];
    const Plane2* above = s + 1 < n_scales ? &window[2] : nullptr;
    const Plane2* levels[3] = {below, &here, above};
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        const double v = here[idx];
        if (!(v > params.response_threshold)) continue;
        if (use_mask && !mask.at(x, y)) continue;
        bool is_max = true;
        for (int ds = -1; ds <= 1 && is_max; ++ds) {
          const Plane2* level = levels[ds + 1];
          if (!level) continue;
          for (int dy = -1; dy <= 1 && is_max; ++dy) {
            const int ny = y + dy;
            if (ny < 0 || ny >= height) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int nx = x + dx;
              if (nx < 0 || nx >= width || (ds == 0 && dy == 0 && dx == 0)) continue;
              const double n = (*level)[static_cast<std::size_t>(ny) * width + nx];
              // Exact ties go to the neighbor later in (scale, y, x) order.
              const bool later = ds > 0 || (ds == 0 && (dy > 0 || (dy == 0 && dx > 0)));
              if (later ? !(v > n) : !(v >= n)) {
                is_max = false;
                break;
              }
            }
          }
        }
        if (!is_max) continue;
        const auto at = [&](int xx, int yy) {
          return here[static_cast<std::size_t>(std::clamp(yy, 0, height - 1)) * width +
                      std::clamp(xx, 0, width - 1)];
        };
        const double cx = x + parabolic_offset(at(x - 1, y), v, at(x + 1, y));
        const double cy = y + parabolic_offset(at(x, y - 1), v, at(x, y + 1));
        const double half = params.scales[s] * std::numbers::sqrt2;
        const BBox box = clamp_to_image({cx - half, cy - half, 2 * half, 2 * half}, width, height);
        if (box.w < params.min_box_px || box.h < params.min_box_px) continue;
        Detection2D det;
        det.bbox = box;
        det.score = std::clamp(v / kDiskPeak, 0.0, 1.0);
        det.source = DetectionSource::log_baseline;
        out.push_back(det);
      }
    }
    if (s + 1 < n_scales) {
      window[0] = std::move(window[1]);
      window[1] = std::move(window[2]);
      window[2] = s + 2 < n_scales ? response(s + 2) : Plane2{};
    }
  }
  std::sort(out.begin(), out.end(), ranks_before);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].det_id = static_cast<int>(i);
  return out;
}

std::vector<Detection2D> soft_nms(std::vector<Detection2D> dets, double sigma, double score_floor) {
  if (!(sigma > 0.0)) throw ParameterError("soft_nms: sigma must be positive");
  std::vector<Detection2D> kept;
  dets.erase(std::remove_if(dets.begin(), dets.end(),
                            [&](const Detection2D& d) { return d.score < score_floor; }),
             dets.end());
  while (!dets.empty()) {
    auto best = std::min_element(dets.begin(), dets.end(), ranks_before);
    Detection2D chosen = *best;
    dets.erase(best);
    for (auto& d : dets) {
      const double o = iou(chosen.bbox, d.bbox);
      d.score *= std::exp(-(o * o) / sigma);
    }
    dets.erase(std::remove_if(dets.begin(), dets.end(),
                              [&](const Detection2D& d) { return d.score < score_floor; }),
               dets.end());
    kept.push_back(std::move(chosen));
  }
  return kept;
}

std::vector<Detection2D> merge_tile_detections(const std::vector<TileDetections>& per_tile,
                                               const TileGrid& grid, const NmsParams& nms) {
  std::vector<Detection2D> all;
  for (const auto& tile_dets : per_tile) {
    for (auto det : tile_dets.detections) {
      det.bbox.x += tile_dets.origin[0];
      det.bbox.y += tile_dets.origin[1];
      det.bbox = clamp_to_image(det.bbox, grid.image_width, grid.image_height);
      if (det.bbox.w <= 0.0 || det.bbox.h <= 0.0) continue;
      all.push_back(std::move(det));
    }
  }
  auto merged = soft_nms(std::move(all), nms.sigma, nms.score_floor);
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i].det_id = static_cast<int>(i);
  return merged;
}

std::vector<Detection2D> detect_tiled(const GrayImage& image, const SubjectMask& mask,
                                      const TileGrid& grid, const LogParams& params,
                                      const NmsParams& nms) {
  if (params.scales.empty()) throw ParameterError("detect_tiled: no scales");
  if (grid.image_width != image.width() || grid.image_height != image.height()) {
    throw ParameterError("detect_tiled: grid does not match the image");
  }
  const bool use_mask = !mask.empty();
  if (use_mask && (mask.width() != image.width() || mask.height() != image.height())) {
    throw ParameterError("detect_tiled: mask size differs from image");
  }
  // Every tile sees real image context, so its responses equal those of the
  // whole image. They are computed once over the subject's bounding box
  // grown by the blur support, then each tile takes the maxima in its core.
  const int margin = static_cast<int>(std::ceil(3.0 * params.scales.back())) + 3;
  int bx0 = 0, by0 = 0, bx1 = image.width() - 1, by1 = image.height() - 1;
  if (use_mask) {
    bx0 = image.width();
    by0 = image.height();
    bx1 = by1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        if (!mask.at(x, y)) continue;
        bx0 = std::min(bx0, x);
        bx1 = std::max(bx1, x);
        by0 = std::min(by0, y);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 < 0) return {};
    bx0 = std::max(0, bx0 - margin);
    by0 = std::max(0, by0 - margin);
    bx1 = std::min(image.width() - 1, bx1 + margin);
    by1 = std::min(image.height() - 1, by1 + margin);
  }
  const int cw = bx1 - bx0 + 1, ch = by1 - by0 + 1;
  GrayImage crop(cw, ch);
  SubjectMask crop_mask;
  if (use_mask) crop_mask = SubjectMask(cw, ch);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      crop.at(x, y) = image.at(bx0 + x, by0 + y);
      if (use_mask) crop_mask.at(x, y) = mask.at(bx0 + x, by0 + y);
    }
  }
  auto found = detect_blobs_log(crop, params, crop_mask);
  for (auto& det : found) {
    det.bbox.x += bx0;
    det.bbox.y += by0;
  }

  const int size = grid.tile_size;
  std::vector<TileDetections> per_tile;
  for (const auto& origin : grid.offsets) {
    const int ox = origin[0], oy = origin[1];
    if (use_mask) {
      bool any = false;
      const int x1 = std::min(ox + size, mask.width()), y1 = std::min(oy + size, mask.height());
      for (int y = oy; y < y1 && !any; ++y) {
        for (int x = ox; x < x1; ++x) {
          if (mask.at(x, y)) {
            any = true;
            break;
          }
        }
      }
      if (!any) continue;
    }
    TileDetections td;
    td.origin = origin;
    for (auto det : found) {
      // Maxima whose pixel lies in the tile core, in tile coordinates.
      const long px = std::lround(det.bbox.cx()) - ox, py = std::lround(det.bbox.cy()) - oy;
      if (px < 0 || px >= size || py < 0 || py >= size) continue;
      det.bbox.x -= ox;
      det.bbox.y -= oy;
      td.detections.push_back(det);
    }
    per_tile.push_back(std::move(td));
  }
  return merge_tile_detections(per_tile, grid, nms);
}

void to_json(nlohmann::json& j, const Detection2D& det) {
  j = nlohmann::json{{"det_id", det.det_id},
                     {"bbox", {det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h}},
                     {"score", det.score},
                     {"source", to_string(det.source)},
                     {"removed", det.removed},
                     {"notes", det.notes}};
}

void from_json(const nlohmann::json& j, Detection2D& det) {
  try {
    det.det_id = j.at("det_id").get<int>();
    const auto b = j.at("bbox").get<std::vector<double>>();
    if (b.size() != 4) throw FormatError("bbox must hold 4 numbers");
    det.bbox = {b[0], b[1], b[2], b[3]};
    det.score = j.value("score", 1.0);
    det.source = detection_source_from_string(j.value("source", std::string("external")));
    det.removed = j.value("removed", false);
    det.notes = j.value("notes", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detection record: ") + e.what());
  }
  if (!(det.bbox.w > 0.0) || !(det.bbox.h > 0.0)) {
    throw FormatError("detection record: box width and height must be positive");
  }
  if (!(det.score >= 0.0 && det.score <= 1.0)) {
    throw FormatError("detection record: score outside [0, 1]");
  }
}

nlohmann::json detections_to_json(const DetectionSet& set) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [image_id, dets] : set) j[image_id] = dets;
  return j;
}

DetectionSet detections_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("detections: expected an object keyed by image id");
  DetectionSet set;
  for (const auto& [image_id, items] : j.items()) {
    auto& dets = set[image_id];
    for (const auto& item : items) {
      auto det = item.get<Detection2D>();
      det.image_id = image_id;
      dets.push_back(std::move(det));
    }
  }
  return set;
}

DetectionSet read_detections(const std::filesystem::path& path) {
  return detections_from_json(read_json(path));
}

void write_detections(const std::filesystem::path& path, const DetectionSet& set) {
  write_json(path, detections_to_json(set));
}

}  // namespace slm
