#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/image.hpp"

namespace slm {

/// Axis-aligned box in continuous pixel coordinates: pixel (i, j) covers
/// [i-0.5, i+0.5] x [j-0.5, j+0.5].
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

enum class DetectionSource { log_baseline, external, ground_truth };

std::string to_string(DetectionSource source);
DetectionSource detection_source_from_string(const std::string& text);

struct Detection2D {
  std::string image_id;
  int det_id = 0;
  BBox bbox;
  double score = 0.0;
  DetectionSource source = DetectionSource::external;
  bool removed = false;
  std::string notes;

  friend bool operator==(const Detection2D&, const Detection2D&) = default;
};

/// Detections keyed by image id; iteration order is sorted by id.
using DetectionSet = std::map<std::string, std::vector<Detection2D>>;

double iou(const BBox& a, const BBox& b);

/// Clamps a box to the image extent [-0.5, width-0.5] x [-0.5, height-0.5].
BBox clamp_to_image(const BBox& box, int width, int height);

struct TileGrid {
  int tile_size = 608;
  double overlap = 0.5;
  int stride = 304;
  int padded_width = 0;
  int padded_height = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<std::array<int, 2>> offsets;  // tile origins (x, y), row-major
};

/// Tiles of side `tile_size` at multiples of round(tile_size*(1-overlap)),
/// the last row and column shifted back inside the image. Images smaller
/// than a tile yield one edge-padded tile at the origin.
TileGrid tile(int width, int height, int tile_size = 608, double overlap = 0.5);

/// Crops one tile, replicating edge pixels beyond the image. `margin` adds
/// context around the tile on every side.
GrayImage crop_tile(const GrayImage& image, int origin_x, int origin_y, int size, int margin = 0);
SubjectMask crop_tile(const SubjectMask& mask, int origin_x, int origin_y, int size,
                      int margin = 0);

struct LogParams {
  std::vector<double> scales{2, 3, 4, 6, 8, 11, 16};  // sigma in pixels, ascending
  double response_threshold = 0.08;
  double min_box_px = 5.0;  // boxes narrower or shorter than this are dropped
};

/// Multiscale blob detector on the scale-normalized Laplacian of Gaussian,
/// sigma^2 * lap(G_sigma * I), which peaks at the center of dark blobs on a
/// brighter background. Local maxima over (x, y, sigma) are kept when they
/// exceed the threshold and fall on a masked pixel (an empty mask disables the
/// restriction). Each maximum emits a square box of side 2*sqrt(2)*sigma and a
/// score equal to the response divided by the ideal unit-contrast disk peak
/// (2/e), clipped to [0, 1].
std::vector<Detection2D> detect_blobs_log(const GrayImage& image, const LogParams& params,
                                          const SubjectMask& mask = {});

struct NmsParams {
  double sigma = 0.5;
  double score_floor = 0.25;
};

/// Runs the LoG detector tile by tile, skipping tiles without subject pixels.
/// Each tile sees real image context around it so the responses match the
/// untiled detector; results are merged with soft-NMS.
std::vector<Detection2D> detect_tiled(const GrayImage& image, const SubjectMask& mask,
                                      const TileGrid& grid, const LogParams& params,
                                      const NmsParams& nms = {});

/// Gaussian soft-NMS. Repeatedly keeps the highest-scoring box (ties: smaller
/// x, then smaller y) and decays every remaining score by exp(-iou^2/sigma);
/// boxes whose score falls below the floor are dropped. Output is in
/// selection order with decayed scores.
std::vector<Detection2D> soft_nms(std::vector<Detection2D> dets, double sigma = 0.5,
                                  double score_floor = 0.25);

struct TileDetections {
  std::array<int, 2> origin;
  std::vector<Detection2D> detections;  // tile-local coordinates
};

std::vector<Detection2D> merge_tile_detections(const std::vector<TileDetections>& per_tile,
                                               const TileGrid& grid, const NmsParams& nms = {});

struct ImageMetrics {
  std::string image_id;
  std::size_t ground_truth = 0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
  double ap = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvaluationResult {
  double map50 = 0.0;      // mean per-image AP over images with ground truth
  double precision = 0.0;  // mean over images with at least one detection
  double recall = 0.0;     // mean over images with ground truth
  double pooled_ap = 0.0;  // AP with all images pooled into one ranking
  std::vector<ImageMetrics> per_image;
};

/// Average precision at an IoU threshold; greedy score-descending matching,
/// all-points interpolated precision envelope. Removed detections are
/// ignored. Precision and recall use detections scoring >= score_threshold.
/// Throws InputError when the image id sets differ.
EvaluationResult evaluate(const DetectionSet& dets, const DetectionSet& gts,
                          double iou_threshold = 0.5, double score_threshold = 0.0);

void to_json(nlohmann::json& j, const Detection2D& det);
/// `image_id` is not stored per record; the caller assigns it.
void from_json(const nlohmann::json& j, Detection2D& det);

nlohmann::json detections_to_json(const DetectionSet& set);
DetectionSet detections_from_json(const nlohmann::json& j);
DetectionSet read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const DetectionSet& set);

}  // namespace slm
