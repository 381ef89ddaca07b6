#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "oracles/oracles.hpp"
#include "slm/detect.hpp"
#include "slm/errors.hpp"
#include "unit/util.hpp"

using namespace slm;

namespace {

// Bright background with dark antialiased disks.
GrayImage disks(int w, int h, const std::vector<std::array<double, 3>>& circles, float bg = 1.0f,
                float fg = 0.0f) {
  GrayImage img(w, h, bg);
  constexpr int kSub = 4;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int inside = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = x - 0.5 + (sx + 0.5) / kSub, py = y - 0.5 + (sy + 0.5) / kSub;
          for (const auto& c : circles) {
            if ((px - c[0]) * (px - c[0]) + (py - c[1]) * (py - c[1]) <= c[2] * c[2]) {
              ++inside;
              break;
            }
          }
        }
      }
      const float f = static_cast<float>(inside) / (kSub * kSub);
      img.at(x, y) = bg + (fg - bg) * f;
    }
  }
  return img;
}

Detection2D box(double x, double y, double w, double h, double score) {
  Detection2D d;
  d.bbox = {x, y, w, h};
  d.score = score;
  return d;
}

double sigma_of(const Detection2D& d) { return d.bbox.w / (2.0 * std::sqrt(2.0)); }

}  // namespace

TEST_CASE("tile grid examples") {
  auto g = tile(608, 608);
  CHECK(g.offsets.size() == 1);
  CHECK(g.offsets[0] == std::array<int, 2>{0, 0});
  g = tile(912, 608);
  CHECK(g.stride == 304);
  REQUIRE(g.offsets.size() == 2);
  CHECK(g.offsets[0] == std::array<int, 2>{0, 0});
  CHECK(g.offsets[1] == std::array<int, 2>{304, 0});
  g = tile(4000, 6000);
  CHECK(g.offsets.size() == 247);
  g = tile(300, 200);
  CHECK(g.offsets.size() == 1);
  CHECK(g.padded_width == 608);
  CHECK_THROWS_AS(tile(100, 100, 0), ParameterError);
  CHECK_THROWS_AS(tile(100, 100, 64, 1.0), ParameterError);
  CHECK_THROWS_AS(tile(0, 100), ParameterError);
}

TEST_CASE("tiles cover every pixel and contain every small box") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(50, 1500);
  std::uniform_int_distribution<int> tsize(16, 400);
  std::uniform_real_distribution<double> ov(0.0, 0.9);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = size(rng), h = size(rng), t = tsize(rng);
    const TileGrid g = tile(w, h, t, ov(rng));
    std::vector<char> cx(w, 0), cy(h, 0);
    for (const auto& o : g.offsets) {
      CHECK(o[0] >= 0);
      CHECK(o[1] >= 0);
      CHECK((o[0] + t <= w || o[0] == 0));
      CHECK((o[1] + t <= h || o[1] == 0));
      for (int x = o[0]; x < std::min(w, o[0] + t); ++x) cx[x] = 1;
      for (int y = o[1]; y < std::min(h, o[1] + t); ++y) cy[y] = 1;
    }
    // The grid is a product, so per-axis coverage is full coverage.
    CHECK(std::count(cx.begin(), cx.end(), 0) == 0);
    CHECK(std::count(cy.begin(), cy.end(), 0) == 0);

    // Boxes no larger than the overlap fit in some tile.
    const int side = std::min({t - g.stride, w, h});
    if (side < 1) continue;
    std::uniform_int_distribution<int> bx(0, w - side), by(0, h - side);
    for (int i = 0; i < 50; ++i) {
      const int x = bx(rng), y = by(rng);
      bool contained = false;
      for (const auto& o : g.offsets) {
        contained = contained || (x >= o[0] && y >= o[1] && x + side <= o[0] + t && y + side <= o[1] + t);
      }
      CHECK(contained);
    }
  }
}

TEST_CASE("iou examples and the pixel oracle") {
  const BBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BBox{20, 20, 5, 5}) == 0.0);
  CHECK(iou(a, BBox{10, 0, 10, 10}) == 0.0);
  CHECK(iou(a, BBox{5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 20), s(1, 12);
  for (int i = 0; i < 200; ++i) {
    const BBox p{double(u(rng)), double(u(rng)), double(s(rng)), double(s(rng))};
    const BBox q{double(u(rng)), double(u(rng)), double(s(rng)), double(s(rng))};
    CHECK(iou(p, q) == doctest::Approx(oracle::pixel_iou(p, q, 1)).epsilon(1e-12));
    CHECK(iou(p, q) == iou(q, p));
  }
}

TEST_CASE("clamp to image") {
  const BBox b = clamp_to_image({-3, 5, 10, 100}, 20, 30);
  CHECK(b.x == -0.5);
  CHECK(b.w == 7.5);
  CHECK(b.y == 5.0);
  CHECK(b.h == 24.5);
}

TEST_CASE("soft-NMS examples") {
  auto out = soft_nms({box(0, 0, 10, 10, 0.7)}, 0.5, 0.25);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.7);

  out = soft_nms({box(0, 0, 10, 10, 0.7), box(50, 50, 10, 10, 0.6)}, 0.5, 0.25);
  REQUIRE(out.size() == 2);
  CHECK(out[0].score == 0.7);
  CHECK(out[1].score == 0.6);

  // Identical boxes: the second decays to 0.8 * exp(-1/0.5).
  std::vector<Detection2D> pair = {box(0, 0, 10, 10, 0.9), box(0, 0, 10, 10, 0.8)};
  out = soft_nms(pair, 0.5, 0.0);
  REQUIRE(out.size() == 2);
  CHECK(out[1].score == doctest::Approx(0.1083).epsilon(5e-4));
  CHECK(out[1].score == doctest::Approx(0.8 * std::exp(-2.0)).epsilon(1e-12));
  out = soft_nms(pair, 0.5, 0.2);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.9);
}

TEST_CASE("soft-NMS tie order") {
  const auto out = soft_nms({box(30, 5, 4, 4, 0.5), box(10, 9, 4, 4, 0.5), box(10, 2, 4, 4, 0.5)});
  REQUIRE(out.size() == 3);
  CHECK(out[0].bbox.x == 10);
  CHECK(out[0].bbox.y == 2);
  CHECK(out[1].bbox.y == 9);
  CHECK(out[2].bbox.x == 30);
}

TEST_CASE("soft-NMS is idempotent once survivors do not overlap") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> pos(0.0, 200.0), sz(5.0, 30.0), sc(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection2D> dets;
    for (int i = 0; i < 15; ++i) dets.push_back(box(pos(rng), pos(rng), sz(rng), sz(rng), sc(rng)));
    const auto once = soft_nms(dets, 0.5, 0.25);
    bool disjoint = true;
    for (std::size_t i = 0; i < once.size(); ++i) {
      for (std::size_t j = i + 1; j < once.size(); ++j) disjoint = disjoint && iou(once[i].bbox, once[j].bbox) == 0.0;
    }
    if (!disjoint) continue;
    ++checked;
    CHECK(soft_nms(once, 0.5, 0.25) == once);
  }
  CHECK(checked > 20);
}

TEST_CASE("soft-NMS is not idempotent when survivors overlap") {
  // Two boxes with IoU 1/3: both survive the first pass, but the second
  // decays again on a rerun.
  const std::vector<Detection2D> dets = {box(0, 0, 10, 10, 0.9), box(5, 0, 10, 10, 0.8)};
  const auto once = soft_nms(dets, 0.5, 0.25);
  REQUIRE(once.size() == 2);
  const auto twice = soft_nms(once, 0.5, 0.25);
  REQUIRE(twice.size() == 2);
  CHECK(twice[1].score < once[1].score);
}

TEST_CASE("merging tile detections") {
  TileGrid g = tile(912, 608);
  // The same lesion seen by both tiles.
  TileDetections t0{{0, 0}, {box(400, 100, 20, 20, 0.9)}};
  TileDetections t1{{304, 0}, {box(96, 100, 20, 20, 0.85)}};
  auto merged = merge_tile_detections({t0, t1}, g);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].bbox == BBox{400, 100, 20, 20});
  CHECK(merged[0].score == 0.9);
  CHECK(merge_tile_detections({}, g).empty());

  g = tile(1216, 608, 608, 0.0);
  TileDetections a{{0, 0}, {box(10, 10, 20, 20, 0.9)}}, b{{608, 0}, {box(10, 10, 20, 20, 0.9)}};
  merged = merge_tile_detections({a, b}, g);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].det_id == 0);
  CHECK(merged[1].det_id == 1);
  CHECK(merged[1].bbox.x == 618);
}

TEST_CASE("LoG: constant image has no detections") {
  CHECK(detect_blobs_log(GrayImage(80, 60, 0.7f), LogParams{}).empty());
  CHECK(detect_blobs_log(GrayImage(80, 60, 0.0f), LogParams{}).empty());
}

TEST_CASE("analytic disk optimum") {
  // The optimum of the continuous response is r / sqrt(2).
  for (double r : {3.0, 8.0, 20.0}) {
    CHECK(oracle::disk_best_sigma(r) == doctest::Approx(r / std::sqrt(2.0)).epsilon(0.01));
    CHECK(oracle::disk_center_response(r, r / std::sqrt(2.0)) ==
          doctest::Approx(2.0 / std::exp(1.0)).epsilon(1e-4));
  }
}

TEST_CASE("LoG: single disk is found at the optimal scale") {
  const LogParams p;
  for (double r : {4.0, 6.0, 8.5, 12.0, 17.0}) {
    const GrayImage img = disks(160, 160, {{{80.3, 79.6, r}}});
    const auto dets = detect_blobs_log(img, p);
    REQUIRE(!dets.empty());
    const auto& best = dets.front();
    CHECK(std::abs(best.bbox.cx() - 80.3) < 0.6);
    CHECK(std::abs(best.bbox.cy() - 79.6) < 0.6);
    // Within one step of the sweep around the analytic optimum.
    const double target = oracle::disk_best_sigma(r);
    auto it = std::lower_bound(p.scales.begin(), p.scales.end(), target);
    const double hi = it == p.scales.end() ? p.scales.back() : *it;
    const double lo = it == p.scales.begin() ? p.scales.front() : *(it - 1);
    const auto idx = [&](double s) {
      return std::find_if(p.scales.begin(), p.scales.end(), [&](double v) { return std::abs(v - s) < 1e-6; }) - p.scales.begin();
    };
    const long got = idx(sigma_of(best));
    CHECK(got >= idx(lo) - 1);
    CHECK(got <= idx(hi) + 1);
    CHECK(best.score > 0.6);
    CHECK(best.score <= 1.0);
    CHECK(best.source == DetectionSource::log_baseline);
    // Only one detection survives soft-NMS.
    CHECK(soft_nms(dets).size() == 1);
  }
}

TEST_CASE("LoG: two separated disks give two detections") {
  const double r = 6.0;
  const GrayImage img = disks(200, 120, {{{60, 60, r}}, {{60 + 4 * r + 10, 60, r}}});
  const auto dets = soft_nms(detect_blobs_log(img, LogParams{}));
  REQUIRE(dets.size() == 2);
  std::vector<double> xs = {dets[0].bbox.cx(), dets[1].bbox.cx()};
  std::sort(xs.begin(), xs.end());
  CHECK(xs[0] == doctest::Approx(60).epsilon(0.01));
  CHECK(xs[1] == doctest::Approx(94).epsilon(0.01));
}

TEST_CASE("LoG: mask restricts maxima") {
  const GrayImage img = disks(200, 120, {{{50, 60, 6}}, {{150, 60, 6}}});
  SubjectMask mask(200, 120, 0);
  for (int y = 0; y < 120; ++y) {
    for (int x = 0; x < 100; ++x) mask.at(x, y) = 1;
  }
  const auto dets = soft_nms(detect_blobs_log(img, LogParams{}, mask));
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].bbox.cx() == doctest::Approx(50).epsilon(0.01));
  CHECK_THROWS_AS(detect_blobs_log(img, LogParams{}, SubjectMask(10, 10)), ParameterError);
}

TEST_CASE("LoG: affine intensity invariance") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(20, 180), rr(3, 12);
  std::vector<std::array<double, 3>> circles;
  for (int i = 0; i < 6; ++i) circles.push_back({u(rng), u(rng), rr(rng)});
  const GrayImage img = disks(200, 200, circles, 0.8f, 0.3f);
  LogParams p;
  // Scores clip at 1, so ranking may change with contrast; compare by position.
  const auto by_position = [](std::vector<Detection2D> d) {
    std::sort(d.begin(), d.end(), [](const Detection2D& l, const Detection2D& r) {
      return std::tie(l.bbox.x, l.bbox.y, l.bbox.w) < std::tie(r.bbox.x, r.bbox.y, r.bbox.w);
    });
    return d;
  };
  const auto base = by_position(detect_blobs_log(img, p));
  REQUIRE(!base.empty());
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{2.0, 0.0}, {0.5, 0.25}, {3.0, -1.0}}) {
    GrayImage t = img;
    for (auto& v : t.data()) v = static_cast<float>(a * v + b);
    LogParams q = p;
    q.response_threshold = a * p.response_threshold;
    const auto got = by_position(detect_blobs_log(t, q));
    REQUIRE(got.size() == base.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i].bbox.x - base[i].bbox.x) < 1e-6);
      CHECK(std::abs(got[i].bbox.y - base[i].bbox.y) < 1e-6);
      CHECK(got[i].bbox.w == doctest::Approx(base[i].bbox.w));
    }
  }
}

TEST_CASE("LoG: minimum box size") {
  const GrayImage img = disks(60, 60, {{{30, 30, 1.4}}});
  LogParams p;
  p.scales = {1.0};
  p.response_threshold = 0.02;
  CHECK(detect_blobs_log(img, p).empty());
  p.min_box_px = 0.0;
  CHECK(detect_blobs_log(img, p).size() == 1);
  p.scales = {2.0, 1.0};
  CHECK_THROWS_AS(detect_blobs_log(img, p), ParameterError);
}

TEST_CASE("tiled detection equals per-tile detection with context") {
  std::mt19937_64 rng(29);
  const int w = 700, h = 520;
  std::uniform_real_distribution<double> ux(80, w - 80), uy(80, h - 80), rr(3, 14);
  std::vector<std::array<double, 3>> circles;
  for (int i = 0; i < 40; ++i) circles.push_back({ux(rng), uy(rng), rr(rng)});
  GrayImage img = disks(w, h, circles, 0.85f, 0.35f);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& v : img.data()) v += static_cast<float>(noise(rng));
  SubjectMask mask(w, h, 0);
  for (int y = 60; y < h - 60; ++y) {
    for (int x = 60; x < w - 60; ++x) mask.at(x, y) = 1;
  }
  LogParams p;
  const TileGrid g = tile(w, h, 160, 0.5);
  const auto got = detect_tiled(img, mask, g, p);

  const int margin = static_cast<int>(std::ceil(3.0 * p.scales.back())) + 3;
  std::vector<TileDetections> per_tile;
  for (const auto& o : g.offsets) {
    const GrayImage crop = crop_tile(img, o[0], o[1], g.tile_size, margin);
    const SubjectMask crop_mask = crop_tile(mask, o[0], o[1], g.tile_size, margin);
    TileDetections td;
    td.origin = o;
    for (auto d : detect_blobs_log(crop, p, crop_mask)) {
      const long px = std::lround(d.bbox.cx()) - margin, py = std::lround(d.bbox.cy()) - margin;
      if (px < 0 || py < 0 || px >= g.tile_size || py >= g.tile_size) continue;
      d.bbox.x -= margin;
      d.bbox.y -= margin;
      td.detections.push_back(d);
    }
    per_tile.push_back(td);
  }
  const auto want = merge_tile_detections(per_tile, g);
  REQUIRE(got.size() == want.size());
  CHECK(got.size() >= 30);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i].bbox.x - want[i].bbox.x) < 1e-9);
    CHECK(std::abs(got[i].bbox.y - want[i].bbox.y) < 1e-9);
    CHECK(got[i].bbox.w == doctest::Approx(want[i].bbox.w).epsilon(1e-12));
    CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
  }
  CHECK(detect_tiled(img, SubjectMask(w, h, 0), g, p).empty());
}

TEST_CASE("detections JSON round trip and validation") {
  const auto dir = testutil::scratch("detect_json");
  DetectionSet set;
  Detection2D d = box(1.5, 2.25, 10, 12, 0.75);
  d.image_id = "A1";
  d.det_id = 3;
  d.source = DetectionSource::ground_truth;
  d.removed = true;
  d.notes = "checked";
  set["A1"] = {d};
  set["B2"] = {};
  write_detections(dir / "d.json", set);
  CHECK(read_detections(dir / "d.json") == set);

  CHECK_THROWS_AS(detections_from_json(nlohmann::json::array()), FormatError);
  auto bad = nlohmann::json::parse(R"({"A1": [{"det_id": 1, "bbox": [0, 0, -1, 2]}]})");
  CHECK_THROWS_AS(detections_from_json(bad), FormatError);
  bad = nlohmann::json::parse(R"({"A1": [{"det_id": 1, "bbox": [0, 0, 1, 2], "score": 1.5}]})");
  CHECK_THROWS_AS(detections_from_json(bad), FormatError);
  bad = nlohmann::json::parse(R"({"A1": [{"det_id": 1, "bbox": [0, 0, 1, 2], "source": "cnn"}]})");
  CHECK_THROWS_AS(detections_from_json(bad), FormatError);
  const auto minimal = detections_from_json(nlohmann::json::parse(R"({"A1": [{"det_id": 1, "bbox": [0, 0, 1, 2]}]})"));
  CHECK(minimal.at("A1")[0].score == 1.0);
  CHECK(minimal.at("A1")[0].source == DetectionSource::external);
}
