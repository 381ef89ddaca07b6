#include <algorithm>
#include <cmath>
#include <numeric>

#include "slm/detect.hpp"
#include "slm/errors.hpp"

namespace slm {

namespace {

struct RankedHit {
  double score;
  bool true_positive;
};

std::vector<const Detection2D*> active_sorted(const std::vector<Detection2D>& dets) {
  std::vector<const Detection2D*> out;
  for (const auto& d : dets) {
    if (!d.removed) out.push_back(&d);
  }
  std::sort(out.begin(), out.end(), [](const Detection2D* a, const Detection2D* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->bbox.x != b->bbox.x) return a->bbox.x < b->bbox.x;
    if (a->bbox.y != b->bbox.y) return a->bbox.y < b->bbox.y;
    if (a->bbox.w != b->bbox.w) return a->bbox.w < b->bbox.w;
    if (a->bbox.h != b->bbox.h) return a->bbox.h < b->bbox.h;
    return a->det_id < b->det_id;
  });
  return out;
}

/// Greedy matching in score order; each ground-truth box is claimed by the
/// first detection that overlaps it best among the still-unmatched ones.
std::vector<RankedHit> match_image(const std::vector<const Detection2D*>& dets,
                                   const std::vector<const Detection2D*>& gts,
                                   double iou_threshold) {
  std::vector<char> taken(gts.size(), 0);
  std::vector<RankedHit> hits;
  hits.reserve(dets.size());
  for (const auto* d : dets) {
    double best = -1.0;
    std::size_t best_idx = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double o = iou(d->bbox, gts[g]->bbox);
      if (o > best) {
        best = o;
        best_idx = g;
      }
    }
    const bool tp = best_idx < gts.size() && best >= iou_threshold;
    if (tp) taken[best_idx] = 1;
    hits.push_back({d->score, tp});
  }
  return hits;
}

/// All-points interpolated AP over hits already in rank order.
double average_precision(const std::vector<RankedHit>& hits, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> precision(hits.size()), recall(hits.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k].true_positive;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t k = hits.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace

EvaluationResult evaluate(const DetectionSet& dets, const DetectionSet& gts, double iou_threshold,
                          double score_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ParameterError("evaluate: IoU threshold must be in (0, 1]");
  }
  if (dets.size() != gts.size() ||
      !std::equal(dets.begin(), dets.end(), gts.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw InputError("evaluate: detection and ground-truth image ids differ");
  }
  EvaluationResult result;
  struct PooledHit {
    RankedHit hit;
    const Detection2D* det;
  };
  std::vector<PooledHit> pooled;
  std::size_t pooled_gt = 0;
  double ap_sum = 0.0, recall_sum = 0.0, precision_sum = 0.0;
  std::size_t ap_n = 0, precision_n = 0;

  for (const auto& [image_id, image_dets] : dets) {
    const auto ranked = active_sorted(image_dets);
    const auto truth = active_sorted(gts.at(image_id));
    const auto hits = match_image(ranked, truth, iou_threshold);

    ImageMetrics m;
    m.image_id = image_id;
    m.ground_truth = truth.size();
    m.ap = average_precision(hits, truth.size());
    std::size_t operating = 0, operating_tp = 0;
    for (const auto& h : hits) {
      if (h.score >= score_threshold) {
        ++operating;
        operating_tp += h.true_positive;
      }
    }
    m.detections = operating;
    m.true_positives = operating_tp;
    m.precision = operating ? static_cast<double>(operating_tp) / operating : 0.0;
    m.recall = truth.empty() ? 0.0 : static_cast<double>(operating_tp) / truth.size();
    if (!truth.empty()) {
      ap_sum += m.ap;
      recall_sum += m.recall;
      ++ap_n;
    }
    if (operating) {
      precision_sum += m.precision;
      ++precision_n;
    }
    result.per_image.push_back(m);

    pooled_gt += truth.size();
    for (std::size_t k = 0; k < hits.size(); ++k) pooled.push_back({hits[k], ranked[k]});
  }
  result.map50 = ap_n ? ap_sum / ap_n : 0.0;
  result.recall = ap_n ? recall_sum / ap_n : 0.0;
  result.precision = precision_n ? precision_sum / precision_n : 0.0;

  std::stable_sort(pooled.begin(), pooled.end(), [](const PooledHit& a, const PooledHit& b) {
    return a.hit.score > b.hit.score;
  });
  std::vector<RankedHit> pooled_hits;
  pooled_hits.reserve(pooled.size());
  for (const auto& p : pooled) pooled_hits.push_back(p.hit);
  result.pooled_ap = average_precision(pooled_hits, pooled_gt);
  return result;
}

}  // namespace slm
