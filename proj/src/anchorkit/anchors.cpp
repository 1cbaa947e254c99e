#include <algorithm>
#include <cmath>

#include "fdlite/anchorkit.hpp"
#include "fdlite/errors.hpp"

namespace fdlite::anchorkit {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

int level_stride(int level) { return 4 << level; }

std::array<double, 3> level_sides(int level) {
  const double base = static_cast<double>(level_stride(level) << level);  // 2^i * a_i
  return {base, 1.5 * base, 2.0 * base};
}

std::int64_t anchor_count(int image_w, int image_h) {
  std::int64_t total = 0;
  for (int level = 1; level <= kLevels; ++level) {
    const int s = level_stride(level);
    total += ceil_div(image_h, s) * ceil_div(image_w, s) * kAnchorsPerCell;
  }
  return total;
}

std::vector<AnchorBox> generate_anchors(int image_w, int image_h) {
  if (image_w < 32 || image_h < 32) {
    throw ConfigError("anchor generation needs an image of at least 32x32, got " +
                      std::to_string(image_w) + "x" + std::to_string(image_h));
  }
  std::vector<AnchorBox> anchors;
  anchors.reserve(static_cast<std::size_t>(anchor_count(image_w, image_h)));
  for (int level = 1; level <= kLevels; ++level) {
    const int s = level_stride(level);
    const auto sides = level_sides(level);
    const auto rows = static_cast<int>(ceil_div(image_h, s));
    const auto cols = static_cast<int>(ceil_div(image_w, s));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        for (int k = 0; k < kAnchorsPerCell; ++k) {
          anchors.push_back({(c + 0.5) * s, (r + 0.5) * s, sides[k], level, r, c, k});
        }
      }
    }
  }
  return anchors;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MatchOptions MatchOptions::l1() { return {MatchPolicy::L1, {0.7, 0.3}, true}; }
MatchOptions MatchOptions::l2() { return {MatchPolicy::L2, {0.35, 0.35}, true}; }

std::size_t MatchAssignment::count(Label l) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

MatchAssignment match_anchors(std::span<const AnchorBox> anchors,
                              std::span<const GroundTruthFace> gts, const MatchOptions& options) {
  MatchAssignment m;
  m.policy = options.policy;
  m.labels.assign(anchors.size(), Label::Negative);
  m.gt_index.assign(anchors.size(), -1);
  if (gts.empty() || anchors.empty()) return m;

  std::vector<double> best_gt_iou(gts.size(), -1.0);
  std::vector<std::size_t> best_anchor(gts.size(), 0);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const Box ab = anchors[j].box();
    double best = -1.0;
    int arg = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = iou(ab, gts[g].box);
      if (o > best) {
        best = o;
        arg = static_cast<int>(g);
      }
      if (o > best_gt_iou[g]) {
        best_gt_iou[g] = o;
        best_anchor[g] = j;
      }
    }
    Label label;
    if (best >= options.thresholds.positive) {
      label = Label::Positive;
    } else if (options.policy == MatchPolicy::L2 || best < options.thresholds.negative) {
      label = Label::Negative;
    } else {
      label = Label::Ignored;
    }
    m.labels[j] = label;
    if (label == Label::Positive) m.gt_index[j] = arg;
  }
  if (options.force_best_anchor) {
    // A gt whose best anchor was already claimed by an earlier gt falls back
    // to its best unclaimed anchor, so no gt is left without a positive.
    std::vector<bool> claimed(anchors.size(), false);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      std::size_t pick = best_anchor[g];
      if (claimed[pick]) {
        double best = -1.0;
        pick = anchors.size();
        for (std::size_t j = 0; j < anchors.size(); ++j) {
          if (claimed[j]) continue;
          const double o = iou(anchors[j].box(), gts[g].box);
          if (o > best) {
            best = o;
            pick = j;
          }
        }
        if (pick == anchors.size()) break;  // more gts than anchors
      }
      claimed[pick] = true;
      m.labels[pick] = Label::Positive;
      m.gt_index[pick] = static_cast<int>(g);
    }
  }
  return m;
}

BoxCode encode_box(const AnchorBox& a, const Box& gt, const Variances& v) {
  if (!(gt.w > 0.0 && gt.h > 0.0)) throw DataError("encode_box: ground-truth box needs w,h > 0");
  return {(gt.cx() - a.cx) / (a.side * v.center), (gt.cy() - a.cy) / (a.side * v.center),
          std::log(gt.w / a.side) / v.size, std::log(gt.h / a.side) / v.size};
}

Box decode_box(const AnchorBox& a, const BoxCode& t, const Variances& v) {
  const double cx = a.cx + t[0] * v.center * a.side;
  const double cy = a.cy + t[1] * v.center * a.side;
  const double w = a.side * std::exp(t[2] * v.size);
  const double h = a.side * std::exp(t[3] * v.size);
  return Box::from_center(cx, cy, w, h);
}

LandmarkCode encode_landmarks(const AnchorBox& a, const Landmarks& pts, const Variances& v) {
  LandmarkCode code{};
  for (std::size_t k = 0; k < pts.size(); ++k) {
    code[2 * k] = (pts[k].x - a.cx) / (a.side * v.center);
    code[2 * k + 1] = (pts[k].y - a.cy) / (a.side * v.center);
  }
  return code;
}

Landmarks decode_landmarks(const AnchorBox& a, const LandmarkCode& code, const Variances& v) {
  Landmarks pts{};
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k] = {a.cx + code[2 * k] * v.center * a.side, a.cy + code[2 * k + 1] * v.center * a.side};
  }
  return pts;
}

EncodedTargets encode_targets(std::span<const AnchorBox> anchors,
                              std::span<const GroundTruthFace> gts,
                              const MatchAssignment& assignment, const Variances& v) {
  if (assignment.labels.size() != anchors.size()) {
    throw DataError("encode_targets: assignment does not cover the anchor list");
  }
  EncodedTargets t;
  t.variances = v;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    if (assignment.labels[j] != Label::Positive) continue;
    const auto& gt = gts[static_cast<std::size_t>(assignment.gt_index[j])];
    t.anchor.push_back(j);
    t.box.push_back(encode_box(anchors[j], gt.box, v));
    if (gt.landmarks) {
      t.landmarks.push_back(encode_landmarks(anchors[j], *gt.landmarks, v));
      t.landmarks_valid.push_back(true);
    } else {
      t.landmarks.push_back({});
      t.landmarks_valid.push_back(false);
    }
  }
  return t;
}

}  // namespace fdlite::anchorkit
