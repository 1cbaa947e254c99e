#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fdlite::anchorkit {

// Axis-aligned box in corner form: top-left (x, y) plus width and height.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Landmark order: left eye, right eye, nose, left mouth corner, right mouth
// corner. Horizontal flips swap (0,1) and (3,4).
using Landmarks = std::array<Point, 5>;
inline constexpr std::array<int, 5> kFlipPermutation = {1, 0, 2, 4, 3};

// Square reference box; its grid stride is 4 * 2^level.
struct AnchorBox {
  double cx = 0.0;
  double cy = 0.0;
  double side = 0.0;
  int level = 1;  // 1..3
  int row = 0;
  int col = 0;
  int size_index = 0;  // 0..2

  Box box() const { return Box::from_center(cx, cy, side, side); }
};

inline constexpr int kLevels = 3;
inline constexpr int kAnchorsPerCell = 3;

int level_stride(int level);                         // 8, 16, 32
std::array<double, 3> level_sides(int level);        // {2^i a, 1.5 2^i a, 2^(i+1) a}
std::int64_t anchor_count(int image_w, int image_h);  // closed form

// Ordering: level-major, then row-major over the grid, then size index. The
// detector head's reshape + row concatenation produces rows in this order.
std::vector<AnchorBox> generate_anchors(int image_w, int image_h);

// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

struct GroundTruthFace {
  Box box;
  std::optional<Landmarks> landmarks;  // absent when not annotated
};

enum class Label : std::uint8_t { Negative, Positive, Ignored };

enum class MatchPolicy { L1, L2 };

struct MatchThresholds {
  double positive = 0.7;
  double negative = 0.3;  // unused by the L2 policy
};

struct MatchOptions {
  MatchPolicy policy = MatchPolicy::L1;
  MatchThresholds thresholds{0.7, 0.3};
  // Each gt also claims its single best anchor (ties: lowest index) whatever
  // the overlap. Claims go in gt order; a gt whose best anchor is taken
  // claims its best unclaimed one instead.
  bool force_best_anchor = true;

  static MatchOptions l1();
  static MatchOptions l2();
};

struct MatchAssignment {
  std::vector<Label> labels;
  std::vector<int> gt_index;  // -1 unless labels[j] == Positive
  MatchPolicy policy = MatchPolicy::L1;

  std::size_t count(Label l) const;
};

MatchAssignment match_anchors(std::span<const AnchorBox> anchors,
                              std::span<const GroundTruthFace> gts, const MatchOptions& options);

struct Variances {
  double center = 0.1;
  double size = 0.2;
};

using BoxCode = std::array<double, 4>;
using LandmarkCode = std::array<double, 10>;

BoxCode encode_box(const AnchorBox& anchor, const Box& gt, const Variances& v = {});
Box decode_box(const AnchorBox& anchor, const BoxCode& code, const Variances& v = {});
LandmarkCode encode_landmarks(const AnchorBox& anchor, const Landmarks& pts, const Variances& v = {});
Landmarks decode_landmarks(const AnchorBox& anchor, const LandmarkCode& code,
                           const Variances& v = {});

// Regression targets for the positive anchors of an assignment.
struct EncodedTargets {
  std::vector<std::size_t> anchor;         // positive anchor indices, ascending
  std::vector<BoxCode> box;                // per positive
  std::vector<LandmarkCode> landmarks;     // per positive; zeros when absent
  std::vector<bool> landmarks_valid;       // per positive
  Variances variances;

  std::size_t size() const { return anchor.size(); }
};

EncodedTargets encode_targets(std::span<const AnchorBox> anchors,
                              std::span<const GroundTruthFace> gts,
                              const MatchAssignment& assignment, const Variances& v = {});

}  // namespace fdlite::anchorkit
