#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdlite/anchorkit.hpp"

namespace fdlite::evalkit {

enum class Difficulty { Easy, Medium, Hard };

std::string to_string(Difficulty d);
std::optional<Difficulty> difficulty_from_string(const std::string& s);

struct GtFace {
  anchorkit::Box box;
  std::optional<Difficulty> difficulty;
  bool ignore = false;
};

struct ImageAnnotation {
  std::string image;
  std::vector<GtFace> faces;
};

struct AnnotationSet {
  std::vector<ImageAnnotation> images;

  std::size_t face_count() const;
};

// WIDER FACE style text:
//   <image path>
//   <face count>
//   x y w h [attribute columns...] [easy|medium|hard] [ignore]
// A zero count is followed by one placeholder line. Columns after the first
// four are ignored unless they are one of the tag words.
AnnotationSet parse_gt(const std::string& text, const std::string& source = "<gt>");
AnnotationSet load_gt(const std::filesystem::path& path);

struct ScoredBox {
  anchorkit::Box box;
  double score = 0.0;
};

struct ImageDetections {
  std::string image;
  std::vector<ScoredBox> dets;
};

// JSON-lines records as written by the inference pipeline; grouped by image
// in first-seen order.
std::vector<ImageDetections> parse_detections(const std::string& text,
                                              const std::string& source = "<dets>");
std::vector<ImageDetections> load_detections(const std::filesystem::path& path);

enum class DetOutcome { TruePositive, FalsePositive, Ignored };

struct EvalGt {
  anchorkit::Box box;
  bool ignore = false;
};

struct MatchResult {
  std::vector<DetOutcome> outcome;  // per detection
  std::vector<bool> gt_matched;     // per gt; ignored gts never count
};

// Greedy in detection order (callers sort by descending score). A detection
// takes the highest-IoU unmatched counted gt at IoU >= thresh; failing that,
// an ignored gt at IoU >= thresh absorbs it (ignored gts absorb any number).
MatchResult match_dets(const std::vector<anchorkit::Box>& dets, const std::vector<EvalGt>& gts,
                       double iou_thresh = 0.5);

struct ScoredOutcome {
  double score = 0.0;
  bool true_positive = false;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PrPoint> points;  // one per distinct score threshold, descending
  double ap = 0.0;
};

// All-point interpolation: area under the monotone precision envelope.
// Detections sharing a score enter the sweep together.
PRCurve average_precision(std::vector<ScoredOutcome> stream, std::size_t n_gt);

struct TprResult {
  double tpr = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  bool under_budget = false;  // the stream ran out before exceeding the budget
};

// Walks the score-sorted stream and stops at the first false positive that
// would take the count past fp_budget.
TprResult tpr_at_fp(const std::vector<ScoredOutcome>& stream, std::size_t n_gt, std::size_t fp_budget);

struct SubsetResult {
  std::string subset;
  PRCurve curve;
  std::size_t n_images = 0;
  std::size_t n_gt = 0;
};

// Score-sorted pooled stream for one subset. "all" counts every non-ignored
// gt; a difficulty name counts only gts with that tag and turns the others
// into ignore regions.
std::vector<ScoredOutcome> pooled_outcomes(const std::vector<ImageDetections>& dets,
                                           const AnnotationSet& gts, const std::string& subset,
                                           std::size_t* n_gt, double iou_thresh = 0.5);

SubsetResult evaluate_ap(const std::vector<ImageDetections>& dets, const AnnotationSet& gts,
                         const std::string& subset, double iou_thresh = 0.5);
// Subsets that have at least one tagged gt, or just "all".
std::vector<SubsetResult> evaluate_all_subsets(const std::vector<ImageDetections>& dets,
                                               const AnnotationSet& gts, double iou_thresh = 0.5);

nlohmann::json to_json(const SubsetResult& r);
nlohmann::json tpr_to_json(const TprResult& r, std::size_t fp_budget, std::size_t n_gt,
                           std::size_t n_images);

}  // namespace fdlite::evalkit
