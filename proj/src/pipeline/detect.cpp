#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdlite/errors.hpp"
#include "fdlite/pipeline.hpp"

namespace fdlite::pipeline {

using anchorkit::Box;

void InferenceConfig::validate() const {
  if (!(score_threshold > 0.0 && score_threshold <= 1.0)) {
    throw ConfigError("score threshold must lie in (0,1]");
  }
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("NMS IoU must lie in (0,1)");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (scales.empty()) throw ConfigError("at least one scale is required");
  for (int s : scales) {
    if (s < 32) throw ConfigError("scale " + std::to_string(s) + " is below the 32 pixel minimum");
  }
  if (branch != 1 && branch != 2) throw ConfigError("branch must be 1 or 2");
  if (max_pixels < 1) throw ConfigError("max_pixels must be positive");
}

Detector::Detector(netgraph::LayerGraph graph, const executor::WeightStore& weights)
    : net_(std::move(graph), weights) {
  for (const auto& u : netgraph::kBranchOutputs) {
    for (const char* label : u) {
      if (!net_.graph().find_output(label)) {
        throw ConfigError(std::string("graph has no detector output '") + label + "'");
      }
    }
  }
}

namespace {

Box clamp_box(const Box& b, int w, int h) {
  const double x1 = std::clamp(b.x, 0.0, static_cast<double>(w));
  const double y1 = std::clamp(b.y, 0.0, static_cast<double>(h));
  const double x2 = std::clamp(b.x + b.w, 0.0, static_cast<double>(w));
  const double y2 = std::clamp(b.y + b.h, 0.0, static_cast<double>(h));
  return {x1, y1, x2 - x1, y2 - y1};
}

}  // namespace

std::vector<Detection> detect_single(const Preprocessed& input, const Detector& detector,
                                     int image_w, int image_h, const InferenceConfig& config) {
  config.validate();
  const auto& shape = input.tensor.shape();
  if (shape.h * shape.w > config.max_pixels) {
    throw ConfigError("resized input " + std::to_string(shape.w) + "x" + std::to_string(shape.h) +
                      " exceeds the " + std::to_string(config.max_pixels) + " pixel limit");
  }
  executor::ForwardOptions fo;
  fo.parallelism = config.parallelism;
  const auto outs = detector.network().run(input.tensor, fo);
  const auto& labels = netgraph::kBranchOutputs[config.branch - 1];
  const auto& cls = outs.at(labels[0]);
  const auto& box = outs.at(labels[1]);
  const auto& landm = outs.at(labels[2]);

  const auto anchors = anchorkit::generate_anchors(static_cast<int>(shape.w), static_cast<int>(shape.h));
  if (cls.shape().h != static_cast<std::int64_t>(anchors.size())) {
    throw ExecutionError("head produced " + std::to_string(cls.shape().h) + " rows for " +
                         std::to_string(anchors.size()) + " anchors");
  }
  const auto c = cls.data(), b = box.data(), l = landm.data();
  const double inv = 1.0 / input.scale;
  std::vector<Detection> dets;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    // softmax probability of index 0 (face)
    const double p = 1.0 / (1.0 + std::exp(static_cast<double>(c[2 * j + 1]) - c[2 * j]));
    if (!(p > config.score_threshold)) continue;
    anchorkit::BoxCode code{b[4 * j], b[4 * j + 1], b[4 * j + 2], b[4 * j + 3]};
    anchorkit::LandmarkCode lcode{};
    for (std::size_t d = 0; d < 10; ++d) lcode[d] = l[10 * j + d];
    const Box bx = anchorkit::decode_box(anchors[j], code);
    const auto pts = anchorkit::decode_landmarks(anchors[j], lcode);

    Detection det;
    det.box = clamp_box({bx.x * inv, bx.y * inv, bx.w * inv, bx.h * inv}, image_w, image_h);
    det.score = p;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      det.landmarks[k] = {std::clamp(pts[k].x * inv, 0.0, static_cast<double>(image_w)),
                          std::clamp(pts[k].y * inv, 0.0, static_cast<double>(image_h))};
    }
    det.source_scale = input.scale;
    dets.push_back(det);
  }
  return dets;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, std::size_t max_keep) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].box.area() > dets[b].box.area();
  });
  std::vector<Detection> kept;
  for (auto i : order) {
    if (kept.size() >= max_keep) break;
    const auto& cand = dets[i];
    bool keep = true;
    for (const auto& k : kept) {
      if (anchorkit::iou(cand.box, k.box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(cand);
  }
  return kept;
}

Detection unflip(const Detection& d, int image_w) {
  Detection out = d;
  out.box.x = image_w - d.box.x - d.box.w;
  for (std::size_t k = 0; k < d.landmarks.size(); ++k) {
    const auto& src = d.landmarks[static_cast<std::size_t>(anchorkit::kFlipPermutation[k])];
    out.landmarks[k] = {image_w - src.x, src.y};
  }
  out.flipped = !d.flipped;
  return out;
}

std::vector<Detection> detect_multiscale(const RgbImage& image, const Detector& detector,
                                         const InferenceConfig& config) {
  config.validate();
  for (int s : config.scales) {
    const auto [w, h] = resized_size(image.width, image.height, s);
    if (static_cast<std::int64_t>(w) * h > config.max_pixels) {
      throw ConfigError("scale " + std::to_string(s) + " resizes the image to " + std::to_string(w) +
                        "x" + std::to_string(h) + ", above the " +
                        std::to_string(config.max_pixels) + " pixel limit");
    }
  }
  const RgbImage mirrored = config.flip ? flip_horizontal(image) : RgbImage{};
  std::vector<Detection> pool;
  for (int s : config.scales) {
    auto dets = detect_single(preprocess(image, s), detector, image.width, image.height, config);
    pool.insert(pool.end(), dets.begin(), dets.end());
    if (!config.flip) continue;
    dets = detect_single(preprocess(mirrored, s), detector, image.width, image.height, config);
    for (const auto& d : dets) pool.push_back(unflip(d, image.width));
  }
  // Greedy order is score-major, so stopping at top_k keeps exactly the
  // top_k highest scoring survivors of the full suppression.
  return nms(std::move(pool), config.nms_iou, config.top_k);
}

nlohmann::json detection_to_json(const std::string& image, const Detection& d) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : d.landmarks) pts.push_back({p.x, p.y});
  return {{"image", image}, {"x", d.box.x},   {"y", d.box.y},          {"w", d.box.w},
          {"h", d.box.h},   {"score", d.score}, {"landmarks", std::move(pts)}};
}

std::string to_json_lines(const std::string& image, const std::vector<Detection>& dets) {
  std::string out;
  for (const auto& d : dets) out += detection_to_json(image, d).dump() + "\n";
  return out;
}

RgbImage annotate(const RgbImage& image, const std::vector<Detection>& dets) {
  RgbImage out = image;
  auto put = [&](long x, long y, const std::uint8_t rgb[3]) {
    if (x < 0 || y < 0 || x >= out.width || y >= out.height) return;
    std::copy(rgb, rgb + 3, out.px(static_cast<int>(x), static_cast<int>(y)));
  };
  const std::uint8_t box_color[3] = {0, 255, 0};
  const std::uint8_t point_color[3] = {255, 0, 0};
  for (const auto& d : dets) {
    const auto x1 = std::lround(std::floor(d.box.x));
    const auto y1 = std::lround(std::floor(d.box.y));
    const auto x2 = std::lround(std::ceil(d.box.x + d.box.w)) - 1;
    const auto y2 = std::lround(std::ceil(d.box.y + d.box.h)) - 1;
    for (long x = x1; x <= x2; ++x) {
      put(x, y1, box_color);
      put(x, y2, box_color);
    }
    for (long y = y1; y <= y2; ++y) {
      put(x1, y, box_color);
      put(x2, y, box_color);
    }
    for (const auto& p : d.landmarks) {
      const auto px = std::lround(p.x), py = std::lround(p.y);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) put(px + dx, py + dy, point_color);
      }
    }
  }
  return out;
}

}  // namespace fdlite::pipeline
