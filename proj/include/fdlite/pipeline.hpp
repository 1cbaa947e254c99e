#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdlite/anchorkit.hpp"
#include "fdlite/executor.hpp"

namespace fdlite::pipeline {

// 8-bit RGB, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* px(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* px(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Binary PPM (P6, maxval 255) and PNG, chosen by content.
RgbImage load_image(const std::filesystem::path& path);
RgbImage decode_image(const std::string& bytes);
RgbImage decode_ppm(const std::string& bytes);
RgbImage decode_png(const std::string& bytes);
std::string encode_ppm(const RgbImage& image);
std::string encode_png(const RgbImage& image);
// Format from the extension: .png, anything else PPM.
void save_image(const RgbImage& image, const std::filesystem::path& path);

RgbImage flip_horizontal(const RgbImage& image);

inline constexpr double kChannelMeans[3] = {123.0, 117.0, 104.0};

// Bilinear resize to (1, height, width, 3) reals; half-pixel centres, edge
// clamped, no quantisation back to 8 bits.
TensorBuf resize_bilinear(const RgbImage& image, int width, int height);

struct Preprocessed {
  TensorBuf tensor;   // (1, H', W', 3), mean-subtracted
  double scale = 1.0;  // H' / H = target / short edge
};

// Output size for a short-edge target: the short side becomes target, the
// long side ceil(long * target / short).
std::pair<int, int> resized_size(int width, int height, int target_short_edge);
Preprocessed preprocess(const RgbImage& image, int target_short_edge);

struct Detection {
  anchorkit::Box box;
  double score = 0.0;
  anchorkit::Landmarks landmarks{};
  double source_scale = 1.0;
  bool flipped = false;
};

struct InferenceConfig {
  double score_threshold = 0.02;
  double nms_iou = 0.4;
  std::size_t top_k = 750;
  std::vector<int> scales{500, 800, 1100, 1400, 1700};
  bool flip = true;
  int branch = 2;
  // Upper bound on the resized image area; larger scales are rejected.
  std::int64_t max_pixels = 8'000'000;
  kernels::Parallelism parallelism{};

  void validate() const;
};

// Model plus weights, ready to run at any input size.
class Detector {
 public:
  Detector(netgraph::LayerGraph graph, const executor::WeightStore& weights);

  const executor::Network& network() const { return net_; }
  const netgraph::LayerGraph& graph() const { return net_.graph(); }

 private:
  executor::Network net_;
};

// Single scale: forward, face probability filter, decode, map back by
// 1/scale and clamp to the image. No suppression.
std::vector<Detection> detect_single(const Preprocessed& input, const Detector& detector,
                                     int image_w, int image_h, const InferenceConfig& config);

// Greedy suppression. Order: score descending, then larger area, then input
// order. Stops once max_keep detections are kept.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           std::size_t max_keep = std::numeric_limits<std::size_t>::max());

// Maps a detection made on the mirrored image back to the original frame.
Detection unflip(const Detection& d, int image_w);

std::vector<Detection> detect_multiscale(const RgbImage& image, const Detector& detector,
                                         const InferenceConfig& config);

// {image, x, y, w, h, score, landmarks:[[x,y] x5]}
nlohmann::json detection_to_json(const std::string& image, const Detection& d);
std::string to_json_lines(const std::string& image, const std::vector<Detection>& dets);

// Box outlines and landmark dots, clipped to the image.
RgbImage annotate(const RgbImage& image, const std::vector<Detection>& dets);

}  // namespace fdlite::pipeline
