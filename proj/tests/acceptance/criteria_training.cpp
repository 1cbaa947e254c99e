#include <algorithm>
#include <array>
#include <cstdio>
#include <random>

#include "criteria.hpp"
#include "fdlite/anchorkit.hpp"
#include "fdlite/executor.hpp"
#include "fdlite/losskit.hpp"
#include "fdlite/netgraph.hpp"
#include "fdlite/pipeline.hpp"

namespace acceptance {

using namespace fdlite;

namespace {

constexpr int kImageSide = 64;
constexpr int kTasks = 3;
constexpr std::array<int, kTasks> kTaskWidth = {2, 4, 10};
constexpr std::array<const char*, kTasks> kTaskName = {"cls", "bbox", "landm"};
constexpr std::array<std::array<double, 2>, 5> kLandmarkLayout = {
    {{0.30, 0.35}, {0.70, 0.35}, {0.50, 0.55}, {0.35, 0.75}, {0.65, 0.75}}};

struct Scene {
  pipeline::RgbImage image;
  anchorkit::GroundTruthFace face;
};

// Grey noise with one bright square "face" carrying dark eye and mouth marks.
Scene synthetic_scene(std::mt19937_64& rng) {
  Scene s;
  s.image = pipeline::RgbImage(kImageSide, kImageSide);
  std::uniform_int_distribution<int> noise(60, 110), side(20, 36);
  for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(noise(rng));
  const int a = side(rng);
  std::uniform_int_distribution<int> at(0, kImageSide - a);
  const int x0 = at(rng), y0 = at(rng);
  for (int y = y0; y < y0 + a; ++y)
    for (int x = x0; x < x0 + a; ++x) {
      auto* p = s.image.px(x, y);
      p[0] = 220;
      p[1] = 180;
      p[2] = 150;
    }
  anchorkit::Landmarks pts;
  for (std::size_t k = 0; k < 5; ++k) {
    pts[k] = {x0 + kLandmarkLayout[k][0] * a, y0 + kLandmarkLayout[k][1] * a};
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        auto* p = s.image.px(static_cast<int>(pts[k].x) + dx, static_cast<int>(pts[k].y) + dy);
        p[0] = p[1] = p[2] = 30;
      }
  }
  s.face = {{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(a), static_cast<double>(a)}, pts};
  return s;
}

// Frozen per-level features of one branch, pixel-major, plus the shared
// head parameters trained on top of them.
struct LevelFeatures {
  std::size_t pixels = 0;
  int channels = 0;
  std::vector<double> values;  // pixels x channels
};

struct HeadParams {
  // [level][task]: weights (3*width x channels) and biases (3*width)
  std::array<std::array<std::vector<double>, kTasks>, anchorkit::kLevels> weight, bias;
};

struct ToyProblem {
  std::vector<anchorkit::AnchorBox> anchors;
  std::vector<anchorkit::GroundTruthFace> gts;
  std::array<std::array<LevelFeatures, anchorkit::kLevels>, 2> features;  // [branch][level]
  HeadParams params;
  double step = 0.0;
};

ToyProblem build_problem(int seed) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919u + 17u);
  const auto scene = synthetic_scene(rng);
  const auto graph = netgraph::build_fdlite({});
  const auto weights = executor::init_weights(graph, static_cast<std::uint64_t>(seed));
  const executor::Network net(graph, weights);

  ToyProblem pb;
  pb.gts = {scene.face};
  pb.anchors = anchorkit::generate_anchors(kImageSide, kImageSide);

  executor::ForwardOptions opts;
  std::array<std::array<std::string, anchorkit::kLevels>, 2> feature_node;
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < anchorkit::kLevels; ++i) {
      const auto head = "head" + std::to_string(i + 1) + ".cls.b" + std::to_string(u + 1);
      feature_node[u][i] = graph.find(head)->inputs.at(0);
      opts.keep.push_back(feature_node[u][i]);
    }
  const auto out = net.run(pipeline::preprocess(scene.image, kImageSide).tensor, opts);

  double curvature = 0.0;
  for (int i = 0; i < anchorkit::kLevels; ++i) {
    double level_sum = 0.0;
    for (int u = 0; u < 2; ++u) {
      const auto& t = out.at(feature_node[u][i]);
      auto& f = pb.features[u][i];
      f.pixels = static_cast<std::size_t>(t.shape().h * t.shape().w);
      f.channels = static_cast<int>(t.shape().c);
      f.values.assign(t.data().begin(), t.data().end());
      double worst = 0.0;
      for (std::size_t p = 0; p < f.pixels; ++p) {
        double norm = 1.0;
        for (int c = 0; c < f.channels; ++c) norm += f.values[p * f.channels + c] * f.values[p * f.channels + c];
        worst = std::max(worst, norm);
      }
      level_sum += 0.5 * worst;
    }
    curvature = std::max(curvature, level_sum);
  }
  pb.step = 1.0 / curvature;

  for (int i = 0; i < anchorkit::kLevels; ++i)
    for (int t = 0; t < kTasks; ++t) {
      const auto key = "head" + std::to_string(i + 1) + "." + kTaskName[t];
      const auto& w = weights.at(key + ".weight").values;
      const auto& b = weights.at(key + ".bias").values;
      pb.params.weight[i][t].assign(w.begin(), w.end());
      pb.params.bias[i][t].assign(b.begin(), b.end());
    }
  return pb;
}

std::vector<double>& task_rows(losskit::BranchOutputs& o, int t) { return t == 0 ? o.cls : t == 1 ? o.box : o.landm; }

// Head forward in anchor-row order: level, pixel, anchor slot.
losskit::BranchOutputs head_forward(const ToyProblem& pb, int u) {
  auto out = losskit::BranchOutputs::zeros(pb.anchors.size());
  std::size_t row0 = 0;
  for (int i = 0; i < anchorkit::kLevels; ++i) {
    const auto& f = pb.features[u][i];
    for (int t = 0; t < kTasks; ++t) {
      const int x = kTaskWidth[t];
      const auto& w = pb.params.weight[i][t];
      const auto& b = pb.params.bias[i][t];
      auto& dst = task_rows(out, t);
      for (std::size_t p = 0; p < f.pixels; ++p)
        for (int o = 0; o < anchorkit::kAnchorsPerCell * x; ++o) {
          double s = b[o];
          for (int c = 0; c < f.channels; ++c) s += w[o * f.channels + c] * f.values[p * f.channels + c];
          dst[(row0 + p * anchorkit::kAnchorsPerCell) * x + o] = s;
        }
    }
    row0 += f.pixels * anchorkit::kAnchorsPerCell;
  }
  return out;
}

void accumulate_gradient(const ToyProblem& pb, int u, const losskit::BranchGradients& g, HeadParams& grad) {
  std::size_t row0 = 0;
  for (int i = 0; i < anchorkit::kLevels; ++i) {
    const auto& f = pb.features[u][i];
    for (int t = 0; t < kTasks; ++t) {
      const int x = kTaskWidth[t];
      const auto& src = t == 0 ? g.cls : t == 1 ? g.box : g.landm;
      auto& gw = grad.weight[i][t];
      auto& gb = grad.bias[i][t];
      for (std::size_t p = 0; p < f.pixels; ++p)
        for (int o = 0; o < anchorkit::kAnchorsPerCell * x; ++o) {
          const double d = src[(row0 + p * anchorkit::kAnchorsPerCell) * x + o];
          if (d == 0.0) continue;
          gb[o] += d;
          for (int c = 0; c < f.channels; ++c) gw[o * f.channels + c] += d * f.values[p * f.channels + c];
        }
    }
    row0 += f.pixels * anchorkit::kAnchorsPerCell;
  }
}

std::vector<double> train(ToyProblem& pb, int steps) {
  const losskit::LossConfig cfg;
  const std::array<anchorkit::MatchAssignment, 2> match = {anchorkit::match_anchors(pb.anchors, pb.gts, cfg.branch1),
                                                           anchorkit::match_anchors(pb.anchors, pb.gts, cfg.branch2)};
  const std::array<anchorkit::EncodedTargets, 2> targets = {
      anchorkit::encode_targets(pb.anchors, pb.gts, match[0], cfg.variances),
      anchorkit::encode_targets(pb.anchors, pb.gts, match[1], cfg.variances)};
  std::vector<double> trace;
  for (int s = 0; s <= steps; ++s) {
    const std::array<losskit::BranchOutputs, 2> out = {head_forward(pb, 0), head_forward(pb, 1)};
    trace.push_back(losskit::total_loss(out[0], out[1], pb.anchors, pb.gts, cfg).l_total);
    if (s == steps) break;
    HeadParams grad;
    for (int i = 0; i < anchorkit::kLevels; ++i)
      for (int t = 0; t < kTasks; ++t) {
        grad.weight[i][t].assign(pb.params.weight[i][t].size(), 0.0);
        grad.bias[i][t].assign(pb.params.bias[i][t].size(), 0.0);
      }
    for (int u = 0; u < 2; ++u) {
      accumulate_gradient(pb, u, losskit::loss_gradients(out[u], match[u], targets[u], cfg), grad);
    }
    for (int i = 0; i < anchorkit::kLevels; ++i)
      for (int t = 0; t < kTasks; ++t) {
        for (std::size_t k = 0; k < grad.weight[i][t].size(); ++k) pb.params.weight[i][t][k] -= pb.step * grad.weight[i][t][k];
        for (std::size_t k = 0; k < grad.bias[i][t].size(); ++k) pb.params.bias[i][t][k] -= pb.step * grad.bias[i][t][k];
      }
  }
  return trace;
}

}  // namespace

std::vector<std::vector<double>> toy_training_traces(int seeds, int steps) {
  std::vector<std::vector<double>> out;
  for (int seed = 1; seed <= seeds; ++seed) {
    auto pb = build_problem(seed);
    out.push_back(train(pb, steps));
  }
  return out;
}

CriterionResult toy_training() {
  CriterionResult r{9, "toy training decreases the total loss", false, {}};
  const auto traces = toy_training_traces(kToyTrainingSeeds, kToyTrainingSteps);
  int monotone = 0;
  std::string per_seed;
  for (std::size_t s = 0; s < traces.size(); ++s) {
    const auto& t = traces[s];
    bool ok = t.back() < t.front();
    std::size_t first_rise = 0;
    for (std::size_t k = 1; ok && k < t.size(); ++k) {
      if (t[k] > t[k - 1]) {
        ok = false;
        first_rise = k;
      }
    }
    monotone += ok;
    char buf[96];
    if (ok) {
      std::snprintf(buf, sizeof buf, " %.3f->%.3f", t.front(), t.back());
    } else {
      std::snprintf(buf, sizeof buf, " seed%zu:rise@%zu", s + 1, first_rise);
    }
    if (!ok || s < 2) per_seed += buf;
  }
  r.passed = monotone >= kToyTrainingRequired;
  r.detail = std::to_string(monotone) + "/" + std::to_string(traces.size()) + " seeds monotone over " +
             std::to_string(kToyTrainingSteps) + " steps;" + per_seed;
  return r;
}

}  // namespace acceptance
