#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "criteria.hpp"
#include "fdlite/evalkit.hpp"
#include "fdlite/executor.hpp"
#include "fdlite/netgraph.hpp"
#include "fdlite/pipeline.hpp"
#include "oracles.hpp"

namespace acceptance {

using namespace fdlite;
using anchorkit::Box;
using pipeline::Detection;

namespace {

// Checks one JSON-lines record against the detection schema.
std::string schema_problem(const nlohmann::json& j, int w, int h, double threshold) {
  for (const char* k : {"image", "x", "y", "w", "h", "score", "landmarks"}) {
    if (!j.contains(k)) return std::string("missing ") + k;
  }
  if (!j["image"].is_string()) return "image is not a string";
  for (const char* k : {"x", "y", "w", "h", "score"}) {
    if (!j[k].is_number() || !std::isfinite(j[k].get<double>())) return std::string(k) + " not a finite number";
  }
  const double x = j["x"], y = j["y"], bw = j["w"], bh = j["h"], s = j["score"];
  if (bw < 0 || bh < 0 || x < 0 || y < 0 || x + bw > w + 1e-9 || y + bh > h + 1e-9) return "box outside image";
  if (!(s > threshold && s <= 1.0)) return "score out of range";
  const auto& lm = j["landmarks"];
  if (!lm.is_array() || lm.size() != 5) return "landmarks not 5 points";
  for (const auto& p : lm) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) return "bad landmark point";
  }
  return {};
}

}  // namespace

CriterionResult inference_protocol() {
  CriterionResult r{7, "multi-scale inference protocol and NMS oracle", false, {}};
  std::string bad;
  std::mt19937_64 rng(707);

  const pipeline::InferenceConfig cfg;
  if (cfg.score_threshold != 0.02 || cfg.nms_iou != 0.4 || cfg.top_k != 750 ||
      cfg.scales != std::vector<int>{500, 800, 1100, 1400, 1700}) {
    bad += "defaults differ from 0.02 / 0.4 / 750 / [500..1700]; ";
  }

  pipeline::RgbImage image(640, 480);
  {
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(byte(rng));
  }
  const auto graph = netgraph::build_fdlite({});
  const pipeline::Detector detector(graph, executor::init_weights(graph, 7));
  const auto t0 = std::chrono::steady_clock::now();
  const auto dets = pipeline::detect_multiscale(image, detector, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= kMultiscaleSecondsLimit) bad += "multi-scale pass took " + std::to_string(secs) + " s; ";
  if (dets.size() > 750) bad += std::to_string(dets.size()) + " detections > 750; ";

  std::istringstream lines(pipeline::to_json_lines("random.png", dets));
  std::string line;
  std::size_t records = 0;
  while (std::getline(lines, line)) {
    const auto problem = schema_problem(nlohmann::json::parse(line), 640, 480, cfg.score_threshold);
    if (!problem.empty()) {
      bad += "record " + std::to_string(records) + ": " + problem + "; ";
      break;
    }
    ++records;
  }
  if (records != dets.size()) bad += "record count differs from detection count; ";

  // NMS against the quadratic reference.
  int sets = 0;
  for (; sets < 1000; ++sets) {
    std::uniform_int_distribution<int> n(0, 50), pos(0, 20), len(1, 10), score(0, 9), dup(0, 4);
    std::vector<Detection> in;
    const int count = n(rng);
    for (int i = 0; i < count; ++i) {
      Detection d;
      if (!in.empty() && dup(rng) == 0) {
        d = in[static_cast<std::size_t>(pos(rng)) % in.size()];  // exact duplicate
      } else {
        d.box = {4.0 * pos(rng), 4.0 * pos(rng), 4.0 * len(rng), 4.0 * len(rng)};
        d.score = 0.1 * score(rng);
      }
      d.source_scale = i;  // tags the input position
      in.push_back(d);
    }
    const double thresh = sets % 2 ? 0.4 : 0.3 + 0.05 * (sets % 7);
    const auto kept = oracle::brute_force_nms(in, thresh);
    const std::size_t limit = sets % 3 == 0 ? static_cast<std::size_t>(sets % 11) : kept.size();
    const auto got = pipeline::nms(in, thresh, sets % 3 == 0 ? limit : std::numeric_limits<std::size_t>::max());
    bool same = got.size() == std::min(limit, kept.size());
    for (std::size_t k = 0; same && k < got.size(); ++k) same = got[k].source_scale == static_cast<double>(kept[k]);
    if (!same) {
      bad += "nms set " + std::to_string(sets) + " differs; ";
      break;
    }
  }

  r.passed = bad.empty();
  char buf[200];
  std::snprintf(buf, sizeof buf, "640x480, 5 scales + flip in %.1f s, %zu schema-valid detections; NMS agrees on %d sets",
                secs, dets.size(), sets);
  r.detail = bad.empty() ? buf : bad;
  return r;
}

namespace {

std::vector<evalkit::ScoredOutcome> random_stream(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> s(0, 15), tp(0, 1);
  std::vector<evalkit::ScoredOutcome> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({0.05 * s(rng), tp(rng) == 1});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

int outcome_code(evalkit::DetOutcome o) {
  return o == evalkit::DetOutcome::FalsePositive ? 0 : o == evalkit::DetOutcome::TruePositive ? 1 : 2;
}

}  // namespace

CriterionResult evaluation_protocol() {
  CriterionResult r{8, "AP and TPR@FP on synthetic corpora", false, {}};
  std::string bad;
  std::mt19937_64 rng(808);

  // Perfect detector over a parsed corpus.
  {
    const std::string gt =
        "a/img1.jpg\n2\n10 10 40 40 0 0 easy\n100 100 30 30 hard\n"
        "b/img2.jpg\n1\n5 5 20 20 medium\n"
        "c/empty.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n";
    const std::string dets =
        R"({"image":"a/img1.jpg","x":10,"y":10,"w":40,"h":40,"score":0.9,"landmarks":[]})"
        "\n"
        R"({"image":"a/img1.jpg","x":100,"y":100,"w":30,"h":30,"score":0.7,"landmarks":[]})"
        "\n"
        R"({"image":"img2","x":5,"y":5,"w":20,"h":20,"score":0.8,"landmarks":[]})"
        "\n";
    const auto gts = evalkit::parse_gt(gt);
    const auto ds = evalkit::parse_detections(dets);
    for (const auto& s : evalkit::evaluate_all_subsets(ds, gts)) {
      if (s.curve.ap != 1.0) bad += "perfect detector gives AP " + std::to_string(s.curve.ap) + " on " + s.subset + "; ";
    }
  }
  // Two detections, one face: an FP above the TP halves the precision.
  {
    const auto c = evalkit::average_precision({{0.9, false}, {0.8, true}}, 1);
    if (c.ap != 0.5) bad += "two-detection case gives " + std::to_string(c.ap) + "; ";
  }
  // Hand-walked TPR cases.
  {
    const std::vector<evalkit::ScoredOutcome> s{{0.9, true}, {0.8, false}, {0.7, true}, {0.6, false}};
    const auto b1 = evalkit::tpr_at_fp(s, 4, 1);
    const auto b0 = evalkit::tpr_at_fp(s, 4, 0);
    const auto b2 = evalkit::tpr_at_fp(s, 4, 2);
    if (b1.tpr != 0.5 || b1.false_positives != 1 || b1.under_budget) bad += "budget-1 walk; ";
    if (b0.tpr != 0.25 || b0.false_positives != 0 || b0.under_budget) bad += "budget-0 walk; ";
    if (b2.tpr != 0.5 || b2.false_positives != 2 || !b2.under_budget) bad += "budget-2 walk; ";
    const auto perfect = evalkit::tpr_at_fp({{0.9, true}, {0.5, true}}, 2, 0);
    if (perfect.tpr != 1.0 || !perfect.under_budget) bad += "perfect walk; ";
  }
  // Random streams and matchings against the references.
  int streams = 0, matchings = 0;
  for (int i = 0; i < 500; ++i) {
    std::uniform_int_distribution<std::size_t> len(0, 40), extra(0, 5), budget(0, 8);
    const auto s = random_stream(rng, len(rng));
    std::size_t tps = 0;
    for (const auto& o : s) tps += o.true_positive;
    const std::size_t n_gt = tps + extra(rng);
    if (n_gt == 0) continue;
    if (std::abs(evalkit::average_precision(s, n_gt).ap - oracle::enumerate_ap(s, n_gt)) > 1e-12) {
      bad += "AP stream " + std::to_string(i) + "; ";
    }
    const std::size_t b = budget(rng);
    if (evalkit::tpr_at_fp(s, n_gt, b).tpr != oracle::prefix_tpr(s, n_gt, b)) bad += "TPR stream " + std::to_string(i) + "; ";
    ++streams;
  }
  for (int i = 0; i < 500; ++i) {
    std::uniform_int_distribution<int> n(0, 12), pos(0, 10), l(2, 6), coin(0, 3);
    std::vector<Box> dets;
    std::vector<evalkit::EvalGt> gts;
    for (int k = n(rng); k > 0; --k) dets.push_back({4.0 * pos(rng), 4.0 * pos(rng), 4.0 * l(rng), 4.0 * l(rng)});
    for (int k = n(rng); k > 0; --k) gts.push_back({{4.0 * pos(rng), 4.0 * pos(rng), 4.0 * l(rng), 4.0 * l(rng)}, coin(rng) == 0});
    const auto got = evalkit::match_dets(dets, gts, 0.5);
    const auto want = oracle::brute_force_match_dets(dets, gts, 0.5);
    bool same = got.outcome.size() == want.size();
    for (std::size_t k = 0; same && k < want.size(); ++k) same = outcome_code(got.outcome[k]) == want[k];
    if (!same) bad += "match_dets case " + std::to_string(i) + "; ";
    ++matchings;
  }

  r.passed = bad.empty();
  r.detail = bad.empty() ? "perfect AP 1.0, two-detection AP 0.5, TPR walks exact; " + std::to_string(streams) +
                               " streams and " + std::to_string(matchings) + " matchings agree with references"
                         : bad.substr(0, 600);
  return r;
}

}  // namespace acceptance
