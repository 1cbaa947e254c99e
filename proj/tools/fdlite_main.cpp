#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>

#include "criteria.hpp"
#include "fdlite/errors.hpp"
#include "fdlite/evalkit.hpp"
#include "fdlite/executor.hpp"
#include "fdlite/netgraph.hpp"
#include "fdlite/pipeline.hpp"

using namespace fdlite;

namespace {

TensorShape parse_size(const std::string& s) {
  static const std::regex re(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ConfigError("input size must look like WxH, got '" + s + "'");
  return {1, std::stoi(m[2]), std::stoi(m[1]), 3};
}

netgraph::DetectorConfig detector_config(const std::string& variant) {
  netgraph::DetectorConfig c;
  c.backbone = netgraph::backbone_config_from_variant(variant);
  return c;
}

// Config file keys mirror InferenceConfig; flags given on the command line
// are applied afterwards.
pipeline::InferenceConfig load_inference_config(const std::string& path) {
  pipeline::InferenceConfig c;
  if (path.empty()) return c;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
    if (j.contains("score_threshold")) c.score_threshold = j["score_threshold"].get<double>();
    if (j.contains("nms_iou")) c.nms_iou = j["nms_iou"].get<double>();
    if (j.contains("top_k")) c.top_k = j["top_k"].get<std::size_t>();
    if (j.contains("scales")) c.scales = j["scales"].get<std::vector<int>>();
    if (j.contains("flip")) c.flip = j["flip"].get<bool>();
    if (j.contains("branch")) c.branch = j["branch"].get<int>();
    if (j.contains("max_pixels")) c.max_pixels = j["max_pixels"].get<std::int64_t>();
    if (j.contains("threads")) c.parallelism.threads = j["threads"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

int run_audit(const std::string& size, const std::string& variant, bool json) {
  const auto cmp = netgraph::compare_budgets(detector_config(variant), parse_size(size));
  if (json) {
    std::cout << netgraph::budget_comparison_json(cmp).dump(2) << "\n";
  } else {
    std::cout << netgraph::format_budget_comparison(cmp);
  }
  return 0;
}

struct InferArgs {
  std::string image, weights, annotate_out, config_path, variant = "dense";
  bool multiscale = false, json = false, no_flip = false;
  std::optional<double> threshold;
  std::optional<int> branch, threads, scale;
};

int run_infer(const InferArgs& a) {
  auto cfg = load_inference_config(a.config_path);
  if (a.threshold) cfg.score_threshold = *a.threshold;
  if (a.branch) cfg.branch = *a.branch;
  if (a.threads) cfg.parallelism.threads = *a.threads;
  if (a.no_flip) cfg.flip = false;

  const auto image = pipeline::load_image(a.image);
  if (!a.multiscale) {
    // one pass at the original short edge unless a scale is given
    cfg.scales = {a.scale ? *a.scale : std::min(image.width, image.height)};
    cfg.flip = false;
  } else if (a.scale) {
    cfg.scales = {*a.scale};
  }
  cfg.validate();

  auto graph = netgraph::build_fdlite(detector_config(a.variant));
  const pipeline::Detector detector(std::move(graph), executor::load_weights(a.weights));
  const auto dets = pipeline::detect_multiscale(image, detector, cfg);

  if (!a.annotate_out.empty()) {
    pipeline::save_image(pipeline::annotate(image, dets), a.annotate_out);
    std::cerr << dets.size() << " detections drawn to " << a.annotate_out << "\n";
    if (!a.json) return 0;
  }
  std::cout << pipeline::to_json_lines(a.image, dets);
  return 0;
}

int run_eval(const std::string& dets_path, const std::string& gts_path, const std::string& protocol,
             std::size_t fp_budget, const std::string& subset) {
  const auto dets = evalkit::load_detections(dets_path);
  const auto gts = evalkit::load_gt(gts_path);
  if (protocol == "ap") {
    nlohmann::json out = nlohmann::json::array();
    if (subset.empty()) {
      for (const auto& r : evalkit::evaluate_all_subsets(dets, gts)) out.push_back(evalkit::to_json(r));
    } else {
      out.push_back(evalkit::to_json(evaluate_ap(dets, gts, subset)));
    }
    std::cout << out.dump(2) << "\n";
  } else {
    std::size_t n_gt = 0;
    const auto stream = evalkit::pooled_outcomes(dets, gts, "all", &n_gt);
    const auto r = evalkit::tpr_at_fp(stream, n_gt, fp_budget);
    std::cout << evalkit::tpr_to_json(r, fp_budget, n_gt, gts.images.size()).dump(2) << "\n";
  }
  return 0;
}

int run_selftest(const std::vector<int>& ids) {
  std::size_t passed = 0, ran = 0;
  for (const auto& c : acceptance::all_criteria()) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), c.id) == ids.end()) continue;
    const auto r = acceptance::run_guarded(c);
    std::cout << acceptance::format_line(r) << std::endl;
    ++ran;
    passed += r.passed;
  }
  std::cout << passed << "/" << ran << " criteria passed\n";
  return passed == ran ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fdlite: lightweight face detector toolkit"};
  app.require_subcommand(1);

  std::string size = "640x480", variant = "dense";
  bool audit_json = false;
  auto* audit = app.add_subcommand("audit", "parameter and FLOP budget against the reported figures");
  audit->add_option("--input-size", size, "WxH")
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string& v) {
            return std::regex_match(v, std::regex(R"(\d+[xX]\d+)")) ? std::string() : "expected WxH, got '" + v + "'";
          },
          "WxH"));
  audit->add_option("--variant", variant)->check(CLI::IsMember({"dense", "grouped"}))->capture_default_str();
  audit->add_flag("--json", audit_json);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "detect faces in one image");
  infer->add_option("--image", ia.image)->required();
  infer->add_option("--weights", ia.weights)->required();
  infer->add_flag("--multiscale", ia.multiscale, "scales and flip from the config (default 500..1700 + flip)");
  infer->add_flag("--json", ia.json, "JSON-lines on stdout (default unless --annotate)");
  infer->add_option("--annotate", ia.annotate_out, "write an annotated PPM/PNG copy");
  infer->add_option("--config", ia.config_path, "JSON inference config; flags win");
  infer->add_option("--variant", ia.variant)->check(CLI::IsMember({"dense", "grouped"}));
  infer->add_option("--threshold", ia.threshold);
  infer->add_option("--branch", ia.branch)->check(CLI::Range(1, 2));
  infer->add_option("--threads", ia.threads)->check(CLI::NonNegativeNumber);
  infer->add_option("--scale", ia.scale, "short-edge target");
  infer->add_flag("--no-flip", ia.no_flip);

  std::string dets_path, gts_path, protocol = "ap", subset;
  std::size_t fp_budget = 1000;
  auto* eval = app.add_subcommand("eval", "AP per subset or TPR at a false-positive budget");
  eval->add_option("--dets", dets_path)->required();
  eval->add_option("--gts", gts_path)->required();
  eval->add_option("--protocol", protocol)->check(CLI::IsMember({"ap", "fddb"}))->capture_default_str();
  eval->add_option("--fp-budget", fp_budget)->capture_default_str();
  eval->add_option("--subset", subset, "all|easy|medium|hard (ap only)");

  std::vector<int> ids;
  auto* selftest = app.add_subcommand("selftest", "run the acceptance criteria");
  selftest->add_option("criteria", ids, "criterion ids, default all")->check(CLI::Range(1, 9));

  std::string init_out, init_variant = "dense";
  std::uint64_t seed = 1;
  auto* init = app.add_subcommand("init-weights", "write a seeded untrained weight file");
  init->add_option("--out", init_out)->required();
  init->add_option("--seed", seed)->capture_default_str();
  init->add_option("--variant", init_variant)->check(CLI::IsMember({"dense", "grouped"}));

  std::string graph_variant = "dense";
  auto* graph = app.add_subcommand("export-graph", "print the layer graph as JSON");
  graph->add_option("--variant", graph_variant)->check(CLI::IsMember({"dense", "grouped"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*audit) return run_audit(size, variant, audit_json);
    if (*infer) return run_infer(ia);
    if (*eval) return run_eval(dets_path, gts_path, protocol, fp_budget, subset);
    if (*selftest) return run_selftest(ids);
    if (*init) {
      const auto g = netgraph::build_fdlite(detector_config(init_variant));
      executor::save_weights(executor::init_weights(g, seed), init_out);
      return 0;
    }
    if (*graph) {
      std::cout << netgraph::graph_to_json(netgraph::build_fdlite(detector_config(graph_variant))).dump(1) << "\n";
      return 0;
    }
  } catch (const fdlite::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
