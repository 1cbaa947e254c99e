#include <cstdio>

#include "fdlite/netgraph.hpp"

namespace fdlite::netgraph {

BudgetComparison compare_budgets(const DetectorConfig& config, TensorShape input) {
  config.validate();
  BudgetComparison c;
  c.variant = config.backbone.fru_variant == FruVariant::Dense ? "dense" : "grouped";
  c.input = input;
  c.backbone = audit(build_blite(config.backbone), input);
  c.detector = audit(build_fdlite(config), input);
  return c;
}

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

std::string rows(const std::string& name, const BudgetReport& r, const ReferenceBudget& ref) {
  const double pm = static_cast<double>(r.total_params) / 1e6;
  const double gf = static_cast<double>(r.total_flops) / 1e9;
  const double gm = static_cast<double>(r.mac_convention_total) / 1e9;
  std::string s = name + "\n";
  s += "  as-built: " + std::to_string(r.total_params) + " params (" + fmt("%.4fM", pm) + "), " +
       std::to_string(r.total_flops) + " FLOPs (" + fmt("%.4fG", gf) + "), MAC-convention " +
       fmt("%.4fG", gm) + "\n";
  s += "  non-learned BatchNorm statistics: " + std::to_string(r.non_learned_params) + "\n";
  s += fmt("  paper-reported: %.3gM / %.3gG\n", ref.params_millions, ref.gflops);
  s += fmt("  delta params: %+.4fM (%+.1f%%)\n", pm - ref.params_millions,
           100.0 * (pm - ref.params_millions) / ref.params_millions);
  s += fmt("  delta FLOPs: %+.4fG (%+.1f%%), MAC-convention %+.4fG\n", gf - ref.gflops,
           100.0 * (gf - ref.gflops) / ref.gflops, gm - ref.gflops);
  return s;
}

nlohmann::json report_json(const BudgetReport& r, const ReferenceBudget& ref) {
  const double pm = static_cast<double>(r.total_params) / 1e6;
  const double gf = static_cast<double>(r.total_flops) / 1e9;
  return {{"params", r.total_params},
          {"non_learned_params", r.non_learned_params},
          {"flops", r.total_flops},
          {"conv_flops", r.conv_flops},
          {"mac_convention_flops", r.mac_convention_total},
          {"reported_params_millions", ref.params_millions},
          {"reported_gflops", ref.gflops},
          {"delta_params_millions", pm - ref.params_millions},
          {"delta_gflops", gf - ref.gflops}};
}

}  // namespace

std::string format_budget_comparison(const BudgetComparison& c) {
  std::string s = "budget audit, variant " + c.variant + ", input " + std::to_string(c.input.w) +
                  "x" + std::to_string(c.input.h) + "\n";
  s += rows("backbone", c.backbone, kReportedBackbone);
  s += rows("detector", c.detector, kReportedDetector);
  const double pm = static_cast<double>(c.detector.total_params) / 1e6;
  s += fmt("  alternate paper-reported detector figure: %.3gM (delta %+.4fM)\n",
           kReportedDetectorAlt.params_millions, pm - kReportedDetectorAlt.params_millions);
  s += "note: the reported budgets are not reachable from the textual architecture; the "
       "deltas are expected.\n";
  return s;
}

nlohmann::json budget_comparison_json(const BudgetComparison& c) {
  return {{"variant", c.variant},
          {"input", {{"w", c.input.w}, {"h", c.input.h}}},
          {"backbone", report_json(c.backbone, kReportedBackbone)},
          {"detector", report_json(c.detector, kReportedDetector)},
          {"detector_alternate_reported_params_millions", kReportedDetectorAlt.params_millions}};
}

}  // namespace fdlite::netgraph
