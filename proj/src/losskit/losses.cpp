#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdlite/errors.hpp"
#include "fdlite/losskit.hpp"

namespace fdlite::losskit {

using anchorkit::EncodedTargets;
using anchorkit::Label;
using anchorkit::MatchAssignment;

void LossConfig::validate() const {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw ConfigError("loss weights must be positive");
  if (!(ohem_ratio >= 1.0)) throw ConfigError("ohem ratio must be at least 1");
}

void BranchOutputs::check(std::size_t anchors) const {
  if (cls.size() != 2 * anchors || box.size() != 4 * anchors || landm.size() != 10 * anchors) {
    throw DataError("head outputs are not row-aligned with " + std::to_string(anchors) +
                    " anchors (cls " + std::to_string(cls.size()) + ", box " +
                    std::to_string(box.size()) + ", landm " + std::to_string(landm.size()) + ")");
  }
}

BranchOutputs BranchOutputs::zeros(std::size_t rows) {
  return {std::vector<double>(2 * rows), std::vector<double>(4 * rows),
          std::vector<double>(10 * rows)};
}

nlohmann::json to_json(const LossReport& report) {
  nlohmann::json j;
  j["l_total"] = report.l_total;
  for (std::size_t u = 0; u < 2; ++u) {
    const auto& b = report.branch[u];
    j["branches"].push_back({{"branch", u + 1},
                             {"l_cls", b.l_cls},
                             {"l_box", b.l_box},
                             {"l_landm", b.l_landm},
                             {"l_branch", b.l_branch},
                             {"positives", b.positives},
                             {"negatives_selected", b.negatives_selected}});
  }
  return j;
}

double cross_entropy(std::span<const double> logits, int label) {
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return lse - logits[label == 1 ? 0 : 1];
}

double smooth_l1_scalar(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) { return std::clamp(x, -1.0, 1.0); }

double smooth_l1(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DataError("smooth_l1: length mismatch");
  double s = 0.0;
  for (std::size_t d = 0; d < pred.size(); ++d) s += smooth_l1_scalar(pred[d] - target[d]);
  return s;
}

std::vector<double> negative_losses(const BranchOutputs& out) {
  std::vector<double> l(out.rows());
  for (std::size_t j = 0; j < l.size(); ++j) {
    l[j] = cross_entropy(std::span<const double>(out.cls).subspan(2 * j, 2), 0);
  }
  return l;
}

std::vector<std::size_t> ohem_select(std::span<const double> cls_losses,
                                     const MatchAssignment& assignment, double ratio) {
  if (cls_losses.size() != assignment.labels.size()) {
    throw DataError("ohem_select: loss vector does not match the assignment");
  }
  std::vector<std::size_t> neg;
  for (std::size_t j = 0; j < cls_losses.size(); ++j) {
    if (assignment.labels[j] == Label::Negative) neg.push_back(j);
  }
  const auto positives = static_cast<double>(assignment.count(Label::Positive));
  const auto budget = static_cast<std::size_t>(std::floor(ratio * std::max(positives, 1.0)));
  const std::size_t keep = std::min(budget, neg.size());
  std::partial_sort(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep), neg.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (cls_losses[a] != cls_losses[b]) return cls_losses[a] > cls_losses[b];
                      return a < b;
                    });
  neg.resize(keep);
  std::sort(neg.begin(), neg.end());
  return neg;
}

namespace {

void check_alignment(const BranchOutputs& out, const MatchAssignment& assignment,
                     const EncodedTargets& targets) {
  out.check(assignment.labels.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets.anchor[k] >= assignment.labels.size() ||
        assignment.labels[targets.anchor[k]] != Label::Positive) {
      throw DataError("encoded targets do not belong to the assignment's positives");
    }
  }
}

std::size_t landmark_count(const EncodedTargets& t) {
  return static_cast<std::size_t>(std::count(t.landmarks_valid.begin(), t.landmarks_valid.end(), true));
}

}  // namespace

BranchLoss multitask_loss(const BranchOutputs& out, const MatchAssignment& assignment,
                          const EncodedTargets& targets, const LossConfig& config,
                          std::span<const std::size_t> selected_negatives) {
  check_alignment(out, assignment, targets);
  BranchLoss r;
  const std::span<const double> cls(out.cls), box(out.box), landm(out.landm);

  double ce = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) ce += cross_entropy(cls.subspan(2 * targets.anchor[k], 2), 1);
  for (auto j : selected_negatives) ce += cross_entropy(cls.subspan(2 * j, 2), 0);
  const std::size_t n_cls = targets.size() + selected_negatives.size();
  r.l_cls = n_cls ? ce / static_cast<double>(n_cls) : 0.0;

  double reg = 0.0, lm = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto j = targets.anchor[k];
    reg += smooth_l1(box.subspan(4 * j, 4), targets.box[k]);
    if (targets.landmarks_valid[k]) lm += smooth_l1(landm.subspan(10 * j, 10), targets.landmarks[k]);
  }
  r.positives = targets.size();
  r.negatives_selected = selected_negatives.size();
  r.landmark_positives = landmark_count(targets);
  r.l_box = r.positives ? reg / static_cast<double>(r.positives) : 0.0;
  r.l_landm = r.landmark_positives ? lm / static_cast<double>(r.landmark_positives) : 0.0;
  r.l_branch = r.l_cls + config.lambda1 * r.l_box + config.lambda2 * r.l_landm;
  return r;
}

BranchLoss multitask_loss(const BranchOutputs& out, const MatchAssignment& assignment,
                          const EncodedTargets& targets, const LossConfig& config) {
  out.check(assignment.labels.size());
  const auto sel = ohem_select(negative_losses(out), assignment, config.ohem_ratio);
  return multitask_loss(out, assignment, targets, config, sel);
}

LossReport total_loss(const BranchOutputs& branch1, const BranchOutputs& branch2,
                      std::span<const anchorkit::AnchorBox> anchors,
                      std::span<const anchorkit::GroundTruthFace> gts, const LossConfig& config) {
  config.validate();
  LossReport report;
  const BranchOutputs* outs[2] = {&branch1, &branch2};
  const anchorkit::MatchOptions* policies[2] = {&config.branch1, &config.branch2};
  for (int u = 0; u < 2; ++u) {
    const auto m = anchorkit::match_anchors(anchors, gts, *policies[u]);
    const auto t = anchorkit::encode_targets(anchors, gts, m, config.variances);
    report.branch[u] = multitask_loss(*outs[u], m, t, config);
  }
  report.l_total = report.branch[0].l_branch + report.branch[1].l_branch;
  return report;
}

BranchGradients loss_gradients(const BranchOutputs& out, const MatchAssignment& assignment,
                               const EncodedTargets& targets, const LossConfig& config,
                               std::span<const std::size_t> selected_negatives) {
  check_alignment(out, assignment, targets);
  BranchGradients g{std::vector<double>(out.cls.size()), std::vector<double>(out.box.size()),
                    std::vector<double>(out.landm.size())};

  const std::size_t n_cls = targets.size() + selected_negatives.size();
  auto ce_grad = [&](std::size_t j, int label) {
    const double a = out.cls[2 * j], b = out.cls[2 * j + 1];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    const double pa = ea / (ea + eb), pb = eb / (ea + eb);
    const double inv = 1.0 / static_cast<double>(n_cls);
    g.cls[2 * j] += (pa - (label == 1 ? 1.0 : 0.0)) * inv;
    g.cls[2 * j + 1] += (pb - (label == 1 ? 0.0 : 1.0)) * inv;
  };
  for (auto j : targets.anchor) ce_grad(j, 1);
  for (auto j : selected_negatives) ce_grad(j, 0);

  const std::size_t n_lm = landmark_count(targets);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto j = targets.anchor[k];
    const double wb = config.lambda1 / static_cast<double>(targets.size());
    for (std::size_t d = 0; d < 4; ++d) {
      g.box[4 * j + d] += wb * smooth_l1_derivative(out.box[4 * j + d] - targets.box[k][d]);
    }
    if (!targets.landmarks_valid[k]) continue;
    const double wl = config.lambda2 / static_cast<double>(n_lm);
    for (std::size_t d = 0; d < 10; ++d) {
      g.landm[10 * j + d] += wl * smooth_l1_derivative(out.landm[10 * j + d] - targets.landmarks[k][d]);
    }
  }
  return g;
}

BranchGradients loss_gradients(const BranchOutputs& out, const MatchAssignment& assignment,
                               const EncodedTargets& targets, const LossConfig& config) {
  out.check(assignment.labels.size());
  const auto sel = ohem_select(negative_losses(out), assignment, config.ohem_ratio);
  return loss_gradients(out, assignment, targets, config, sel);
}

}  // namespace fdlite::losskit
