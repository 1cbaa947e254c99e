#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "fdlite/anchorkit.hpp"

namespace fdlite::losskit {

struct LossConfig {
  double lambda1 = 0.25;  // box regression weight
  double lambda2 = 0.1;   // landmark regression weight
  double ohem_ratio = 7.0;
  anchorkit::MatchOptions branch1 = anchorkit::MatchOptions::l1();
  anchorkit::MatchOptions branch2 = anchorkit::MatchOptions::l2();
  anchorkit::Variances variances{};

  void validate() const;
};

// Head outputs of one branch, row-aligned with the anchor list. Logit pairs
// are (face, background).
struct BranchOutputs {
  std::vector<double> cls;    // rows x 2
  std::vector<double> box;    // rows x 4
  std::vector<double> landm;  // rows x 10

  std::size_t rows() const { return cls.size() / 2; }
  void check(std::size_t anchors) const;
  static BranchOutputs zeros(std::size_t rows);
};

struct BranchLoss {
  double l_cls = 0.0;
  double l_box = 0.0;
  double l_landm = 0.0;
  double l_branch = 0.0;
  std::size_t positives = 0;
  std::size_t negatives_selected = 0;
  std::size_t landmark_positives = 0;
};

struct LossReport {
  std::array<BranchLoss, 2> branch;
  double l_total = 0.0;
};

nlohmann::json to_json(const LossReport& report);

// label 1 = face (logit index 0), label 0 = background (logit index 1).
double cross_entropy(std::span<const double> logits, int label);
double smooth_l1(std::span<const double> pred, std::span<const double> target);
double smooth_l1_scalar(double x);
double smooth_l1_derivative(double x);

// Per-anchor background cross entropy, the OHEM ranking key for negatives.
std::vector<double> negative_losses(const BranchOutputs& out);

// Negatives to keep, ascending by anchor index: the min(ratio * max(P,1), N)
// highest-loss negatives, ties broken towards lower anchor index.
std::vector<std::size_t> ohem_select(std::span<const double> cls_losses,
                                     const anchorkit::MatchAssignment& assignment, double ratio);

BranchLoss multitask_loss(const BranchOutputs& out, const anchorkit::MatchAssignment& assignment,
                          const anchorkit::EncodedTargets& targets, const LossConfig& config);
// Same with the negative selection held fixed.
BranchLoss multitask_loss(const BranchOutputs& out, const anchorkit::MatchAssignment& assignment,
                          const anchorkit::EncodedTargets& targets, const LossConfig& config,
                          std::span<const std::size_t> selected_negatives);

// Both branches are matched independently, with config.branch1 and
// config.branch2 respectively.
LossReport total_loss(const BranchOutputs& branch1, const BranchOutputs& branch2,
                      std::span<const anchorkit::AnchorBox> anchors,
                      std::span<const anchorkit::GroundTruthFace> gts, const LossConfig& config);

struct BranchGradients {
  std::vector<double> cls;
  std::vector<double> box;
  std::vector<double> landm;
};

BranchGradients loss_gradients(const BranchOutputs& out, const anchorkit::MatchAssignment& assignment,
                               const anchorkit::EncodedTargets& targets, const LossConfig& config);
BranchGradients loss_gradients(const BranchOutputs& out, const anchorkit::MatchAssignment& assignment,
                               const anchorkit::EncodedTargets& targets, const LossConfig& config,
                               std::span<const std::size_t> selected_negatives);

// Optimisation schedule of the reference training run. Not consumed by any
// code here; kept so a trainer can be wired to the same numbers.
struct TrainingRecipe {
  const char* optimizer = "SGD";
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 130;
  std::array<int, 2> lr_drop_epochs{100, 120};
  int batch_size = 8;
};
inline constexpr TrainingRecipe kTrainingRecipe{};

}  // namespace fdlite::losskit
