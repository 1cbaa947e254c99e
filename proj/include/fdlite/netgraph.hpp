#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fdlite/tensor.hpp"

namespace fdlite::netgraph {

enum class LayerKind { Conv, BatchNorm, LeakyReLU, MaxPool, UpsampleNearest2x, Concat, Add, Reshape };

// Concat joins either along channels (feature fusion) or along rows (the
// head's vertical concatenation of per-level anchor rows).
enum class ConcatAxis { Channels, Rows };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  std::vector<std::string> inputs;  // producer node names or graph input names

  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  bool has_bias = false;

  // Weight-store key prefix. Nodes that share parameters (the detector head
  // applied to both cascade branches) carry the same weight_name.
  std::string weight_name;

  float slope = 0.1f;               // LeakyReLU
  float eps = 1e-5f;                // BatchNorm
  ConcatAxis axis = ConcatAxis::Channels;
  int row_width = 0;                // Reshape: values per output row

  const std::string& weight_key() const { return weight_name.empty() ? name : weight_name; }
};

struct GraphInput {
  std::string name;
  int channels = 0;
};

struct GraphOutput {
  std::string label;  // public tensor name, e.g. "C1" or "cls2"
  std::string node;
};

// Directed acyclic layer graph. Nodes are stored in a topological order:
// add() rejects a node whose producers are not already present, so the node
// list is always a valid evaluation order.
class LayerGraph {
 public:
  LayerGraph() = default;

  void add_input(std::string name, int channels);
  void add(LayerSpec spec);
  void add_output(std::string label, std::string node);
  void set_metadata(std::string key, nlohmann::json value);

  const std::vector<GraphInput>& inputs() const { return inputs_; }
  const std::vector<LayerSpec>& nodes() const { return nodes_; }
  const std::vector<GraphOutput>& outputs() const { return outputs_; }
  const nlohmann::json& metadata() const { return metadata_; }

  std::vector<std::pair<std::string, std::string>> edges() const;
  const LayerSpec* find(const std::string& name) const;
  bool is_input(const std::string& name) const;
  const GraphOutput* find_output(const std::string& label) const;

  // Re-checks every structural invariant (unique names, producers present
  // before consumers, spec field constraints, outputs resolvable).
  void validate() const;

 private:
  std::vector<GraphInput> inputs_;
  std::vector<LayerSpec> nodes_;
  std::vector<GraphOutput> outputs_;
  std::map<std::string, std::size_t> index_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Builders

enum class FruVariant { Dense, Grouped };

struct BackboneConfig {
  FruVariant fru_variant = FruVariant::Dense;
  int fru_groups = 8;  // group count of the FRU 3x3 convs in the grouped variant
  float slope = 0.1f;
  float bn_eps = 1e-5f;

  void validate() const;
};

enum class CcpmVariant { SshCascade };

struct DetectorConfig {
  BackboneConfig backbone;
  int fpn_width = 32;
  CcpmVariant ccpm = CcpmVariant::SshCascade;
  int anchors_per_cell = 3;

  void validate() const;
};

BackboneConfig backbone_config_from_variant(const std::string& variant);

// Convolution geometry of one CBL/CL unit: kernel, stride, padding, groups.
struct ConvGeom {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Incremental builder for the unit vocabulary (CBL, CL, CDw, FRU, MP, FPN,
// CCPM, heads). Each method appends primitive nodes under a dotted name
// prefix and returns the name of the unit's output node.
class GraphBuilder {
 public:
  GraphBuilder(float slope, float bn_eps);

  std::string input(const std::string& name, int channels);

  std::string conv(const std::string& name, const std::string& in, int out_channels, ConvGeom geom,
                   bool bias, const std::string& weight_name = {});
  std::string batch_norm(const std::string& name, const std::string& in);
  std::string leaky_relu(const std::string& name, const std::string& in);
  std::string max_pool(const std::string& name, const std::string& in, int kernel, int stride,
                       int padding);
  std::string upsample(const std::string& name, const std::string& in,
                       const std::string& like = {});
  std::string add(const std::string& name, const std::string& a, const std::string& b);
  std::string concat(const std::string& name, const std::vector<std::string>& ins, ConcatAxis axis);
  std::string reshape(const std::string& name, const std::string& in, int row_width);

  // conv(bias off) -> BatchNorm -> LeakyReLU
  std::string cbl(const std::string& prefix, const std::string& in, int out_channels, ConvGeom geom);
  // conv(bias on) -> LeakyReLU
  std::string cl(const std::string& prefix, const std::string& in, int out_channels, ConvGeom geom);
  // CBL(1x1 k@q) -> CBL(3x3 q@q; s,1,q)
  std::string cdw(const std::string& prefix, const std::string& in, int out_channels, int stride);
  // multi-branch residual refinement unit; groups applies to its 3x3 convs
  std::string fru(const std::string& prefix, const std::string& in, int fru_groups);
  // SSH-style context module; keeps the channel width
  std::string ccpm(const std::string& prefix, const std::string& in);
  // one FPN level: lateral CBL 1x1, optional top-down add, 3x3 merge CBL
  std::string fpn_level(const std::string& prefix, const std::string& lateral_in, int width,
                        const std::string& top_down = {});

  int channels(const std::string& tensor) const;
  void output(const std::string& label, const std::string& node);
  LayerGraph& graph() { return graph_; }
  LayerGraph finish();

 private:
  LayerGraph graph_;
  std::map<std::string, int> channels_;
  float slope_;
  float bn_eps_;
};

// Backbone: IFE -> L1 -> L2 -> L3, exposing outputs C1, C2, C3.
LayerGraph build_blite(const BackboneConfig& config);

// Full detector: backbone + FPN + two cascaded CCPMs per level + shared heads.
// Outputs cls1, bbox1, landm1 (CCPM^1 branch) and cls2, bbox2, landm2.
LayerGraph build_fdlite(const DetectorConfig& config);

// Appends the backbone nodes to an existing builder and returns {C1, C2, C3}.
std::vector<std::string> append_blite(GraphBuilder& b, const std::string& input,
                                      const BackboneConfig& config);

inline constexpr const char* kBranchOutputs[2][3] = {{"cls1", "bbox1", "landm1"},
                                                     {"cls2", "bbox2", "landm2"}};

// ---------------------------------------------------------------------------
// Analyzers

using ShapeMap = std::map<std::string, TensorShape>;

ShapeMap shape_infer(const LayerGraph& graph, const std::map<std::string, TensorShape>& inputs);
ShapeMap shape_infer(const LayerGraph& graph, TensorShape input);

struct NodeBudget {
  std::string name;
  LayerKind kind;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct BudgetReport {
  std::vector<NodeBudget> per_node;
  std::int64_t total_params = 0;
  std::int64_t non_learned_params = 0;  // BatchNorm running mean/var
  std::int64_t total_flops = 0;
  std::int64_t conv_flops = 0;
  std::int64_t mac_convention_total = 0;  // conv terms halved
  std::optional<TensorShape> input_shape;
};

// Learned parameters per node; shared weights are counted once, at the first
// node that references them.
BudgetReport count_params(const LayerGraph& graph);
BudgetReport count_flops(const LayerGraph& graph, TensorShape input);
BudgetReport count_flops(const LayerGraph& graph, const std::map<std::string, TensorShape>& inputs);
// Both counts in one report.
BudgetReport audit(const LayerGraph& graph, TensorShape input);

std::int64_t conv_params(const LayerSpec& spec);
std::int64_t node_flops(const LayerSpec& spec, const TensorShape& out);

// ---------------------------------------------------------------------------
// Published budgets and the as-built comparison

struct ReferenceBudget {
  const char* label;
  double params_millions;
  double gflops;
};

inline constexpr ReferenceBudget kReportedBackbone{"backbone", 0.167, 0.52};
inline constexpr ReferenceBudget kReportedDetector{"detector", 0.24, 0.94};
// The summary figure for the detector disagrees with the results table.
inline constexpr ReferenceBudget kReportedDetectorAlt{"detector (alternate figure)", 0.26, 0.94};

struct BudgetComparison {
  std::string variant;
  TensorShape input;
  BudgetReport backbone;
  BudgetReport detector;
};

BudgetComparison compare_budgets(const DetectorConfig& config, TensorShape input);
// Human-readable table: as-built totals, reported figures, signed deltas.
std::string format_budget_comparison(const BudgetComparison& c);
nlohmann::json budget_comparison_json(const BudgetComparison& c);

// ---------------------------------------------------------------------------
// JSON export

nlohmann::json graph_to_json(const LayerGraph& graph);
LayerGraph graph_from_json(const nlohmann::json& doc);

}  // namespace fdlite::netgraph
