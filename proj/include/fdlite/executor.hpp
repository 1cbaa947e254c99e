#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fdlite/kernels.hpp"
#include "fdlite/netgraph.hpp"
#include "fdlite/tensor.hpp"

namespace fdlite::executor {

struct WeightEntry {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  friend bool operator==(const WeightEntry&, const WeightEntry&) = default;
};

// Named parameter tensors. Insertion order is the manifest order of the file
// format. Conv nodes own "<key>.weight" (out, kh, kw, in/groups) and, with a
// bias, "<key>.bias" (out); BatchNorm nodes own "<key>.scale", ".shift",
// ".mean" and ".var" (channels), where <key> is the node's weight key.
class WeightStore {
 public:
  void set(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values);
  const WeightEntry* find(const std::string& name) const;
  const WeightEntry& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

 private:
  std::map<std::string, WeightEntry> entries_;
  std::vector<std::string> order_;
};

struct RequiredWeight {
  std::string name;
  std::vector<std::int64_t> shape;
};

// Every parameter tensor the graph consumes, in node order, shared keys once.
std::vector<RequiredWeight> required_weights(const netgraph::LayerGraph& graph);

struct WeightValidation {
  std::vector<std::string> missing;
  std::vector<std::string> mismatched;  // "name: expected (..) got (..)"
  std::vector<std::string> orphans;     // present in the store, unused by the graph

  bool complete() const { return missing.empty() && mismatched.empty(); }
};

WeightValidation validate_weights(const netgraph::LayerGraph& graph, const WeightStore& store);

// Glorot-uniform conv weights, zero biases, identity BatchNorm statistics.
WeightStore init_weights(const netgraph::LayerGraph& graph, std::uint64_t seed);

// Container layout (.fdw):
//   bytes 0..3   magic "FDW1"
//   bytes 4..11  manifest length L, unsigned 64-bit little endian
//   next L bytes UTF-8 JSON manifest:
//                {"version":1,"blob_bytes":B,"tensors":[{"name","shape",
//                 "offset","count","crc32"}...]}
//   next B bytes float32 little-endian blobs, contiguous in manifest order
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);
std::string serialize_weights(const WeightStore& store);
WeightStore deserialize_weights(const std::string& bytes);

using TensorMap = std::map<std::string, TensorBuf>;

struct ForwardOptions {
  kernels::Parallelism parallelism{};
  bool reference_kernels = false;  // serial direct conv / pool
  std::vector<std::string> keep;   // extra node names to return
};

// A graph bound to its weights, with conv kernels pre-packed. Immutable after
// construction; run() may be called concurrently.
class Network {
 public:
  Network(netgraph::LayerGraph graph, const WeightStore& weights);

  // Returns the graph outputs keyed by label plus any kept nodes keyed by
  // node name.
  TensorMap run(const TensorMap& inputs, const ForwardOptions& options = {}) const;
  TensorMap run(const TensorBuf& input, const ForwardOptions& options = {}) const;

  const netgraph::LayerGraph& graph() const { return graph_; }

 private:
  struct Prepared {
    kernels::PackedConv packed;
    TensorBuf kernel;
    std::vector<float> bias;
    std::vector<float> scale, shift, mean, var;
  };

  netgraph::LayerGraph graph_;
  std::vector<Prepared> prepared_;
  std::vector<int> last_use_;
};

TensorMap run_forward(const netgraph::LayerGraph& graph, const WeightStore& weights,
                      const TensorBuf& input, const ForwardOptions& options = {});

}  // namespace fdlite::executor
