#include <algorithm>
#include <set>

#include "fdlite/errors.hpp"
#include "fdlite/executor.hpp"

namespace fdlite::executor {

using netgraph::ConcatAxis;
using netgraph::LayerGraph;
using netgraph::LayerKind;
using netgraph::LayerSpec;

namespace {

TensorBuf to_tensor(const WeightEntry& e) {
  TensorShape s{1, 1, 1, 1};
  switch (e.shape.size()) {
    case 4:
      s = {e.shape[0], e.shape[1], e.shape[2], e.shape[3]};
      break;
    case 1:
      s = {1, 1, 1, e.shape[0]};
      break;
    default:
      throw ExecutionError("unsupported weight rank " + std::to_string(e.shape.size()));
  }
  return TensorBuf(s, e.values);
}

}  // namespace

Network::Network(LayerGraph graph, const WeightStore& weights) : graph_(std::move(graph)) {
  graph_.validate();
  const auto check = validate_weights(graph_, weights);
  if (!check.missing.empty()) {
    throw ExecutionError("missing weight '" + check.missing.front() + "' (" +
                         std::to_string(check.missing.size()) + " missing in total)");
  }
  if (!check.mismatched.empty()) throw ExecutionError("weight shape mismatch: " + check.mismatched.front());

  const auto& nodes = graph_.nodes();
  prepared_.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    auto& p = prepared_[i];
    const auto& key = n.weight_key();
    if (n.kind == LayerKind::Conv) {
      p.kernel = to_tensor(weights.at(key + ".weight"));
      if (n.has_bias) p.bias = weights.at(key + ".bias").values;
      p.packed = kernels::PackedConv(p.kernel, p.bias, {n.stride, n.padding, n.groups});
    } else if (n.kind == LayerKind::BatchNorm) {
      p.scale = weights.at(key + ".scale").values;
      p.shift = weights.at(key + ".shift").values;
      p.mean = weights.at(key + ".mean").values;
      p.var = weights.at(key + ".var").values;
      for (std::size_t c = 0; c < p.var.size(); ++c) {
        if (!(p.var[c] >= 0.0f)) {
          throw DataError("node '" + n.name + "': negative variance at channel " + std::to_string(c));
        }
      }
    }
  }

  // Index of the last node reading each node's output; lets run() drop
  // intermediates as soon as they are dead.
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].name] = i;
  last_use_.assign(nodes.size(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& in : nodes[i].inputs) {
      auto it = pos.find(in);
      if (it != pos.end()) last_use_[it->second] = static_cast<int>(i);
    }
  }
  for (const auto& o : graph_.outputs()) {
    auto it = pos.find(o.node);
    if (it != pos.end()) last_use_[it->second] = static_cast<int>(nodes.size());
  }
}

TensorMap Network::run(const TensorBuf& input, const ForwardOptions& options) const {
  if (graph_.inputs().size() != 1) throw ExecutionError("graph has several inputs");
  return run(TensorMap{{graph_.inputs().front().name, input}}, options);
}

TensorMap Network::run(const TensorMap& inputs, const ForwardOptions& options) const {
  std::map<std::string, TensorBuf> live;
  for (const auto& gi : graph_.inputs()) {
    auto it = inputs.find(gi.name);
    if (it == inputs.end()) throw ExecutionError("no tensor for graph input '" + gi.name + "'");
    if (it->second.shape().c != gi.channels) {
      throw ExecutionError("graph input '" + gi.name + "' expects " + std::to_string(gi.channels) +
                           " channels, got " + it->second.shape().to_string());
    }
    if (it->second.first_non_finite() >= 0) {
      throw ExecutionError("graph input '" + gi.name + "' holds non-finite values");
    }
    live[gi.name] = it->second;
  }
  const std::set<std::string> keep(options.keep.begin(), options.keep.end());
  TensorMap kept;
  const auto par = options.parallelism;
  const auto& nodes = graph_.nodes();

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LayerSpec& n = nodes[i];
    const Prepared& p = prepared_[i];
    auto arg = [&](std::size_t k) -> const TensorBuf& { return live.at(n.inputs[k]); };
    TensorBuf out;
    try {
      switch (n.kind) {
        case LayerKind::Conv:
          if (arg(0).shape().c != n.in_channels) {
            throw StructuralError("expected " + std::to_string(n.in_channels) + " channels, got " +
                                  arg(0).shape().to_string());
          }
          out = options.reference_kernels
                    ? kernels::conv2d_reference(arg(0), p.kernel, p.bias,
                                                {n.stride, n.padding, n.groups})
                    : kernels::conv2d(arg(0), p.packed, par);
          break;
        case LayerKind::BatchNorm:
          out = kernels::batch_norm(arg(0), p.scale, p.shift, p.mean, p.var, n.eps, par);
          break;
        case LayerKind::LeakyReLU:
          out = kernels::leaky_relu(arg(0), n.slope, par);
          break;
        case LayerKind::MaxPool:
          out = options.reference_kernels
                    ? kernels::max_pool2d_reference(arg(0), n.kernel_h, n.stride, n.padding)
                    : kernels::max_pool2d(arg(0), n.kernel_h, n.stride, n.padding, par);
          break;
        case LayerKind::UpsampleNearest2x:
          if (n.inputs.size() == 2) {
            out = kernels::upsample_nearest2x(
                arg(0), std::make_pair(arg(1).shape().h, arg(1).shape().w));
          } else {
            out = kernels::upsample_nearest2x(arg(0));
          }
          break;
        case LayerKind::Concat: {
          std::vector<const TensorBuf*> parts;
          for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(&arg(k));
          out = n.axis == ConcatAxis::Channels ? kernels::concat_channels(parts)
                                               : kernels::concat_rows(parts);
          break;
        }
        case LayerKind::Add:
          out = kernels::add(arg(0), arg(1));
          break;
        case LayerKind::Reshape:
          out = kernels::reshape_rows(arg(0), n.row_width);
          break;
      }
    } catch (const Error& e) {
      throw ExecutionError("node '" + n.name + "': " + e.what());
    }
    if (const auto bad = out.first_non_finite(); bad >= 0) {
      throw ExecutionError("node '" + n.name + "' produced a non-finite value at element " +
                           std::to_string(bad));
    }
    if (keep.count(n.name)) kept[n.name] = out;
    if (last_use_[i] >= 0) live[n.name] = std::move(out);

    // Release producers whose last consumer was this node.
    for (const auto& in : n.inputs) {
      const auto* spec = graph_.find(in);
      if (!spec) continue;
      const auto idx = static_cast<std::size_t>(spec - nodes.data());
      if (last_use_[idx] == static_cast<int>(i)) live.erase(in);
    }
  }

  TensorMap result = std::move(kept);
  for (const auto& o : graph_.outputs()) result[o.label] = live.at(o.node);
  return result;
}

TensorMap run_forward(const LayerGraph& graph, const WeightStore& weights, const TensorBuf& input,
                      const ForwardOptions& options) {
  return Network(graph, weights).run(input, options);
}

}  // namespace fdlite::executor
