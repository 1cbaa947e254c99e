#include <set>

#include "fdlite/errors.hpp"
#include "fdlite/netgraph.hpp"

namespace fdlite::netgraph {

namespace {

[[noreturn]] void shape_error(const LayerSpec& s, const std::string& what) {
  throw StructuralError("shape error at node '" + s.name + "': " + what);
}

std::int64_t window_out(std::int64_t in, int kernel, int stride, int padding) {
  const std::int64_t span = in + 2 * static_cast<std::int64_t>(padding) - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

TensorShape infer_node(const LayerSpec& s, const std::vector<TensorShape>& in) {
  const TensorShape& x = in.front();
  switch (s.kind) {
    case LayerKind::Conv: {
      if (x.c != s.in_channels) {
        shape_error(s, "expected " + std::to_string(s.in_channels) + " input channels, got " +
                           std::to_string(x.c));
      }
      TensorShape out{x.n, window_out(x.h, s.kernel_h, s.stride, s.padding),
                      window_out(x.w, s.kernel_w, s.stride, s.padding), s.out_channels};
      if (!out.valid()) shape_error(s, "kernel larger than padded input " + x.to_string());
      return out;
    }
    case LayerKind::BatchNorm:
      if (x.c != s.in_channels) shape_error(s, "channel mismatch " + x.to_string());
      return x;
    case LayerKind::LeakyReLU:
      return x;
    case LayerKind::MaxPool: {
      TensorShape out{x.n, window_out(x.h, s.kernel_h, s.stride, s.padding),
                      window_out(x.w, s.kernel_w, s.stride, s.padding), x.c};
      if (!out.valid()) shape_error(s, "window larger than padded input " + x.to_string());
      return out;
    }
    case LayerKind::UpsampleNearest2x: {
      TensorShape out{x.n, 2 * x.h, 2 * x.w, x.c};
      if (in.size() == 2) {
        if (in[1].n != x.n) shape_error(s, "batch mismatch with reference tensor");
        out.h = in[1].h;
        out.w = in[1].w;
      }
      return out;
    }
    case LayerKind::Concat: {
      TensorShape out = x;
      for (std::size_t i = 1; i < in.size(); ++i) {
        const auto& y = in[i];
        if (s.axis == ConcatAxis::Channels) {
          if (y.n != x.n || y.h != x.h || y.w != x.w) {
            shape_error(s, "channel concat of " + x.to_string() + " and " + y.to_string());
          }
          out.c += y.c;
        } else {
          if (y.n != x.n || y.w != x.w || y.c != x.c) {
            shape_error(s, "row concat of " + x.to_string() + " and " + y.to_string());
          }
          out.h += y.h;
        }
      }
      return out;
    }
    case LayerKind::Add:
      if (in[0] != in[1]) {
        shape_error(s, "add of mismatched shapes " + in[0].to_string() + " and " +
                           in[1].to_string());
      }
      return x;
    case LayerKind::Reshape: {
      const std::int64_t per_batch = x.h * x.w * x.c;
      if (per_batch % s.row_width != 0) {
        shape_error(s, "cannot split " + x.to_string() + " into rows of " +
                           std::to_string(s.row_width));
      }
      return {x.n, per_batch / s.row_width, 1, s.row_width};
    }
  }
  shape_error(s, "unknown kind");
}

}  // namespace

ShapeMap shape_infer(const LayerGraph& graph, const std::map<std::string, TensorShape>& inputs) {
  ShapeMap shapes;
  for (const auto& gi : graph.inputs()) {
    auto it = inputs.find(gi.name);
    if (it == inputs.end()) throw StructuralError("no shape given for graph input '" + gi.name + "'");
    if (!it->second.valid()) throw StructuralError("invalid input shape " + it->second.to_string());
    if (it->second.c != gi.channels) {
      throw StructuralError("graph input '" + gi.name + "' expects " +
                            std::to_string(gi.channels) + " channels, got " +
                            std::to_string(it->second.c));
    }
    shapes[gi.name] = it->second;
  }
  std::vector<TensorShape> in;
  for (const auto& node : graph.nodes()) {
    in.clear();
    for (const auto& p : node.inputs) {
      auto it = shapes.find(p);
      if (it == shapes.end()) shape_error(node, "producer '" + p + "' has no shape");
      in.push_back(it->second);
    }
    shapes[node.name] = infer_node(node, in);
  }
  return shapes;
}

ShapeMap shape_infer(const LayerGraph& graph, TensorShape input) {
  if (graph.inputs().size() != 1) {
    throw StructuralError("graph has " + std::to_string(graph.inputs().size()) +
                          " inputs; pass a shape per input");
  }
  return shape_infer(graph, {{graph.inputs().front().name, input}});
}

std::int64_t conv_params(const LayerSpec& s) {
  const std::int64_t w = static_cast<std::int64_t>(s.kernel_h) * s.kernel_w *
                         (s.in_channels / s.groups) * s.out_channels;
  return w + (s.has_bias ? s.out_channels : 0);
}

std::int64_t node_flops(const LayerSpec& s, const TensorShape& out) {
  const std::int64_t elements = out.elements();
  switch (s.kind) {
    case LayerKind::Conv:
      return 2LL * s.kernel_h * s.kernel_w * (s.in_channels / s.groups) * s.out_channels * out.n *
             out.h * out.w;
    case LayerKind::BatchNorm:
      return 2 * elements;
    case LayerKind::LeakyReLU:
    case LayerKind::Add:
      return elements;
    case LayerKind::MaxPool:
      return (static_cast<std::int64_t>(s.kernel_h) * s.kernel_w - 1) * elements;
    default:
      return 0;
  }
}

BudgetReport count_params(const LayerGraph& graph) {
  BudgetReport report;
  std::set<std::string> counted;
  for (const auto& node : graph.nodes()) {
    NodeBudget nb{node.name, node.kind, 0, 0};
    const bool first = counted.insert(node.weight_key()).second;
    if (first && node.kind == LayerKind::Conv) nb.params = conv_params(node);
    if (first && node.kind == LayerKind::BatchNorm) {
      nb.params = 2LL * node.in_channels;
      report.non_learned_params += 2LL * node.in_channels;
    }
    report.total_params += nb.params;
    report.per_node.push_back(std::move(nb));
  }
  return report;
}

BudgetReport count_flops(const LayerGraph& graph, const std::map<std::string, TensorShape>& inputs) {
  BudgetReport report = count_params(graph);
  const ShapeMap shapes = shape_infer(graph, inputs);
  for (auto& nb : report.per_node) {
    const LayerSpec& spec = *graph.find(nb.name);
    nb.flops = node_flops(spec, shapes.at(nb.name));
    report.total_flops += nb.flops;
    if (spec.kind == LayerKind::Conv) report.conv_flops += nb.flops;
  }
  report.mac_convention_total = report.total_flops - report.conv_flops / 2;
  if (graph.inputs().size() == 1) report.input_shape = inputs.at(graph.inputs().front().name);
  return report;
}

BudgetReport count_flops(const LayerGraph& graph, TensorShape input) {
  if (graph.inputs().empty()) {
    BudgetReport empty;
    empty.input_shape = input;
    return empty;
  }
  if (graph.inputs().size() != 1) {
    throw StructuralError("graph has several inputs; pass a shape per input");
  }
  return count_flops(graph, {{graph.inputs().front().name, input}});
}

BudgetReport audit(const LayerGraph& graph, TensorShape input) { return count_flops(graph, input); }

}  // namespace fdlite::netgraph
