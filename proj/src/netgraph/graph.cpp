#include <algorithm>
#include <set>

#include "fdlite/errors.hpp"
#include "fdlite/netgraph.hpp"

namespace fdlite::netgraph {

namespace {

constexpr std::pair<LayerKind, const char*> kKindNames[] = {
    {LayerKind::Conv, "Conv"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::LeakyReLU, "LeakyReLU"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::UpsampleNearest2x, "UpsampleNearest2x"},
    {LayerKind::Concat, "Concat"},
    {LayerKind::Add, "Add"},
    {LayerKind::Reshape, "Reshape"},
};

std::size_t expected_arity(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Add:
      return 2;
    case LayerKind::Concat:
      return 0;  // variadic, checked separately
    case LayerKind::UpsampleNearest2x:
      return spec.inputs.size() == 2 ? 2 : 1;
    default:
      return 1;
  }
}

void check_spec(const LayerSpec& s) {
  auto fail = [&](const std::string& what) {
    throw StructuralError("node '" + s.name + "': " + what);
  };
  if (s.name.empty()) throw StructuralError("node with empty name");
  if (s.groups < 1) fail("groups must be >= 1");
  if (s.stride < 1) fail("stride must be >= 1");
  if (s.padding < 0) fail("padding must be >= 0");
  if (s.kind == LayerKind::Concat) {
    if (s.inputs.empty()) fail("concat needs at least one input");
  } else if (s.inputs.size() != expected_arity(s)) {
    fail("expected " + std::to_string(expected_arity(s)) + " inputs, got " +
         std::to_string(s.inputs.size()));
  }
  switch (s.kind) {
    case LayerKind::Conv:
      if (s.in_channels < 1 || s.out_channels < 1) fail("channel counts must be >= 1");
      if (s.kernel_h < 1 || s.kernel_w < 1) fail("kernel must be >= 1");
      if (s.in_channels % s.groups != 0 || s.out_channels % s.groups != 0) {
        fail("channels not divisible by groups");
      }
      break;
    case LayerKind::BatchNorm:
      if (s.in_channels < 1) fail("channel count must be >= 1");
      if (!(s.eps >= 0.0f)) fail("eps must be >= 0");
      break;
    case LayerKind::LeakyReLU:
      if (!(s.slope > 0.0f && s.slope < 1.0f)) fail("slope must lie in (0,1)");
      break;
    case LayerKind::MaxPool:
      if (s.kernel_h < 1 || s.kernel_w < 1) fail("kernel must be >= 1");
      if (s.padding >= s.kernel_h || s.padding >= s.kernel_w) fail("padding must be < kernel");
      break;
    case LayerKind::Reshape:
      if (s.row_width < 1) fail("row_width must be >= 1");
      break;
    default:
      break;
  }
}

}  // namespace

const char* to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (const auto& [k, name] : kKindNames) {
    if (s == name) return k;
  }
  throw FormatError("unknown layer kind '" + s + "'");
}

void LayerGraph::add_input(std::string name, int channels) {
  if (channels < 1) throw StructuralError("graph input '" + name + "' needs >= 1 channel");
  if (index_.count(name) || is_input(name)) {
    throw StructuralError("duplicate name '" + name + "'");
  }
  inputs_.push_back({std::move(name), channels});
}

void LayerGraph::add(LayerSpec spec) {
  check_spec(spec);
  if (index_.count(spec.name) || is_input(spec.name)) {
    throw StructuralError("duplicate node name '" + spec.name + "'");
  }
  for (const auto& in : spec.inputs) {
    if (!index_.count(in) && !is_input(in)) {
      throw StructuralError("node '" + spec.name + "' consumes unknown producer '" + in + "'");
    }
  }
  index_[spec.name] = nodes_.size();
  nodes_.push_back(std::move(spec));
}

void LayerGraph::add_output(std::string label, std::string node) {
  if (!index_.count(node) && !is_input(node)) {
    throw StructuralError("output '" + label + "' refers to unknown node '" + node + "'");
  }
  if (find_output(label)) throw StructuralError("duplicate output label '" + label + "'");
  outputs_.push_back({std::move(label), std::move(node)});
}

void LayerGraph::set_metadata(std::string key, nlohmann::json value) {
  metadata_[std::move(key)] = std::move(value);
}

std::vector<std::pair<std::string, std::string>> LayerGraph::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& n : nodes_) {
    for (const auto& in : n.inputs) out.emplace_back(in, n.name);
  }
  return out;
}

const LayerSpec* LayerGraph::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

bool LayerGraph::is_input(const std::string& name) const {
  return std::any_of(inputs_.begin(), inputs_.end(),
                     [&](const GraphInput& in) { return in.name == name; });
}

const GraphOutput* LayerGraph::find_output(const std::string& label) const {
  for (const auto& o : outputs_) {
    if (o.label == label) return &o;
  }
  return nullptr;
}

void LayerGraph::validate() const {
  std::set<std::string> seen;
  for (const auto& in : inputs_) {
    if (!seen.insert(in.name).second) throw StructuralError("duplicate name '" + in.name + "'");
  }
  for (const auto& n : nodes_) {
    check_spec(n);
    for (const auto& p : n.inputs) {
      if (!seen.count(p)) {
        throw StructuralError("node '" + n.name + "' consumes '" + p +
                              "' which is not produced earlier (cycle or missing producer)");
      }
    }
    if (!seen.insert(n.name).second) throw StructuralError("duplicate name '" + n.name + "'");
  }
  for (const auto& o : outputs_) {
    if (!seen.count(o.node)) {
      throw StructuralError("output '" + o.label + "' refers to unknown node '" + o.node + "'");
    }
  }
}

}  // namespace fdlite::netgraph
