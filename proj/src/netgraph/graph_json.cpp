#include "fdlite/errors.hpp"
#include "fdlite/netgraph.hpp"

namespace fdlite::netgraph {

using nlohmann::json;

json graph_to_json(const LayerGraph& graph) {
  json doc;
  doc["format"] = "fdlite-graph";
  doc["version"] = 1;
  doc["inputs"] = json::array();
  for (const auto& in : graph.inputs()) {
    doc["inputs"].push_back({{"name", in.name}, {"channels", in.channels}});
  }
  doc["nodes"] = json::array();
  for (const auto& n : graph.nodes()) {
    json j = {
        {"name", n.name},
        {"kind", to_string(n.kind)},
        {"inputs", n.inputs},
        {"kernel_h", n.kernel_h},
        {"kernel_w", n.kernel_w},
        {"in_channels", n.in_channels},
        {"out_channels", n.out_channels},
        {"stride", n.stride},
        {"padding", n.padding},
        {"groups", n.groups},
        {"has_bias", n.has_bias},
        {"weight_name", n.weight_key()},
    };
    switch (n.kind) {
      case LayerKind::LeakyReLU:
        j["slope"] = n.slope;
        break;
      case LayerKind::BatchNorm:
        j["eps"] = n.eps;
        break;
      case LayerKind::Concat:
        j["axis"] = n.axis == ConcatAxis::Channels ? "channels" : "rows";
        break;
      case LayerKind::Reshape:
        j["row_width"] = n.row_width;
        break;
      default:
        break;
    }
    doc["nodes"].push_back(std::move(j));
  }
  doc["edges"] = json::array();
  for (const auto& [from, to] : graph.edges()) doc["edges"].push_back({from, to});
  doc["outputs"] = json::array();
  for (const auto& o : graph.outputs()) {
    doc["outputs"].push_back({{"label", o.label}, {"node", o.node}});
  }
  doc["metadata"] = graph.metadata();
  return doc;
}

LayerGraph graph_from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "fdlite-graph") throw FormatError("not an fdlite-graph document");
    LayerGraph g;
    for (const auto& in : doc.at("inputs")) {
      g.add_input(in.at("name").get<std::string>(), in.at("channels").get<int>());
    }
    for (const auto& j : doc.at("nodes")) {
      LayerSpec s;
      s.name = j.at("name").get<std::string>();
      s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
      s.inputs = j.at("inputs").get<std::vector<std::string>>();
      s.kernel_h = j.at("kernel_h").get<int>();
      s.kernel_w = j.at("kernel_w").get<int>();
      s.in_channels = j.at("in_channels").get<int>();
      s.out_channels = j.at("out_channels").get<int>();
      s.stride = j.at("stride").get<int>();
      s.padding = j.at("padding").get<int>();
      s.groups = j.at("groups").get<int>();
      s.has_bias = j.at("has_bias").get<bool>();
      s.weight_name = j.at("weight_name").get<std::string>();
      if (s.weight_name == s.name) s.weight_name.clear();
      s.slope = j.value("slope", 0.1f);
      s.eps = j.value("eps", 1e-5f);
      s.axis = j.value("axis", std::string("channels")) == "rows" ? ConcatAxis::Rows
                                                                  : ConcatAxis::Channels;
      s.row_width = j.value("row_width", 0);
      g.add(std::move(s));
    }
    for (const auto& o : doc.at("outputs")) {
      g.add_output(o.at("label").get<std::string>(), o.at("node").get<std::string>());
    }
    if (doc.contains("metadata")) {
      for (const auto& [k, v] : doc["metadata"].items()) g.set_metadata(k, v);
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace fdlite::netgraph
