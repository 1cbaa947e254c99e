#include "fdlite/errors.hpp"
#include "fdlite/netgraph.hpp"

namespace fdlite::netgraph {

void BackboneConfig::validate() const {
  if (!(slope > 0.0f && slope < 1.0f)) {
    throw ConfigError("LeakyReLU slope must lie in (0,1), got " + std::to_string(slope));
  }
  if (!(bn_eps >= 0.0f)) throw ConfigError("BatchNorm eps must be >= 0");
  if (fru_variant == FruVariant::Grouped) {
    // FRU widths are 64 and 128 and the narrow branch has k/2 outputs.
    if (fru_groups < 1 || 32 % fru_groups != 0) {
      throw ConfigError("fru_groups must divide 32, got " + std::to_string(fru_groups));
    }
  }
}

void DetectorConfig::validate() const {
  backbone.validate();
  if (fpn_width < 4 || fpn_width % 4 != 0) {
    throw ConfigError("FPN width must be a positive multiple of 4, got " +
                      std::to_string(fpn_width));
  }
  if (anchors_per_cell != 3) {
    throw ConfigError("anchors_per_cell must be 3, got " + std::to_string(anchors_per_cell));
  }
}

BackboneConfig backbone_config_from_variant(const std::string& variant) {
  BackboneConfig cfg;
  if (variant == "dense") {
    cfg.fru_variant = FruVariant::Dense;
  } else if (variant == "grouped") {
    cfg.fru_variant = FruVariant::Grouped;
  } else {
    throw ConfigError("unknown FRU variant '" + variant + "' (expected dense|grouped)");
  }
  return cfg;
}

GraphBuilder::GraphBuilder(float slope, float bn_eps) : slope_(slope), bn_eps_(bn_eps) {}

std::string GraphBuilder::input(const std::string& name, int channels) {
  graph_.add_input(name, channels);
  channels_[name] = channels;
  return name;
}

int GraphBuilder::channels(const std::string& tensor) const {
  auto it = channels_.find(tensor);
  if (it == channels_.end()) throw StructuralError("unknown tensor '" + tensor + "'");
  return it->second;
}

std::string GraphBuilder::conv(const std::string& name, const std::string& in, int out_channels,
                               ConvGeom geom, bool bias, const std::string& weight_name) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.name = name;
  s.inputs = {in};
  s.kernel_h = s.kernel_w = geom.kernel;
  s.in_channels = channels(in);
  s.out_channels = out_channels;
  s.stride = geom.stride;
  s.padding = geom.padding;
  s.groups = geom.groups;
  s.has_bias = bias;
  s.weight_name = weight_name;
  graph_.add(std::move(s));
  channels_[name] = out_channels;
  return name;
}

std::string GraphBuilder::batch_norm(const std::string& name, const std::string& in) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  s.name = name;
  s.inputs = {in};
  s.in_channels = s.out_channels = channels(in);
  s.eps = bn_eps_;
  graph_.add(std::move(s));
  channels_[name] = channels(in);
  return name;
}

std::string GraphBuilder::leaky_relu(const std::string& name, const std::string& in) {
  LayerSpec s;
  s.kind = LayerKind::LeakyReLU;
  s.name = name;
  s.inputs = {in};
  s.in_channels = s.out_channels = channels(in);
  s.slope = slope_;
  graph_.add(std::move(s));
  channels_[name] = channels(in);
  return name;
}

std::string GraphBuilder::max_pool(const std::string& name, const std::string& in, int kernel,
                                   int stride, int padding) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.name = name;
  s.inputs = {in};
  s.kernel_h = s.kernel_w = kernel;
  s.stride = stride;
  s.padding = padding;
  s.in_channels = s.out_channels = channels(in);
  graph_.add(std::move(s));
  channels_[name] = channels(in);
  return name;
}

std::string GraphBuilder::upsample(const std::string& name, const std::string& in,
                                   const std::string& like) {
  LayerSpec s;
  s.kind = LayerKind::UpsampleNearest2x;
  s.name = name;
  s.inputs = {in};
  if (!like.empty()) s.inputs.push_back(like);
  s.in_channels = s.out_channels = channels(in);
  graph_.add(std::move(s));
  channels_[name] = channels(in);
  return name;
}

std::string GraphBuilder::add(const std::string& name, const std::string& a, const std::string& b) {
  LayerSpec s;
  s.kind = LayerKind::Add;
  s.name = name;
  s.inputs = {a, b};
  s.in_channels = s.out_channels = channels(a);
  graph_.add(std::move(s));
  channels_[name] = channels(a);
  return name;
}

std::string GraphBuilder::concat(const std::string& name, const std::vector<std::string>& ins,
                                 ConcatAxis axis) {
  LayerSpec s;
  s.kind = LayerKind::Concat;
  s.name = name;
  s.inputs = ins;
  s.axis = axis;
  int c = 0;
  if (axis == ConcatAxis::Channels) {
    for (const auto& in : ins) c += channels(in);
  } else {
    c = channels(ins.front());
  }
  s.out_channels = c;
  graph_.add(std::move(s));
  channels_[name] = c;
  return name;
}

std::string GraphBuilder::reshape(const std::string& name, const std::string& in, int row_width) {
  LayerSpec s;
  s.kind = LayerKind::Reshape;
  s.name = name;
  s.inputs = {in};
  s.row_width = row_width;
  s.in_channels = channels(in);
  s.out_channels = row_width;
  graph_.add(std::move(s));
  channels_[name] = row_width;
  return name;
}

std::string GraphBuilder::cbl(const std::string& prefix, const std::string& in, int out_channels,
                              ConvGeom geom) {
  auto c = conv(prefix + ".conv", in, out_channels, geom, /*bias=*/false);
  auto b = batch_norm(prefix + ".bn", c);
  return leaky_relu(prefix + ".act", b);
}

std::string GraphBuilder::cl(const std::string& prefix, const std::string& in, int out_channels,
                             ConvGeom geom) {
  auto c = conv(prefix + ".conv", in, out_channels, geom, /*bias=*/true);
  return leaky_relu(prefix + ".act", c);
}

std::string GraphBuilder::cdw(const std::string& prefix, const std::string& in, int out_channels,
                              int stride) {
  auto pw = cbl(prefix + ".pw", in, out_channels, {1, 1, 0, 1});
  return cbl(prefix + ".dw", pw, out_channels, {3, stride, 1, out_channels});
}

std::string GraphBuilder::fru(const std::string& prefix, const std::string& in, int fru_groups) {
  const int k = channels(in);
  if (k % 2 != 0) throw ConfigError("FRU width must be even, got " + std::to_string(k));
  auto head = cl(prefix + ".cl1", in, k, {3, 1, 1, fru_groups});
  auto wide = cl(prefix + ".cl2a", head, k / 2, {3, 1, 1, fru_groups});
  auto point = cl(prefix + ".cl2b", head, k / 2, {1, 1, 0, 1});
  auto cat = concat(prefix + ".cat", {wide, point}, ConcatAxis::Channels);
  auto refined = cl(prefix + ".cl3", cat, k, {3, 1, 1, fru_groups});
  return add(prefix + ".add", refined, in);
}

std::string GraphBuilder::ccpm(const std::string& prefix, const std::string& in) {
  const int c = channels(in);
  if (c % 4 != 0) {
    throw ConfigError("CCPM width must be divisible by 4, got " + std::to_string(c));
  }
  const ConvGeom k3{3, 1, 1, 1};
  auto conv_bn = [&](const std::string& p, const std::string& x, int out) {
    return batch_norm(p + ".bn", conv(p + ".conv", x, out, k3, false));
  };
  auto a = conv_bn(prefix + ".a", in, c / 2);

  auto b = leaky_relu(prefix + ".b1.act", conv_bn(prefix + ".b1", in, c / 4));
  b = conv_bn(prefix + ".b2", b, c / 4);

  auto cc = leaky_relu(prefix + ".c1.act", conv_bn(prefix + ".c1", in, c / 4));
  cc = leaky_relu(prefix + ".c2.act", conv_bn(prefix + ".c2", cc, c / 4));
  cc = conv_bn(prefix + ".c3", cc, c / 4);

  auto cat = concat(prefix + ".cat", {a, b, cc}, ConcatAxis::Channels);
  return leaky_relu(prefix + ".act", cat);
}

std::string GraphBuilder::fpn_level(const std::string& prefix, const std::string& lateral_in,
                                    int width, const std::string& top_down) {
  auto lateral = cbl(prefix + ".lateral", lateral_in, width, {1, 1, 0, 1});
  auto merged_in = lateral;
  if (!top_down.empty()) {
    auto up = upsample(prefix + ".up", top_down, lateral);
    merged_in = add(prefix + ".sum", lateral, up);
  }
  return cbl(prefix + ".merge", merged_in, width, {3, 1, 1, 1});
}

void GraphBuilder::output(const std::string& label, const std::string& node) {
  graph_.add_output(label, node);
}

LayerGraph GraphBuilder::finish() {
  graph_.validate();
  return std::move(graph_);
}

std::vector<std::string> append_blite(GraphBuilder& b, const std::string& input,
                                      const BackboneConfig& config) {
  config.validate();
  const int g = config.fru_variant == FruVariant::Grouped ? config.fru_groups : 1;

  auto x = b.cbl("ife.cbl", input, 8, {7, 2, 3, 1});
  x = b.cdw("ife.cdw1", x, 16, 1);
  x = b.cdw("ife.cdw2", x, 32, 2);

  auto layer = [&](const std::string& name, const std::string& in, int width) {
    auto y = b.cbl(name + ".cbl", in, width, {3, 2, 1, 1});
    y = b.fru(name + ".fru1", y, g);
    y = b.fru(name + ".fru2", y, g);
    y = b.cdw(name + ".cdw", y, width, 1);
    return b.fru(name + ".fru3", y, g);
  };
  auto c1 = layer("l1", x, 64);
  auto c2 = layer("l2", c1, 128);

  auto y = b.max_pool("l3.mp", c2, 3, 2, 1);
  y = b.cdw("l3.cdw1", y, 128, 1);
  y = b.cdw("l3.cdw2", y, 256, 1);
  auto c3 = b.cdw("l3.cdw3", y, 256, 1);
  return {c1, c2, c3};
}

LayerGraph build_blite(const BackboneConfig& config) {
  config.validate();
  GraphBuilder b(config.slope, config.bn_eps);
  auto in = b.input("input", 3);
  auto cs = append_blite(b, in, config);
  b.output("C1", cs[0]);
  b.output("C2", cs[1]);
  b.output("C3", cs[2]);
  return b.finish();
}

LayerGraph build_fdlite(const DetectorConfig& config) {
  config.validate();
  GraphBuilder b(config.backbone.slope, config.backbone.bn_eps);
  auto in = b.input("input", 3);
  auto cs = append_blite(b, in, config.backbone);
  const int width = config.fpn_width;

  std::vector<std::string> pyramid(3);
  pyramid[2] = b.fpn_level("fpn3", cs[2], width);
  pyramid[1] = b.fpn_level("fpn2", cs[1], width, pyramid[2]);
  pyramid[0] = b.fpn_level("fpn1", cs[0], width, pyramid[1]);

  const int a = config.anchors_per_cell;
  constexpr int kHeadWidth[3] = {2, 4, 10};
  constexpr const char* kHeadName[3] = {"cls", "bbox", "landm"};

  // rows[u][task] collects the per-level reshaped head outputs of branch u.
  std::vector<std::string> rows[2][3];
  for (int level = 1; level <= 3; ++level) {
    const std::string lvl = std::to_string(level);
    auto first = b.ccpm("ccpm" + lvl + ".1", pyramid[level - 1]);
    auto second = b.ccpm("ccpm" + lvl + ".2", first);
    const std::string branch_in[2] = {first, second};
    for (int u = 0; u < 2; ++u) {
      for (int t = 0; t < 3; ++t) {
        const std::string shared = "head" + lvl + "." + kHeadName[t];
        const std::string node = shared + ".b" + std::to_string(u + 1);
        auto h = b.conv(node, branch_in[u], a * kHeadWidth[t], {1, 1, 0, 1}, true, shared);
        rows[u][t].push_back(b.reshape(node + ".rows", h, kHeadWidth[t]));
      }
    }
  }
  for (int u = 0; u < 2; ++u) {
    for (int t = 0; t < 3; ++t) {
      auto cat = b.concat(kBranchOutputs[u][t], rows[u][t], ConcatAxis::Rows);
      b.output(kBranchOutputs[u][t], cat);
    }
  }
  b.graph().set_metadata("anchor_order", "level-major, row-major, then size index");
  b.graph().set_metadata("anchor_strides", {8, 16, 32});
  b.graph().set_metadata("anchors_per_cell", a);
  b.graph().set_metadata("class_index", {{"face", 0}, {"background", 1}});
  b.graph().set_metadata("fru_variant",
                         config.backbone.fru_variant == FruVariant::Dense ? "dense" : "grouped");
  return b.finish();
}

}  // namespace fdlite::netgraph
