#include <gtest/gtest.h>

#include <set>

#include "fdlite/errors.hpp"
#include "fdlite/netgraph.hpp"
#include "oracles.hpp"

using namespace fdlite;
using namespace fdlite::netgraph;

namespace {

TensorShape output_shape(const LayerGraph& g, const ShapeMap& shapes, const std::string& label) {
  return shapes.at(g.find_output(label)->node);
}

}  // namespace

TEST(Backbone, PyramidShapesAtVga) {
  const auto g = build_blite({});
  const auto s = shape_infer(g, {1, 480, 640, 3});
  EXPECT_EQ(output_shape(g, s, "C1"), (TensorShape{1, 60, 80, 64}));
  EXPECT_EQ(output_shape(g, s, "C2"), (TensorShape{1, 30, 40, 128}));
  EXPECT_EQ(output_shape(g, s, "C3"), (TensorShape{1, 15, 20, 256}));
  EXPECT_EQ(s.at("ife.cdw2.dw.act"), (TensorShape{1, 120, 160, 32}));
}

TEST(Backbone, PyramidShapesDivisibleBy32) {
  const auto g = build_blite({});
  for (int h : {64, 128, 320, 480, 640})
    for (int w : {64, 128, 320, 480, 640}) {
      const auto s = shape_infer(g, {1, h, w, 3});
      for (int i = 1; i <= 3; ++i) {
        const auto c = output_shape(g, s, "C" + std::to_string(i));
        EXPECT_EQ(c.h, h >> (i + 2));
        EXPECT_EQ(c.w, w >> (i + 2));
      }
    }
}

TEST(Backbone, CblExpandsToThreePrimitives) {
  GraphBuilder b(0.1f, 1e-5f);
  b.cbl("u", b.input("x", 3), 8, {7, 2, 3, 1});
  ASSERT_EQ(b.graph().nodes().size(), 3u);
  EXPECT_EQ(b.graph().nodes()[0].kind, LayerKind::Conv);
  EXPECT_FALSE(b.graph().nodes()[0].has_bias);
  EXPECT_EQ(b.graph().nodes()[1].kind, LayerKind::BatchNorm);
  EXPECT_EQ(b.graph().nodes()[2].kind, LayerKind::LeakyReLU);
}

TEST(Backbone, RejectsBadConfig) {
  BackboneConfig c;
  c.slope = 0.0f;
  EXPECT_THROW(build_blite(c), ConfigError);
  EXPECT_THROW(backbone_config_from_variant("sparse"), ConfigError);
  DetectorConfig d;
  d.fpn_width = 30;
  EXPECT_THROW(build_fdlite(d), ConfigError);
}

TEST(Backbone, FruResidualsJoinEqualShapes) {
  const auto g = build_blite({});
  const auto s = shape_infer(g, {1, 96, 160, 3});
  int adds = 0;
  for (const auto& n : g.nodes()) {
    if (n.kind != LayerKind::Add) continue;
    ++adds;
    EXPECT_EQ(s.at(n.inputs[0]), s.at(n.inputs[1])) << n.name;
  }
  EXPECT_EQ(adds, 6);
}

TEST(Detector, HeadRowsMatchAnchorCount) {
  const auto g = build_fdlite({});
  const auto s = shape_infer(g, {1, 480, 640, 3});
  const int widths[3] = {2, 4, 10};
  for (int u = 0; u < 2; ++u)
    for (int t = 0; t < 3; ++t) {
      const auto shape = output_shape(g, s, kBranchOutputs[u][t]);
      EXPECT_EQ(shape.h, 18900);
      EXPECT_EQ(shape.c, widths[t]);
    }
}

TEST(Detector, HeadWidthsAndSharing) {
  const auto g = build_fdlite({});
  const char* tasks[3] = {"cls", "bbox", "landm"};
  const int out[3] = {6, 12, 30};
  for (int i = 1; i <= 3; ++i)
    for (int t = 0; t < 3; ++t) {
      const auto base = "head" + std::to_string(i) + "." + tasks[t];
      const auto* b1 = g.find(base + ".b1");
      const auto* b2 = g.find(base + ".b2");
      ASSERT_NE(b1, nullptr);
      ASSERT_NE(b2, nullptr);
      EXPECT_EQ(b1->out_channels, out[t]);
      EXPECT_EQ(b1->kernel_h, 1);
      EXPECT_TRUE(b1->has_bias);
      EXPECT_EQ(b1->weight_key(), b2->weight_key());
    }
  std::set<std::string> labels;
  for (const auto& o : g.outputs()) labels.insert(o.label);
  EXPECT_EQ(labels, (std::set<std::string>{"cls1", "bbox1", "landm1", "cls2", "bbox2", "landm2"}));
}

TEST(Detector, OddSizesStayShapeSafe) {
  const auto g = build_fdlite({});
  for (auto [h, w] : {std::pair{233, 317}, std::pair{500, 667}, std::pair{32, 32}}) {
    const auto s = shape_infer(g, {1, h, w, 3});
    EXPECT_EQ(output_shape(g, s, "cls2"), output_shape(g, s, "cls1"));
  }
}

TEST(ShapeInfer, Examples) {
  GraphBuilder b(0.1f, 1e-5f);
  const auto mp = b.max_pool("mp", b.input("x", 128), 3, 2, 1);
  auto s = shape_infer(b.graph(), {1, 60, 80, 128});
  EXPECT_EQ(s.at(mp), (TensorShape{1, 30, 40, 128}));

  GraphBuilder u(0.1f, 1e-5f);
  const auto up = u.upsample("up", u.input("x", 32));
  s = shape_infer(u.graph(), {1, 15, 20, 32});
  EXPECT_EQ(s.at(up), (TensorShape{1, 30, 40, 32}));

  GraphBuilder a(0.1f, 1e-5f);
  a.add("sum", a.input("p", 8), a.input("q", 16));
  EXPECT_THROW(shape_infer(a.graph(), std::map<std::string, TensorShape>{{"p", {1, 4, 4, 8}}, {"q", {1, 4, 4, 16}}}),
               StructuralError);
}

TEST(Graph, RejectsStructuralViolations) {
  LayerGraph g;
  g.add_input("x", 3);
  LayerSpec c;
  c.kind = LayerKind::Conv;
  c.name = "c";
  c.inputs = {"missing"};
  c.in_channels = 3;
  c.out_channels = 4;
  EXPECT_THROW(g.add(c), StructuralError);
  c.inputs = {"x"};
  c.groups = 2;
  EXPECT_THROW(g.add(c), StructuralError);
  c.groups = 1;
  g.add(c);
  EXPECT_THROW(g.add(c), StructuralError);  // duplicate name
}

TEST(Budget, ClosedFormExamples) {
  GraphBuilder b(0.1f, 1e-5f);
  b.cbl("u", b.input("x", 3), 8, {7, 2, 3, 1});
  const auto r = audit(b.graph(), {1, 480, 640, 3});
  EXPECT_EQ(r.total_params, 1192);
  EXPECT_EQ(r.per_node[0].flops, 180633600);
  EXPECT_EQ(r.non_learned_params, 16);

  GraphBuilder d(0.1f, 1e-5f);
  d.cdw("u", d.input("x", 8), 16, 1);
  EXPECT_EQ(count_params(d.graph()).total_params, 336);

  GraphBuilder f(0.1f, 1e-5f);
  f.fru("u", f.input("x", 64), 1);
  EXPECT_EQ(count_params(f.graph()).total_params, 94400);

  GraphBuilder l(0.1f, 1e-5f);
  l.leaky_relu("a", l.input("x", 64));
  EXPECT_EQ(count_flops(l.graph(), {1, 60, 80, 64}).total_flops, 307200);

  EXPECT_EQ(count_params(LayerGraph{}).total_params, 0);
}

TEST(Budget, TotalsAreSumsOfNodes) {
  const auto r = audit(build_fdlite({}), {1, 480, 640, 3});
  std::int64_t p = 0, f = 0;
  for (const auto& n : r.per_node) {
    p += n.params;
    f += n.flops;
  }
  EXPECT_EQ(p, r.total_params);
  EXPECT_EQ(f, r.total_flops);
  EXPECT_EQ(r.mac_convention_total, r.total_flops - r.conv_flops / 2);
}

TEST(Budget, MatchesOracleTables) {
  for (int g : {1, 8}) {
    DetectorConfig c;
    if (g > 1) c.backbone.fru_variant = FruVariant::Grouped;
    c.backbone.fru_groups = g > 1 ? g : c.backbone.fru_groups;
    for (auto [h, w] : {std::pair{480, 640}, std::pair{256, 320}, std::pair{375, 500}}) {
      const auto r = audit(build_fdlite(c), {1, h, w, 3});
      const auto t = oracle::detector_table(h, w, g);
      EXPECT_EQ(r.total_params, t.total_params());
      EXPECT_EQ(r.total_flops, t.total_flops());
    }
  }
}

TEST(Budget, DoublingInputQuadruplesConvFlops) {
  const auto g = build_fdlite({});
  const auto a = audit(g, {1, 160, 224, 3});
  const auto b = audit(g, {1, 320, 448, 3});
  EXPECT_EQ(b.conv_flops, 4 * a.conv_flops);
  EXPECT_EQ(b.total_params, a.total_params);
}

TEST(Budget, GroupedVariantIsSmaller) {
  DetectorConfig c;
  c.backbone = backbone_config_from_variant("grouped");
  const auto dense = audit(build_blite({}), {1, 480, 640, 3});
  const auto grouped = audit(build_blite(c.backbone), {1, 480, 640, 3});
  EXPECT_LT(grouped.total_params, dense.total_params);
  EXPECT_LT(grouped.total_flops, dense.total_flops);
}

TEST(BudgetReport, MentionsReportedFigures) {
  const auto text = format_budget_comparison(compare_budgets({}, {1, 480, 640, 3}));
  EXPECT_NE(text.find("paper-reported: 0.24M / 0.94G"), std::string::npos);
  EXPECT_NE(text.find("paper-reported: 0.167M / 0.52G"), std::string::npos);
  EXPECT_NE(text.find("delta params"), std::string::npos);
}

TEST(GraphJson, RoundTrip) {
  const auto g = build_fdlite({});
  const auto doc = graph_to_json(g);
  const auto back = graph_from_json(doc);
  EXPECT_EQ(graph_to_json(back), doc);
  EXPECT_EQ(back.nodes().size(), g.nodes().size());
}
