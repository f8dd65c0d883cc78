#include <doctest.h>

#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "gradcheck.hpp"
#include "model.hpp"
#include "tempdir.hpp"

#include <set>

using namespace csna;
using csna::testing::Mat;
using csna::testing::random_matrix;
using csna::testing::six_node_graph;
using csna::testing::TempDir;

namespace {

LayerParams<double> random_layer(std::size_t h, Variant variant, Pcg32& rng, double scale = 0.5) {
  LayerParams<double> p;
  p.w_g = random_matrix(h, h, rng, scale);
  p.w_con = random_matrix(h, h, rng, scale);
  p.w_dis = random_matrix(h, h, rng, scale);
  p.w_self = random_matrix(h, h, rng, scale);
  p.w_gate = random_matrix(3 * h, 3, rng, scale);
  p.b_gate = Mat(1, 3, {0.1, -0.2, 0.3});
  if (variant == Variant::Extended) p.a = random_matrix(2 * h, 1, rng, scale);
  return p;
}

BoundLayer<double> bind_layer(ad::Tape<double>& tape, const LayerParams<double>& p) {
  BoundLayer<double> b;
  auto c = [&](const Mat& m) { return m.empty() ? ad::Tensor<double>() : tape.constant(m); };
  b.w = c(p.w);
  b.w_g = c(p.w_g);
  b.w_con = c(p.w_con);
  b.w_dis = c(p.w_dis);
  b.w_self = c(p.w_self);
  b.w_gate = c(p.w_gate);
  b.b_gate = c(p.b_gate);
  b.a = c(p.a);
  return b;
}

std::vector<double> col(const ad::Tensor<double>& t) { return t.value().data; }

// Straight-line reference for one layer, written against the graph rather
// than the tape kernels.
struct Reference {
  std::vector<double> cost, s, s_tilde, d_tilde;
  Mat gates, out;
};

double dot_row(const Mat& x, std::size_t i, const Mat& w, std::size_t c) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.cols; ++k) acc += x(i, k) * w(k, c);
  return acc;
}

Mat times(const Mat& x, const Mat& w) {
  Mat out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t c = 0; c < w.cols; ++c) out(i, c) = dot_row(x, i, w, c);
  return out;
}

Reference reference_layer(const Graph& g, const Mat& h, const LayerParams<double>& p, Variant variant, double tau,
                          bool per_source = true) {
  Reference r;
  const std::size_t m = g.edges.size(), dim = p.w_g.cols;
  const Mat proj = times(h, p.w_g), con = times(h, p.w_con), dis = times(h, p.w_dis), self = times(h, p.w_self);
  for (const Edge& e : g.edges) {
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) sq += (proj(e.src, k) - proj(e.dst, k)) * (proj(e.src, k) - proj(e.dst, k));
    double c = std::sqrt(sq);
    if (variant == Variant::Extended) {
      double z = 0.0;
      for (std::size_t k = 0; k < dim; ++k) z += proj(e.src, k) * p.a(k, 0) + proj(e.dst, k) * p.a(dim + k, 0);
      c += std::log1p(std::exp(z));
    }
    r.cost.push_back(c);
    r.s.push_back(1.0 / (1.0 + std::exp(c / tau)));
  }
  std::vector<double> zs(g.n, 0.0), zd(g.n, 0.0);
  auto group = [&](std::size_t e) { return per_source ? g.edges[e].src : g.edges[e].dst; };
  for (std::size_t e = 0; e < m; ++e) {
    zs[group(e)] += std::exp(r.s[e]);
    zd[group(e)] += std::exp(1.0 - r.s[e]);
  }
  Mat hc(g.n, dim), hd(g.n, dim);
  for (std::size_t e = 0; e < m; ++e) {
    r.s_tilde.push_back(std::exp(r.s[e]) / zs[group(e)]);
    r.d_tilde.push_back(std::exp(1.0 - r.s[e]) / zd[group(e)]);
    for (std::size_t k = 0; k < dim; ++k) {
      hc(g.edges[e].src, k) += r.s_tilde[e] * con(g.edges[e].dst, k);
      hd(g.edges[e].src, k) += r.d_tilde[e] * dis(g.edges[e].dst, k);
    }
  }
  r.gates = Mat(g.n, 3);
  r.out = Mat(g.n, dim);
  for (std::size_t i = 0; i < g.n; ++i) {
    double logit[3], z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      logit[c] = p.b_gate(0, c);
      for (std::size_t k = 0; k < dim; ++k)
        logit[c] += hc(i, k) * p.w_gate(k, c) + hd(i, k) * p.w_gate(dim + k, c) + self(i, k) * p.w_gate(2 * dim + k, c);
      z += std::exp(logit[c]);
    }
    for (std::size_t c = 0; c < 3; ++c) r.gates(i, c) = std::exp(logit[c]) / z;
    for (std::size_t k = 0; k < dim; ++k)
      r.out(i, k) = r.gates(i, 0) * hc(i, k) + r.gates(i, 1) * hd(i, k) + r.gates(i, 2) * self(i, k);
  }
  return r;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Graph path3(std::size_t d, std::uint64_t seed) {
  Pcg32 rng(seed, 2);
  return add_self_loops(make_graph(3, 2, random_matrix(3, d, rng), {0, 1, 0}, {{0, 1}, {1, 2}}));
}

CsnaLayerOutput<double> run_layer(ad::Tape<double>& tape, const Graph& g, const Mat& h, const LayerParams<double>& p,
                                  Variant variant, double tau,
                                  Normalization norm = Normalization::PerSource) {
  return csna_layer(tape.constant(h), EdgeIndex::from_graph(g), bind_layer(tape, p), variant, norm, tau);
}

Checkpoint fresh_checkpoint(ModelKind kind, const Graph& g, std::size_t hidden = 8, std::uint64_t seed = 11) {
  Checkpoint c;
  c.config.kind = kind;
  c.arch = {g.feature_dim(), hidden, g.num_classes, 0.7};
  c.seed = seed;
  c.rng_tag = "test";
  c.params = init_params<double>(c.config, c.arch, seed);
  return c;
}

}  // namespace

TEST_CASE("edge costs: trivial values and symmetry") {
  Pcg32 rng(1, 1);
  LayerParams<double> p = random_layer(2, Variant::Lite, rng);
  p.w_g = Mat::identity(2);
  const Graph g = add_self_loops(make_graph(2, 2, Mat(2, 2, {1, 0, -1, 0}), {0, 1}, {{0, 1}}));
  ad::Tape<double> tape;
  const auto cost = col(edge_costs(tape.constant(g.features), EdgeIndex::from_graph(g), bind_layer(tape, p),
                                   Variant::Lite));
  // stored order: (0,0) (0,1) (1,0) (1,1)
  CHECK(cost == std::vector<double>{0.0, 2.0, 2.0, 0.0});

  const Graph same = add_self_loops(make_graph(2, 2, Mat(2, 2, {0.3, 0.4, 0.3, 0.4}), {0, 1}, {{0, 1}}));
  const auto c2 = col(edge_costs(tape.constant(same.features), EdgeIndex::from_graph(same), bind_layer(tape, p),
                                 Variant::Lite));
  for (double c : c2) CHECK(c == 0.0);
}

TEST_CASE("edge costs match a per-edge oracle on a random graph") {
  Pcg32 rng(4, 4);
  const Graph g = add_self_loops(
      make_graph(4, 2, random_matrix(4, 3, rng), {0, 1, 1, 0}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {0, 3}}));
  for (Variant v : {Variant::Lite, Variant::Extended}) {
    const LayerParams<double> p = random_layer(3, v, rng);
    const Reference ref = reference_layer(g, g.features, p, v, 1.0);
    ad::Tape<double> tape;
    const EdgeIndex idx = EdgeIndex::from_graph(g);
    const auto cost = col(edge_costs(tape.constant(g.features), idx, bind_layer(tape, p), v));
    CHECK(max_abs_diff(cost, ref.cost) < 1e-12);
    if (v == Variant::Lite) {
      for (std::size_t e = 0; e < idx.size(); ++e) {
        CHECK(cost[e] == cost[idx.reverse[e]]);
        if (idx.self_loop[e]) CHECK(cost[e] == 0.0);
      }
    }
  }
}

TEST_CASE("concordance values") {
  ad::Tape<double> tape;
  const auto s = col(concordance(tape.constant(Mat(3, 1, {0.0, 1.0, 5.0})), 1.0));
  CHECK(s[0] == 0.5);
  CHECK(s[1] == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(s[2] < s[1]);
  const auto wide = col(concordance(tape.constant(Mat(3, 1, {0.0, 1.0, 2.0})), 1e6));
  for (double v : wide) CHECK(std::abs(v - 0.5) < 1e-6);
  CHECK(col(concordance(tape.constant(Mat(1, 1, {0.0})), 0.01))[0] == 0.5);
  CHECK_THROWS_AS(concordance(tape.constant(Mat(1, 1)), 0.0), Error);
}

TEST_CASE("isolated node reduces to its own transforms") {
  Pcg32 rng(2, 2);
  const Graph g = add_self_loops(make_graph(1, 1, random_matrix(1, 3, rng), {0}, {}));
  const LayerParams<double> p = random_layer(3, Variant::Lite, rng);
  ad::Tape<double> tape;
  const auto o = run_layer(tape, g, g.features, p, Variant::Lite, 1.0);
  CHECK(col(o.trace.weight_con) == std::vector<double>{1.0});
  CHECK(col(o.trace.weight_dis) == std::vector<double>{1.0});
  const Mat con = times(g.features, p.w_con), dis = times(g.features, p.w_dis), self = times(g.features, p.w_self);
  const Mat& gam = o.trace.gates.value();
  for (std::size_t k = 0; k < 3; ++k) {
    const double expect = gam(0, 0) * con(0, k) + gam(0, 1) * dis(0, k) + gam(0, 2) * self(0, k);
    CHECK(o.out.value()(0, k) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("all-equal features give uniform routing") {
  Pcg32 rng(3, 3);
  Mat x(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 4; ++k) x(i, k) = 0.1 * static_cast<double>(k + 1);
  Graph g = six_node_graph(4);
  g.features = x;
  g = add_self_loops(g);
  const LayerParams<double> p = random_layer(4, Variant::Lite, rng);
  ad::Tape<double> tape;
  const auto o = run_layer(tape, g, x, p, Variant::Lite, 0.5);
  const auto deg = out_degrees(g);
  const auto sc = col(o.trace.weight_con), dc = col(o.trace.weight_dis);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const double uniform = 1.0 / static_cast<double>(deg[g.edges[e].src]);
    CHECK(sc[e] == doctest::Approx(uniform).epsilon(1e-14));
    CHECK(dc[e] == doctest::Approx(uniform).epsilon(1e-14));
  }
}

TEST_CASE("3-node path matches the straight-line oracle") {
  for (Variant v : {Variant::Lite, Variant::Extended}) {
    for (bool per_source : {true, false}) {
      Pcg32 rng(9, 9);
      const Graph g = path3(3, 17);
      const LayerParams<double> p = random_layer(3, v, rng, 0.4);
      const Reference ref = reference_layer(g, g.features, p, v, 0.7, per_source);
      ad::Tape<double> tape;
      const auto o = run_layer(tape, g, g.features, p, v, 0.7,
                               per_source ? Normalization::PerSource : Normalization::PerDestination);
      CHECK(max_abs_diff(col(o.trace.cost), ref.cost) < 1e-10);
      CHECK(max_abs_diff(col(o.trace.concordance), ref.s) < 1e-10);
      CHECK(max_abs_diff(col(o.trace.weight_con), ref.s_tilde) < 1e-10);
      CHECK(max_abs_diff(col(o.trace.weight_dis), ref.d_tilde) < 1e-10);
      CHECK(max_abs_diff(o.trace.gates.value().data, ref.gates.data) < 1e-10);
      CHECK(max_abs_diff(o.out.value().data, ref.out.data) < 1e-10);
    }
  }
}

TEST_CASE("per-source normalisation and gate rows sum to one") {
  const Graph g = add_self_loops(six_node_graph(5));
  for (Normalization norm : {Normalization::PerSource, Normalization::PerDestination}) {
    Pcg32 rng(5, 5);
    Mat h = random_matrix(6, 5, rng);
    const LayerParams<double> p = random_layer(5, Variant::Extended, rng);
    ad::Tape<double> tape;
    const auto o = run_layer(tape, g, h, p, Variant::Extended, 0.3, norm);
    std::vector<double> ss(6, 0.0), sd(6, 0.0);
    const auto sc = col(o.trace.weight_con), dc = col(o.trace.weight_dis);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const NodeId grp = norm == Normalization::PerSource ? g.edges[e].src : g.edges[e].dst;
      ss[grp] += sc[e];
      sd[grp] += dc[e];
    }
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(ss[i] - 1.0) < 1e-9);
      CHECK(std::abs(sd[i] - 1.0) < 1e-9);
      const auto row = o.trace.gates.value().row(i);
      CHECK(std::abs(row[0] + row[1] + row[2] - 1.0) < 1e-9);
      for (double gv : row) CHECK(gv >= 0.0);
    }
  }
}

TEST_CASE("fresh gates start at softmax(0,0,1)") {
  const Graph g = six_node_graph(4);
  ModelConfig cfg;
  const Architecture arch{4, 6, 2, 1.0};
  ModelParams<double> params = init_params<double>(cfg, arch, 3);
  for (const auto& l : params.layers) CHECK(l.b_gate.data == std::vector<double>{0.0, 0.0, 1.0});
  for (auto& l : params.layers) l.w_gate = Mat(18, 3);
  Checkpoint c{cfg, arch, 3, "t", params};
  const Evaluation ev = evaluate(c, g);
  const double z = 2.0 + std::exp(1.0);
  for (const auto& layer : ev.layers)
    for (std::size_t i = 0; i < g.n; ++i) {
      CHECK(std::abs(layer.gates(i, 0) - 1.0 / z) < 1e-12);
      CHECK(std::abs(layer.gates(i, 2) - std::exp(1.0) / z) < 1e-12);
    }
}

TEST_CASE("reduction: wide temperature, shared transform, con gate is mean aggregation") {
  const Graph g = add_self_loops(six_node_graph(4));
  Pcg32 rng(6, 6);
  LayerParams<double> p = random_layer(4, Variant::Lite, rng);
  p.w_dis = p.w_con;
  p.w_gate = Mat(12, 3);
  p.b_gate = Mat(1, 3, {60.0, -60.0, -60.0});
  const Mat h = random_matrix(6, 4, rng);
  ad::Tape<double> tape;
  const auto o = run_layer(tape, g, h, p, Variant::Lite, 1e6);
  const Mat wh = times(h, p.w_con);
  const auto deg = out_degrees(g);
  Mat expect(6, 4);
  for (const Edge& e : g.edges)
    for (std::size_t k = 0; k < 4; ++k) expect(e.src, k) += wh(e.dst, k) / static_cast<double>(deg[e.src]);
  CHECK(max_abs_diff(o.out.value().data, expect.data) < 1e-6);
}

TEST_CASE("monotone routing in one edge's cost") {
  // Segment of node 0: costs for (0,0), (0,1), (0,2); raise the middle one.
  const std::vector<ad::Index> seg = {0, 0, 0};
  auto weights = [&](double c1) {
    ad::Tape<double> tape;
    const auto s = concordance(tape.constant(Mat(3, 1, {0.0, c1, 0.8})), 0.5);
    const auto sw = col(ad::segment_softmax(s, seg, 1));
    const auto dw = col(ad::segment_softmax(ad::add_scalar(ad::scale(s, -1.0), 1.0), seg, 1));
    return std::pair{sw[1], dw[1]};
  };
  double prev_s = 2.0, prev_d = -1.0;
  for (double c : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0}) {
    const auto [sw, dw] = weights(c);
    CHECK(sw < prev_s);
    CHECK(dw > prev_d);
    prev_s = sw;
    prev_d = dw;
  }
}

TEST_CASE("calibration loss examples") {
  // Nodes 0,1 same class, 2 other; all labeled. Edge order (0,1) (1,0) (1,2) (2,1)
  EdgeIndex idx;
  idx.n = 3;
  idx.src = {0, 1, 1, 2, 0};
  idx.dst = {1, 0, 2, 1, 0};
  idx.self_loop = {0, 0, 0, 0, 1};
  const std::vector<int> labels = {0, 0, 1};
  const std::vector<std::uint8_t> all = {1, 1, 1};
  auto loss = [&](std::vector<double> c, std::vector<std::uint8_t> labeled) {
    ad::Tape<double> tape;
    return calibration_loss(tape.constant(Mat(5, 1, std::move(c))), idx, labels, labeled).item();
  };
  // one contributing edge at a time: mean over 4 eligible edges
  CHECK(loss({0.5, 0, 0, 0, 9}, all) == doctest::Approx(0.25 / 4));
  CHECK(loss({0, 0, 0.5, 0, 9}, all) == 0.0);
  CHECK(loss({0, 0, 1.5, 0, 9}, all) == doctest::Approx(0.25 / 4));
  // only the same-class pair is labeled
  CHECK(loss({0.5, 0.5, 3, 3, 9}, {1, 1, 0}) == doctest::Approx(0.25));
  CHECK(loss({0.5, 0.5, 3, 3, 9}, {1, 0, 0}) == 0.0);
}

TEST_CASE("gcn layer: single node, two nodes, star against dense oracle") {
  Pcg32 rng(7, 7);
  const Mat w = random_matrix(3, 2, rng);
  auto run = [&](const Graph& g) {
    ad::Tape<double> tape;
    return gcn_layer(tape.constant(g.features), EdgeIndex::from_graph(g), tape.constant(w)).value();
  };
  const Graph one = add_self_loops(make_graph(1, 1, random_matrix(1, 3, rng), {0}, {}));
  CHECK(max_abs_diff(run(one).data, times(one.features, w).data) < 1e-15);

  const Graph two = add_self_loops(make_graph(2, 1, random_matrix(2, 3, rng), {0, 0}, {{0, 1}}));
  const Mat xw = times(two.features, w);
  const Mat got = run(two);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 2; ++k) CHECK(got(i, k) == doctest::Approx(0.5 * (xw(0, k) + xw(1, k))));

  const Graph star = add_self_loops(make_graph(4, 1, random_matrix(4, 3, rng), {0, 0, 0, 0}, {{0, 1}, {0, 2}, {0, 3}}));
  Mat a(4, 4);
  for (const Edge& e : star.edges) a(e.src, e.dst) = 1.0;
  std::vector<double> deg(4, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) deg[i] += a(i, j);
  Mat norm(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) norm(i, j) = a(i, j) / std::sqrt(deg[i] * deg[j]);
  CHECK(max_abs_diff(run(star).data, times(norm, times(star.features, w)).data) < 1e-12);
}

TEST_CASE("csna with the self gate forced matches an MLP with the same weights") {
  const Graph g = six_node_graph(5);
  Checkpoint csna = fresh_checkpoint(ModelKind::Csna, g);
  Checkpoint mlp = fresh_checkpoint(ModelKind::Mlp, g);
  for (std::size_t l = 0; l < csna.params.layers.size(); ++l) {
    auto& layer = csna.params.layers[l];
    layer.w_gate = Mat(layer.w_gate.rows, 3);
    layer.b_gate = Mat(1, 3, {-40.0, -40.0, 40.0});
    CHECK(mlp.params.layers[l].w == layer.w_self);
  }
  // Shared components draw from the same named streams.
  CHECK(mlp.params.w_in == csna.params.w_in);
  CHECK(mlp.params.w_out == csna.params.w_out);
  CHECK(max_abs_diff(evaluate(csna, g).logits.data, evaluate(mlp, g).logits.data) < 1e-6);
}

TEST_CASE("logits permute with the nodes") {
  const Graph g = six_node_graph(4);
  const std::vector<NodeId> perm = {3, 5, 0, 4, 1, 2};  // old i -> new perm[i]
  Mat x(6, 4);
  std::vector<int> labels(6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < 4; ++k) x(perm[i], k) = g.features(i, k);
    labels[perm[i]] = g.labels[i];
  }
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (const Edge& e : g.edges)
    if (e.src < e.dst) {
      NodeId a = perm[e.src], b = perm[e.dst];
      pairs.emplace_back(std::min(a, b), std::max(a, b));
    }
  const Graph h = make_graph(6, 2, x, labels, pairs);
  for (ModelKind kind : {ModelKind::Csna, ModelKind::Gcn, ModelKind::Mlp}) {
    Checkpoint c = fresh_checkpoint(kind, g);
    for (Variant v : {Variant::Lite, Variant::Extended}) {
      if (kind != ModelKind::Csna && v == Variant::Extended) continue;
      c.config.variant = v;
      c.params = init_params<double>(c.config, c.arch, 11);
      const Mat a = evaluate(c, g).logits, b = evaluate(c, h).logits;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(a(i, k) - b(perm[i], k)) < 1e-12);
    }
  }
}

TEST_CASE("predict breaks ties toward the lower class") {
  const Mat logits(3, 3, {1, 1, 0, 0, 2, 2, -1, -2, -1});
  CHECK(predict(logits) == std::vector<int>{0, 1, 0});
  const std::vector<int> labels = {0, 2, 0};
  const std::vector<NodeId> rows = {0, 1, 2};
  CHECK(accuracy(logits, labels, rows) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("config validation and shape checks") {
  ModelConfig c;
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.edge_sampling_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(parse_model_kind("gat"), Error);
  CHECK(parse_normalization(to_string(Normalization::PerDestination)) == Normalization::PerDestination);

  const Graph g = six_node_graph(4);
  Checkpoint ck = fresh_checkpoint(ModelKind::Csna, g);
  ck.params.layers[1].w_con = Mat(3, 3);
  CHECK_THROWS_AS(evaluate(ck, g), Error);
  Checkpoint ok = fresh_checkpoint(ModelKind::Csna, g);
  const Graph wide = six_node_graph(5);
  try {
    evaluate(ok, wide);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("edge sampling keeps self-loops and drops pairs together") {
  const Graph g = add_self_loops(six_node_graph(4));
  const EdgeIndex full = EdgeIndex::from_graph(g);
  Pcg32 rng(8, 8);
  const EdgeIndex kept = sample_edges(full, 0.5, rng);
  std::set<std::pair<ad::Index, ad::Index>> present;
  std::size_t loops = 0;
  for (std::size_t e = 0; e < kept.size(); ++e) {
    present.insert({kept.src[e], kept.dst[e]});
    loops += kept.self_loop[e];
  }
  CHECK(loops == 6);
  CHECK(kept.size() < full.size());
  for (const auto& [s, d] : present) CHECK(present.count({d, s}) == 1);
  Pcg32 zero(8, 8);
  CHECK(sample_edges(full, 0.0, zero).src == full.src);
}

TEST_CASE("checkpoint round-trips bitwise") {
  const Graph g = six_node_graph(4);
  TempDir dir("model");
  for (Precision prec : {Precision::F64, Precision::F32}) {
    Checkpoint c = fresh_checkpoint(ModelKind::Csna, g);
    c.config.variant = Variant::Extended;
    c.config.precision = prec;
    Pcg32 rng(10, 10);
    c.params = init_params<double>(c.config, c.arch, 5);
    for (auto& l : c.params.layers) l.b_gate = random_matrix(1, 3, rng, 1e-7);
    save_checkpoint(c, dir / "ck.json");
    const Checkpoint r = load_checkpoint(dir / "ck.json");
    CHECK(r.params == c.params);
    CHECK(r.config == c.config);
    CHECK(r.arch == c.arch);
    CHECK(r.seed == c.seed);
    CHECK(r.rng_tag == c.rng_tag);
    CHECK(checkpoint_to_json(r) == checkpoint_to_json(c));
    CHECK(evaluate(r, g).logits == evaluate(c, g).logits);
  }
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\": \"other\"}"), Error);
}

TEST_CASE("float precision tracks double") {
  const Graph g = six_node_graph(4);
  Checkpoint c = fresh_checkpoint(ModelKind::Csna, g);
  const Mat d = evaluate(c, g).logits;
  c.config.precision = Precision::F32;
  c.params = c.params.cast<float>().cast<double>();
  const Mat f = evaluate(c, g).logits;
  CHECK(max_abs_diff(d.data, f.data) < 1e-4);
}
