#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace csna {

using json = nlohmann::json;

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Gcn: return "gcn";
    case ModelKind::Csna: return "csna";
  }
  return "?";
}

const char* to_string(Variant v) { return v == Variant::Lite ? "lite" : "extended"; }

const char* to_string(Normalization n) {
  return n == Normalization::PerSource ? "per-source" : "per-destination";
}

const char* to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "gcn") return ModelKind::Gcn;
  if (s == "csna") return ModelKind::Csna;
  fail(ErrorKind::Contract, "unknown model kind '" + s + "' (expected mlp, gcn or csna)");
}

Variant parse_variant(const std::string& s) {
  if (s == "lite") return Variant::Lite;
  if (s == "extended") return Variant::Extended;
  fail(ErrorKind::Contract, "unknown variant '" + s + "' (expected lite or extended)");
}

Normalization parse_normalization(const std::string& s) {
  if (s == "per-source") return Normalization::PerSource;
  if (s == "per-destination") return Normalization::PerDestination;
  fail(ErrorKind::Contract, "unknown normalization '" + s + "' (expected per-source or per-destination)");
}

Precision parse_precision(const std::string& s) {
  if (s == "f64" || s == "64") return Precision::F64;
  if (s == "f32" || s == "32") return Precision::F32;
  fail(ErrorKind::Contract, "unknown precision '" + s + "' (expected f64 or f32)");
}

void ModelConfig::validate() const {
  require(layers >= 1, ErrorKind::Contract, "model config: need at least one layer");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::Contract, "model config: dropout must be in [0,1)");
  require(edge_sampling_rate >= 0.0 && edge_sampling_rate < 1.0, ErrorKind::Contract,
          "model config: edge sampling rate must be in [0,1)");
  require(lambda_cal >= 0.0, ErrorKind::Contract, "model config: lambda_cal must be non-negative");
}

namespace {

template <class T>
Matrix<T> glorot(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed, const std::string& name) {
  Pcg32 rng = substream(seed, "init/" + name);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<T> m(fan_in, fan_out);
  for (T& v : m.data) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return m;
}

}  // namespace

template <class T>
ModelParams<T> init_params(const ModelConfig& config, const Architecture& arch, std::uint64_t seed) {
  config.validate();
  require(arch.input_dim > 0 && arch.hidden > 0 && arch.num_classes > 0, ErrorKind::Contract,
          "architecture: dimensions must be positive");
  require(arch.tau > 0.0, ErrorKind::Contract, "architecture: tau must be positive");
  const std::size_t d = arch.input_dim, h = arch.hidden, c = arch.num_classes;
  ModelParams<T> p;
  p.w_in = glorot<T>(d, h, seed, "input.w");
  p.b_in = Matrix<T>(1, h);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerParams<T> lp;
    if (config.kind == ModelKind::Csna) {
      lp.w_g = glorot<T>(h, h, seed, prefix + "w_g");
      lp.w_con = glorot<T>(h, h, seed, prefix + "w_con");
      lp.w_dis = glorot<T>(h, h, seed, prefix + "w_dis");
      // same stream as the mlp dense layer, so the self channel starts as that layer
      lp.w_self = glorot<T>(h, h, seed, prefix + "w");
      lp.w_gate = glorot<T>(3 * h, 3, seed, prefix + "w_gate");
      lp.b_gate = Matrix<T>(1, 3, std::vector<T>{T{0}, T{0}, T{1}});
      if (config.variant == Variant::Extended) lp.a = glorot<T>(2 * h, 1, seed, prefix + "a");
    } else {
      lp.w = glorot<T>(h, h, seed, prefix + "w");
    }
    p.layers.push_back(std::move(lp));
  }
  p.w_out = glorot<T>(h, c, seed, "head.w");
  p.b_out = Matrix<T>(1, c);
  return p;
}

template <class T>
void check_params(const ModelConfig& config, const Architecture& arch, const ModelParams<T>& params) {
  const ModelParams<T> expected = init_params<T>(config, arch, 0);
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> want, got;
  expected.visit([&](const std::string& name, const Matrix<T>& m) { want.push_back({name, {m.rows, m.cols}}); });
  params.visit([&](const std::string& name, const Matrix<T>& m) { got.push_back({name, {m.rows, m.cols}}); });
  require(want == got, ErrorKind::Contract, "model parameters do not match the configuration");
}

EdgeIndex EdgeIndex::from_graph(const Graph& g) {
  require(g.has_self_loops, ErrorKind::Contract, "edge index: graph must carry self-loops");
  EdgeIndex idx;
  idx.n = g.n;
  const std::size_t m = g.edges.size();
  idx.src.resize(m);
  idx.dst.resize(m);
  idx.self_loop.resize(m);
  idx.reverse.resize(m);
  for (std::size_t e = 0; e < m; ++e) {
    idx.src[e] = g.edges[e].src;
    idx.dst[e] = g.edges[e].dst;
    idx.self_loop[e] = g.edges[e].src == g.edges[e].dst ? 1 : 0;
    const auto it = std::lower_bound(g.edges.begin(), g.edges.end(), Edge{g.edges[e].dst, g.edges[e].src});
    idx.reverse[e] = static_cast<std::size_t>(it - g.edges.begin());
  }
  return idx;
}

EdgeIndex sample_edges(const EdgeIndex& full, double rate, Pcg32& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::Contract, "edge sampling: rate must be in [0,1)");
  if (rate == 0.0) return full;
  const std::size_t m = full.size();
  std::vector<std::uint8_t> keep(m, 1);
  for (std::size_t e = 0; e < m; ++e) {
    if (full.self_loop[e]) continue;
    if (full.src[e] < full.dst[e]) {
      keep[e] = rng.uniform() >= rate ? 1 : 0;
    } else {
      // Sorted by source, so the reverse (smaller source) was decided already.
      keep[e] = keep[full.reverse[e]];
    }
  }
  EdgeIndex out;
  out.n = full.n;
  std::vector<std::size_t> new_pos(m, 0);
  for (std::size_t e = 0; e < m; ++e) {
    if (!keep[e]) continue;
    new_pos[e] = out.src.size();
    out.src.push_back(full.src[e]);
    out.dst.push_back(full.dst[e]);
    out.self_loop.push_back(full.self_loop[e]);
  }
  out.reverse.reserve(out.src.size());
  for (std::size_t e = 0; e < m; ++e)
    if (keep[e]) out.reverse.push_back(new_pos[full.reverse[e]]);
  return out;
}

template <class T>
BoundParams<T> bind_params(ad::Tape<T>& tape, ModelParams<T>& params, bool trainable) {
  BoundParams<T> b;
  auto bind = [&](Matrix<T>& m) {
    if (m.empty()) return ad::Tensor<T>();
    ad::Tensor<T> t = trainable ? tape.variable(m) : tape.constant(m);
    b.all.emplace_back(t, &m);
    return t;
  };
  b.w_in = bind(params.w_in);
  b.b_in = bind(params.b_in);
  for (auto& l : params.layers) {
    BoundLayer<T> bl;
    bl.w = bind(l.w);
    bl.w_g = bind(l.w_g);
    bl.w_con = bind(l.w_con);
    bl.w_dis = bind(l.w_dis);
    bl.w_self = bind(l.w_self);
    bl.w_gate = bind(l.w_gate);
    bl.b_gate = bind(l.b_gate);
    bl.a = bind(l.a);
    b.layers.push_back(bl);
  }
  b.w_out = bind(params.w_out);
  b.b_out = bind(params.b_out);
  return b;
}

template <class T>
ad::Tensor<T> edge_costs(const ad::Tensor<T>& h, const EdgeIndex& edges, const BoundLayer<T>& layer,
                         Variant variant) {
  const ad::Tensor<T> proj = ad::matmul(h, layer.w_g);
  ad::Tensor<T> cost = ad::row_pair_distance(proj, edges.src, edges.dst);
  if (variant == Variant::Extended) {
    require(layer.a.valid(), ErrorKind::Contract, "edge_costs: extended variant needs the vector a");
    const ad::Tensor<T> parts[] = {ad::gather_rows(proj, edges.src), ad::gather_rows(proj, edges.dst)};
    const ad::Tensor<T> learned = ad::softplus(ad::matmul(ad::concat_cols<T>(parts), layer.a));
    cost = ad::add(cost, learned);
  }
  return cost;
}

template <class T>
ad::Tensor<T> concordance(const ad::Tensor<T>& costs, double tau) {
  require(tau > 0.0, ErrorKind::Contract, "concordance: tau must be positive");
  return ad::sigmoid(ad::scale(costs, static_cast<T>(-1.0 / tau)));
}

template <class T>
CsnaLayerOutput<T> csna_layer(const ad::Tensor<T>& h, const EdgeIndex& edges, const BoundLayer<T>& layer,
                              Variant variant, Normalization normalization, double tau) {
  require(tau > 0.0, ErrorKind::Contract, "csna_layer: tau must be positive");
  require(h.rows() == edges.n, ErrorKind::Dimension, "csna_layer: feature rows differ from node count");
  CsnaLayerOutput<T> out;
  LayerTrace<T>& tr = out.trace;
  tr.cost = edge_costs(h, edges, layer, variant);
  tr.concordance = concordance(tr.cost, tau);

  const auto& groups = normalization == Normalization::PerSource ? edges.src : edges.dst;
  tr.weight_con = ad::segment_softmax(tr.concordance, groups, edges.n);
  tr.weight_dis = ad::segment_softmax(ad::add_scalar(ad::scale(tr.concordance, T{-1}), T{1}), groups, edges.n);

  const ad::Tensor<T> h_con =
      ad::gather_weighted_sum(tr.weight_con, ad::matmul(h, layer.w_con), edges.src, edges.dst);
  const ad::Tensor<T> h_dis =
      ad::gather_weighted_sum(tr.weight_dis, ad::matmul(h, layer.w_dis), edges.src, edges.dst);
  const ad::Tensor<T> h_self = ad::matmul(h, layer.w_self);

  const ad::Tensor<T> channels[] = {h_con, h_dis, h_self};
  tr.gates = ad::row_softmax(ad::add_row_bias(ad::matmul(ad::concat_cols<T>(channels), layer.w_gate), layer.b_gate));
  out.out = ad::add(ad::add(ad::scale_rows(h_con, ad::column(tr.gates, 0)), ad::scale_rows(h_dis, ad::column(tr.gates, 1))),
                    ad::scale_rows(h_self, ad::column(tr.gates, 2)));
  return out;
}

template <class T>
ad::Tensor<T> gcn_layer(const ad::Tensor<T>& h, const EdgeIndex& edges, const ad::Tensor<T>& w) {
  require(h.rows() == edges.n, ErrorKind::Dimension, "gcn_layer: feature rows differ from node count");
  std::vector<std::size_t> deg(edges.n, 0);
  for (const auto s : edges.src) ++deg[s];
  Matrix<T> alpha(edges.size(), 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    alpha.data[e] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(deg[edges.src[e]]) *
                                                   static_cast<double>(deg[edges.dst[e]])));
  }
  const ad::Tensor<T> weights = h.tape()->constant(std::move(alpha));
  return ad::gather_weighted_sum(weights, ad::matmul(h, w), edges.src, edges.dst);
}

template <class T>
ad::Tensor<T> calibration_loss(const ad::Tensor<T>& costs, const EdgeIndex& edges, std::span<const int> labels,
                               std::span<const std::uint8_t> labeled) {
  require(costs.rows() == edges.size(), ErrorKind::Dimension, "calibration_loss: one cost per edge expected");
  std::vector<ad::Index> selected;
  std::vector<T> indicator;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges.self_loop[e] || !labeled[edges.src[e]] || !labeled[edges.dst[e]]) continue;
    selected.push_back(static_cast<ad::Index>(e));
    indicator.push_back(labels[edges.src[e]] != labels[edges.dst[e]] ? T{1} : T{0});
  }
  ad::Tape<T>& tape = *costs.tape();
  if (selected.empty()) return tape.constant(Matrix<T>(1, 1));
  const std::size_t m = selected.size();
  const ad::Tensor<T> target = tape.constant(Matrix<T>(m, 1, std::move(indicator)));
  return ad::mean(ad::square(ad::relu(ad::sub(ad::gather_rows(costs, selected), target))));
}

template <class T>
ForwardResult<T> model_forward(const ModelConfig& config, const Architecture& arch, const BoundParams<T>& params,
                               const ad::Tensor<T>& features, const EdgeIndex& edges, bool train, Pcg32* dropout_rng) {
  require(params.layers.size() == config.layers, ErrorKind::Contract, "model_forward: layer count mismatch");
  require(features.cols() == arch.input_dim, ErrorKind::Dimension, "model_forward: feature width mismatch");
  require(!train || config.dropout == 0.0 || dropout_rng != nullptr, ErrorKind::Contract,
          "model_forward: training with dropout needs a generator");
  Pcg32 unused;
  Pcg32& rng = dropout_rng ? *dropout_rng : unused;

  ForwardResult<T> res;
  ad::Tensor<T> h = ad::relu(ad::add_row_bias(ad::matmul(features, params.w_in), params.b_in));
  h = ad::dropout(h, config.dropout, rng, train);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const BoundLayer<T>& layer = params.layers[l];
    ad::Tensor<T> z;
    switch (config.kind) {
      case ModelKind::Mlp:
        z = ad::matmul(h, layer.w);
        break;
      case ModelKind::Gcn:
        z = gcn_layer(h, edges, layer.w);
        break;
      case ModelKind::Csna: {
        CsnaLayerOutput<T> o = csna_layer(h, edges, layer, config.variant, config.normalization, arch.tau);
        z = o.out;
        res.layers.push_back(o.trace);
        break;
      }
    }
    h = ad::add(h, ad::dropout(ad::relu(z), config.dropout, rng, train));
  }
  res.logits = ad::add_row_bias(ad::matmul(h, params.w_out), params.b_out);
  return res;
}

template <class T>
ad::Tensor<T> training_objective(const ModelConfig& config, const ForwardResult<T>& fwd, const EdgeIndex& edges,
                                 std::span<const int> labels, std::span<const ad::Index> train_rows,
                                 std::span<const std::uint8_t> train_mask) {
  ad::Tensor<T> loss = ad::softmax_cross_entropy(fwd.logits, labels, train_rows);
  if (config.kind == ModelKind::Csna && config.lambda_cal > 0.0 && !fwd.layers.empty()) {
    ad::Tensor<T> cal = calibration_loss(fwd.layers[0].cost, edges, labels, train_mask);
    for (std::size_t l = 1; l < fwd.layers.size(); ++l)
      cal = ad::add(cal, calibration_loss(fwd.layers[l].cost, edges, labels, train_mask));
    const T weight = static_cast<T>(config.lambda_cal / static_cast<double>(fwd.layers.size()));
    loss = ad::add(loss, ad::scale(cal, weight));
  }
  return loss;
}

template <class T>
std::vector<int> predict(const Matrix<T>& logits) {
  std::vector<int> out(logits.rows, 0);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

template <class T>
double accuracy(const Matrix<T>& logits, std::span<const int> labels, std::span<const NodeId> rows) {
  if (rows.empty()) return 0.0;
  const std::vector<int> pred = predict(logits);
  std::size_t hits = 0;
  for (const NodeId r : rows)
    if (pred[r] == labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

// ----------------------------------------------------------------------------

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = "csna-checkpoint";
  j["version"] = Checkpoint::kFormatVersion;
  j["config"] = ckpt.config;
  j["arch"] = ckpt.arch;
  j["rng"] = {{"seed", ckpt.seed}, {"tag", ckpt.rng_tag}};
  json params = json::array();
  ckpt.params.visit([&](const std::string& name, const Matrix<double>& m) {
    params.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}, {"data", m.data}});
  });
  j["params"] = std::move(params);
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Checkpoint ck;
  try {
    const json j = json::parse(text);
    require(j.value("format", "") == "csna-checkpoint", ErrorKind::Parse, "checkpoint: not a csna checkpoint");
    require(j.at("version").get<int>() == Checkpoint::kFormatVersion, ErrorKind::Parse,
            "checkpoint: unsupported version");
    ck.config = j.at("config").get<ModelConfig>();
    ck.arch = j.at("arch").get<Architecture>();
    ck.seed = j.at("rng").at("seed").get<std::uint64_t>();
    ck.rng_tag = j.at("rng").at("tag").get<std::string>();
    ck.params = init_params<double>(ck.config, ck.arch, 0);
    const json& params = j.at("params");
    std::size_t k = 0;
    ck.params.visit([&](const std::string& name, Matrix<double>& m) {
      require(k < params.size(), ErrorKind::Parse, "checkpoint: missing parameter " + name);
      const json& p = params[k++];
      require(p.at("name").get<std::string>() == name, ErrorKind::Parse,
              "checkpoint: expected parameter " + name + ", found " + p.at("name").get<std::string>());
      require(p.at("rows").get<std::size_t>() == m.rows && p.at("cols").get<std::size_t>() == m.cols,
              ErrorKind::Parse, "checkpoint: shape mismatch for " + name);
      m.data = p.at("data").get<std::vector<double>>();
      require(m.data.size() == m.rows * m.cols, ErrorKind::Parse, "checkpoint: data length mismatch for " + name);
    });
    require(k == params.size(), ErrorKind::Parse, "checkpoint: unexpected extra parameters");
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << checkpoint_to_json(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

namespace {

template <class T>
std::vector<double> column_values(const ad::Tensor<T>& t) {
  const Matrix<T>& m = t.value();
  return std::vector<double>(m.data.begin(), m.data.end());
}

template <class T>
Evaluation evaluate_impl(const Checkpoint& ckpt, const Graph& g) {
  ModelParams<T> params = ckpt.params.template cast<T>();
  ad::Tape<T> tape;
  const BoundParams<T> bound = bind_params(tape, params, false);
  const EdgeIndex edges = EdgeIndex::from_graph(g);
  const ad::Tensor<T> x = tape.constant(g.features.template cast<T>());
  const ForwardResult<T> fwd = model_forward(ckpt.config, ckpt.arch, bound, x, edges, false, nullptr);
  Evaluation ev;
  ev.logits = fwd.logits.value().template cast<double>();
  for (const auto& tr : fwd.layers) {
    LayerRouting r;
    r.cost = column_values(tr.cost);
    r.concordance = column_values(tr.concordance);
    r.weight_con = column_values(tr.weight_con);
    r.weight_dis = column_values(tr.weight_dis);
    r.gates = tr.gates.value().template cast<double>();
    ev.layers.push_back(std::move(r));
  }
  return ev;
}

}  // namespace

Evaluation evaluate(const Checkpoint& ckpt, const Graph& g) {
  require(g.feature_dim() == ckpt.arch.input_dim, ErrorKind::Dimension,
          "evaluate: graph has " + std::to_string(g.feature_dim()) + " features, checkpoint expects " +
              std::to_string(ckpt.arch.input_dim));
  require(g.num_classes == ckpt.arch.num_classes, ErrorKind::Dimension,
          "evaluate: graph has " + std::to_string(g.num_classes) + " classes, checkpoint expects " +
              std::to_string(ckpt.arch.num_classes));
  check_params(ckpt.config, ckpt.arch, ckpt.params);
  const Graph looped = add_self_loops(g);
  return ckpt.config.precision == Precision::F32 ? evaluate_impl<float>(ckpt, looped)
                                                 : evaluate_impl<double>(ckpt, looped);
}

#define CSNA_INSTANTIATE_MODEL(T)                                                                              \
  template ModelParams<T> init_params<T>(const ModelConfig&, const Architecture&, std::uint64_t);              \
  template void check_params<T>(const ModelConfig&, const Architecture&, const ModelParams<T>&);               \
  template BoundParams<T> bind_params<T>(ad::Tape<T>&, ModelParams<T>&, bool);                                 \
  template ad::Tensor<T> edge_costs<T>(const ad::Tensor<T>&, const EdgeIndex&, const BoundLayer<T>&, Variant);  \
  template ad::Tensor<T> concordance<T>(const ad::Tensor<T>&, double);                                         \
  template CsnaLayerOutput<T> csna_layer<T>(const ad::Tensor<T>&, const EdgeIndex&, const BoundLayer<T>&,      \
                                            Variant, Normalization, double);                                   \
  template ad::Tensor<T> gcn_layer<T>(const ad::Tensor<T>&, const EdgeIndex&, const ad::Tensor<T>&);           \
  template ad::Tensor<T> calibration_loss<T>(const ad::Tensor<T>&, const EdgeIndex&, std::span<const int>,     \
                                             std::span<const std::uint8_t>);                                   \
  template ForwardResult<T> model_forward<T>(const ModelConfig&, const Architecture&, const BoundParams<T>&,   \
                                             const ad::Tensor<T>&, const EdgeIndex&, bool, Pcg32*);            \
  template ad::Tensor<T> training_objective<T>(const ModelConfig&, const ForwardResult<T>&, const EdgeIndex&,  \
                                               std::span<const int>, std::span<const ad::Index>,               \
                                               std::span<const std::uint8_t>);                                 \
  template std::vector<int> predict<T>(const Matrix<T>&);                                                      \
  template double accuracy<T>(const Matrix<T>&, std::span<const int>, std::span<const NodeId>);

CSNA_INSTANTIATE_MODEL(float)
CSNA_INSTANTIATE_MODEL(double)

}  // namespace csna
