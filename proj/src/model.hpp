#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace csna {

enum class ModelKind { Mlp, Gcn, Csna };
enum class Variant { Lite, Extended };
/// Which endpoint groups the concordance softmax. Aggregation always sums
/// into the source node.
enum class Normalization { PerSource, PerDestination };
enum class Precision { F64, F32 };

const char* to_string(ModelKind k);
const char* to_string(Variant v);
const char* to_string(Normalization n);
const char* to_string(Precision p);
ModelKind parse_model_kind(const std::string& s);
Variant parse_variant(const std::string& s);
Normalization parse_normalization(const std::string& s);
Precision parse_precision(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::Csna;
  std::size_t layers = 2;
  double dropout = 0.5;
  Variant variant = Variant::Lite;
  double edge_sampling_rate = 0.0;
  Normalization normalization = Normalization::PerSource;
  double lambda_cal = 0.1;
  Precision precision = Precision::F64;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Shape-determining quantities fixed at construction.
struct Architecture {
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  std::size_t num_classes = 0;
  double tau = 1.0;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Weights use the row-vector convention: a node representation h is a row
/// and a transform is applied as h * W, so W is (in x out).
template <class T>
struct LayerParams {
  Matrix<T> w;       // mlp / gcn transform
  Matrix<T> w_g;     // cost projection
  Matrix<T> w_con;   // concordant channel
  Matrix<T> w_dis;   // discordant channel
  Matrix<T> w_self;  // ego transform
  Matrix<T> w_gate;  // 3h x 3, columns ordered (con, dis, self)
  Matrix<T> b_gate;  // 1 x 3
  Matrix<T> a;       // 2h x 1, extended variant only

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    auto each = [&](const char* name, Matrix<T>& m) {
      if (!m.empty()) f(prefix + name, m);
    };
    each("w", w);
    each("w_g", w_g);
    each("w_con", w_con);
    each("w_dis", w_dis);
    each("w_self", w_self);
    each("w_gate", w_gate);
    each("b_gate", b_gate);
    each("a", a);
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <class T>
struct ModelParams {
  Matrix<T> w_in;
  Matrix<T> b_in;
  std::vector<LayerParams<T>> layers;
  Matrix<T> w_out;
  Matrix<T> b_out;

  /// Calls f(name, Matrix<T>&) on every parameter in a fixed order.
  template <class F>
  void visit(F&& f) {
    f(std::string("input.w"), w_in);
    f(std::string("input.b"), b_in);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("layer" + std::to_string(l) + ".", f);
    f(std::string("head.w"), w_out);
    f(std::string("head.b"), b_out);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& name, Matrix<T>& m) {
      f(name, static_cast<const Matrix<T>&>(m));
    });
  }

  std::size_t parameter_count() const {
    std::size_t count = 0;
    visit([&](const std::string&, const Matrix<T>& m) { count += m.size(); });
    return count;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.w_in = w_in.template cast<U>();
    out.b_in = b_in.template cast<U>();
    out.w_out = w_out.template cast<U>();
    out.b_out = b_out.template cast<U>();
    for (const auto& l : layers) {
      LayerParams<U> c;
      c.w = l.w.template cast<U>();
      c.w_g = l.w_g.template cast<U>();
      c.w_con = l.w_con.template cast<U>();
      c.w_dis = l.w_dis.template cast<U>();
      c.w_self = l.w_self.template cast<U>();
      c.w_gate = l.w_gate.template cast<U>();
      c.b_gate = l.b_gate.template cast<U>();
      c.a = l.a.template cast<U>();
      out.layers.push_back(std::move(c));
    }
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases and
/// gate bias [0,0,1]. Each matrix draws from its own named substream, so
/// shared components (input MLP, head) initialise identically across kinds.
template <class T>
ModelParams<T> init_params(const ModelConfig& config, const Architecture& arch, std::uint64_t seed);

/// Checks every parameter shape against (config, arch).
template <class T>
void check_params(const ModelConfig& config, const Architecture& arch, const ModelParams<T>& params);

/// Directed edge arrays in the layout the kernels consume.
struct EdgeIndex {
  std::size_t n = 0;
  std::vector<ad::Index> src;
  std::vector<ad::Index> dst;
  std::vector<std::uint8_t> self_loop;
  std::vector<std::size_t> reverse;  // position of (dst, src)

  std::size_t size() const { return src.size(); }
  static EdgeIndex from_graph(const Graph& g);
};

/// Keeps each undirected pair with probability 1 - rate (both directions
/// share one draw); self-loops are always kept.
EdgeIndex sample_edges(const EdgeIndex& full, double rate, Pcg32& rng);

template <class T>
struct BoundLayer {
  ad::Tensor<T> w, w_g, w_con, w_dis, w_self, w_gate, b_gate, a;
};

template <class T>
struct BoundParams {
  ad::Tensor<T> w_in, b_in, w_out, b_out;
  std::vector<BoundLayer<T>> layers;
  /// Every bound tensor paired with its source matrix, in visit() order.
  std::vector<std::pair<ad::Tensor<T>, Matrix<T>*>> all;
};

/// Records every parameter on the tape (as variables when trainable).
template <class T>
BoundParams<T> bind_params(ad::Tape<T>& tape, ModelParams<T>& params, bool trainable);

template <class T>
struct LayerTrace {
  ad::Tensor<T> cost;         // |E| x 1
  ad::Tensor<T> concordance;  // |E| x 1
  ad::Tensor<T> weight_con;   // |E| x 1
  ad::Tensor<T> weight_dis;   // |E| x 1
  ad::Tensor<T> gates;        // n x 3
};

/// Lite: ||h_i W_g - h_j W_g||. Extended adds softplus([h_i W_g || h_j W_g] a).
template <class T>
ad::Tensor<T> edge_costs(const ad::Tensor<T>& h, const EdgeIndex& edges, const BoundLayer<T>& layer,
                         Variant variant);

/// sigmoid(-cost / tau)
template <class T>
ad::Tensor<T> concordance(const ad::Tensor<T>& costs, double tau);

template <class T>
struct CsnaLayerOutput {
  ad::Tensor<T> out;
  LayerTrace<T> trace;
};

template <class T>
CsnaLayerOutput<T> csna_layer(const ad::Tensor<T>& h, const EdgeIndex& edges, const BoundLayer<T>& layer,
                              Variant variant, Normalization normalization, double tau);

/// Symmetric normalisation 1/sqrt(d_i d_j) with self-loops counted.
template <class T>
ad::Tensor<T> gcn_layer(const ad::Tensor<T>& h, const EdgeIndex& edges, const ad::Tensor<T>& w);

/// Squared hinge on cost above the label-disagreement indicator, averaged
/// over non-self-loop edges with both endpoints in `labeled`. Zero when no
/// such edge exists.
template <class T>
ad::Tensor<T> calibration_loss(const ad::Tensor<T>& costs, const EdgeIndex& edges, std::span<const int> labels,
                               std::span<const std::uint8_t> labeled);

template <class T>
struct ForwardResult {
  ad::Tensor<T> logits;
  std::vector<LayerTrace<T>> layers;  // csna only
};

/// input MLP -> L residual layers of the configured kind -> linear head.
template <class T>
ForwardResult<T> model_forward(const ModelConfig& config, const Architecture& arch, const BoundParams<T>& params,
                               const ad::Tensor<T>& features, const EdgeIndex& edges, bool train, Pcg32* dropout_rng);

/// L_CE over train rows plus lambda_cal times the mean per-layer calibration
/// loss (csna only).
template <class T>
ad::Tensor<T> training_objective(const ModelConfig& config, const ForwardResult<T>& fwd, const EdgeIndex& edges,
                                 std::span<const int> labels, std::span<const ad::Index> train_rows,
                                 std::span<const std::uint8_t> train_mask);

/// Row-wise argmax with ties to the lower class index.
template <class T>
std::vector<int> predict(const Matrix<T>& logits);

template <class T>
double accuracy(const Matrix<T>& logits, std::span<const int> labels, std::span<const NodeId> rows);

// ----------------------------------------------------------------------------
// Checkpoints and precision-erased evaluation.

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  ModelConfig config;
  Architecture arch;
  std::uint64_t seed = 0;
  std::string rng_tag;
  ModelParams<double> params;  // float models are widened exactly
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LayerRouting {
  std::vector<double> cost;
  std::vector<double> concordance;
  std::vector<double> weight_con;
  std::vector<double> weight_dis;
  Matrix<double> gates;
};

struct Evaluation {
  Matrix<double> logits;
  std::vector<LayerRouting> layers;
};

/// Eval-mode forward pass in the checkpoint's precision. `g` must carry
/// self-loops and match the checkpoint's input/class dimensions.
Evaluation evaluate(const Checkpoint& ckpt, const Graph& g);

}  // namespace csna
