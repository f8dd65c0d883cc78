#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "adam.hpp"
#include "json_io.hpp"
#include "parallel.hpp"

namespace csna {

using json = nlohmann::json;

void TrainHyper::validate() const {
  require(lr > 0.0, ErrorKind::Contract, "hyper: lr must be positive");
  require(hidden > 0, ErrorKind::Contract, "hyper: hidden must be positive");
  require(tau > 0.0, ErrorKind::Contract, "hyper: tau must be positive");
  require(weight_decay >= 0.0, ErrorKind::Contract, "hyper: weight_decay must be non-negative");
  require(patience > 0, ErrorKind::Contract, "hyper: patience must be positive");
}

ModelConfig protocol_config(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.layers = protocol::kLayers;
  c.dropout = protocol::kDropout;
  c.lambda_cal = kind == ModelKind::Csna ? protocol::kLambdaCal : 0.0;
  return c;
}

namespace {

std::vector<std::uint8_t> membership(std::size_t n, std::span<const NodeId> nodes) {
  std::vector<std::uint8_t> mask(n, 0);
  for (NodeId i : nodes) mask[i] = 1;
  return mask;
}

void check_split(const Split& split, std::size_t n) {
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (NodeId i : *part) require(i < n, ErrorKind::Index, "train: split index " + std::to_string(i) + " >= n");
  require(!split.train.empty(), ErrorKind::Contract, "train: empty training set");
}

template <class T>
struct Evaluated {
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
};

template <class T>
Evaluated<T> evaluate_epoch(const ModelConfig& config, const Architecture& arch, ModelParams<T>& params,
                            const Matrix<T>& features, const EdgeIndex& edges, const Graph& g, const Split& split,
                            std::span<const std::uint8_t> train_mask) {
  ad::Tape<T> tape;
  const BoundParams<T> bound = bind_params(tape, params, false);
  const ad::Tensor<T> x = tape.constant(features);
  const ForwardResult<T> fwd = model_forward(config, arch, bound, x, edges, false, nullptr);
  Evaluated<T> ev;
  ev.loss = static_cast<double>(
      training_objective(config, fwd, edges, g.labels, split.train, train_mask).item());
  ev.train_acc = accuracy(fwd.logits.value(), g.labels, split.train);
  if (!split.val.empty()) {
    ev.val_acc = accuracy(fwd.logits.value(), g.labels, split.val);
    ev.val_loss = static_cast<double>(ad::softmax_cross_entropy(fwd.logits, g.labels, split.val).item());
  }
  return ev;
}

template <class T>
TrainResult train_impl(const ModelConfig& config, const Graph& graph, const Split& split, const TrainHyper& hyper) {
  const auto started = std::chrono::steady_clock::now();
  const Graph g = add_self_loops(graph);
  const Architecture arch{g.feature_dim(), hyper.hidden, g.num_classes, hyper.tau};
  ModelParams<T> params = init_params<T>(config, arch, hyper.seed);
  ModelParams<T> best = params;
  const Matrix<T> features = g.features.template cast<T>();
  const EdgeIndex edges = EdgeIndex::from_graph(g);
  const std::vector<std::uint8_t> train_mask = membership(g.n, split.train);

  TrainResult result;
  TrainReport& rep = result.report;
  rep.config = config;
  rep.hyper = hyper;

  Adam<T> opt(AdamConfig{hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay});
  try {
    const Evaluated<T> init = evaluate_epoch(config, arch, params, features, edges, g, split, train_mask);
    rep.history.push_back({0, init.loss, init.train_acc, init.val_loss, init.val_acc});
    rep.best_val_acc = init.val_acc;
    rep.best_val_epoch = 0;

    for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
      EdgeIndex sampled;
      const EdgeIndex* active = &edges;
      if (config.edge_sampling_rate > 0.0) {
        Pcg32 edge_rng = substream(hyper.seed, "edge-sampling", epoch);
        sampled = sample_edges(edges, config.edge_sampling_rate, edge_rng);
        active = &sampled;
      }
      Pcg32 drop_rng = substream(hyper.seed, "dropout", epoch);

      ad::Tape<T> tape;
      const BoundParams<T> bound = bind_params(tape, params, true);
      const ad::Tensor<T> x = tape.constant(features);
      const ForwardResult<T> fwd = model_forward(config, arch, bound, x, *active, true, &drop_rng);
      const ad::Tensor<T> loss = training_objective(config, fwd, *active, g.labels, split.train, train_mask);
      tape.backward(loss);

      std::vector<Matrix<T>*> targets;
      std::vector<Matrix<T>> grads;
      for (const auto& [tensor, matrix] : bound.all) {
        targets.push_back(matrix);
        grads.push_back(tape.grad(tensor));
      }
      opt.step(targets, grads);

      const Evaluated<T> ev = evaluate_epoch(config, arch, params, features, edges, g, split, train_mask);
      rep.history.push_back({epoch, static_cast<double>(loss.item()), ev.train_acc, ev.val_loss, ev.val_acc});
      rep.last_epoch = epoch;
      if (ev.val_acc > rep.best_val_acc) {
        rep.best_val_acc = ev.val_acc;
        rep.best_val_epoch = epoch;
        best = params;
      }
      if (epoch - rep.best_val_epoch >= hyper.patience) break;
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric) throw;
    rep.failed = true;
    rep.failure = std::string("epoch ") + std::to_string(rep.history.size()) + ": " + e.what();
  }

  if (!rep.failed) {
    ad::Tape<T> tape;
    const BoundParams<T> bound = bind_params(tape, best, false);
    const ad::Tensor<T> x = tape.constant(features);
    const ForwardResult<T> fwd = model_forward(config, arch, bound, x, edges, false, nullptr);
    rep.test_accuracy = accuracy(fwd.logits.value(), g.labels, split.test);
    rep.test_evaluations = 1;
  }

  result.checkpoint.config = config;
  result.checkpoint.arch = arch;
  result.checkpoint.seed = hyper.seed;
  result.checkpoint.rng_tag = "pcg32:init/*,dropout/epoch,edge-sampling/epoch";
  result.checkpoint.params = best.template cast<double>();
  rep.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace

TrainResult train(const ModelConfig& config, const Graph& g, const Split& split, const TrainHyper& hyper) {
  config.validate();
  hyper.validate();
  g.validate();
  check_split(split, g.n);
  return config.precision == Precision::F32 ? train_impl<float>(config, g, split, hyper)
                                            : train_impl<double>(config, g, split, hyper);
}

DatasetScale classify_scale(std::size_t n) {
  return n >= protocol::kLargeDatasetNodes ? DatasetScale::Large : DatasetScale::Small;
}

TuneGrid TuneGrid::protocol_grid(DatasetScale scale) {
  TuneGrid g;
  g.lr.assign(protocol::kLearningRates.begin(), protocol::kLearningRates.end());
  if (scale == DatasetScale::Small)
    g.hidden.assign(protocol::kHiddenSmall.begin(), protocol::kHiddenSmall.end());
  else
    g.hidden.assign(protocol::kHiddenLarge.begin(), protocol::kHiddenLarge.end());
  g.tau.assign(protocol::kTemperatures.begin(), protocol::kTemperatures.end());
  return g;
}

std::vector<TrainHyper> TuneGrid::expand(const TrainHyper& base, ModelKind kind) const {
  std::vector<double> lrs = lr, taus = tau;
  std::vector<std::size_t> hiddens = hidden;
  std::sort(lrs.begin(), lrs.end());
  std::sort(hiddens.begin(), hiddens.end());
  std::sort(taus.begin(), taus.end());
  if (kind != ModelKind::Csna) taus = {base.tau};
  std::vector<TrainHyper> out;
  for (double l : lrs)
    for (std::size_t h : hiddens)
      for (double t : taus) {
        TrainHyper c = base;
        c.lr = l;
        c.hidden = h;
        c.tau = t;
        out.push_back(c);
      }
  return out;
}

TuneOptions TuneOptions::protocol_options(DatasetScale scale) {
  TuneOptions o;
  o.n_splits = scale == DatasetScale::Small ? protocol::kTuneSplitsSmall : protocol::kTuneSplitsLarge;
  o.epoch_cap = scale == DatasetScale::Small ? protocol::kTuneEpochsSmall : protocol::kTuneEpochsLarge;
  return o;
}

std::size_t select_best_cell(const std::vector<TuneCell>& cells) {
  require(!cells.empty(), ErrorKind::Contract, "tune: empty grid");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].mean_val) continue;
    if (!best) {
      best = i;
      continue;
    }
    const TuneCell& a = cells[i];
    const TuneCell& b = cells[*best];
    const auto key_a = std::make_tuple(-*a.mean_val, a.hyper.lr, a.hyper.hidden, a.hyper.tau);
    const auto key_b = std::make_tuple(-*b.mean_val, b.hyper.lr, b.hyper.hidden, b.hyper.tau);
    if (key_a < key_b) best = i;
  }
  require(best.has_value(), ErrorKind::Numeric, "tune: every grid cell failed");
  return *best;
}

TuneResult tune(const ModelConfig& config, const Graph& g, const SplitSet& splits, const TuneGrid& grid,
                const TrainHyper& base, const TuneOptions& options) {
  const std::vector<TrainHyper> hypers = grid.expand(base, config.kind);
  require(!hypers.empty(), ErrorKind::Contract, "tune: empty grid");
  require(options.n_splits >= 1 && options.n_splits <= splits.splits.size(), ErrorKind::Contract,
          "tune: need between 1 and " + std::to_string(splits.splits.size()) + " tuning splits");
  const std::size_t n_splits = options.n_splits;
  std::vector<std::optional<double>> scores(hypers.size() * n_splits);
  parallel_for(scores.size(), options.jobs, [&](std::size_t job) {
    TrainHyper h = hypers[job / n_splits];
    h.max_epochs = options.epoch_cap;
    const TrainResult r = train(config, g, splits.splits[job % n_splits], h);
    if (!r.report.failed) scores[job] = r.report.best_val_acc;
  });
  TuneResult result;
  for (std::size_t c = 0; c < hypers.size(); ++c) {
    TuneCell cell;
    cell.hyper = hypers[c];
    double acc = 0.0;
    std::size_t ok = 0;
    for (std::size_t s = 0; s < n_splits; ++s) {
      cell.val_accs.push_back(scores[c * n_splits + s]);
      if (scores[c * n_splits + s]) {
        acc += *scores[c * n_splits + s];
        ++ok;
      }
    }
    if (ok > 0) cell.mean_val = acc / static_cast<double>(ok);
    result.cells.push_back(std::move(cell));
  }
  result.best = result.cells[select_best_cell(result.cells)].hyper;
  result.best.max_epochs = base.max_epochs;
  return result;
}

std::pair<double, double> mean_and_stddev(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t k = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++k;
    }
  if (k == 0) return {0.0, 0.0};
  const double mean = sum / static_cast<double>(k);
  if (k == 1) return {mean, 0.0};
  double ss = 0.0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(k - 1))};
}

BenchmarkReport run_benchmark(const ModelConfig& config, const Graph& g, const SplitSet& splits,
                              const TrainHyper& hyper, std::size_t jobs, std::vector<TrainReport>* per_split) {
  require(!splits.splits.empty(), ErrorKind::Contract, "benchmark: no splits");
  const std::size_t k = splits.splits.size();
  std::vector<TrainReport> reports(k);
  parallel_for(k, jobs, [&](std::size_t s) { reports[s] = train(config, g, splits.splits[s], hyper).report; });
  BenchmarkReport out;
  out.config = config;
  out.hyper = hyper;
  for (std::size_t s = 0; s < k; ++s) {
    out.accuracies.push_back(reports[s].test_accuracy);
    out.best_epochs.push_back(reports[s].best_val_epoch);
    if (reports[s].failed)
      out.warnings.push_back("split " + std::to_string(s) + " failed and is excluded: " + reports[s].failure);
  }
  std::tie(out.mean, out.stddev) = mean_and_stddev(out.accuracies);
  if (per_split) *per_split = std::move(reports);
  return out;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string train_report_to_json(const TrainReport& r) {
  json j;
  j["config"] = r.config;
  j["hyper"] = json(r.hyper);
  j["seed"] = r.hyper.seed;
  j["best_val_epoch"] = r.best_val_epoch;
  j["best_val_accuracy"] = r.best_val_acc;
  j["last_epoch"] = r.last_epoch;
  j["test_accuracy"] = optional_json(r.test_accuracy);
  j["test_evaluations"] = r.test_evaluations;
  j["failed"] = r.failed;
  if (r.failed) j["failure"] = r.failure;
  json hist = json::array();
  for (const EpochRecord& e : r.history)
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_acc},
                    {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_acc}});
  j["history"] = std::move(hist);
  return j.dump(1) + "\n";
}

std::string benchmark_report_to_json(const BenchmarkReport& r) {
  json j;
  j["config"] = r.config;
  j["hyper"] = json(r.hyper);
  json accs = json::array();
  for (const auto& a : r.accuracies) accs.push_back(optional_json(a));
  j["test_accuracies"] = std::move(accs);
  j["best_val_epochs"] = r.best_epochs;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  j["splits"] = r.accuracies.size();
  j["warnings"] = r.warnings;
  return j.dump(1) + "\n";
}

std::string benchmark_report_to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "split,test_accuracy,best_val_epoch,status\n";
  for (std::size_t s = 0; s < r.accuracies.size(); ++s) {
    out << s << ',';
    if (r.accuracies[s]) out << *r.accuracies[s];
    out << ',' << r.best_epochs[s] << ',' << (r.accuracies[s] ? "ok" : "failed") << '\n';
  }
  return out.str();
}

std::string tune_result_to_json(const TuneResult& r) {
  json j;
  j["best"] = json(r.best);
  json cells = json::array();
  for (const TuneCell& c : r.cells) {
    json accs = json::array();
    for (const auto& a : c.val_accs) accs.push_back(optional_json(a));
    cells.push_back({{"hyper", json(c.hyper)}, {"val_accuracies", accs}, {"mean_val_accuracy", optional_json(c.mean_val)}});
  }
  j["cells"] = std::move(cells);
  return j.dump(1) + "\n";
}

}  // namespace csna
