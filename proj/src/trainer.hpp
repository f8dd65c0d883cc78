#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graph.hpp"
#include "model.hpp"

namespace csna {

/// Evaluation protocol constants: 60/20/20 splits x10 (seed 42), 2 layers,
/// dropout 0.5, Adam with L2 5e-4, early stopping with patience 50 inside a
/// 300-epoch budget, and the tuning grid.
namespace protocol {
inline constexpr std::array<double, 3> kSplitRatios{0.6, 0.2, 0.2};
inline constexpr std::size_t kSplitCount = 10;
inline constexpr std::uint64_t kSplitSeed = 42;
inline constexpr std::size_t kLayers = 2;
inline constexpr double kDropout = 0.5;
inline constexpr double kWeightDecay = 5e-4;
inline constexpr std::size_t kPatience = 50;
inline constexpr std::size_t kMaxEpochs = 300;
inline constexpr double kLambdaCal = 0.1;
inline constexpr std::array<double, 2> kLearningRates{0.01, 0.005};
inline constexpr std::array<std::size_t, 2> kHiddenSmall{64, 128};
inline constexpr std::array<std::size_t, 1> kHiddenLarge{64};
inline constexpr std::array<double, 4> kTemperatures{0.1, 0.5, 1.0, 2.0};
inline constexpr std::size_t kTuneSplitsSmall = 3;
inline constexpr std::size_t kTuneSplitsLarge = 2;
inline constexpr std::size_t kTuneEpochsSmall = 200;
inline constexpr std::size_t kTuneEpochsLarge = 150;
/// Graphs with at least this many nodes use the large-dataset grid.
inline constexpr std::size_t kLargeDatasetNodes = 1000;
}  // namespace protocol

struct TrainHyper {
  double lr = 0.01;
  std::size_t hidden = 64;
  double tau = 1.0;
  double weight_decay = protocol::kWeightDecay;
  std::size_t patience = protocol::kPatience;
  std::size_t max_epochs = protocol::kMaxEpochs;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const TrainHyper&, const TrainHyper&) = default;
};

/// Default model configuration for a kind under the evaluation protocol.
ModelConfig protocol_config(ModelKind kind);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  ModelConfig config;
  TrainHyper hyper;
  std::vector<EpochRecord> history;  // epoch 0 is the untrained model
  std::size_t best_val_epoch = 0;
  std::size_t last_epoch = 0;
  double best_val_acc = 0.0;
  std::optional<double> test_accuracy;
  std::size_t test_evaluations = 0;
  bool failed = false;
  std::string failure;
  double wall_clock_seconds = 0.0;  // excluded from the JSON payload
};

struct TrainResult {
  TrainReport report;
  Checkpoint checkpoint;  // best-validation parameters
};

/// Full-batch training on `split`. Objective is cross-entropy on train nodes
/// (+ lambda_cal * calibration for csna). Keeps the earliest epoch with the
/// highest validation accuracy, stops after `patience` epochs without
/// improvement, then scores that checkpoint on test exactly once. A
/// non-finite value aborts the run and is reported as failed.
TrainResult train(const ModelConfig& config, const Graph& g, const Split& split, const TrainHyper& hyper);

enum class DatasetScale { Small, Large };
DatasetScale classify_scale(std::size_t n);

struct TuneGrid {
  std::vector<double> lr;
  std::vector<std::size_t> hidden;
  std::vector<double> tau;  // ignored for mlp / gcn

  static TuneGrid protocol_grid(DatasetScale scale);
  /// Expanded cells in (lr, hidden, tau) lexicographic order.
  std::vector<TrainHyper> expand(const TrainHyper& base, ModelKind kind) const;
};

struct TuneOptions {
  std::size_t n_splits = protocol::kTuneSplitsSmall;
  std::size_t epoch_cap = protocol::kTuneEpochsSmall;
  std::size_t jobs = 1;
  static TuneOptions protocol_options(DatasetScale scale);
};

struct TuneCell {
  TrainHyper hyper;
  std::vector<std::optional<double>> val_accs;
  std::optional<double> mean_val;
};

struct TuneResult {
  TrainHyper best;
  std::vector<TuneCell> cells;
};

/// Exhaustive grid search on the first `n_splits` splits; selection by mean
/// best-validation accuracy, ties to (lower lr, smaller hidden, smaller tau).
/// The winning hyper carries base.max_epochs, not the tuning cap.
TuneResult tune(const ModelConfig& config, const Graph& g, const SplitSet& splits, const TuneGrid& grid,
                const TrainHyper& base, const TuneOptions& options);

/// Picks the best cell from already-scored cells (exposed for testing).
std::size_t select_best_cell(const std::vector<TuneCell>& cells);

struct BenchmarkReport {
  ModelConfig config;
  TrainHyper hyper;
  std::vector<std::optional<double>> accuracies;  // nullopt for failed runs
  std::vector<std::size_t> best_epochs;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
  std::vector<std::string> warnings;
};

BenchmarkReport run_benchmark(const ModelConfig& config, const Graph& g, const SplitSet& splits,
                              const TrainHyper& hyper, std::size_t jobs = 1,
                              std::vector<TrainReport>* per_split = nullptr);

/// Mean and sample standard deviation of the successful runs.
std::pair<double, double> mean_and_stddev(const std::vector<std::optional<double>>& values);

std::string train_report_to_json(const TrainReport& r);
std::string benchmark_report_to_json(const BenchmarkReport& r);
std::string benchmark_report_to_csv(const BenchmarkReport& r);
std::string tune_result_to_json(const TuneResult& r);

}  // namespace csna
