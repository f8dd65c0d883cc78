#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graph.hpp"
#include "matrix.hpp"
#include "model.hpp"

namespace csna {

/// Mann-Whitney AUC of `scores` with `positive` edges as the positive class;
/// ties count one half. Absent when either class is empty.
std::optional<double> concordance_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Column means of an n x 3 gate matrix (con, dis, self).
std::array<double, 3> gate_summary(const Matrix<double>& gates);

struct CostHistogram {
  std::vector<double> edges;  // bins + 1 boundaries over [0, 1]
  std::vector<std::size_t> same;
  std::vector<std::size_t> diff;
};

/// Equal-width bins over [0, 1], rightmost bin closed. Values outside the
/// interval are clamped into the end bins.
CostHistogram cost_histogram(std::span<const double> scores, std::span<const std::uint8_t> same_class,
                             std::size_t bins);

enum class EdgeScope { All, TestIncident, HeldOut };

struct LayerDiagnostics {
  std::optional<double> auc;
  std::array<double, 3> gate_means{};
};

struct DiagnosticsReport {
  std::string model;
  EdgeScope scope = EdgeScope::All;
  std::size_t edges = 0;
  std::size_t same_class_edges = 0;
  std::vector<LayerDiagnostics> layers;  // empty for models without routing
  std::optional<CostHistogram> histogram;  // layer-0 concordance
  std::string message;
};

/// Non-self-loop directed edges of `g` (with self-loops added) selected by
/// `scope`. TestIncident keeps edges touching a test node; HeldOut drops
/// edges with both endpoints in train.
std::vector<std::size_t> diagnostic_edges(const Graph& g, EdgeScope scope, const Split* split);

DiagnosticsReport diagnose(const Checkpoint& ckpt, const Graph& g, EdgeScope scope = EdgeScope::All,
                           const Split* split = nullptr, std::size_t bins = 20);

const char* to_string(EdgeScope s);
EdgeScope parse_edge_scope(const std::string& s);

std::string diagnostics_to_json(const DiagnosticsReport& r);
/// bin,same_count,diff_count
std::string cost_histogram_csv(const CostHistogram& h);

}  // namespace csna
