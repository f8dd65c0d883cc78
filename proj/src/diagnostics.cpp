#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "errors.hpp"

namespace csna {

using json = nlohmann::json;

std::optional<double> concordance_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  require(scores.size() == positive.size(), ErrorKind::Dimension, "auc: scores and labels differ in length");
  const std::size_t m = scores.size();
  std::size_t n_pos = 0;
  for (std::uint8_t p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = m - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) over positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

std::array<double, 3> gate_summary(const Matrix<double>& gates) {
  require(gates.cols == 3, ErrorKind::Dimension, "gate summary: expected 3 columns");
  std::array<double, 3> mean{};
  if (gates.rows == 0) return mean;
  for (std::size_t i = 0; i < gates.rows; ++i)
    for (std::size_t k = 0; k < 3; ++k) mean[k] += gates(i, k);
  for (double& v : mean) v /= static_cast<double>(gates.rows);
  return mean;
}

CostHistogram cost_histogram(std::span<const double> scores, std::span<const std::uint8_t> same_class,
                             std::size_t bins) {
  require(bins >= 2, ErrorKind::Contract, "histogram: need at least 2 bins");
  require(scores.size() == same_class.size(), ErrorKind::Dimension, "histogram: scores and labels differ in length");
  CostHistogram h;
  h.same.assign(bins, 0);
  h.diff.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const double v = std::clamp(scores[e], 0.0, 1.0);
    auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    (same_class[e] ? h.same : h.diff)[b] += 1;
  }
  return h;
}

const char* to_string(EdgeScope s) {
  switch (s) {
    case EdgeScope::All: return "all";
    case EdgeScope::TestIncident: return "test-incident";
    case EdgeScope::HeldOut: return "held-out";
  }
  return "?";
}

EdgeScope parse_edge_scope(const std::string& s) {
  if (s == "all") return EdgeScope::All;
  if (s == "test-incident") return EdgeScope::TestIncident;
  if (s == "held-out") return EdgeScope::HeldOut;
  fail(ErrorKind::Contract, "unknown edge scope '" + s + "' (expected all, test-incident or held-out)");
}

std::vector<std::size_t> diagnostic_edges(const Graph& g, EdgeScope scope, const Split* split) {
  require(g.has_self_loops, ErrorKind::Contract, "diagnostics: graph must carry self-loops");
  require(scope == EdgeScope::All || split != nullptr, ErrorKind::Contract,
          std::string("diagnostics: scope '") + to_string(scope) + "' needs a split");
  std::vector<std::uint8_t> in_test(g.n, 0), in_train(g.n, 0);
  if (split) {
    for (NodeId i : split->test) {
      require(i < g.n, ErrorKind::Index, "diagnostics: split index out of range");
      in_test[i] = 1;
    }
    for (NodeId i : split->train) {
      require(i < g.n, ErrorKind::Index, "diagnostics: split index out of range");
      in_train[i] = 1;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    if (i == j) continue;
    if (scope == EdgeScope::TestIncident && !in_test[i] && !in_test[j]) continue;
    if (scope == EdgeScope::HeldOut && in_train[i] && in_train[j]) continue;
    out.push_back(e);
  }
  return out;
}

DiagnosticsReport diagnose(const Checkpoint& ckpt, const Graph& graph, EdgeScope scope, const Split* split,
                           std::size_t bins) {
  const Graph g = add_self_loops(graph);
  const Evaluation ev = evaluate(ckpt, g);
  DiagnosticsReport r;
  r.model = to_string(ckpt.config.kind);
  r.scope = scope;
  const std::vector<std::size_t> sel = diagnostic_edges(g, scope, split);
  r.edges = sel.size();
  std::vector<std::uint8_t> same(sel.size());
  for (std::size_t k = 0; k < sel.size(); ++k) {
    const auto [i, j] = g.edges[sel[k]];
    same[k] = g.labels[i] == g.labels[j] ? 1 : 0;
    r.same_class_edges += same[k];
  }
  if (ev.layers.empty()) {
    r.message = std::string("model '") + r.model + "' has no edge routing: AUC, gates and histogram are absent";
    return r;
  }
  for (std::size_t l = 0; l < ev.layers.size(); ++l) {
    const LayerRouting& routing = ev.layers[l];
    std::vector<double> s(sel.size());
    for (std::size_t k = 0; k < sel.size(); ++k) s[k] = routing.concordance[sel[k]];
    LayerDiagnostics d;
    d.auc = concordance_auc(s, same);
    d.gate_means = gate_summary(routing.gates);
    r.layers.push_back(d);
    if (l == 0) r.histogram = cost_histogram(s, same, bins);
  }
  if (!r.layers.front().auc) r.message = "one edge class is empty: AUC is absent";
  return r;
}

std::string diagnostics_to_json(const DiagnosticsReport& r) {
  json j;
  j["model"] = r.model;
  j["edge_scope"] = to_string(r.scope);
  j["edges"] = r.edges;
  j["same_class_edges"] = r.same_class_edges;
  j["auc"] = !r.layers.empty() && r.layers.front().auc ? json(*r.layers.front().auc) : json(nullptr);
  json layers = json::array();
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    const auto& d = r.layers[l];
    layers.push_back({{"layer", l},
                      {"auc", d.auc ? json(*d.auc) : json(nullptr)},
                      {"gate_means", {{"con", d.gate_means[0]}, {"dis", d.gate_means[1]}, {"self", d.gate_means[2]}}}});
  }
  j["layers"] = std::move(layers);
  if (r.histogram) {
    j["histogram"] = {{"bin_edges", r.histogram->edges}, {"same", r.histogram->same}, {"diff", r.histogram->diff}};
  } else {
    j["histogram"] = nullptr;
  }
  if (!r.message.empty()) j["message"] = r.message;
  return j.dump(1) + "\n";
}

std::string cost_histogram_csv(const CostHistogram& h) {
  std::string out = "bin,same_count,diff_count\n";
  for (std::size_t b = 0; b < h.same.size(); ++b)
    out += std::to_string(b) + ',' + std::to_string(h.same[b]) + ',' + std::to_string(h.diff[b]) + '\n';
  return out;
}

}  // namespace csna
