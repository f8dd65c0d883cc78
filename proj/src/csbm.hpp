#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graph.hpp"

namespace csna {

/// Contextual SBM: balanced labels (node i has class i / (n/C)), intra-class
/// edges with probability p, inter-class with q, features N(m_c, I_d).
/// C = 2 places the means at -/+ (mu/2) e1; C > 2 at (mu/2) e_c.
struct CsbmParams {
  std::size_t n = 4000;
  std::size_t num_classes = 2;
  double p = 0.01;
  double q = 0.04;
  double mu = 2.0;
  std::size_t d = 8;

  void validate() const;
};

/// Accepts the degenerate probabilities 0 and 1 (limit checks); validate()
/// does not.
Graph sample_csbm(const CsbmParams& params, std::uint64_t seed);

/// Class mean m_c under the CSBM geometry (scale 1 when mu = 0).
std::vector<double> class_mean(const CsbmParams& params, std::size_t c);

/// (p w+ - q w-) / (p w+ + (C-1) q w-)
double predicted_factor(double p, double q, double w_plus, double w_minus, std::size_t num_classes);

/// w+ on same-class edges and self-loops, w- on cross-class edges, in the
/// stored edge order of `g`.
std::vector<double> class_weights(const Graph& g, double w_plus, double w_minus);

/// D^{-1/2} (A_w) D^{-1/2} X where A_w carries `weights` per stored edge and
/// D is its row sum. `g` must carry self-loops.
Matrix<double> weighted_aggregate(const Graph& g, std::span<const double> weights);

/// Projection of the aggregated class-mean difference onto m_a - m_b,
/// divided by |m_a - m_b|^2, averaged over all class pairs. For C = 2 this
/// is (mean_{+} h.e1 - mean_{-} h.e1) / mu.
double empirical_factor(const Graph& g, std::span<const double> weights, const CsbmParams& params);

struct TheoremReport {
  double predicted = 0.0;
  double empirical = 0.0;
  std::optional<double> standard_error;  // present when trials > 1
  std::size_t trials = 0;
  double w_plus = 1.0;
  double w_minus = 1.0;
  std::size_t num_classes = 2;
  std::vector<double> per_trial;
};

struct TrialOptions {
  std::size_t trials = 20;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
};

/// Seed of trial t.
std::uint64_t trial_seed(std::uint64_t master, std::size_t t);

TheoremReport run_theorem(const CsbmParams& params, double w_plus, double w_minus, const TrialOptions& options);

struct SweepRow {
  double multiple = 0.0;  // ratio expressed in units of q/p
  double ratio = 0.0;     // w+ / w-
  TheoremReport report;
};

/// For each multiple r: w+ = 1, w- = p / (r q). Trials share one sample per
/// trial index across all ratios.
std::vector<SweepRow> sign_boundary_sweep(const CsbmParams& params, std::span<const double> multiples,
                                          const TrialOptions& options);

struct ScatterReport {
  double trace_within = 0.0;  // tr(S_W), S_W = 1/n sum_c sum_{i in c} (h_i - hbar_c)(h_i - hbar_c)^T
  double d_eff = 0.0;         // 1 / mean_i sum_j w_ij^2
};

/// Row-normalises `weights` per source node, aggregates X and measures the
/// within-class scatter of the result.
ScatterReport scatter_measure(const Graph& g, std::span<const double> weights);

/// Mean s over same-class / cross-class non-self-loop edges, the factor
/// they predict, and the factor measured with w = s.
TheoremReport csna_routing_factor(const Graph& g, std::span<const double> s, const CsbmParams& params);

std::string theorem_rows_csv_header();
/// One row per trial: p,q,w_plus,w_minus,C,n,trial,empirical_factor
std::string theorem_rows_csv(const CsbmParams& params, const TheoremReport& r);
std::string theorem_report_to_json(const CsbmParams& params, const TheoremReport& r);
std::string sweep_to_json(const CsbmParams& params, const std::vector<SweepRow>& rows);

}  // namespace csna
