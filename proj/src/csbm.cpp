#include "csbm.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "json_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace csna {

using json = nlohmann::json;

namespace {

void check_layout(const CsbmParams& c) {
  require(c.num_classes >= 2, ErrorKind::Contract, "csbm: need at least 2 classes");
  require(c.n >= c.num_classes && c.n % c.num_classes == 0, ErrorKind::Contract,
          "csbm: n=" + std::to_string(c.n) + " is not divisible by C=" + std::to_string(c.num_classes));
  require(c.mu >= 0.0 && std::isfinite(c.mu), ErrorKind::Contract, "csbm: mu must be non-negative");
  require(c.d >= 1 && (c.num_classes == 2 || c.d >= c.num_classes), ErrorKind::Contract,
          "csbm: feature dimension must be at least C");
}

}  // namespace

void CsbmParams::validate() const {
  require(p > 0.0 && p < 1.0, ErrorKind::Contract, "csbm: p must lie in (0, 1)");
  require(q > 0.0 && q < 1.0, ErrorKind::Contract, "csbm: q must lie in (0, 1)");
  check_layout(*this);
}

std::vector<double> class_mean(const CsbmParams& params, std::size_t c) {
  const double half = (params.mu > 0.0 ? params.mu : 1.0) / 2.0;
  std::vector<double> m(params.d, 0.0);
  if (params.num_classes == 2)
    m[0] = c == 1 ? half : -half;
  else
    m[c] = half;
  return m;
}

Graph sample_csbm(const CsbmParams& params, std::uint64_t seed) {
  check_layout(params);
  require(params.p >= 0.0 && params.p <= 1.0 && params.q >= 0.0 && params.q <= 1.0, ErrorKind::Contract,
          "csbm: edge probabilities must lie in [0, 1]");
  const std::size_t n = params.n;
  const std::size_t block = n / params.num_classes;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / block);

  Pcg32 edge_rng = substream(seed, "csbm-edges");
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double prob = labels[i] == labels[j] ? params.p : params.q;
      if (edge_rng.uniform() < prob) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }

  Pcg32 feat_rng = substream(seed, "csbm-features");
  Matrix<double> x(n, params.d);
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < params.num_classes; ++c) means.push_back(class_mean(params, c));
  const bool zero_signal = params.mu == 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < params.d; ++k)
      x(i, k) = (zero_signal ? 0.0 : means[labels[i]][k]) + feat_rng.normal();

  std::ostringstream name;
  name << "csbm-n" << n << "-C" << params.num_classes << "-p" << params.p << "-q" << params.q;
  return make_graph(n, params.num_classes, std::move(x), std::move(labels), pairs, name.str());
}

double predicted_factor(double p, double q, double w_plus, double w_minus, std::size_t num_classes) {
  require(w_plus >= 0.0 && w_minus >= 0.0, ErrorKind::Contract, "predicted_factor: weights must be non-negative");
  require(!(w_plus == 0.0 && w_minus == 0.0), ErrorKind::Contract, "predicted_factor: w+ = w- = 0");
  require(num_classes >= 2, ErrorKind::Contract, "predicted_factor: need at least 2 classes");
  const double denom = p * w_plus + static_cast<double>(num_classes - 1) * q * w_minus;
  require(denom > 0.0, ErrorKind::Contract, "predicted_factor: non-positive denominator");
  return (p * w_plus - q * w_minus) / denom;
}

std::vector<double> class_weights(const Graph& g, double w_plus, double w_minus) {
  std::vector<double> w(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    w[e] = g.labels[g.edges[e].src] == g.labels[g.edges[e].dst] ? w_plus : w_minus;
  return w;
}

Matrix<double> weighted_aggregate(const Graph& g, std::span<const double> weights) {
  require(g.has_self_loops, ErrorKind::Contract, "aggregate: graph must carry self-loops");
  require(weights.size() == g.edges.size(), ErrorKind::Dimension, "aggregate: one weight per stored edge required");
  std::vector<double> deg(g.n, 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) deg[g.edges[e].src] += weights[e];
  const std::size_t d = g.feature_dim();
  Matrix<double> h(g.n, d);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    if (weights[e] == 0.0) continue;
    const double c = weights[e] / std::sqrt(deg[i] * deg[j]);
    for (std::size_t k = 0; k < d; ++k) h(i, k) += c * g.features(j, k);
  }
  return h;
}

namespace {

std::vector<std::vector<double>> class_averages(const Matrix<double>& h, std::span<const int> labels,
                                                std::size_t num_classes) {
  std::vector<std::vector<double>> sums(num_classes, std::vector<double>(h.cols, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++counts[c];
    for (std::size_t k = 0; k < h.cols; ++k) sums[c][k] += h(i, k);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    require(counts[c] > 0, ErrorKind::Contract, "empirical_factor: class " + std::to_string(c) + " is empty");
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

}  // namespace

double empirical_factor(const Graph& g, std::span<const double> weights, const CsbmParams& params) {
  require(g.num_classes == params.num_classes && g.feature_dim() == params.d, ErrorKind::Dimension,
          "empirical_factor: graph does not match the CSBM parameters");
  const Matrix<double> h = weighted_aggregate(g, weights);
  const auto avg = class_averages(h, g.labels, g.num_classes);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < g.num_classes; ++a)
    for (std::size_t b = a + 1; b < g.num_classes; ++b) {
      const auto ma = class_mean(params, a);
      const auto mb = class_mean(params, b);
      double dot = 0.0, norm = 0.0;
      for (std::size_t k = 0; k < params.d; ++k) {
        const double u = ma[k] - mb[k];
        dot += (avg[a][k] - avg[b][k]) * u;
        norm += u * u;
      }
      total += dot / norm;
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t t) { return derive_seed(master, "csbm-trial", t); }

namespace {

void summarise(TheoremReport& r) {
  r.trials = r.per_trial.size();
  double sum = 0.0;
  for (double v : r.per_trial) sum += v;
  r.empirical = r.trials ? sum / static_cast<double>(r.trials) : 0.0;
  r.standard_error.reset();
  if (r.trials > 1) {
    double ss = 0.0;
    for (double v : r.per_trial) ss += (v - r.empirical) * (v - r.empirical);
    const double sd = std::sqrt(ss / static_cast<double>(r.trials - 1));
    r.standard_error = sd / std::sqrt(static_cast<double>(r.trials));
  }
}

}  // namespace

std::vector<SweepRow> sign_boundary_sweep(const CsbmParams& params, std::span<const double> multiples,
                                          const TrialOptions& options) {
  params.validate();
  require(options.trials >= 1, ErrorKind::Contract, "csbm: need at least one trial");
  std::vector<SweepRow> rows;
  for (double m : multiples) {
    require(m > 0.0 && std::isfinite(m), ErrorKind::Contract, "csbm: sweep multiples must be positive");
    SweepRow row;
    row.multiple = m;
    row.ratio = m * params.q / params.p;
    row.report.w_plus = 1.0;
    row.report.w_minus = 1.0 / row.ratio;
    row.report.num_classes = params.num_classes;
    row.report.predicted =
        predicted_factor(params.p, params.q, row.report.w_plus, row.report.w_minus, params.num_classes);
    row.report.per_trial.assign(options.trials, 0.0);
    rows.push_back(std::move(row));
  }
  parallel_for(options.trials, options.jobs, [&](std::size_t t) {
    const Graph g = add_self_loops(sample_csbm(params, trial_seed(options.seed, t)));
    for (SweepRow& row : rows)
      row.report.per_trial[t] = empirical_factor(g, class_weights(g, row.report.w_plus, row.report.w_minus), params);
  });
  for (SweepRow& row : rows) summarise(row.report);
  return rows;
}

TheoremReport run_theorem(const CsbmParams& params, double w_plus, double w_minus, const TrialOptions& options) {
  params.validate();
  require(options.trials >= 1, ErrorKind::Contract, "csbm: need at least one trial");
  TheoremReport r;
  r.w_plus = w_plus;
  r.w_minus = w_minus;
  r.num_classes = params.num_classes;
  r.predicted = predicted_factor(params.p, params.q, w_plus, w_minus, params.num_classes);
  r.per_trial.assign(options.trials, 0.0);
  parallel_for(options.trials, options.jobs, [&](std::size_t t) {
    const Graph g = add_self_loops(sample_csbm(params, trial_seed(options.seed, t)));
    r.per_trial[t] = empirical_factor(g, class_weights(g, w_plus, w_minus), params);
  });
  summarise(r);
  return r;
}

ScatterReport scatter_measure(const Graph& g, std::span<const double> weights) {
  require(weights.size() == g.edges.size(), ErrorKind::Dimension, "scatter: one weight per stored edge required");
  std::vector<double> row_sum(g.n, 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    require(weights[e] >= 0.0, ErrorKind::Contract, "scatter: weights must be non-negative");
    row_sum[g.edges[e].src] += weights[e];
  }
  for (std::size_t i = 0; i < g.n; ++i)
    require(row_sum[i] > 0.0, ErrorKind::Contract, "scatter: node " + std::to_string(i) + " has no weight");

  const std::size_t d = g.feature_dim();
  Matrix<double> h(g.n, d);
  std::vector<double> sq(g.n, 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    const double w = weights[e] / row_sum[i];
    sq[i] += w * w;
    for (std::size_t k = 0; k < d; ++k) h(i, k) += w * g.features(j, k);
  }
  const auto avg = class_averages(h, g.labels, g.num_classes);
  ScatterReport r;
  double sq_mean = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    const auto& m = avg[static_cast<std::size_t>(g.labels[i])];
    for (std::size_t k = 0; k < d; ++k) r.trace_within += (h(i, k) - m[k]) * (h(i, k) - m[k]);
    sq_mean += sq[i];
  }
  r.trace_within /= static_cast<double>(g.n);
  r.d_eff = static_cast<double>(g.n) / sq_mean;
  return r;
}

TheoremReport csna_routing_factor(const Graph& g, std::span<const double> s, const CsbmParams& params) {
  require(s.size() == g.edges.size(), ErrorKind::Dimension, "routing factor: one score per stored edge required");
  double same = 0.0, diff = 0.0;
  std::size_t n_same = 0, n_diff = 0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    if (i == j) continue;
    if (g.labels[i] == g.labels[j]) {
      same += s[e];
      ++n_same;
    } else {
      diff += s[e];
      ++n_diff;
    }
  }
  TheoremReport r;
  r.num_classes = params.num_classes;
  r.w_plus = n_same ? same / static_cast<double>(n_same) : 0.0;
  r.w_minus = n_diff ? diff / static_cast<double>(n_diff) : 0.0;
  r.predicted = predicted_factor(params.p, params.q, r.w_plus, r.w_minus, params.num_classes);
  r.per_trial = {empirical_factor(g, s, params)};
  summarise(r);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json report_json(const TheoremReport& r) {
  json j = {{"predicted_factor", r.predicted},
            {"empirical_factor", r.empirical},
            {"trials", r.trials},
            {"w_plus", r.w_plus},
            {"w_minus", r.w_minus},
            {"C", r.num_classes}};
  j["standard_error"] = r.standard_error ? json(*r.standard_error) : json(nullptr);
  return j;
}

}  // namespace

std::string theorem_rows_csv_header() { return "p,q,w_plus,w_minus,C,n,trial,empirical_factor\n"; }

std::string theorem_rows_csv(const CsbmParams& params, const TheoremReport& r) {
  std::string out;
  for (std::size_t t = 0; t < r.per_trial.size(); ++t) {
    out += fmt(params.p) + ',' + fmt(params.q) + ',' + fmt(r.w_plus) + ',' + fmt(r.w_minus) + ',' +
           std::to_string(params.num_classes) + ',' + std::to_string(params.n) + ',' + std::to_string(t) + ',' +
           fmt(r.per_trial[t]) + '\n';
  }
  return out;
}

std::string theorem_report_to_json(const CsbmParams& params, const TheoremReport& r) {
  json j = {{"params", json(params)}, {"report", report_json(r)}};
  return j.dump(1) + "\n";
}

std::string sweep_to_json(const CsbmParams& params, const std::vector<SweepRow>& rows) {
  json arr = json::array();
  for (const SweepRow& row : rows) {
    json j = report_json(row.report);
    j["multiple_of_q_over_p"] = row.multiple;
    j["ratio"] = row.ratio;
    j["predicted_sign"] = row.report.predicted > 0 ? 1 : (row.report.predicted < 0 ? -1 : 0);
    j["empirical_sign"] = row.report.empirical > 0 ? 1 : (row.report.empirical < 0 ? -1 : 0);
    arr.push_back(std::move(j));
  }
  json j = {{"params", json(params)}, {"threshold_q_over_p", params.q / params.p}, {"sweep", arr}};
  return j.dump(1) + "\n";
}

}  // namespace csna
