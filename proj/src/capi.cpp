#include "csna/csna.h"

#include <array>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "csbm.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "json_io.hpp"
#include "model.hpp"
#include "trainer.hpp"

struct csna_graph {
  csna::Graph g;
};
struct csna_splits {
  csna::SplitSet s;
};
struct csna_checkpoint {
  csna::Checkpoint c;
};

namespace {

using json = nlohmann::json;

thread_local std::string last_error;

csna_status status_of(csna::ErrorKind k) {
  switch (k) {
    case csna::ErrorKind::Dimension: return CSNA_ERR_DIMENSION;
    case csna::ErrorKind::Index: return CSNA_ERR_INDEX;
    case csna::ErrorKind::Contract: return CSNA_ERR_CONTRACT;
    case csna::ErrorKind::Parse: return CSNA_ERR_PARSE;
    case csna::ErrorKind::Io: return CSNA_ERR_IO;
    case csna::ErrorKind::Numeric: return CSNA_ERR_NUMERIC;
  }
  return CSNA_ERR_INTERNAL;
}

template <class F>
csna_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return CSNA_OK;
  } catch (const csna::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    last_error = e.what();
    return CSNA_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CSNA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CSNA_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) csna::fail(csna::ErrorKind::Contract, std::string(what) + " is null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

json parse_or_empty(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  return csna::parse_json(text, what);
}

csna::ModelConfig model_config(const char* text) {
  const json j = parse_or_empty(text, "model config");
  const std::string kind = j.is_object() && j.contains("kind") ? j.at("kind").get<std::string>() : "csna";
  csna::ModelConfig c = csna::protocol_config(csna::parse_model_kind(kind));
  csna::from_json(j, c);
  c.validate();
  return c;
}

csna::TrainHyper hyper(const char* text) {
  csna::TrainHyper h;
  csna::from_json(parse_or_empty(text, "hyper"), h);
  h.validate();
  return h;
}

csna::CsbmParams csbm_params(const char* text) {
  csna::CsbmParams p;
  csna::from_json(parse_or_empty(text, "csbm params"), p);
  return p;
}

const csna::Split& split_at(const csna_splits* s, std::size_t index) {
  need(s, "splits");
  csna::require(index < s->s.splits.size(), csna::ErrorKind::Index,
                "split index " + std::to_string(index) + " out of range (" + std::to_string(s->s.splits.size()) +
                    " splits)");
  return s->s.splits[index];
}

}  // namespace

extern "C" {

const char* csna_version(void) { return "0.1.0"; }

const char* csna_last_error(void) { return last_error.c_str(); }

const char* csna_status_name(csna_status status) {
  switch (status) {
    case CSNA_OK: return "ok";
    case CSNA_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CSNA_ERR_DIMENSION: return "dimension error";
    case CSNA_ERR_INDEX: return "index error";
    case CSNA_ERR_CONTRACT: return "contract error";
    case CSNA_ERR_PARSE: return "parse error";
    case CSNA_ERR_IO: return "io error";
    case CSNA_ERR_NUMERIC: return "numeric error";
    case CSNA_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void csna_string_free(char* s) { std::free(s); }

csna_status csna_graph_load(const char* dir, csna_graph** out) {
  if (!dir || !out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { *out = new csna_graph{csna::load_graph(dir)}; });
}

csna_status csna_graph_save(const csna_graph* g, const char* dir) {
  if (!g || !dir) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { csna::save_graph(g->g, dir); });
}

csna_status csna_graph_info(const csna_graph* g, char** info_json) {
  if (!g || !info_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const json j = {{"name", g->g.name},
                    {"n", g->g.n},
                    {"d", g->g.feature_dim()},
                    {"C", g->g.num_classes},
                    {"undirected_edges", g->g.undirected_edge_count()},
                    {"edge_homophily", csna::edge_homophily(g->g)}};
    put(info_json, j.dump(1) + "\n");
  });
}

csna_status csna_csbm_sample(const char* csbm_json, uint64_t seed, csna_graph** out) {
  if (!out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::CsbmParams p = csbm_params(csbm_json);
    p.validate();
    *out = new csna_graph{csna::sample_csbm(p, seed)};
  });
}

void csna_graph_free(csna_graph* g) { delete g; }

csna_status csna_splits_generate(size_t n, const double ratios[3], size_t k, uint64_t seed, csna_splits** out) {
  if (!out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  const std::array<double, 3> r = ratios ? std::array<double, 3>{ratios[0], ratios[1], ratios[2]} : csna::kDefaultSplitRatios;
  return guarded([&] { *out = new csna_splits{csna::generate_splits(n, r, k, seed)}; });
}

csna_status csna_splits_from_json(const char* text, csna_splits** out) {
  if (!text || !out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { *out = new csna_splits{csna::splits_from_json(text)}; });
}

csna_status csna_splits_to_json(const csna_splits* s, char** text) {
  if (!s || !text) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { put(text, csna::splits_to_json(s->s)); });
}

csna_status csna_splits_validate(const csna_splits* s, size_t n) {
  if (!s) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { csna::validate_splits(s->s, n); });
}

size_t csna_splits_count(const csna_splits* s) { return s ? s->s.splits.size() : 0; }

void csna_splits_free(csna_splits* s) { delete s; }

csna_status csna_train(const csna_graph* g, const csna_splits* s, size_t split_index, const char* model_json,
                       const char* hyper_json, char** report_json, csna_checkpoint** out_checkpoint) {
  if (!g || !s || !report_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::ModelConfig config = model_config(model_json);
    const csna::TrainHyper h = hyper(hyper_json);
    csna::TrainResult r = csna::train(config, g->g, split_at(s, split_index), h);
    auto ckpt = out_checkpoint ? std::make_unique<csna_checkpoint>(csna_checkpoint{std::move(r.checkpoint)}) : nullptr;
    put(report_json, csna::train_report_to_json(r.report));
    if (out_checkpoint) *out_checkpoint = ckpt.release();
  });
}

csna_status csna_tune(const csna_graph* g, const csna_splits* s, const char* model_json, const char* hyper_json,
                      const char* grid_json, const char* options_json, char** result_json) {
  if (!g || !s || !result_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::ModelConfig config = model_config(model_json);
    const csna::TrainHyper base = hyper(hyper_json);
    const csna::DatasetScale scale = csna::classify_scale(g->g.n);
    csna::TuneGrid grid = csna::TuneGrid::protocol_grid(scale);
    if (grid_json && *grid_json) {
      const json j = csna::parse_json(grid_json, "grid");
      csna::reject_unknown_keys(j, {"lr", "hidden", "tau"}, "grid");
      if (j.contains("lr")) grid.lr = j.at("lr").get<std::vector<double>>();
      if (j.contains("hidden")) grid.hidden = j.at("hidden").get<std::vector<std::size_t>>();
      if (j.contains("tau")) grid.tau = j.at("tau").get<std::vector<double>>();
    }
    csna::TuneOptions options = csna::TuneOptions::protocol_options(scale);
    if (options_json && *options_json) {
      const json j = csna::parse_json(options_json, "tune options");
      csna::reject_unknown_keys(j, {"splits", "epoch_cap", "jobs"}, "tune options");
      options.n_splits = j.value("splits", options.n_splits);
      options.epoch_cap = j.value("epoch_cap", options.epoch_cap);
      options.jobs = j.value("jobs", options.jobs);
    }
    put(result_json, csna::tune_result_to_json(csna::tune(config, g->g, s->s, grid, base, options)));
  });
}

csna_status csna_benchmark(const csna_graph* g, const csna_splits* s, const char* model_json, const char* hyper_json,
                           size_t jobs, char** report_json, char** report_csv) {
  if (!g || !s || !report_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::ModelConfig config = model_config(model_json);
    const csna::TrainHyper h = hyper(hyper_json);
    const csna::BenchmarkReport r = csna::run_benchmark(config, g->g, s->s, h, jobs);
    const std::string j = csna::benchmark_report_to_json(r);
    const std::string c = csna::benchmark_report_to_csv(r);
    put(report_json, j);
    if (report_csv) {
      try {
        put(report_csv, c);
      } catch (...) {
        std::free(*report_json);
        throw;
      }
    }
  });
}

csna_status csna_checkpoint_load(const char* path, csna_checkpoint** out) {
  if (!path || !out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { *out = new csna_checkpoint{csna::load_checkpoint(path)}; });
}

csna_status csna_checkpoint_save(const csna_checkpoint* c, const char* path) {
  if (!c || !path) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { csna::save_checkpoint(c->c, path); });
}

csna_status csna_checkpoint_to_json(const csna_checkpoint* c, char** text) {
  if (!c || !text) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { put(text, csna::checkpoint_to_json(c->c)); });
}

csna_status csna_checkpoint_logits(const csna_checkpoint* c, const csna_graph* g, char** logits_json) {
  if (!c || !g || !logits_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::Evaluation ev = csna::evaluate(c->c, g->g);
    json rows = json::array();
    for (std::size_t i = 0; i < ev.logits.rows; ++i) {
      const auto r = ev.logits.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    put(logits_json, rows.dump() + "\n");
  });
}

void csna_checkpoint_free(csna_checkpoint* c) { delete c; }

csna_status csna_diagnose(const csna_checkpoint* c, const csna_graph* g, const char* scope, const csna_splits* s,
                          size_t split_index, size_t bins, char** report_json, char** histogram_csv) {
  if (!c || !g || !report_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::EdgeScope sc = csna::parse_edge_scope(scope ? scope : "all");
    const csna::Split* split = sc == csna::EdgeScope::All && !s ? nullptr : &split_at(s, split_index);
    const csna::DiagnosticsReport r = csna::diagnose(c->c, g->g, sc, split, bins);
    std::string csv;
    if (r.histogram) csv = csna::cost_histogram_csv(*r.histogram);
    put(report_json, csna::diagnostics_to_json(r));
    if (histogram_csv) *histogram_csv = r.histogram ? dup(csv) : nullptr;
  });
}

csna_status csna_csbm_predicted_factor(double p, double q, double w_plus, double w_minus, size_t num_classes,
                                       double* out) {
  if (!out) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] { *out = csna::predicted_factor(p, q, w_plus, w_minus, num_classes); });
}

csna_status csna_csbm_theorem(const char* csbm_json, double w_plus, double w_minus, size_t trials, uint64_t seed,
                              size_t jobs, char** summary_json, char** rows_csv) {
  if (!summary_json) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::CsbmParams p = csbm_params(csbm_json);
    const csna::TheoremReport r = csna::run_theorem(p, w_plus, w_minus, {trials, seed, jobs});
    put(summary_json, csna::theorem_report_to_json(p, r));
    if (rows_csv) *rows_csv = dup(csna::theorem_rows_csv_header() + csna::theorem_rows_csv(p, r));
  });
}

csna_status csna_csbm_sweep(const char* csbm_json, const double* multiples, size_t count, size_t trials,
                            uint64_t seed, size_t jobs, char** summary_json, char** rows_csv) {
  if (!summary_json || (!multiples && count)) return last_error = "null argument", CSNA_ERR_INVALID_ARGUMENT;
  return guarded([&] {
    const csna::CsbmParams p = csbm_params(csbm_json);
    const auto rows = csna::sign_boundary_sweep(p, std::span<const double>(multiples, count), {trials, seed, jobs});
    put(summary_json, csna::sweep_to_json(p, rows));
    if (rows_csv) {
      std::string csv = csna::theorem_rows_csv_header();
      for (const auto& row : rows) csv += csna::theorem_rows_csv(p, row.report);
      *rows_csv = dup(csv);
    }
  });
}

}  // extern "C"
