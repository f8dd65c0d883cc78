// csna command-line front end. Talks to the library only through csna.h.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csna/csna.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

struct Failure {
  int code;
  std::string message;
};

int exit_code(csna_status s) {
  switch (s) {
    case CSNA_OK: return kOk;
    case CSNA_ERR_CONTRACT:
    case CSNA_ERR_INVALID_ARGUMENT: return kUsage;
    case CSNA_ERR_DIMENSION:
    case CSNA_ERR_INDEX:
    case CSNA_ERR_PARSE:
    case CSNA_ERR_IO: return kData;
    case CSNA_ERR_NUMERIC: return kNumeric;
    case CSNA_ERR_INTERNAL: return kInternal;
  }
  return kInternal;
}

void check(csna_status s) {
  if (s != CSNA_OK) throw Failure{exit_code(s), std::string(csna_status_name(s)) + ": " + csna_last_error()};
}

struct StringDeleter {
  void operator()(char* p) const { csna_string_free(p); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct GraphDeleter {
  void operator()(csna_graph* p) const { csna_graph_free(p); }
};
struct SplitsDeleter {
  void operator()(csna_splits* p) const { csna_splits_free(p); }
};
struct CheckpointDeleter {
  void operator()(csna_checkpoint* p) const { csna_checkpoint_free(p); }
};
using GraphPtr = std::unique_ptr<csna_graph, GraphDeleter>;
using SplitsPtr = std::unique_ptr<csna_splits, SplitsDeleter>;
using CheckpointPtr = std::unique_ptr<csna_checkpoint, CheckpointDeleter>;

std::string take(char* s) {
  OwnedString owned(s);
  return s ? std::string(s) : std::string();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure{kData, "cannot open " + p.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Failure{kData, "cannot write " + p.string()};
  out << text;
}

GraphPtr load_graph(const std::string& dir) {
  csna_graph* g = nullptr;
  check(csna_graph_load(dir.c_str(), &g));
  return GraphPtr(g);
}

json graph_info(const csna_graph* g) {
  char* out = nullptr;
  check(csna_graph_info(g, &out));
  return json::parse(take(out));
}

SplitsPtr protocol_splits(std::size_t n) {
  const double ratios[3] = {0.6, 0.2, 0.2};
  csna_splits* s = nullptr;
  check(csna_splits_generate(n, ratios, 10, 42, &s));
  return SplitsPtr(s);
}

SplitsPtr load_splits(const std::string& path, std::size_t n) {
  csna_splits* s = nullptr;
  check(csna_splits_from_json(read_file(path).c_str(), &s));
  SplitsPtr owned(s);
  check(csna_splits_validate(s, n));
  return owned;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{kUsage, flag + ": '" + item + "' is not a number"};
    }
  }
  if (out.empty()) throw Failure{kUsage, flag + ": empty list"};
  return out;
}

const CLI::Validator kOpenUnit(
    [](std::string& s) -> std::string {
      try {
        const double v = std::stod(s);
        if (v > 0.0 && v < 1.0) return {};
      } catch (const std::exception&) {
      }
      return "value " + s + " must lie strictly between 0 and 1";
    },
    "in (0,1)");

/// Output directory plus bookkeeping shared by every subcommand.
struct Output {
  std::string dir;
  fs::path path;

  void resolve(const std::string& subcommand) {
    if (!dir.empty()) {
      path = dir;
    } else {
      const char* root = std::getenv("CSNA_OUTPUT_ROOT");
      const std::time_t now = std::time(nullptr);
      std::tm tm{};
      gmtime_r(&now, &tm);
      std::ostringstream name;
      name << subcommand << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
      path = fs::path(root && *root ? root : "runs") / name.str();
    }
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw Failure{kData, "cannot create output directory " + path.string() + ": " + ec.message()};
  }

  void echo(const std::string& subcommand, const json& config) const {
    json j = {{"subcommand", subcommand}, {"version", csna_version()}, {"config", config}};
    write_file(path / "config_echo.json", j.dump(1) + "\n");
  }

  void timing(double seconds) const {
    write_file(path / "timing.json", json({{"wall_clock_seconds", seconds}}).dump(1) + "\n");
  }
};

struct ModelFlags {
  std::string kind = "csna";
  std::string variant = "lite";
  std::string normalization = "per-source";
  std::string precision = "f64";
  std::size_t layers = 2;
  double dropout = 0.5;
  double lambda_cal = 0.1;
  double edge_sampling = 0.0;
  CLI::Option* lambda_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--model", kind, "Model kind")->check(CLI::IsMember({"mlp", "gcn", "csna"}))->capture_default_str();
    app->add_option("--variant", variant, "CSNA cost variant")
        ->check(CLI::IsMember({"lite", "extended"}))
        ->capture_default_str();
    app->add_option("--normalization", normalization, "Group for the concordance softmax")
        ->check(CLI::IsMember({"per-source", "per-destination"}))
        ->capture_default_str();
    app->add_option("--precision", precision, "Floating point width")
        ->check(CLI::IsMember({"f64", "f32"}))
        ->capture_default_str();
    app->add_option("--layers", layers, "Graph layers")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999))->capture_default_str();
    lambda_opt = app->add_option("--lambda-cal", lambda_cal, "Calibration weight (csna only; 0 for mlp/gcn)")
                     ->check(CLI::NonNegativeNumber)
                     ->capture_default_str();
    app->add_option("--edge-sampling", edge_sampling, "Per-epoch edge drop rate")
        ->check(CLI::Range(0.0, 0.999))
        ->capture_default_str();
  }

  json to_json() const {
    const double lam = kind == "csna" || lambda_opt->count() > 0 ? lambda_cal : 0.0;
    return {{"kind", kind},     {"variant", variant},       {"normalization", normalization},
            {"precision", precision}, {"layers", layers}, {"dropout", dropout},
            {"lambda_cal", lam}, {"edge_sampling_rate", edge_sampling}};
  }
};

struct HyperFlags {
  double lr = 0.01;
  std::size_t hidden = 64;
  double tau = 1.0;
  double weight_decay = 5e-4;
  std::size_t patience = 50;
  std::size_t max_epochs = 300;
  std::uint64_t seed = 42;
  std::string from;
  std::vector<std::pair<const char*, CLI::Option*>> opts;

  void add(CLI::App* app) {
    opts = {{"lr", app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber)},
            {"hidden", app->add_option("--hidden", hidden, "Hidden width")->check(CLI::PositiveNumber)},
            {"tau", app->add_option("--tau", tau, "Concordance temperature")->check(CLI::PositiveNumber)},
            {"weight_decay",
             app->add_option("--weight-decay", weight_decay, "L2 coefficient")->check(CLI::NonNegativeNumber)},
            {"patience", app->add_option("--patience", patience, "Early-stopping patience")->check(CLI::PositiveNumber)},
            {"max_epochs", app->add_option("--max-epochs", max_epochs, "Epoch budget")},
            {"seed", app->add_option("--seed", seed, "Training seed")}};
    for (auto& [name, opt] : opts) opt->capture_default_str();
    app->add_option("--hyper-from", from, "Start from the 'best' entry of a tune.json (flags still override)")
        ->check(CLI::ExistingFile);
  }

  json to_json() const {
    json base = {{"lr", lr},
                 {"hidden", hidden},
                 {"tau", tau},
                 {"weight_decay", weight_decay},
                 {"patience", patience},
                 {"max_epochs", max_epochs},
                 {"seed", seed}};
    if (from.empty()) return base;
    json j;
    try {
      j = json::parse(read_file(from)).at("best");
    } catch (const json::exception& e) {
      throw Failure{kData, "--hyper-from: " + std::string(e.what())};
    }
    for (const auto& [name, opt] : opts)
      if (opt->count() > 0) j[name] = base[name];
    return j;
  }
};

struct DataFlags {
  std::string data;
  std::string splits;
  void add(CLI::App* app, bool with_splits = true) {
    app->add_option("--data", data, "Dataset directory (meta.json, features.csv, labels.csv, edges.csv)")
        ->required()
        ->check(CLI::ExistingDirectory);
    if (with_splits)
      app->add_option("--splits", splits, "splits.json (default: 10 protocol splits, seed 42)")
          ->check(CLI::ExistingFile);
  }
  SplitsPtr load(std::size_t n) const { return splits.empty() ? protocol_splits(n) : load_splits(splits, n); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-sensitive neighbourhood aggregation: training, CSBM checks and diagnostics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(csna_version()));

  Output out;
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out.dir, "Output directory (default: $CSNA_OUTPUT_ROOT or ./runs, timestamped)");
  };
  std::size_t jobs = 1;
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber)->capture_default_str();
  };

  // validate
  auto* validate = app.add_subcommand("validate", "Load a dataset and print its summary");
  std::string validate_data;
  validate->add_option("--data", validate_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  // splits
  auto* splits = app.add_subcommand("splits", "Generate random train/val/test splits");
  std::string n_from;
  std::size_t n_nodes = 0;
  std::size_t split_k = 10;
  std::uint64_t split_seed = 42;
  std::string ratios_text = "0.6,0.2,0.2";
  auto* n_from_opt = splits->add_option("--n-from", n_from, "Dataset directory to take n from")->check(CLI::ExistingDirectory);
  auto* n_opt = splits->add_option("--n", n_nodes, "Node count")->check(CLI::PositiveNumber);
  n_from_opt->excludes(n_opt);
  splits->add_option("--k", split_k, "Number of splits")->check(CLI::PositiveNumber)->capture_default_str();
  splits->add_option("--seed", split_seed, "Split seed")->capture_default_str();
  splits->add_option("--ratios", ratios_text, "train,val,test fractions summing to 1")->capture_default_str();
  add_out(splits);

  // train
  auto* train = app.add_subcommand("train", "Train one model on one split");
  DataFlags train_data;
  ModelFlags train_model;
  HyperFlags train_hyper;
  std::size_t train_split = 0;
  train_data.add(train);
  train_model.add(train);
  train_hyper.add(train);
  train->add_option("--split", train_split, "Split index")->capture_default_str();
  add_out(train);

  // tune
  auto* tune = app.add_subcommand("tune", "Grid search on the first tuning splits");
  DataFlags tune_data;
  ModelFlags tune_model;
  HyperFlags tune_hyper;
  std::string grid_lr, grid_hidden, grid_tau;
  std::size_t tune_splits = 0, epoch_cap = 0;
  tune_data.add(tune);
  tune_model.add(tune);
  tune_hyper.add(tune);
  tune->add_option("--grid-lr", grid_lr, "Comma-separated learning rates (default: protocol grid)");
  tune->add_option("--grid-hidden", grid_hidden, "Comma-separated hidden widths (default: protocol grid)");
  tune->add_option("--grid-tau", grid_tau, "Comma-separated temperatures (default: protocol grid)");
  tune->add_option("--tune-splits", tune_splits, "Splits used for selection (default: 3 small, 2 large)");
  tune->add_option("--epoch-cap", epoch_cap, "Epoch cap per cell (default: 200 small, 150 large)");
  add_jobs(tune);
  add_out(tune);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Train on every split and report mean and std of test accuracy");
  DataFlags bench_data;
  ModelFlags bench_model;
  HyperFlags bench_hyper;
  bench_data.add(bench);
  bench_model.add(bench);
  bench_hyper.add(bench);
  add_jobs(bench);
  add_out(bench);

  // csbm
  auto* csbm = app.add_subcommand("csbm", "Monte Carlo check of the CSBM scaling factors");
  double cp = 0.01, cq = 0.04, cmu = 2.0, w_plus = 1.0, w_minus = 1.0;
  std::size_t cn = 4000, cC = 2, cd = 8, trials = 20;
  std::uint64_t csbm_seed = 42;
  std::string sweep;
  std::string dump;
  csbm->add_option("--p", cp, "Intra-class edge probability")->check(kOpenUnit)->capture_default_str();
  csbm->add_option("--q", cq, "Inter-class edge probability")->check(kOpenUnit)->capture_default_str();
  csbm->add_option("--n", cn, "Nodes")->check(CLI::PositiveNumber)->capture_default_str();
  csbm->add_option("--C", cC, "Classes")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  csbm->add_option("--mu", cmu, "Class-mean separation")->check(CLI::NonNegativeNumber)->capture_default_str();
  csbm->add_option("--d", cd, "Feature dimension")->check(CLI::PositiveNumber)->capture_default_str();
  csbm->add_option("--trials", trials, "Monte Carlo trials")->check(CLI::PositiveNumber)->capture_default_str();
  csbm->add_option("--seed", csbm_seed, "Master seed")->capture_default_str();
  csbm->add_option("--w-plus", w_plus, "Same-class edge weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  csbm->add_option("--w-minus", w_minus, "Cross-class edge weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  csbm->add_option("--sweep-ratio", sweep, "Comma-separated multiples of q/p for w+/w- (sign-boundary sweep)");
  csbm->add_option("--dump", dump, "Also write one graph sampled with --seed as a dataset directory");
  add_jobs(csbm);
  add_out(csbm);

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Concordance AUC, gate means and cost histograms of a checkpoint");
  std::string ckpt_path;
  DataFlags diag_data;
  std::string scope = "all";
  std::size_t diag_split = 0, bins = 20;
  diag->add_option("--checkpoint", ckpt_path, "checkpoint.json from train")->required()->check(CLI::ExistingFile);
  diag_data.add(diag);
  diag->add_option("--scope", scope, "Edge subset")
      ->check(CLI::IsMember({"all", "test-incident", "held-out"}))
      ->capture_default_str();
  diag->add_option("--split", diag_split, "Split index for restricted scopes")->capture_default_str();
  diag->add_option("--bins", bins, "Histogram bins")->check(CLI::Range(2, 100000))->capture_default_str();
  add_out(diag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (validate->parsed()) {
      GraphPtr g = load_graph(validate_data);
      std::cout << graph_info(g.get()).dump(1) << '\n';
      return kOk;
    }

    if (splits->parsed()) {
      const std::vector<double> r = parse_list(ratios_text, "--ratios");
      if (r.size() != 3) throw Failure{kUsage, "--ratios: expected three comma-separated fractions"};
      if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw Failure{kUsage, "--ratios: fractions must sum to 1"};
      if (n_from.empty() && n_opt->count() == 0) throw Failure{kUsage, "splits: pass --n-from or --n"};
      std::size_t n = n_nodes;
      if (!n_from.empty()) n = graph_info(load_graph(n_from).get()).at("n").get<std::size_t>();
      out.resolve("splits");
      out.echo("splits", {{"n", n}, {"k", split_k}, {"seed", split_seed}, {"ratios", r}});
      csna_splits* s = nullptr;
      check(csna_splits_generate(n, r.data(), split_k, split_seed, &s));
      SplitsPtr owned(s);
      char* text = nullptr;
      check(csna_splits_to_json(s, &text));
      write_file(out.path / "splits.json", take(text));
      std::cout << "wrote " << split_k << " splits of " << n << " nodes to " << (out.path / "splits.json").string()
                << '\n';
      out.timing(seconds_since(t0));
      return kOk;
    }

    if (train->parsed()) {
      GraphPtr g = load_graph(train_data.data);
      const std::size_t n = graph_info(g.get()).at("n").get<std::size_t>();
      SplitsPtr s = train_data.load(n);
      const json model = train_model.to_json();
      const json hyper = train_hyper.to_json();
      out.resolve("train");
      out.echo("train", {{"data", train_data.data},
                         {"splits", train_data.splits.empty() ? json("protocol") : json(train_data.splits)},
                         {"split", train_split},
                         {"model", model},
                         {"hyper", hyper}});
      char* report = nullptr;
      csna_checkpoint* ckpt = nullptr;
      check(csna_train(g.get(), s.get(), train_split, model.dump().c_str(), hyper.dump().c_str(), &report, &ckpt));
      CheckpointPtr owned(ckpt);
      const std::string text = take(report);
      write_file(out.path / "report.json", text);
      check(csna_checkpoint_save(ckpt, (out.path / "checkpoint.json").string().c_str()));
      out.timing(seconds_since(t0));
      const json r = json::parse(text);
      if (r.at("failed").get<bool>()) {
        std::cerr << "training failed: " << r.at("failure").get<std::string>() << '\n';
        return kNumeric;
      }
      std::cout << std::fixed << std::setprecision(4) << "test accuracy " << r.at("test_accuracy").get<double>()
                << " (best val " << r.at("best_val_accuracy").get<double>() << " at epoch "
                << r.at("best_val_epoch").get<std::size_t>() << ")\n";
      return kOk;
    }

    if (tune->parsed()) {
      GraphPtr g = load_graph(tune_data.data);
      const std::size_t n = graph_info(g.get()).at("n").get<std::size_t>();
      SplitsPtr s = tune_data.load(n);
      const json model = tune_model.to_json();
      const json hyper = tune_hyper.to_json();
      json grid = json::object();
      if (!grid_lr.empty()) grid["lr"] = parse_list(grid_lr, "--grid-lr");
      if (!grid_hidden.empty()) {
        std::vector<std::size_t> h;
        for (double v : parse_list(grid_hidden, "--grid-hidden")) {
          if (v < 1 || v != std::floor(v)) throw Failure{kUsage, "--grid-hidden: widths must be positive integers"};
          h.push_back(static_cast<std::size_t>(v));
        }
        grid["hidden"] = h;
      }
      if (!grid_tau.empty()) grid["tau"] = parse_list(grid_tau, "--grid-tau");
      json options = {{"jobs", jobs}};
      if (tune_splits) options["splits"] = tune_splits;
      if (epoch_cap) options["epoch_cap"] = epoch_cap;
      out.resolve("tune");
      out.echo("tune", {{"data", tune_data.data},
                        {"splits", tune_data.splits.empty() ? json("protocol") : json(tune_data.splits)},
                        {"model", model},
                        {"hyper", hyper},
                        {"grid", grid},
                        {"options", options}});
      char* result = nullptr;
      check(csna_tune(g.get(), s.get(), model.dump().c_str(), hyper.dump().c_str(),
                      grid.empty() ? nullptr : grid.dump().c_str(), options.dump().c_str(), &result));
      const std::string text = take(result);
      write_file(out.path / "tune.json", text);
      out.timing(seconds_since(t0));
      const json best = json::parse(text).at("best");
      std::cout << "best: lr " << best.at("lr") << ", hidden " << best.at("hidden") << ", tau " << best.at("tau")
                << '\n';
      return kOk;
    }

    if (bench->parsed()) {
      GraphPtr g = load_graph(bench_data.data);
      const std::size_t n = graph_info(g.get()).at("n").get<std::size_t>();
      SplitsPtr s = bench_data.load(n);
      const json model = bench_model.to_json();
      const json hyper = bench_hyper.to_json();
      out.resolve("benchmark");
      out.echo("benchmark", {{"data", bench_data.data},
                             {"splits", bench_data.splits.empty() ? json("protocol") : json(bench_data.splits)},
                             {"model", model},
                             {"hyper", hyper},
                             {"jobs", jobs}});
      char* report = nullptr;
      char* csv = nullptr;
      check(csna_benchmark(g.get(), s.get(), model.dump().c_str(), hyper.dump().c_str(), jobs, &report, &csv));
      const std::string text = take(report);
      write_file(out.path / "benchmark.json", text);
      write_file(out.path / "benchmark.csv", take(csv));
      out.timing(seconds_since(t0));
      const json r = json::parse(text);
      for (const auto& w : r.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
      std::size_t ok = 0;
      for (const auto& a : r.at("test_accuracies")) ok += a.is_null() ? 0 : 1;
      if (ok == 0) {
        std::cerr << "every split failed\n";
        return kNumeric;
      }
      std::cout << std::fixed << std::setprecision(2) << model.at("kind").get<std::string>() << ": "
                << 100.0 * r.at("mean").get<double>() << " ± " << 100.0 * r.at("std").get<double>() << " over " << ok
                << " splits\n";
      return kOk;
    }

    if (csbm->parsed()) {
      const json params = {{"n", cn}, {"C", cC}, {"p", cp}, {"q", cq}, {"mu", cmu}, {"d", cd}};
      std::vector<double> multiples;
      if (!sweep.empty()) multiples = parse_list(sweep, "--sweep-ratio");
      out.resolve("csbm");
      json echo = {{"params", params}, {"trials", trials}, {"seed", csbm_seed}, {"jobs", jobs}};
      if (sweep.empty()) {
        echo["w_plus"] = w_plus;
        echo["w_minus"] = w_minus;
      } else {
        echo["sweep_multiples"] = multiples;
      }
      out.echo("csbm", echo);
      char* summary = nullptr;
      char* rows = nullptr;
      if (sweep.empty())
        check(csna_csbm_theorem(params.dump().c_str(), w_plus, w_minus, trials, csbm_seed, jobs, &summary, &rows));
      else
        check(csna_csbm_sweep(params.dump().c_str(), multiples.data(), multiples.size(), trials, csbm_seed, jobs,
                              &summary, &rows));
      const std::string text = take(summary);
      write_file(out.path / "csbm_summary.json", text);
      write_file(out.path / "csbm_trials.csv", take(rows));
      const json j = json::parse(text);
      std::cout << std::fixed << std::setprecision(5);
      if (sweep.empty()) {
        const json& r = j.at("report");
        std::cout << "w+ " << r.at("w_plus").get<double>() << "  w- " << r.at("w_minus").get<double>()
                  << "  predicted " << r.at("predicted_factor").get<double>() << "  empirical "
                  << r.at("empirical_factor").get<double>();
        if (!r.at("standard_error").is_null()) std::cout << " ± " << r.at("standard_error").get<double>();
        std::cout << "  (" << r.at("trials") << " trials)\n";
      } else {
        std::cout << "q/p = " << j.at("threshold_q_over_p").get<double>() << '\n';
        std::cout << "multiple    ratio      predicted  empirical  sign match\n";
        for (const auto& r : j.at("sweep")) {
          const int ps = r.at("predicted_sign"), es = r.at("empirical_sign");
          std::cout << std::setw(8) << r.at("multiple_of_q_over_p").get<double>() << "  " << std::setw(9)
                    << r.at("ratio").get<double>() << "  " << std::setw(9) << r.at("predicted_factor").get<double>()
                    << "  " << std::setw(9) << r.at("empirical_factor").get<double>() << "  "
                    << (ps == 0 ? "boundary" : (ps == es ? "yes" : "NO")) << '\n';
        }
      }
      if (!dump.empty()) {
        csna_graph* g = nullptr;
        check(csna_csbm_sample(params.dump().c_str(), csbm_seed, &g));
        GraphPtr owned(g);
        check(csna_graph_save(g, dump.c_str()));
        std::cout << "sampled graph written to " << dump << '\n';
      }
      out.timing(seconds_since(t0));
      return kOk;
    }

    if (diag->parsed()) {
      csna_checkpoint* c = nullptr;
      check(csna_checkpoint_load(ckpt_path.c_str(), &c));
      CheckpointPtr ckpt(c);
      GraphPtr g = load_graph(diag_data.data);
      const std::size_t n = graph_info(g.get()).at("n").get<std::size_t>();
      SplitsPtr s;
      if (scope != "all") s = diag_data.load(n);
      out.resolve("diagnose");
      out.echo("diagnose", {{"checkpoint", ckpt_path},
                            {"data", diag_data.data},
                            {"scope", scope},
                            {"split", diag_split},
                            {"bins", bins}});
      char* report = nullptr;
      char* csv = nullptr;
      check(csna_diagnose(c, g.get(), scope.c_str(), s.get(), diag_split, bins, &report, &csv));
      const std::string text = take(report);
      write_file(out.path / "diagnostics.json", text);
      const json r = json::parse(text);
      if (csv) {
        write_file(out.path / "cost_hist.csv", take(csv));
      }
      if (r.contains("message")) std::cout << r.at("message").get<std::string>() << '\n';
      if (!r.at("auc").is_null()) std::cout << "concordance AUC " << std::fixed << std::setprecision(4) << r.at("auc").get<double>() << '\n';
      for (const auto& l : r.at("layers")) {
        const json& gm = l.at("gate_means");
        std::cout << "layer " << l.at("layer") << " gates con " << gm.at("con").get<double>() << " dis "
                  << gm.at("dis").get<double>() << " self " << gm.at("self").get<double>() << '\n';
      }
      out.timing(seconds_since(t0));
      return kOk;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
