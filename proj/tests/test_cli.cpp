#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("csna-cli-" + std::to_string(::getpid()));

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  static int counter = 0;
  const fs::path o = kRoot / ("stdout" + std::to_string(counter)), e = kRoot / ("stderr" + std::to_string(counter));
  ++counter;
  fs::create_directories(kRoot);
  const std::string cmd = std::string(CSNA_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

// Every file of a run directory except timing.json, by name.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "timing.json")
      files[fs::relative(entry.path(), dir).string()] = slurp(entry.path());
  return files;
}

// Small CSBM dataset shared by the tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = kRoot / "data";
    const Run r = cli("csbm --n 80 --p 0.1 --q 0.04 --mu 3 --d 4 --trials 1 --seed 5 --dump " + d.string() +
                      " --out-dir " + (kRoot / "dump-run").string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

void check_rerun(const std::string& name, const std::string& args) {
  const fs::path a = kRoot / (name + "-a"), b = kRoot / (name + "-b");
  const Run ra = cli(args + " --out-dir " + a.string());
  const Run rb = cli(args + " --out-dir " + b.string());
  INFO(name, ": ", ra.err);
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  const auto fa = artifacts(a), fb = artifacts(b);
  CHECK(fa.size() >= 2);
  CHECK(fa.count("config_echo.json") == 1);
  CHECK(fs::exists(a / "timing.json"));
  CHECK(fa == fb);
}

}  // namespace

TEST_CASE("help documents the subcommands and flags") {
  const Run r = cli("--help");
  CHECK(r.code == 0);
  for (const char* sub : {"validate", "splits", "train", "tune", "benchmark", "csbm", "diagnose"})
    CHECK(r.out.find(sub) != std::string::npos);
  const Run t = cli("train --help");
  for (const char* flag : {"--model", "--variant", "--lr", "--hidden", "--tau", "--patience", "--max-epochs", "--seed",
                           "--out-dir", "--lambda-cal", "--edge-sampling"})
    CHECK(t.out.find(flag) != std::string::npos);
  CHECK(cli("train --frobnicate 3").code == 2);
  CHECK(cli("").code == 2);
}

TEST_CASE("validate prints the dataset summary") {
  const Run r = cli("validate --data " + dataset().string());
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["n"] == 80);
  CHECK(j["d"] == 4);
  CHECK(cli("validate --data " + (kRoot / "nope").string()).code != 0);
}

TEST_CASE("every subcommand reruns byte-identically") {
  const std::string data = " --data " + dataset().string();
  check_rerun("splits", "splits --n-from " + dataset().string() + " --k 10 --seed 42");
  const json splits = json::parse(slurp(kRoot / "splits-a" / "splits.json"));
  CHECK(splits["splits"].size() == 10);

  check_rerun("train", "train" + data + " --model csna --variant extended --hidden 8 --max-epochs 20 --patience 5");
  const json echo = json::parse(slurp(kRoot / "train-a" / "config_echo.json"));
  CHECK(echo.dump().find("extended") != std::string::npos);
  CHECK(fs::exists(kRoot / "train-a" / "checkpoint.json"));

  check_rerun("tune", "tune" + data +
                          " --model gcn --hidden 8 --grid-lr 0.01,0.005 --grid-hidden 8 --tune-splits 2 --epoch-cap 5"
                          " --jobs 2");
  check_rerun("benchmark", "benchmark" + data + " --model mlp --hidden 8 --max-epochs 10 --patience 5 --jobs 3");
  check_rerun("csbm", "csbm --n 200 --p 0.05 --q 0.1 --trials 3 --seed 1");
  check_rerun("sweep", "csbm --n 200 --p 0.05 --q 0.1 --trials 2 --sweep-ratio 0.5,1,2");
  check_rerun("diagnose", "diagnose --checkpoint " + (kRoot / "train-a" / "checkpoint.json").string() + data +
                              " --bins 10");
}

TEST_CASE("benchmark prints mean and std and writes k rows") {
  const fs::path out = kRoot / "bench";
  const Run r = cli("benchmark --data " + dataset().string() + " --model mlp --hidden 8 --max-epochs 5 --out-dir " +
                    out.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("mlp: ") != std::string::npos);
  CHECK(r.out.find(" ± ") != std::string::npos);
  CHECK(json::parse(slurp(out / "benchmark.json"))["test_accuracies"].size() == 10);
  const std::string csv = slurp(out / "benchmark.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("csbm echoes the closed-form factor") {
  const fs::path out = kRoot / "thm";
  const Run r = cli("csbm --p 0.01 --q 0.04 --n 400 --trials 2 --out-dir " + out.string());
  REQUIRE(r.code == 0);
  const json j = json::parse(slurp(out / "csbm_summary.json"));
  CHECK(j["report"]["predicted_factor"].get<double>() == doctest::Approx(-0.6));
  CHECK(slurp(out / "csbm_trials.csv").rfind("p,q,w_plus,w_minus,C,n,trial,empirical_factor\n", 0) == 0);
}

TEST_CASE("usage and data errors map to exit codes") {
  const std::string data = " --data " + dataset().string();
  const fs::path out = kRoot / "errs";

  const Run ratios = cli("splits --n 20 --ratios 0.5,0.3,0.3 --out-dir " + out.string());
  CHECK(ratios.code == 2);
  CHECK(ratios.err.find("--ratios") != std::string::npos);

  CHECK(cli("train" + data + " --model gat --out-dir " + out.string()).code == 2);
  CHECK(cli("csbm --p 1.0 --q 0.1 --out-dir " + out.string()).code == 2);
  CHECK(cli("csbm --p 0.1 --q 0 --out-dir " + out.string()).code == 2);
  CHECK(cli("train --data " + (kRoot / "missing").string() + " --out-dir " + out.string()).code != 0);

  // malformed edge line
  const fs::path broken = kRoot / "broken";
  fs::copy(dataset(), broken, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::ofstream(broken / "edges.csv", std::ios::app) << "0,80\n";
  const Run bad = cli("validate --data " + broken.string());
  CHECK(bad.code == 3);
  CHECK(bad.err.find("edges.csv:") != std::string::npos);

  // checkpoint trained on 4 features against a 5-feature graph
  const fs::path other = kRoot / "other";
  REQUIRE(cli("csbm --n 40 --p 0.1 --q 0.1 --d 5 --trials 1 --dump " + other.string() + " --out-dir " +
              (kRoot / "other-run").string())
              .code == 0);
  const fs::path tr = kRoot / "for-diag";
  REQUIRE(cli("train" + data + " --model csna --hidden 8 --max-epochs 3 --out-dir " + tr.string()).code == 0);
  CHECK(cli("diagnose --checkpoint " + (tr / "checkpoint.json").string() + " --data " + other.string() +
            " --out-dir " + out.string())
            .code == 3);
}

TEST_CASE("diagnose on an mlp checkpoint reports absent routing") {
  const fs::path tr = kRoot / "mlp-train";
  REQUIRE(cli("train --data " + dataset().string() + " --model mlp --hidden 8 --max-epochs 3 --out-dir " + tr.string())
              .code == 0);
  const fs::path out = kRoot / "mlp-diag";
  const Run r = cli("diagnose --checkpoint " + (tr / "checkpoint.json").string() + " --data " + dataset().string() +
                    " --out-dir " + out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("no edge routing") != std::string::npos);
  const json j = json::parse(slurp(out / "diagnostics.json"));
  CHECK(j["auc"].is_null());
  CHECK(!fs::exists(out / "cost_hist.csv"));
}

TEST_CASE("default output root comes from the environment") {
  const fs::path root = kRoot / "envroot";
  ::setenv("CSNA_OUTPUT_ROOT", root.c_str(), 1);
  const Run r = cli("splits --n 12 --k 2");
  ::unsetenv("CSNA_OUTPUT_ROOT");
  REQUIRE(r.code == 0);
  std::size_t found = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    CHECK(e.path().filename().string().rfind("splits-", 0) == 0);
    CHECK(fs::exists(e.path() / "splits.json"));
    ++found;
  }
  CHECK(found == 1);
}

TEST_CASE("cleanup") { fs::remove_all(kRoot); }
