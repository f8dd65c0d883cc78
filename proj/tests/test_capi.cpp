#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include <unistd.h>

#include <csna/csna.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Takes ownership of a library string.
std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  csna_string_free(s);
  return out;
}

struct Handles {
  csna_graph* g = nullptr;
  csna_splits* s = nullptr;
  ~Handles() {
    csna_graph_free(g);
    csna_splits_free(s);
  }
};

const char* kCsbm = R"({"n": 120, "C": 2, "p": 0.08, "q": 0.03, "mu": 3.0, "d": 5})";
const char* kHyper = R"({"hidden": 8, "max_epochs": 15, "patience": 5, "seed": 2})";

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("csna-capi-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("version, status names, null handling") {
  CHECK(std::string(csna_version()).size() > 0);
  CHECK(std::string(csna_status_name(CSNA_OK)) == "ok");
  CHECK(std::string(csna_status_name(CSNA_ERR_NUMERIC)) == "numeric error");
  csna_graph_free(nullptr);
  csna_splits_free(nullptr);
  csna_checkpoint_free(nullptr);
  csna_string_free(nullptr);
  CHECK(csna_splits_count(nullptr) == 0);

  csna_graph* g = nullptr;
  CHECK(csna_graph_load(nullptr, &g) == CSNA_ERR_INVALID_ARGUMENT);
  CHECK(std::string(csna_last_error()).find("null") != std::string::npos);
  CHECK(csna_csbm_sample(kCsbm, 1, nullptr) == CSNA_ERR_INVALID_ARGUMENT);
  char* out = nullptr;
  CHECK(csna_graph_info(nullptr, &out) == CSNA_ERR_INVALID_ARGUMENT);
  CHECK(out == nullptr);
}

TEST_CASE("errors map to statuses and set last_error") {
  csna_graph* g = nullptr;
  CHECK(csna_graph_load("/nonexistent/csna", &g) == CSNA_ERR_IO);
  CHECK(g == nullptr);
  CHECK(std::string(csna_last_error()).size() > 0);
  CHECK(csna_csbm_sample("{\"n\": ", 1, &g) == CSNA_ERR_PARSE);
  CHECK(csna_csbm_sample(R"({"n": 10, "p": 2.0})", 1, &g) == CSNA_ERR_CONTRACT);
  CHECK(csna_csbm_sample(R"({"bogus": 1})", 1, &g) == CSNA_ERR_CONTRACT);
  CHECK(std::string(csna_last_error()).find("bogus") != std::string::npos);

  double f = 0.0;
  CHECK(csna_csbm_predicted_factor(0.01, 0.04, 1, 1, 2, &f) == CSNA_OK);
  CHECK(f == doctest::Approx(-0.6));
  CHECK(csna_csbm_predicted_factor(0.01, 0.04, 0, 0, 2, &f) == CSNA_ERR_CONTRACT);

  const double bad[3] = {0.5, 0.5, 0.5};
  csna_splits* s = nullptr;
  CHECK(csna_splits_generate(10, bad, 1, 1, &s) == CSNA_ERR_CONTRACT);
  CHECK(s == nullptr);
}

TEST_CASE("graph and splits round trips") {
  Handles h;
  REQUIRE(csna_csbm_sample(kCsbm, 7, &h.g) == CSNA_OK);
  char* info = nullptr;
  REQUIRE(csna_graph_info(h.g, &info) == CSNA_OK);
  const json j = json::parse(take(info));
  CHECK(j["n"] == 120);
  CHECK(j["d"] == 5);
  CHECK(j["C"] == 2);

  const fs::path dir = scratch("graph");
  REQUIRE(csna_graph_save(h.g, dir.c_str()) == CSNA_OK);
  csna_graph* back = nullptr;
  REQUIRE(csna_graph_load(dir.c_str(), &back) == CSNA_OK);
  char* info2 = nullptr;
  REQUIRE(csna_graph_info(back, &info2) == CSNA_OK);
  CHECK(json::parse(take(info2))["undirected_edges"] == j["undirected_edges"]);
  csna_graph_free(back);
  fs::remove_all(dir);

  REQUIRE(csna_splits_generate(120, nullptr, 4, 42, &h.s) == CSNA_OK);
  CHECK(csna_splits_count(h.s) == 4);
  CHECK(csna_splits_validate(h.s, 120) == CSNA_OK);
  CHECK(csna_splits_validate(h.s, 50) == CSNA_ERR_INDEX);
  char* text = nullptr;
  REQUIRE(csna_splits_to_json(h.s, &text) == CSNA_OK);
  const std::string first = take(text);
  csna_splits* again = nullptr;
  REQUIRE(csna_splits_from_json(first.c_str(), &again) == CSNA_OK);
  REQUIRE(csna_splits_to_json(again, &text) == CSNA_OK);
  CHECK(take(text) == first);
  csna_splits_free(again);
}

TEST_CASE("train, checkpoint, diagnose") {
  Handles h;
  REQUIRE(csna_csbm_sample(kCsbm, 7, &h.g) == CSNA_OK);
  REQUIRE(csna_splits_generate(120, nullptr, 2, 42, &h.s) == CSNA_OK);

  char* report = nullptr;
  csna_checkpoint* ck = nullptr;
  REQUIRE(csna_train(h.g, h.s, 0, R"({"variant": "extended"})", kHyper, &report, &ck) == CSNA_OK);
  const json r = json::parse(take(report));
  CHECK(r["failed"] == false);
  CHECK(r["config"]["variant"] == "extended");
  CHECK(r["config"]["lambda_cal"] == 0.1);
  CHECK(r["test_evaluations"] == 1);

  char* again = nullptr;
  REQUIRE(csna_train(h.g, h.s, 0, R"({"variant": "extended"})", kHyper, &again, nullptr) == CSNA_OK);
  CHECK(json::parse(take(again)) == r);

  CHECK(csna_train(h.g, h.s, 5, nullptr, kHyper, &report, nullptr) == CSNA_ERR_INDEX);
  CHECK(csna_train(h.g, h.s, 0, R"({"kind": "gat"})", kHyper, &report, nullptr) == CSNA_ERR_CONTRACT);

  const fs::path path = scratch("ck");
  fs::create_directories(path);
  const std::string file = (path / "ck.json").string();
  REQUIRE(csna_checkpoint_save(ck, file.c_str()) == CSNA_OK);
  csna_checkpoint* loaded = nullptr;
  REQUIRE(csna_checkpoint_load(file.c_str(), &loaded) == CSNA_OK);
  char *a = nullptr, *b = nullptr;
  REQUIRE(csna_checkpoint_logits(ck, h.g, &a) == CSNA_OK);
  REQUIRE(csna_checkpoint_logits(loaded, h.g, &b) == CSNA_OK);
  const json la = json::parse(take(a));
  CHECK(la.size() == 120);
  CHECK(la == json::parse(take(b)));

  char *diag = nullptr, *csv = nullptr;
  REQUIRE(csna_diagnose(loaded, h.g, "held-out", h.s, 0, 10, &diag, &csv) == CSNA_OK);
  const json d = json::parse(take(diag));
  CHECK(d["edge_scope"] == "held-out");
  CHECK(d["layers"].size() == 2);
  CHECK(take(csv).rfind("bin,same_count,diff_count", 0) == 0);
  CHECK(csna_diagnose(loaded, h.g, "held-out", nullptr, 0, 10, &diag, &csv) == CSNA_ERR_CONTRACT);
  CHECK(csna_diagnose(loaded, h.g, "sideways", h.s, 0, 10, &diag, &csv) != CSNA_OK);

  csna_graph* other = nullptr;
  REQUIRE(csna_csbm_sample(R"({"n": 20, "d": 3, "p": 0.2, "q": 0.1})", 1, &other) == CSNA_OK);
  CHECK(csna_checkpoint_logits(ck, other, &a) == CSNA_ERR_DIMENSION);
  csna_graph_free(other);

  csna_checkpoint_free(ck);
  csna_checkpoint_free(loaded);
  fs::remove_all(path);
}

TEST_CASE("tune and benchmark") {
  Handles h;
  REQUIRE(csna_csbm_sample(kCsbm, 7, &h.g) == CSNA_OK);
  REQUIRE(csna_splits_generate(120, nullptr, 3, 42, &h.s) == CSNA_OK);
  char* result = nullptr;
  REQUIRE(csna_tune(h.g, h.s, R"({"kind": "gcn"})", kHyper, R"({"lr": [0.01, 0.005], "hidden": [8]})",
                    R"({"splits": 2, "epoch_cap": 5, "jobs": 2})", &result) == CSNA_OK);
  const json t = json::parse(take(result));
  CHECK(t["cells"].size() == 2);
  CHECK(t["best"]["max_epochs"] == 15);

  char *js = nullptr, *csv = nullptr;
  REQUIRE(csna_benchmark(h.g, h.s, R"({"kind": "mlp"})", kHyper, 2, &js, &csv) == CSNA_OK);
  const json b = json::parse(take(js));
  CHECK(b["test_accuracies"].size() == 3);
  const std::string rows = take(csv);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 4);
}

TEST_CASE("csbm theorem and sweep") {
  char *js = nullptr, *csv = nullptr;
  const char* params = R"({"n": 400, "p": 0.02, "q": 0.06})";
  REQUIRE(csna_csbm_theorem(params, 1, 1, 3, 42, 1, &js, &csv) == CSNA_OK);
  const json t = json::parse(take(js));
  CHECK(t["report"]["predicted_factor"].get<double>() == doctest::Approx(-0.5));
  CHECK(t["report"]["trials"] == 3);
  take(csv);
  const double multiples[] = {0.5, 1.0, 2.0};
  REQUIRE(csna_csbm_sweep(params, multiples, 3, 2, 42, 1, &js, &csv) == CSNA_OK);
  CHECK(json::parse(take(js))["sweep"].size() == 3);
  take(csv);
  CHECK(csna_csbm_sweep(params, nullptr, 3, 2, 42, 1, &js, &csv) == CSNA_ERR_INVALID_ARGUMENT);
}
