#include "json_io.hpp"

#include <algorithm>

#include "errors.hpp"

namespace csna {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  require(j.is_object(), ErrorKind::Parse, what + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    require(known, ErrorKind::Contract, what + ": unknown key '" + key + "'");
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, what + ": " + e.what());
  }
}

namespace {

template <class V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"layers", c.layers},
       {"dropout", c.dropout},
       {"variant", to_string(c.variant)},
       {"edge_sampling_rate", c.edge_sampling_rate},
       {"normalization", to_string(c.normalization)},
       {"lambda_cal", c.lambda_cal},
       {"precision", to_string(c.precision)}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown_keys(j,
                      {"kind", "layers", "dropout", "variant", "edge_sampling_rate", "normalization", "lambda_cal",
                       "precision"},
                      "model config");
  std::string s;
  if (j.contains("kind")) {
    read(j, "kind", s);
    c.kind = parse_model_kind(s);
  }
  if (j.contains("variant")) {
    read(j, "variant", s);
    c.variant = parse_variant(s);
  }
  if (j.contains("normalization")) {
    read(j, "normalization", s);
    c.normalization = parse_normalization(s);
  }
  if (j.contains("precision")) {
    read(j, "precision", s);
    c.precision = parse_precision(s);
  }
  read(j, "layers", c.layers);
  read(j, "dropout", c.dropout);
  read(j, "edge_sampling_rate", c.edge_sampling_rate);
  read(j, "lambda_cal", c.lambda_cal);
}

void to_json(json& j, const Architecture& a) {
  j = {{"input_dim", a.input_dim}, {"hidden", a.hidden}, {"num_classes", a.num_classes}, {"tau", a.tau}};
}

void from_json(const json& j, Architecture& a) {
  reject_unknown_keys(j, {"input_dim", "hidden", "num_classes", "tau"}, "architecture");
  read(j, "input_dim", a.input_dim);
  read(j, "hidden", a.hidden);
  read(j, "num_classes", a.num_classes);
  read(j, "tau", a.tau);
}

void to_json(json& j, const TrainHyper& h) {
  j = {{"lr", h.lr},
       {"hidden", h.hidden},
       {"tau", h.tau},
       {"weight_decay", h.weight_decay},
       {"patience", h.patience},
       {"max_epochs", h.max_epochs},
       {"seed", h.seed}};
}

void from_json(const json& j, TrainHyper& h) {
  reject_unknown_keys(j, {"lr", "hidden", "tau", "weight_decay", "patience", "max_epochs", "seed"}, "hyper");
  read(j, "lr", h.lr);
  read(j, "hidden", h.hidden);
  read(j, "tau", h.tau);
  read(j, "weight_decay", h.weight_decay);
  read(j, "patience", h.patience);
  read(j, "max_epochs", h.max_epochs);
  read(j, "seed", h.seed);
}

void to_json(json& j, const CsbmParams& p) {
  j = {{"n", p.n}, {"C", p.num_classes}, {"p", p.p}, {"q", p.q}, {"mu", p.mu}, {"d", p.d}};
}

void from_json(const json& j, CsbmParams& p) {
  reject_unknown_keys(j, {"n", "C", "p", "q", "mu", "d"}, "csbm params");
  read(j, "n", p.n);
  read(j, "C", p.num_classes);
  read(j, "p", p.p);
  read(j, "q", p.q);
  read(j, "mu", p.mu);
  read(j, "d", p.d);
}

}  // namespace csna
