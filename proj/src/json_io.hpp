#pragma once

// nlohmann::json bindings for configuration and report types. Readers fill
// missing keys with defaults and reject unknown keys.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "csbm.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace csna {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);
void to_json(nlohmann::json& j, const TrainHyper& h);
void from_json(const nlohmann::json& j, TrainHyper& h);
void to_json(nlohmann::json& j, const CsbmParams& p);
void from_json(const nlohmann::json& j, CsbmParams& p);

/// Throws Contract naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& what);

/// Parses text into JSON, mapping syntax errors to Parse.
nlohmann::json parse_json(const std::string& text, const std::string& what);

}  // namespace csna
