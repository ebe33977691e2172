#pragma once

#include <string>

#include <json.hpp>

#include "tsprobe/synthgen.hpp"

namespace tsprobe {

nlohmann::json to_json(const ConceptSpec& spec);
/// `where` prefixes error messages (e.g. "concepts[2]").
ConceptSpec concept_spec_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json provenance_json(const Provenance& provenance);
std::string provenance_comment(const Provenance& provenance);

}  // namespace tsprobe
