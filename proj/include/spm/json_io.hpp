#pragma once

#include "json.hpp"
#include "spm/data.hpp"
#include "spm/model.hpp"

namespace spm {

using nlohmann::json;

json arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const json& j);

json domain_to_json(const DomainSpec& d);
DomainSpec domain_from_json(const json& j);

}  // namespace spm
