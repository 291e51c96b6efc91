#pragma once

#include <pathmed/learners.hpp>

#include <json.hpp>

namespace pathmed::detail {

nlohmann::json model_to_json(const BasisModel& model);
BasisModel model_from_json(const nlohmann::json& j);

} // namespace pathmed::detail
