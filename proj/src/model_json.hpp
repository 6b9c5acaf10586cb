#pragma once

#include <json.hpp>

#include "flamekit/network.hpp"

// Shared between the model and ensemble serializers so ensemble files can
// embed member documents directly instead of re-parsing dumped strings.
namespace flamekit::detail {

nlohmann::ordered_json model_to_json(const Mlp& model);
Mlp model_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

}  // namespace flamekit::detail
