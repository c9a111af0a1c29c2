#pragma once

#include "krnet/flow_config.hpp"
#include "krnet/fp_solver.hpp"

#include <json.hpp>

namespace krnet {

using Json = nlohmann::json;

/// Unknown keys are rejected so that typos surface as configuration errors.
FlowConfig flow_config_from_json(const Json& j);
Json to_json(const FlowConfig& c);
/// Keys of `j` override `base`. Overriding dim or num_partitions without
/// listing partitions drops the partitions of `base`.
FlowConfig flow_config_from_json(const Json& j, const FlowConfig& base);

TrainConfig train_config_from_json(const Json& j, const TrainConfig& base = {});
Json to_json(const TrainConfig& c);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace krnet
