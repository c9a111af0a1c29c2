#include "krnet/config_io.hpp"

#include "krnet/errors.hpp"

#include <algorithm>
#include <cstring>

namespace krnet {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

namespace {

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

FlowConfig flow_config_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"dim", "partitions", "num_partitions", "depth", "width", "width_decay", "alpha",
                       "use_rotation", "use_nonlinear", "nonlinear_elements", "nonlinear_half_width",
                       "activation", "layout"},
                      "flow");
  FlowConfig c;
  read(j, "dim", c.dim);
  read(j, "partitions", c.partitions);
  read(j, "num_partitions", c.num_partitions);
  read(j, "depth", c.depth);
  read(j, "width", c.width);
  read(j, "width_decay", c.width_decay);
  read(j, "alpha", c.alpha);
  read(j, "use_rotation", c.use_rotation);
  read(j, "use_nonlinear", c.use_nonlinear);
  read(j, "nonlinear_elements", c.nonlinear_elements);
  read(j, "nonlinear_half_width", c.nonlinear_half_width);
  std::string s;
  if (j.contains("activation")) {
    read(j, "activation", s);
    c.activation = activation_from_string(s);
  }
  if (j.contains("layout")) {
    read(j, "layout", s);
    c.layout = layout_from_string(s);
  }
  c.validate();
  return c;
}

Json to_json(const FlowConfig& c) {
  return Json{{"dim", c.dim},
              {"partitions", c.partition_sizes()},
              {"depth", c.depth},
              {"width", c.width},
              {"width_decay", c.width_decay},
              {"alpha", c.alpha},
              {"use_rotation", c.use_rotation},
              {"use_nonlinear", c.use_nonlinear},
              {"nonlinear_elements", c.nonlinear_elements},
              {"nonlinear_half_width", c.nonlinear_half_width},
              {"activation", to_string(c.activation)},
              {"layout", to_string(c.layout)}};
}

FlowConfig flow_config_from_json(const Json& j, const FlowConfig& base) {
  if (!j.is_object()) throw ConfigError("flow must be a JSON object");
  Json merged = to_json(base);
  if ((j.contains("dim") || j.contains("num_partitions")) && !j.contains("partitions")) merged.erase("partitions");
  merged.update(j);
  return flow_config_from_json(merged);
}

TrainConfig train_config_from_json(const Json& j, const TrainConfig& base) {
  reject_unknown_keys(j,
                      {"collocation", "batch_size", "epochs", "adaptive_steps", "learning_rate", "residual_scale",
                       "box", "seed", "validation_size", "eval_every"},
                      "train");
  TrainConfig c = base;
  read(j, "collocation", c.collocation);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "adaptive_steps", c.adaptive_steps);
  read(j, "learning_rate", c.learning_rate);
  read(j, "residual_scale", c.residual_scale);
  read(j, "seed", c.seed);
  read(j, "validation_size", c.validation_size);
  read(j, "eval_every", c.eval_every);
  if (j.contains("box")) {
    const Json& b = j.at("box");
    c.box.clear();
    // [lo, hi] for every axis, or [[lo, hi], ...] per axis.
    if (b.is_array() && b.size() == 2 && b[0].is_number()) {
      c.box.emplace_back(b[0].get<double>(), b[1].get<double>());
    } else if (b.is_array()) {
      for (const auto& pair : b) {
        if (!pair.is_array() || pair.size() != 2) throw ConfigError("box entries must be [lo, hi] pairs");
        c.box.emplace_back(pair[0].get<double>(), pair[1].get<double>());
      }
    } else {
      throw ConfigError("box must be [lo, hi] or a list of such pairs");
    }
  }
  return c;
}

Json to_json(const TrainConfig& c) {
  Json box = Json::array();
  for (const auto& [lo, hi] : c.box) box.push_back({lo, hi});
  return Json{{"collocation", c.collocation},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"adaptive_steps", c.adaptive_steps},
              {"learning_rate", c.learning_rate},
              {"residual_scale", c.residual_scale},
              {"box", box},
              {"seed", c.seed},
              {"validation_size", c.validation_size},
              {"eval_every", c.eval_every}};
}

}  // namespace krnet
