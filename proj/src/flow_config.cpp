#include "krnet/flow_config.hpp"

#include "krnet/errors.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace krnet {

namespace {

/// (frozen, updated) sizes of coupling j in a stage with n active dims whose
/// last partition has p dims.
std::pair<int, int> coupling_split(int n, int p, int j) {
  if (p == n) return {0, n};
  return (j % 2 == 0) ? std::pair{n - p, p} : std::pair{p, n - p};
}

}  // namespace

std::vector<int> FlowConfig::partition_sizes() const {
  if (!partitions.empty()) return partitions;
  if (num_partitions < 1 || num_partitions > dim) {
    throw ConfigError("number of partitions must lie in [1, dim]");
  }
  std::vector<int> sizes(static_cast<std::size_t>(num_partitions), dim / num_partitions);
  for (int i = 0; i < dim % num_partitions; ++i) sizes[static_cast<std::size_t>(i)] += 1;
  return sizes;
}

void FlowConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  const auto sizes = partition_sizes();
  if (sizes.empty() || static_cast<int>(sizes.size()) > dim) throw ConfigError("need 1 <= K <= d partitions");
  for (int s : sizes) {
    if (s < 1) throw ConfigError("partition sizes must be positive");
  }
  if (std::accumulate(sizes.begin(), sizes.end(), 0) != dim) throw ConfigError("partition sizes must sum to dim");
  if (depth < 0) throw ConfigError("depth must be >= 0");
  if (width < 1) throw ConfigError("width must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(width_decay > 0.0 && width_decay <= 1.0)) throw ConfigError("width decay must lie in (0, 1]");
  if (nonlinear_elements < 1) throw ConfigError("nonlinear layer needs at least one element");
  if (!(nonlinear_half_width > 0.0)) throw ConfigError("nonlinear half-width must be positive");
}

int FlowConfig::num_stages() const {
  const int k = static_cast<int>(partition_sizes().size());
  return k == 1 ? 1 : k - 1;
}

int FlowConfig::active_dims(int stage) const {
  const auto sizes = partition_sizes();
  const int k = static_cast<int>(sizes.size());
  if (k == 1) return dim;
  int n = 0;
  for (int i = 0; i < k - stage; ++i) n += sizes[static_cast<std::size_t>(i)];
  return n;
}

int FlowConfig::squeezed_dims(int stage) const {
  const auto sizes = partition_sizes();
  const int k = static_cast<int>(sizes.size());
  if (k == 1) return 0;
  return sizes[static_cast<std::size_t>(k - 1 - stage)];
}

std::size_t coupling_parameter_count(int conditioner_dims, int updated_dims, int width, NetLayout layout) {
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t in = static_cast<std::size_t>(conditioner_dims);
  const std::size_t u = static_cast<std::size_t>(updated_dims);
  const std::size_t w = static_cast<std::size_t>(width);
  std::size_t n = 0;
  std::size_t last = 0;
  if (layout == NetLayout::two_layer) {
    n += dense(in, w) + dense(w, w);
    last = w;
  } else {
    const std::size_t h = std::max<std::size_t>(w / 2, 1);
    n += dense(in, w) + dense(w, h) + dense(h, h) + dense(h, w);
    last = w;
  }
  n += dense(last, 2 * u);  // head producing (s, t)
  n += u;                   // beta
  return n;
}

std::size_t stage_network_parameters(const FlowConfig& config, int stage, int width) {
  const int n = config.active_dims(stage);
  const int p = config.partition_sizes().size() == 1 ? n : config.squeezed_dims(stage);
  std::size_t total = 0;
  for (int j = 0; j < config.depth; ++j) {
    const auto [frozen, updated] = coupling_split(n, p, j);
    total += coupling_parameter_count(frozen, updated, width, config.layout);
  }
  return total;
}

int FlowConfig::stage_width(int stage) const {
  if (stage == 0 || width_decay == 1.0) return width;
  const double target = std::pow(width_decay, stage) * static_cast<double>(stage_network_parameters(*this, 0, width));
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int w = 1; w <= 4 * width; ++w) {
    const double gap = std::abs(static_cast<double>(stage_network_parameters(*this, stage, w)) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = w;
    }
  }
  return best;
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(NetLayout l) { return l == NetLayout::two_layer ? "two_layer" : "wide_narrow"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

NetLayout layout_from_string(const std::string& s) {
  if (s == "two_layer") return NetLayout::two_layer;
  if (s == "wide_narrow") return NetLayout::wide_narrow;
  throw ConfigError("unknown network layout '" + s + "'");
}

}  // namespace krnet
