#pragma once

#include <string>
#include <vector>

namespace krnet {

enum class Activation { tanh, relu };

/// Hidden layout of the coupling networks.
///  two_layer   : in -> w -> w (activated) -> head
///  wide_narrow : in -> w -> w/2 -> w/2 (activated) -> w (linear) -> head
enum class NetLayout { two_layer, wide_narrow };

struct FlowConfig {
  int dim = 2;
  /// Partition sizes x^(1), ..., x^(K); when empty, `num_partitions` equal
  /// blocks are used, with any remainder spread over the leading blocks.
  std::vector<int> partitions;
  int num_partitions = 2;
  /// Affine couplings (each preceded by a scale-and-bias layer) per outer stage.
  int depth = 8;
  int width = 48;
  /// Coupling-network size of stage k is width_decay^(k-1) times stage 1.
  double width_decay = 1.0;
  double alpha = 0.6;
  bool use_rotation = true;
  bool use_nonlinear = true;
  int nonlinear_elements = 32;
  double nonlinear_half_width = 30.0;
  Activation activation = Activation::tanh;
  NetLayout layout = NetLayout::two_layer;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  std::vector<int> partition_sizes() const;
  int num_stages() const;
  /// Number of active dimensions entering outer stage `stage` (0-based).
  int active_dims(int stage) const;
  /// Width of the last partition deactivated after `stage`; 0 when K == 1.
  int squeezed_dims(int stage) const;
  /// Hidden width of the coupling networks of `stage`.
  int stage_width(int stage) const;
};

/// Scalars in one coupling layer: network plus the e^beta vector.
std::size_t coupling_parameter_count(int conditioner_dims, int updated_dims, int width, NetLayout layout);

/// Total coupling-network scalars of one outer stage at a given width.
std::size_t stage_network_parameters(const FlowConfig& config, int stage, int width);

std::string to_string(Activation a);
std::string to_string(NetLayout l);
Activation activation_from_string(const std::string& s);
NetLayout layout_from_string(const std::string& s);

}  // namespace krnet
