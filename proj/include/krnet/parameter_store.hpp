#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace krnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named, column-major block of trainable scalars inside the flat store.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  int layer = -1;  ///< index of the owning flow layer, -1 if none

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Flat, enumerable collection of every trainable scalar of a model.
///
/// Blocks are appended in construction order; the flat order is the
/// concatenation of blocks, each block column-major. Gradients produced by
/// the tape use the same layout.
class ParameterStore {
 public:
  /// Appends a zero-initialized block and returns its index.
  int add(std::string name, int rows, int cols, int layer = -1);

  std::size_t size() const { return values_.size(); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const ParamBlock& info(int block) const { return blocks_.at(static_cast<std::size_t>(block)); }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::optional<int> find(std::string_view name) const;

  Eigen::Map<Matrix> block(int b);
  Eigen::Map<const Matrix> block(int b) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  void assign(std::span<const double> flat);

  /// Copies every block of `other` whose name and shape match a block here.
  /// Returns the number of scalars copied.
  std::size_t copy_matching(const ParameterStore& other);

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<double> values_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace krnet
