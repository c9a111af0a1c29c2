#include "krnet/parameter_store.hpp"

#include "krnet/errors.hpp"

#include <algorithm>

namespace krnet {

int ParameterStore::add(std::string name, int rows, int cols, int layer) {
  if (rows < 0 || cols < 0) throw ConfigError("negative parameter block shape for " + name);
  if (index_.contains(name)) throw ConfigError("duplicate parameter block " + name);
  ParamBlock b{std::move(name), values_.size(), rows, cols, layer};
  values_.resize(values_.size() + b.size(), 0.0);
  const int id = static_cast<int>(blocks_.size());
  index_.emplace(b.name, id);
  blocks_.push_back(std::move(b));
  return id;
}

std::optional<int> ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Map<Matrix> ParameterStore::block(int b) {
  const auto& i = info(b);
  return {values_.data() + i.offset, i.rows, i.cols};
}

Eigen::Map<const Matrix> ParameterStore::block(int b) const {
  const auto& i = info(b);
  return {values_.data() + i.offset, i.rows, i.cols};
}

void ParameterStore::assign(std::span<const double> flat) {
  if (flat.size() != values_.size()) {
    throw ConfigError("parameter vector has " + std::to_string(flat.size()) + " entries, store has " +
                      std::to_string(values_.size()));
  }
  std::copy(flat.begin(), flat.end(), values_.begin());
}

std::size_t ParameterStore::copy_matching(const ParameterStore& other) {
  std::size_t copied = 0;
  for (const auto& ob : other.blocks_) {
    auto here = find(ob.name);
    if (!here) continue;
    const auto& hb = blocks_[static_cast<std::size_t>(*here)];
    if (hb.rows != ob.rows || hb.cols != ob.cols) continue;
    std::copy_n(other.values_.begin() + static_cast<std::ptrdiff_t>(ob.offset), ob.size(),
                values_.begin() + static_cast<std::ptrdiff_t>(hb.offset));
    copied += ob.size();
  }
  return copied;
}

}  // namespace krnet
