#include "krnet/krnet_model.hpp"

#include "krnet/config_io.hpp"
#include "krnet/errors.hpp"
#include "krnet/parallel.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace krnet {

namespace {

constexpr int kChunk = 512;
constexpr const char* kMagic = "krnet-checkpoint 1";

std::pair<int, int> updated_range(int n, int p, int j) {
  // (begin, count) of the updated block of coupling j; the rest is frozen.
  if (p == n) return {0, n};
  return (j % 2 == 0) ? std::pair{n - p, p} : std::pair{0, n - p};
}

}  // namespace

KRnetModel::KRnetModel(FlowConfig config) : config_(std::move(config)) {
  config_.validate();
  const int stages = config_.num_stages();
  const bool single = config_.partition_sizes().size() == 1;
  int index = 0;
  for (int k = 0; k < stages; ++k) {
    const int n = config_.active_dims(k);
    const int p = single ? n : config_.squeezed_dims(k);
    const int width = config_.stage_width(k);
    const std::string stage = "stage" + std::to_string(k);
    if (config_.use_rotation) {
      layers_.push_back(std::make_unique<RotationLayer>(index++, n, params_, stage + "/rotation"));
    }
    for (int j = 0; j < config_.depth; ++j) {
      const std::string block = stage + "/block" + std::to_string(j);
      layers_.push_back(std::make_unique<ScaleBiasLayer>(index++, n, params_, block + "/scale_bias"));
      const auto [ub, uc] = updated_range(n, p, j);
      const int fb = (uc == n) ? 0 : (ub == 0 ? uc : 0);
      const int fc = n - uc;
      layers_.push_back(std::make_unique<AffineCouplingLayer>(index++, n, fb, fc, ub, uc, width, config_.layout,
                                                              config_.activation, config_.alpha, params_,
                                                              block + "/coupling"));
    }
    if (!single) layers_.push_back(std::make_unique<SqueezeLayer>(index++, n, p));
  }
  if (config_.use_nonlinear) {
    layers_.push_back(std::make_unique<NonlinearLayer>(index++, config_.dim, config_.nonlinear_elements,
                                                       config_.nonlinear_half_width, params_, "nonlinear"));
  }
}

void KRnetModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& l : layers_) l->initialize(params_, rng);
}

FlowOutput KRnetModel::forward(ad::Tape& tape, ad::Var x) const {
  if (x.cols() != config_.dim) throw ConfigError("input width does not match the flow dimension");
  const int b = x.batch();
  ad::Var logdet = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(x.channels()) * b, 1), b, x.dirs());
  for (const auto& l : layers_) x = l->forward(tape, params_, x, logdet);
  tape.set_layer(-1);
  return {x, logdet};
}

Matrix KRnetModel::forward_values(const Matrix& x, Vector& logdet) const {
  if (x.cols() != config_.dim) throw ConfigError("input width does not match the flow dimension");
  const Eigen::Index n = x.rows();
  Matrix z(n, x.cols());
  logdet = Vector::Zero(n);
  const std::size_t chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, n - begin);
    Matrix part = x.middleRows(begin, len);
    Vector ld = Vector::Zero(len);
    for (const auto& l : layers_) l->forward_values(params_, part, ld);
    z.middleRows(begin, len) = part;
    logdet.segment(begin, len) = ld;
  });
  return z;
}

Matrix KRnetModel::inverse(const Matrix& z) const {
  if (z.cols() != config_.dim) throw ConfigError("input width does not match the flow dimension");
  Matrix x = z;
  const Eigen::Index n = x.rows();
  const std::size_t chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, n - begin);
    Matrix part = x.middleRows(begin, len);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) (*it)->inverse(params_, part);
    x.middleRows(begin, len) = part;
  });
  return x;
}

void KRnetModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kMagic << '\n' << to_json(config_).dump() << '\n' << "parameters " << params_.size() << '\n';
  char buf[64];
  for (double v : params_.values()) {
    std::snprintf(buf, sizeof buf, "%a\n", v);
    out << buf;
  }
  if (!out) throw IoError("failed while writing checkpoint " + path.string());
}

KRnetModel KRnetModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw IoError("not a checkpoint: " + path.string());
  if (!std::getline(in, line)) throw IoError("truncated checkpoint " + path.string());
  Json cfg;
  try {
    cfg = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint config: " + std::string(e.what()));
  }
  KRnetModel model(flow_config_from_json(cfg));
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "parameters") throw IoError("corrupt checkpoint header");
  if (count != model.params_.size()) {
    throw IoError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                  std::to_string(model.params_.size()));
  }
  std::vector<double> values(count);
  for (auto& v : values) {
    if (!(in >> word)) throw IoError("truncated checkpoint parameters");
    char* end = nullptr;
    v = std::strtod(word.c_str(), &end);
    if (end == word.c_str() || *end != '\0') throw IoError("bad parameter literal '" + word + "'");
  }
  model.params_.assign(values);
  return model;
}

std::size_t dof_formula(const FlowConfig& config) {
  config.validate();
  const std::size_t d = static_cast<std::size_t>(config.dim);
  const std::size_t depth = static_cast<std::size_t>(config.depth);
  std::size_t total = config.use_nonlinear ? static_cast<std::size_t>(config.nonlinear_elements) * d : 0;
  for (int k = 0; k < config.num_stages(); ++k) {
    const std::size_t dk = static_cast<std::size_t>(config.active_dims(k));
    total += stage_network_parameters(config, k, config.stage_width(k));
    if (config.use_rotation) total += dk * dk;
    total += 2 * dk * depth;
  }
  return total;
}

}  // namespace krnet
