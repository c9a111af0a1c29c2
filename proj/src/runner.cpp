#include "krnet/runner.hpp"

#include "krnet/errors.hpp"
#include "krnet/estimate.hpp"
#include "krnet/parallel.hpp"
#include "krnet/problems.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#ifndef KRNET_VERSION
#define KRNET_VERSION "0.1.0"
#endif

namespace krnet {

namespace fs = std::filesystem;

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// CSV file written row by row so that long runs leave partial results.
class CsvStream {
 public:
  CsvStream(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed on " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed on " + path.string());
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string require_string(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(std::string(where) + " needs '" + key + "'");
  return get_or<std::string>(j, key, "");
}

std::vector<std::string> axis_names(int d, const std::string& prefix = "x") {
  std::vector<std::string> names;
  for (int k = 0; k < d; ++k) names.push_back(prefix + std::to_string(k));
  return names;
}

/// Per-axis values from a scalar or a list of length d.
std::vector<double> per_axis(const Json& j, const char* key, int d, double fallback) {
  std::vector<double> v(static_cast<std::size_t>(d), fallback);
  if (!j.contains(key)) return v;
  const Json& x = j.at(key);
  if (x.is_number()) {
    std::fill(v.begin(), v.end(), x.get<double>());
  } else if (x.is_array() && x.size() == static_cast<std::size_t>(d)) {
    for (int k = 0; k < d; ++k) v[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)].get<double>();
  } else {
    throw ConfigError(std::string("'") + key + "' must be a number or a list with one entry per dimension");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Data sets for density estimation.

struct DataSet {
  Matrix train;
  Matrix validation;
  Vector validation_ref;  ///< empty without a reference density
  Json info;
};

std::unique_ptr<LogisticHoleDataset> logistic_from_json(const Json& j) {
  return std::make_unique<LogisticHoleDataset>(get_or(j, "dim", 8), get_or(j, "gamma", 3.0), get_or(j, "hole", 7.6),
                                               get_or(j, "scale", 2.0));
}

DataSet load_data(const Json& j, std::uint64_t seed) {
  const std::string kind = get_or<std::string>(j, "kind", "logistic_hole");
  DataSet ds;
  if (kind == "logistic_hole") {
    reject_unknown_keys(j,
                        {"kind", "dim", "gamma", "hole", "scale", "train_size", "validation_size",
                         "acceptance_draws", "dump"},
                        "data");
    auto lh = logistic_from_json(j);
    auto d = make_logistic_hole_data(*lh, get_or<std::size_t>(j, "train_size", 20000),
                                     get_or<std::size_t>(j, "validation_size", 20000),
                                     get_or<std::size_t>(j, "acceptance_draws", 1000000), seed);
    ds.train = std::move(d.train);
    ds.validation = std::move(d.validation);
    ds.validation_ref = std::move(d.validation_ref);
    ds.info = {{"kind", kind}, {"acceptance", d.acceptance}, {"ref_entropy", -ds.validation_ref.mean()}};
  } else if (kind == "csv") {
    reject_unknown_keys(j, {"kind", "path", "validation_fraction", "dump"}, "data");
    const Matrix all = read_csv(require_string(j, "path", "csv data"));
    const double frac = get_or(j, "validation_fraction", 0.2);
    if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("validation_fraction must lie in (0, 1)");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(all.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed + 13);
    std::shuffle(order.begin(), order.end(), rng);
    const auto nv = static_cast<Eigen::Index>(frac * static_cast<double>(all.rows()));
    if (nv < 2 || all.rows() - nv < 1) throw ConfigError("csv data set too small to split");
    ds.validation.resize(nv, all.cols());
    ds.train.resize(all.rows() - nv, all.cols());
    for (Eigen::Index i = 0; i < all.rows(); ++i) {
      if (i < nv) {
        ds.validation.row(i) = all.row(order[static_cast<std::size_t>(i)]);
      } else {
        ds.train.row(i - nv) = all.row(order[static_cast<std::size_t>(i)]);
      }
    }
    ds.info = {{"kind", kind}, {"rows", all.rows()}};
  } else {
    throw ConfigError("unknown data kind '" + kind + "' (expected logistic_hole or csv)");
  }
  return ds;
}

// ---------------------------------------------------------------------------

struct Context {
  const RunOptions& options;
  std::uint64_t seed;
  Json outputs = Json::array();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return options.out / name;
  }
  void log(const std::string& line) const {
    if (options.log) *options.log << line << std::endl;
  }
};

Json run_estimate(const Json& cfg, Context& ctx) {
  reject_unknown_keys(cfg, {"data", "flow", "stages", "batch_size", "learning_rate", "seed"}, "estimate config");
  const Json data_cfg = cfg.value("data", Json::object());
  DataSet data = load_data(data_cfg, ctx.seed);
  if (get_or(data_cfg, "dump", false)) {
    write_csv(ctx.file("data_train.csv"), axis_names(static_cast<int>(data.train.cols())), data.train);
    write_csv(ctx.file("data_validation.csv"), axis_names(static_cast<int>(data.validation.cols())),
              data.validation);
  }

  EstimateConfig ec = ablation_defaults();
  FlowConfig base = ec.flow;
  if (base.dim != data.train.cols()) {
    base.dim = static_cast<int>(data.train.cols());
    base.partitions.clear();
    base.num_partitions = std::min(2, base.dim);
  }
  ec.flow = flow_config_from_json(cfg.value("flow", Json::object()), base);
  if (ec.flow.dim != data.train.cols()) throw ConfigError("flow dim does not match the data");
  if (cfg.contains("stages")) {
    ec.stages.clear();
    for (const auto& s : cfg.at("stages")) {
      reject_unknown_keys(s, {"epochs", "rotation", "nonlinear"}, "stage");
      ec.stages.push_back({get_or(s, "epochs", 0), get_or(s, "rotation", false), get_or(s, "nonlinear", false)});
    }
  }
  ec.batch_size = get_or(cfg, "batch_size", ec.batch_size);
  ec.learning_rate = get_or(cfg, "learning_rate", ec.learning_rate);
  ec.seed = ctx.seed;
  ec.validate();

  CsvStream epochs(ctx.file("epochs.csv"), {"stage", "epoch", "loss", "cross_entropy", "kl", "delta"});
  EstimateHooks hooks;
  hooks.on_epoch = [&](const EstimateEpoch& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    epochs.row({double(e.stage), double(e.epoch), e.loss, e.cross_entropy, e.has_reference ? e.kl : nan,
                e.has_reference ? e.delta : nan});
  };
  hooks.on_stage = [&](const EstimateStageResult& s, const KRnetModel& m) {
    m.save(ctx.file("stage_" + std::to_string(s.stage) + ".ckpt"));
    std::ostringstream os;
    os << "stage " << s.stage << " parameters " << s.parameters << " min_cross_entropy " << s.min_cross_entropy;
    if (data.validation_ref.size() > 0) os << " min_delta " << s.min_delta;
    ctx.log(os.str());
  };
  const EstimateResult r = run_staged_estimate(ec, data.train, data.validation, data.validation_ref, hooks);
  r.model->save(ctx.file("model.ckpt"));

  Matrix stages(static_cast<Eigen::Index>(r.stages.size()), 8);
  Json summary_stages = Json::array();
  for (std::size_t i = 0; i < r.stages.size(); ++i) {
    const auto& s = r.stages[i];
    stages.row(static_cast<Eigen::Index>(i)) << s.stage, s.rotation, s.nonlinear, double(s.parameters),
        double(s.transferred), s.min_cross_entropy, s.min_delta, s.best_epoch;
    summary_stages.push_back({{"stage", s.stage},
                              {"rotation", s.rotation},
                              {"nonlinear", s.nonlinear},
                              {"parameters", s.parameters},
                              {"min_cross_entropy", s.min_cross_entropy},
                              {"min_delta", s.min_delta}});
  }
  write_csv(ctx.file("stages.csv"),
            {"stage", "rotation", "nonlinear", "parameters", "transferred", "min_cross_entropy", "min_delta",
             "best_epoch"},
            stages);
  Json resolved = {{"flow", to_json(ec.flow)}, {"batch_size", ec.batch_size}, {"learning_rate", ec.learning_rate}};
  return {{"data", data.info}, {"stages", summary_stages}, {"resolved", resolved}};
}

Json metrics_json(const Metrics& m) {
  return {{"kl", m.kl},
          {"kl_stderr", m.kl_stderr},
          {"cross_entropy", m.cross_entropy},
          {"ref_entropy", m.ref_entropy},
          {"delta", m.delta},
          {"samples", m.samples}};
}

Json run_solve_fp(const Json& cfg, Context& ctx) {
  reject_unknown_keys(cfg, {"problem", "flow", "train", "seed"}, "solve-fp config");
  const auto& entry = catalog_entry(require_string(cfg, "problem", "solve-fp config"));
  const FlowConfig fc = flow_config_from_json(cfg.value("flow", Json::object()), entry.flow);
  TrainConfig tc = train_config_from_json(cfg.value("train", Json::object()), entry.train);
  tc.seed = ctx.seed;
  tc.validate(entry.problem.dim);
  KRnetModel model(fc);
  model.initialize(ctx.seed);
  ctx.log(entry.problem.name + ": " + std::to_string(model.count_parameters()) + " parameters");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  CsvStream epochs(ctx.file("epochs.csv"), {"iteration", "epoch", "loss", "kl", "kl_stderr", "delta", "wall_seconds"});
  CsvStream steps(ctx.file("steps.csv"),
                  {"iteration", "kl", "kl_stderr", "cross_entropy", "ref_entropy", "delta", "redrawn", "final_loss"});
  fs::create_directories(ctx.options.out / "checkpoints");
  AddaHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    const bool m = e.has_metrics;
    epochs.row({double(e.iteration), double(e.epoch), e.loss, m ? e.metrics.kl : nan, m ? e.metrics.kl_stderr : nan,
                m ? e.metrics.delta : nan, e.wall_seconds});
  };
  Json step_summary = Json::array();
  hooks.on_step = [&](const StepRecord& s, const KRnetModel& m) {
    const bool h = s.has_metrics;
    steps.row({double(s.iteration), h ? s.metrics.kl : nan, h ? s.metrics.kl_stderr : nan,
               h ? s.metrics.cross_entropy : nan, h ? s.metrics.ref_entropy : nan, h ? s.metrics.delta : nan,
               double(s.redrawn), s.final_loss});
    m.save(ctx.file("checkpoints/step_" + std::to_string(s.iteration) + ".ckpt"));
    Json js = {{"iteration", s.iteration}, {"final_loss", s.final_loss}, {"redrawn", s.redrawn}};
    if (h) js["metrics"] = metrics_json(s.metrics);
    step_summary.push_back(js);
    std::ostringstream os;
    os << "step " << s.iteration << " loss " << s.final_loss;
    if (h) os << " kl " << s.metrics.kl << " delta " << s.metrics.delta;
    ctx.log(os.str());
  };
  try {
    adda(model, entry.problem, tc, hooks);
  } catch (const NumericError&) {
    model.save(ctx.file("last_good.ckpt"));
    throw;
  }
  model.save(ctx.file("model.ckpt"));
  return {{"problem", entry.problem.name},
          {"parameters", model.count_parameters()},
          {"steps", step_summary},
          {"resolved", {{"flow", to_json(fc)}, {"train", to_json(tc)}}}};
}

KRnetModel load_checkpoint(const Json& cfg, const char* where) {
  return KRnetModel::load(require_string(cfg, "checkpoint", where));
}

Json run_sample(const Json& cfg, Context& ctx) {
  reject_unknown_keys(cfg, {"checkpoint", "count", "seed"}, "sample config");
  const KRnetModel model = load_checkpoint(cfg, "sample config");
  const auto n = get_or<std::size_t>(cfg, "count", 1000);
  std::mt19937_64 rng(ctx.seed);
  const SampleResult s = sample(model, n, rng);
  const Vector lp = log_pdf(model, s.x);
  Matrix out(s.x.rows(), s.x.cols() + 1);
  out << s.x, lp;
  auto header = axis_names(model.config().dim);
  header.push_back("log_pdf");
  write_csv(ctx.file("samples.csv"), header, out);
  return {{"count", n}, {"redrawn", s.redrawn}};
}

Json run_eval(const Json& cfg, Context& ctx) {
  reject_unknown_keys(cfg, {"checkpoint", "problem", "validation_size", "points", "data", "seed"}, "eval config");
  const KRnetModel model = load_checkpoint(cfg, "eval config");
  Json summary = {{"parameters", model.count_parameters()}};
  bool any = false;
  if (cfg.contains("problem")) {
    const auto& entry = catalog_entry(cfg.at("problem").get<std::string>());
    if (entry.problem.dim != model.config().dim) throw ConfigError("checkpoint and problem dimensions differ");
    const auto val = make_validation(entry.problem, get_or<std::size_t>(cfg, "validation_size", 20000), ctx.seed);
    if (val.empty()) throw ConfigError("problem has no exact solution to evaluate against");
    summary["metrics"] = metrics_json(kl_divergence_mc(val.ref_log_pdf, model, val.points));
    any = true;
  }
  if (cfg.contains("data")) {
    const DataSet data = load_data(cfg.at("data"), ctx.seed);
    if (data.validation.cols() != model.config().dim) throw ConfigError("checkpoint and data dimensions differ");
    if (data.validation_ref.size() > 0) {
      summary["metrics"] = metrics_json(kl_divergence_mc(data.validation_ref, model, data.validation));
    } else {
      summary["cross_entropy"] = cross_entropy_loss(model, data.validation);
    }
    any = true;
  }
  if (cfg.contains("points")) {
    const Matrix x = read_csv(cfg.at("points").get<std::string>());
    if (x.cols() != model.config().dim) throw ConfigError("points file width does not match the model");
    Matrix out(x.rows(), x.cols() + 1);
    out << x, log_pdf(model, x);
    auto header = axis_names(model.config().dim);
    header.push_back("log_pdf");
    write_csv(ctx.file("log_pdf.csv"), header, out);
    summary["points"] = x.rows();
    any = true;
  }
  if (!any) throw ConfigError("eval needs 'problem', 'data' or 'points'");
  write_json(ctx.file("metrics.json"), summary);
  return summary;
}

Json run_grid(const Json& cfg, Context& ctx) {
  reject_unknown_keys(cfg, {"checkpoint", "problem", "dim", "lo", "hi", "resolution", "seed"}, "grid config");
  std::optional<KRnetModel> model;
  if (cfg.contains("checkpoint")) model.emplace(load_checkpoint(cfg, "grid config"));
  const CatalogEntry* entry = cfg.contains("problem") ? &catalog_entry(cfg.at("problem").get<std::string>()) : nullptr;
  if (!model && !entry) throw ConfigError("grid needs a 'checkpoint', a 'problem' or both");
  if (entry && !entry->problem.has_exact()) throw ConfigError("problem has no exact solution");
  int d = model ? model->config().dim : entry->problem.dim;
  if (model && entry && entry->problem.dim != d) throw ConfigError("checkpoint and problem dimensions differ");
  d = get_or(cfg, "dim", d);
  if ((model && model->config().dim != d) || (entry && entry->problem.dim != d)) {
    throw ConfigError("'dim' contradicts the checkpoint or problem");
  }
  const auto lo = per_axis(cfg, "lo", d, -5.0);
  const auto hi = per_axis(cfg, "hi", d, 5.0);
  const auto res_d = per_axis(cfg, "resolution", d, 101.0);
  std::vector<Eigen::Index> res;
  Eigen::Index total = 1;
  for (int k = 0; k < d; ++k) {
    const double r = res_d[static_cast<std::size_t>(k)];
    if (r < 2 || r != std::floor(r)) throw ConfigError("resolution must be an integer >= 2 per axis");
    if (!(lo[static_cast<std::size_t>(k)] < hi[static_cast<std::size_t>(k)])) throw ConfigError("grid needs lo < hi");
    res.push_back(static_cast<Eigen::Index>(r));
    total *= res.back();
    if (total > 50'000'000) throw ConfigError("grid has more than 5e7 points");
  }
  Matrix x(total, d);
  Vector w = Vector::Ones(total);  // trapezoid weights
  double cell = 1.0;
  for (int k = 0; k < d; ++k) {
    cell *= (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]) / double(res[static_cast<std::size_t>(k)] - 1);
  }
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index rem = i;
    for (int k = d - 1; k >= 0; --k) {
      const auto n = res[static_cast<std::size_t>(k)];
      const Eigen::Index j = rem % n;
      rem /= n;
      const double l = lo[static_cast<std::size_t>(k)], h = hi[static_cast<std::size_t>(k)];
      x(i, k) = l + (h - l) * static_cast<double>(j) / static_cast<double>(n - 1);
      if (j == 0 || j == n - 1) w(i) *= 0.5;
    }
  }
  std::vector<std::string> header = axis_names(d);
  Matrix out(total, d + (model ? 1 : 0) + (entry ? 1 : 0));
  out.leftCols(d) = x;
  int col = d;
  Json summary = {{"points", total}, {"resolution", res}};
  Vector lm, le;
  if (model) {
    lm = log_pdf(*model, x);
    out.col(col++) = lm;
    header.push_back("log_pdf_model");
    summary["mass_model"] = w.dot(lm.array().exp().matrix()) * cell;
  }
  if (entry) {
    le = entry->problem.exact_log_pdf_values(x);
    out.col(col++) = le;
    header.push_back("log_pdf_exact");
    summary["mass_exact"] = w.dot(le.array().exp().matrix()) * cell;
  }
  if (model && entry) summary["max_abs_density_gap"] = (lm.array().exp() - le.array().exp()).abs().maxCoeff();
  write_csv(ctx.file("grid.csv"), header, out);
  return summary;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"estimate", "solve-fp", "sample", "eval", "grid"};
  return names;
}

std::string version_string() { return KRNET_VERSION; }

Json run_command(const std::string& command, const Json& config, const RunOptions& options) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (options.threads < 1) throw ConfigError("--threads must be >= 1");
  std::error_code ec;
  fs::create_directories(options.out, ec);
  if (ec || !fs::is_directory(options.out)) throw IoError("cannot create output directory " + options.out.string());

  Context ctx{options, options.seed ? *options.seed : get_or<std::uint64_t>(config, "seed", 0)};
  set_num_threads(options.threads);
  Json manifest = {{"command", command},         {"version", version_string()}, {"seed", ctx.seed},
                   {"threads", options.threads}, {"config", config},            {"started", now_utc()},
                   {"status", "running"}};
  const fs::path manifest_path = options.out / "manifest.json";
  write_json(manifest_path, manifest);
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](const std::string& status, const std::string& message, const Json& summary) {
    manifest["status"] = status;
    if (!message.empty()) manifest["message"] = message;
    manifest["finished"] = now_utc();
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["outputs"] = ctx.outputs;
    if (!summary.is_null()) manifest["summary"] = summary;
    write_json(manifest_path, manifest);
  };
  try {
    Json summary;
    if (command == "estimate") {
      summary = run_estimate(config, ctx);
    } else if (command == "solve-fp") {
      summary = run_solve_fp(config, ctx);
    } else if (command == "sample") {
      summary = run_sample(config, ctx);
    } else if (command == "eval") {
      summary = run_eval(config, ctx);
    } else if (command == "grid") {
      summary = run_grid(config, ctx);
    } else {
      throw ConfigError("unknown command '" + command + "'");
    }
    finish("ok", "", summary);
    return summary;
  } catch (...) {
    std::string message;
    exit_code_for_current_exception(message);
    try {
      finish("error", message, Json());
    } catch (...) {
    }
    throw;
  }
}

int exit_code_for_current_exception(std::string& message) {
  try {
    throw;
  } catch (const ConfigError& e) {
    message = e.what();
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    message = e.what();
    return kExitConfig;
  } catch (const NumericError& e) {
    message = e.what();
    return kExitNumeric;
  } catch (const SingularError& e) {
    message = e.what();
    return kExitNumeric;
  } catch (const IoError& e) {
    message = e.what();
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    message = e.what();
    return kExitIo;
  } catch (const std::exception& e) {
    message = e.what();
    return 1;
  } catch (...) {
    message = "unknown error";
    return 1;
  }
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols()) throw ConfigError("csv header width mismatch");
  CsvStream out(path, header);
  std::vector<double> row(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index k = 0; k < rows.cols(); ++k) row[static_cast<std::size_t>(k)] = rows(i, k);
    out.row(row);
  }
}

Matrix read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty csv");
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      const std::string trimmed = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      try {
        std::size_t used = 0;
        r.push_back(std::stod(trimmed, &used));
        if (used != trimmed.size()) throw ConfigError("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (rows.empty()) width = r.size();
    if (r.size() != width) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(r));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < width; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

}  // namespace krnet
