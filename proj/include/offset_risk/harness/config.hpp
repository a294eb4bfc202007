#ifndef OFFSET_RISK_HARNESS_CONFIG_HPP
#define OFFSET_RISK_HARNESS_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offset_risk/harness/instances.hpp"
#include "offset_risk/instance_io.hpp"
#include "offset_risk/model.hpp"

namespace offset_risk::harness {

inline constexpr std::uint64_t kDefaultSeed = 20240601;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"aggregate", "complexity", "concentration", "mirror", "verify"};
  return names;
}

inline const std::vector<std::string>& check_ids() {
  static const std::vector<std::string> ids = {
      "star_offset", "self_localization", "offset_vs_local", "sparse_oracle", "sparse_bound",
      "mgf_bound",   "tail_bound",        "aggregation_rate", "mirror_descent", "duality"};
  return ids;
}

struct AggregateSettings {
  std::vector<std::size_t> n_grid = {64, 128, 256, 512, 1024, 2048, 4096};
  std::size_t replicates = 1000;
  double delta = 0.05;
  double c1 = 4.0;
  std::vector<std::string> estimators = {"star", "midpoint"};
  /// Inline or file instance; the multiscale generator is used when absent.
  std::optional<Instance> instance;
  MultiscaleShape shape;
};

struct ComplexitySettings {
  std::size_t classes = 5;
  std::size_t n = 64;
  double gamma = 1.0;
  std::size_t replicates = 2000;
  std::vector<std::size_t> sparse_d = {8, 16};
  std::vector<std::size_t> sparse_k = {1, 2};
  std::vector<double> sparse_gamma = {0.5, 1.0, 2.0};
  std::size_t sparse_n = 64;
  std::size_t sigma_draws = 200;
};

struct ConcentrationSettings {
  std::size_t setups = 3;
  std::size_t n = 50;
  std::size_t replicates = 20000;
  std::size_t lambda_points = 8;
  std::vector<double> deltas = {0.1, 0.01};
  std::size_t bootstrap = 1000;
};

struct MirrorSettings {
  std::size_t instances = 10;
  std::size_t n = 64;
  double epsilon = 1e-2;
  double step = 1e-3;
  std::vector<std::string> maps = {"euclidean", "negative_entropy"};
};

struct VerifySettings {
  std::vector<std::string> checks;  // empty: all
  double star_offset_gamma = 1.0 / 18.0;
  bool timing = false;
};

struct ExperimentConfig {
  std::string command;
  std::uint64_t seed = kDefaultSeed;
  AggregateSettings aggregate;
  ComplexitySettings complexity;
  ConcentrationSettings concentration;
  MirrorSettings mirror;
  VerifySettings verify;
  /// Canonical document the run was configured from (after flag overrides).
  nlohmann::json document = nlohmann::json::object();
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline void require_positive(std::size_t v, const std::string& what) {
  if (v == 0) throw ValidationError(what + " must be positive");
}

inline void require_increasing(const std::vector<std::size_t>& grid, const std::string& what) {
  if (grid.empty()) throw ValidationError(what + " must be nonempty");
  if (grid.front() == 0) throw ValidationError(what + " entries must be positive");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) throw ValidationError(what + " must be strictly increasing");
}

inline Instance resolve_instance(const nlohmann::json& spec, const std::filesystem::path& base_dir,
                                 MultiscaleShape& shape, bool& generated) {
  generated = false;
  if (spec.is_string()) {
    std::filesystem::path p = spec.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw ValidationError("instance file does not exist: " + p.string());
    return load_instance(p);
  }
  if (!spec.is_object()) throw ValidationError("instance must be an object or a file path");
  if (spec.contains("generator")) {
    reject_unknown(spec, {"generator", "support", "m", "signal", "noise", "scale"}, "instance");
    if (spec.at("generator") != "multiscale") throw ValidationError("unknown instance generator");
    read(spec, "support", shape.support);
    read(spec, "m", shape.m);
    read(spec, "signal", shape.signal);
    read(spec, "noise", shape.noise);
    read(spec, "scale", shape.scale);
    generated = true;
    return multiscale_instance(0, shape);  // validates the shape
  }
  return instance_from_json(spec);
}

}  // namespace detail

/// Builds a config from a JSON document. Relative instance paths resolve
/// against `base_dir`. Unknown keys are rejected.
inline ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& command,
                                     const std::filesystem::path& base_dir = ".") {
  using detail::read;
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    throw ValidationError("unknown command '" + command + "'");
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.document = doc;
  try {
    detail::reject_unknown(doc, {"command", "seed", "aggregate", "complexity", "concentration", "mirror", "verify"},
                           "config");
    if (doc.contains("command") && doc.at("command").get<std::string>() != command)
      throw ValidationError("config is for command '" + doc.at("command").get<std::string>() + "', not '" +
                            command + "'");
    read(doc, "seed", cfg.seed);

    if (doc.contains("aggregate")) {
      const auto& a = doc.at("aggregate");
      detail::reject_unknown(a, {"n_grid", "replicates", "delta", "c1", "estimators", "instance"}, "aggregate");
      read(a, "n_grid", cfg.aggregate.n_grid);
      read(a, "replicates", cfg.aggregate.replicates);
      read(a, "delta", cfg.aggregate.delta);
      read(a, "c1", cfg.aggregate.c1);
      read(a, "estimators", cfg.aggregate.estimators);
      if (a.contains("instance")) {
        bool generated = false;
        auto inst = detail::resolve_instance(a.at("instance"), base_dir, cfg.aggregate.shape, generated);
        if (!generated) {
          if (!inst.dictionary) throw ValidationError("aggregate instance needs a dictionary");
          cfg.aggregate.instance = std::move(inst);
        }
      }
    }
    if (doc.contains("complexity")) {
      const auto& c = doc.at("complexity");
      detail::reject_unknown(c, {"classes", "n", "gamma", "replicates", "sparse_d", "sparse_k", "sparse_gamma",
                                 "sparse_n", "sigma_draws"},
                             "complexity");
      read(c, "classes", cfg.complexity.classes);
      read(c, "n", cfg.complexity.n);
      read(c, "gamma", cfg.complexity.gamma);
      read(c, "replicates", cfg.complexity.replicates);
      read(c, "sparse_d", cfg.complexity.sparse_d);
      read(c, "sparse_k", cfg.complexity.sparse_k);
      read(c, "sparse_gamma", cfg.complexity.sparse_gamma);
      read(c, "sparse_n", cfg.complexity.sparse_n);
      read(c, "sigma_draws", cfg.complexity.sigma_draws);
    }
    if (doc.contains("concentration")) {
      const auto& c = doc.at("concentration");
      detail::reject_unknown(c, {"setups", "n", "replicates", "lambda_points", "deltas", "bootstrap"},
                             "concentration");
      read(c, "setups", cfg.concentration.setups);
      read(c, "n", cfg.concentration.n);
      read(c, "replicates", cfg.concentration.replicates);
      read(c, "lambda_points", cfg.concentration.lambda_points);
      read(c, "deltas", cfg.concentration.deltas);
      read(c, "bootstrap", cfg.concentration.bootstrap);
    }
    if (doc.contains("mirror")) {
      const auto& m = doc.at("mirror");
      detail::reject_unknown(m, {"instances", "n", "epsilon", "step", "maps"}, "mirror");
      read(m, "instances", cfg.mirror.instances);
      read(m, "n", cfg.mirror.n);
      read(m, "epsilon", cfg.mirror.epsilon);
      read(m, "step", cfg.mirror.step);
      read(m, "maps", cfg.mirror.maps);
    }
    if (doc.contains("verify")) {
      const auto& v = doc.at("verify");
      detail::reject_unknown(v, {"checks", "star_offset_gamma", "timing"}, "verify");
      read(v, "checks", cfg.verify.checks);
      read(v, "star_offset_gamma", cfg.verify.star_offset_gamma);
      read(v, "timing", cfg.verify.timing);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }

  const auto& ag = cfg.aggregate;
  detail::require_increasing(ag.n_grid, "aggregate.n_grid");
  detail::require_positive(ag.replicates, "aggregate.replicates");
  if (!(ag.delta > 0.0 && ag.delta < 1.0)) throw ValidationError("aggregate.delta must lie in (0, 1)");
  if (!(ag.c1 > 0.0)) throw ValidationError("aggregate.c1 must be positive");
  if (ag.estimators.empty()) throw ValidationError("aggregate.estimators must be nonempty");
  for (const auto& e : ag.estimators)
    if (e != "erm" && e != "star" && e != "midpoint") throw ValidationError("unknown estimator '" + e + "'");

  const auto& cx = cfg.complexity;
  detail::require_positive(cx.classes, "complexity.classes");
  detail::require_positive(cx.n, "complexity.n");
  detail::require_positive(cx.replicates, "complexity.replicates");
  detail::require_positive(cx.sparse_n, "complexity.sparse_n");
  detail::require_positive(cx.sigma_draws, "complexity.sigma_draws");
  if (!(cx.gamma > 0.0)) throw ValidationError("complexity.gamma must be positive");
  for (double g : cx.sparse_gamma)
    if (!(g > 0.0)) throw ValidationError("complexity.sparse_gamma entries must be positive");
  for (std::size_t k : cx.sparse_k) detail::require_positive(k, "complexity.sparse_k entries");
  for (std::size_t d : cx.sparse_d) detail::require_positive(d, "complexity.sparse_d entries");

  const auto& cc = cfg.concentration;
  detail::require_positive(cc.setups, "concentration.setups");
  detail::require_positive(cc.n, "concentration.n");
  detail::require_positive(cc.lambda_points, "concentration.lambda_points");
  detail::require_positive(cc.bootstrap, "concentration.bootstrap");
  if (cc.replicates < kMinMgfReplicates)
    throw ValidationError("concentration.replicates must be at least " + std::to_string(kMinMgfReplicates));
  for (double d : cc.deltas)
    if (!(d > 0.0 && d < 1.0)) throw ValidationError("concentration.deltas must lie in (0, 1)");

  const auto& mr = cfg.mirror;
  detail::require_positive(mr.instances, "mirror.instances");
  detail::require_positive(mr.n, "mirror.n");
  if (!(mr.epsilon > 0.0)) throw ValidationError("mirror.epsilon must be positive");
  if (!(mr.step > 0.0)) throw ValidationError("mirror.step must be positive");
  for (const auto& m : mr.maps)
    if (m != "euclidean" && m != "negative_entropy") throw ValidationError("unknown mirror map '" + m + "'");

  for (const auto& id : cfg.verify.checks)
    if (std::find(check_ids().begin(), check_ids().end(), id) == check_ids().end())
      throw ValidationError("unknown check '" + id + "'");
  if (!(cfg.verify.star_offset_gamma > 0.0)) throw ValidationError("verify.star_offset_gamma must be positive");
  return cfg;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file does not exist: " + path.string());
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Applies "section.key=value" overrides (value parsed as JSON, or taken as a
/// string when it is not valid JSON).
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("empty key in override " + assignment);
    if (!node->is_object()) throw ValidationError("override path crosses a non-object: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

}  // namespace offset_risk::harness

#endif  // OFFSET_RISK_HARNESS_CONFIG_HPP
