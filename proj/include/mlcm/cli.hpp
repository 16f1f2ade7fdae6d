#pragma once

// Config-driven command line: design, estimate, placebo, bootstrap, cate,
// simulate and report. Every command reads one JSON config (comments
// allowed) and writes CSV/JSON artifacts into the config's output directory.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlcm/mlcm.hpp"

namespace mlcm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// checked config access
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config error at " + path + ": " + msg);
}

template <class T>
struct Reader;

template <>
struct Reader<bool> {
  static bool read(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
  }
};
template <>
struct Reader<double> {
  static double read(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
  }
};
template <>
struct Reader<std::size_t> {
  static std::size_t read(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(path, "expected a non-negative integer");
    return v.get<std::size_t>();
  }
};
template <>
struct Reader<std::int64_t> {
  static std::int64_t read(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<std::int64_t>();
  }
};
template <>
struct Reader<std::string> {
  static std::string read(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }
};
template <class T>
struct Reader<std::vector<T>> {
  static std::vector<T> read(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected a list");
    std::vector<T> out;
    for (std::size_t k = 0; k < v.size(); ++k)
      out.push_back(Reader<T>::read(v[k], path + "[" + std::to_string(k) + "]"));
    return out;
  }
};

/// One JSON object plus its dotted path. Reading marks keys as known;
/// done() rejects the rest.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_ && j_->contains(key) && !(*j_)[key].is_null();
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  template <class T>
  T get(const std::string& key, T def) {
    if (!has(key)) return def;
    return Reader<T>::read((*j_)[key], at(key));
  }
  template <class T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Reader<T>::read((*j_)[key], at(key));
  }
  Section sub(const std::string& key) {
    if (!has(key)) return Section(nullptr, at(key));
    return Section(&(*j_)[key], at(key));
  }
  const json* raw(const std::string& key) {
    if (!has(key)) return nullptr;
    return &(*j_)[key];
  }
  bool present() const { return j_ != nullptr; }
  const std::string& path() const { return path_; }

  void done() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto checked(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

struct CateSettings {
  std::vector<std::string> covariates;
  std::string groups;                 // covariate defining discrete groups, optional
  std::size_t horizon = 0;            // 0: temporal average effect
  std::optional<std::size_t> min_node;
  std::size_t max_depth = 4;
  std::size_t B = 1000;
  double alpha = 0.05;
};

struct PlaceboSettings {
  std::size_t n_holdout = 1;
  bool bootstrap = true;
  std::vector<double> trim_fractions;
  double error_threshold = 1.0;
  std::size_t bins = 20;
};

struct SimulateSettings {
  std::vector<SimConfig> scenarios;
  std::vector<std::string> labels;
  std::size_t R = 100;
  std::size_t B = 200;
  BootstrapMode mode = BootstrapMode::fixed_model;
  double alpha = 0.05;
  std::size_t truth_units = 100000;
  bool write_panels = false;
};

struct Config {
  json raw;
  std::string hash;
  std::string design_hash;
  std::uint64_t seed = 0;
  fs::path base_dir;
  fs::path output_dir;

  std::optional<fs::path> data_path;
  CsvSchema schema;
  std::optional<SimConfig> simulated_data;

  PipelineConfig pipeline;
  bool run_design = false;
  bool att_asa = false;
  bool group_time = false;
  BootstrapOptions bootstrap;
  PlaceboSettings placebo;
  CateSettings cate;
  SimulateSettings simulate;
};

namespace detail {

inline std::vector<LearnerKind> parse_learners(Section& s, const std::string& key,
                                               const std::vector<LearnerKind>& def) {
  if (!s.has(key)) return def;
  const auto names = s.get<std::vector<std::string>>(key, {});
  if (names.empty()) fail(s.at(key), "needs at least one learner");
  std::vector<LearnerKind> out;
  for (std::size_t k = 0; k < names.size(); ++k)
    out.push_back(checked(s.at(key) + "[" + std::to_string(k) + "]",
                          [&] { return learner_from_string(names[k]); }));
  return out;
}

inline void positive(const std::string& path, double v) {
  if (!(v > 0.0)) fail(path, "must be > 0");
}

inline GridSpec parse_grid(Section& s, GridSpec g) {
  g.learners = parse_learners(s, "learners", g.learners);
  auto lasso = s.sub("lasso");
  g.lasso_lambda = lasso.get("lambda", g.lasso_lambda);
  for (double v : g.lasso_lambda)
    if (!(v >= 0.0)) fail(lasso.at("lambda"), "values must be >= 0");
  lasso.done();
  auto pls = s.sub("pls");
  g.pls_max_components = pls.get("max_components", g.pls_max_components);
  pls.done();
  auto gbm = s.sub("gbm");
  g.gbm_n_trees = gbm.get("n_trees", g.gbm_n_trees);
  g.gbm_max_depth = gbm.get("max_depth", g.gbm_max_depth);
  g.gbm_min_node = gbm.get("min_node", g.gbm_min_node);
  g.gbm_learning_rate = gbm.get("learning_rate", g.gbm_learning_rate);
  g.gbm_subsample = gbm.get("subsample", g.gbm_subsample);
  if (!(g.gbm_subsample > 0.0 && g.gbm_subsample <= 1.0)) fail(gbm.at("subsample"), "must lie in (0, 1]");
  for (double v : g.gbm_learning_rate)
    if (!(v >= 0.0)) fail(gbm.at("learning_rate"), "values must be >= 0");
  gbm.done();
  auto forest = s.sub("forest");
  g.forest_mtry_fraction = forest.get("mtry_fraction", g.forest_mtry_fraction);
  for (double v : g.forest_mtry_fraction)
    if (!(v > 0.0 && v <= 1.0)) fail(forest.at("mtry_fraction"), "values must lie in (0, 1]");
  g.forest_n_trees = forest.get("n_trees", g.forest_n_trees);
  g.forest_min_node = forest.get("min_node", g.forest_min_node);
  forest.done();
  auto tree = s.sub("tree");
  g.tree_max_depth = tree.get("max_depth", g.tree_max_depth);
  g.tree_min_node = tree.get("min_node", g.tree_min_node);
  tree.done();
  return g;
}

inline SimConfig parse_sim(Section& s, SimConfig c) {
  c.N = s.get("N", c.N);
  c.T = s.get("T", c.T);
  c.t0 = s.get("t0", c.t0);
  c.phi = s.get("phi", c.phi);
  c.sigma_eps = s.get("sigma_eps", c.sigma_eps);
  c.sigma_u = s.get("sigma_u", c.sigma_u);
  if (s.has("beta")) {
    const auto b = s.get<std::vector<double>>("beta", {});
    if (b.size() != kSimCovariates) fail(s.at("beta"), "needs 11 coefficients");
    std::copy(b.begin(), b.end(), c.beta.begin());
  }
  if (auto d = s.opt<std::string>("dgp")) c.dgp = checked(s.at("dgp"), [&] { return dgp_from_string(*d); });
  if (s.has("effects")) c.effect_sd_multipliers = s.get<std::vector<double>>("effects", {});
  else c.effect_sd_multipliers.resize(c.T > c.t0 ? c.T - c.t0 : 0, c.effect_sd_multipliers.back());
  c.absolute_effects = s.get("absolute_effects", c.absolute_effects);
  c.burn_in = s.get("burn_in", c.burn_in);
  c.y_init = s.get("y_init", c.y_init);
  c.contemporaneous_covariates = s.get("contemporaneous_covariates", c.contemporaneous_covariates);
  if (auto e = s.opt<std::string>("effect_scale"))
    c.effect_scale = checked(s.at("effect_scale"), [&] { return effect_scale_from_string(*e); });
  c.fixed_categoricals = s.get("fixed_categoricals", c.fixed_categoricals);
  if (auto sd = s.opt<std::size_t>("seed")) c.seed = *sd;
  checked(s.path(), [&] {
    c.validate();
    return 0;
  });
  return c;
}

inline std::string hash_of(const json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace detail

/// Parses and validates a config. `raw` already carries any overrides.
inline Config parse_config(const json& raw, const fs::path& base_dir) {
  using detail::Section;
  using detail::fail;
  Config c;
  c.raw = raw;
  c.base_dir = base_dir;
  json hashed = raw;
  hashed.erase("output_dir");  // where results go does not change them
  c.hash = detail::hash_of(hashed);
  Section root(&raw, "config");
  c.seed = root.get<std::size_t>("seed", 0);
  c.output_dir = base_dir / root.get<std::string>("output_dir", "mlcm_out");

  auto data = root.sub("data");
  if (data.present()) {
    if (data.has("path") && data.has("simulated")) fail(data.path(), "give either path or simulated, not both");
    if (auto p = data.opt<std::string>("path")) c.data_path = base_dir / *p;
    if (data.has("simulated")) {
      auto s = data.sub("simulated");
      SimConfig sc;
      sc.seed = derive_seed(c.seed, Stream::Scenario, 0);
      c.simulated_data = detail::parse_sim(s, sc);
      s.done();
    }
    c.schema.unit = data.get<std::string>("unit", c.schema.unit);
    c.schema.time = data.get<std::string>("time", c.schema.time);
    c.schema.outcome = data.get<std::string>("outcome", c.schema.outcome);
    c.schema.covariates = data.get<std::vector<std::string>>("covariates", {});
    c.schema.categorical = data.get<std::vector<std::string>>("categorical", {});
    c.schema.ignore = data.get<std::vector<std::string>>("ignore", {});
    c.schema.treated = data.get<std::string>("treated", "");
    c.schema.cohort = data.get<std::string>("cohort", "");
    c.schema.drop_incomplete_units = data.get("drop_incomplete_units", false);
    if (c.data_path) {
      auto t0 = data.opt<std::int64_t>("t0_time");
      if (!t0) fail(data.at("t0_time"), "required: time value of the last pre-intervention period");
      c.schema.t0_time = *t0;
    } else {
      data.get<std::int64_t>("t0_time", 0);
    }
    data.done();
  }

  auto design = root.sub("design");
  auto lags = design.sub("lags");
  c.pipeline.lags.p = lags.get("p", c.pipeline.lags.p);
  c.pipeline.lags.q = lags.get("q", c.pipeline.lags.q);
  c.pipeline.lags.contemporaneous = lags.get("contemporaneous", c.pipeline.lags.contemporaneous);
  lags.done();
  c.pipeline.grid = detail::parse_grid(design, GridSpec{});
  c.pipeline.keep_grid = design.get("keep", c.pipeline.keep_grid);
  for (auto k : c.pipeline.keep_grid)
    if (k == 0) fail(design.at("keep"), "keep sizes must be >= 1");
  auto pilot = design.sub("pilot");
  c.pipeline.pilot.n_trees = pilot.get("n_trees", c.pipeline.pilot.n_trees);
  c.pipeline.pilot.mtry_fraction = pilot.get("mtry_fraction", c.pipeline.pilot.mtry_fraction);
  c.pipeline.pilot.min_node = pilot.get("min_node", c.pipeline.pilot.min_node);
  pilot.done();
  c.pipeline.rolling_window = design.get("rolling_window", c.pipeline.rolling_window);
  design.done();

  auto analysis = root.sub("analysis");
  c.pipeline.horizon = analysis.get("horizon", c.pipeline.horizon);
  if (auto m = analysis.opt<std::string>("covariate_mode"))
    c.pipeline.covariate_mode =
        detail::checked(analysis.at("covariate_mode"), [&] { return covariate_mode_from_string(*m); });
  if (analysis.has("chain")) {
    auto chain = analysis.sub("chain");
    c.pipeline.chain_grid = detail::parse_grid(chain, c.pipeline.grid);
    chain.done();
  }
  c.run_design = analysis.get("run_design", false);
  c.att_asa = analysis.get("att_asa", false);
  c.group_time = analysis.get("group_time", false);
  analysis.done();
  c.pipeline.seed = c.seed;

  auto boot = root.sub("bootstrap");
  c.bootstrap.B = boot.get("B", c.bootstrap.B);
  if (c.bootstrap.B < 2) fail(boot.at("B"), "must be >= 2");
  c.bootstrap.alpha = boot.get("alpha", c.bootstrap.alpha);
  if (!(c.bootstrap.alpha > 0.0 && c.bootstrap.alpha < 1.0)) fail(boot.at("alpha"), "must lie in (0, 1)");
  if (auto m = boot.opt<std::string>("mode"))
    c.bootstrap.mode = detail::checked(boot.at("mode"), [&] { return bootstrap_mode_from_string(*m); });
  c.bootstrap.max_attempts = boot.get("max_attempts", c.bootstrap.max_attempts);
  c.bootstrap.seed = derive_seed(c.seed, Stream::Bootstrap, 0);
  boot.done();

  auto placebo = root.sub("placebo");
  c.placebo.n_holdout = placebo.get("n_holdout", c.placebo.n_holdout);
  if (c.placebo.n_holdout < 1) fail(placebo.at("n_holdout"), "must be >= 1");
  c.placebo.bootstrap = placebo.get("bootstrap", c.placebo.bootstrap);
  c.placebo.trim_fractions = placebo.get("trim_fractions", c.placebo.trim_fractions);
  for (double f : c.placebo.trim_fractions)
    if (!(f >= 0.0 && f < 1.0)) fail(placebo.at("trim_fractions"), "fractions must lie in [0, 1)");
  c.placebo.error_threshold = placebo.get("error_threshold", c.placebo.error_threshold);
  c.placebo.bins = placebo.get("bins", c.placebo.bins);
  if (c.placebo.bins < 1) fail(placebo.at("bins"), "must be >= 1");
  placebo.done();

  auto cate = root.sub("cate");
  c.cate.covariates = cate.get("covariates", c.cate.covariates);
  c.cate.groups = cate.get("groups", c.cate.groups);
  c.cate.horizon = cate.get("horizon", c.cate.horizon);
  c.cate.min_node = cate.opt<std::size_t>("min_node");
  if (c.cate.min_node && *c.cate.min_node < 1) fail(cate.at("min_node"), "must be >= 1");
  c.cate.max_depth = cate.get("max_depth", c.cate.max_depth);
  c.cate.B = cate.get("B", c.cate.B);
  if (c.cate.B < 2) fail(cate.at("B"), "must be >= 2");
  c.cate.alpha = cate.get("alpha", c.cate.alpha);
  if (!(c.cate.alpha > 0.0 && c.cate.alpha < 1.0)) fail(cate.at("alpha"), "must lie in (0, 1)");
  cate.done();

  auto sim = root.sub("simulate");
  if (sim.present()) {
    const std::string grid = sim.get<std::string>("grid", "core");
    std::vector<SimConfig> base;
    if (grid == "core") {
      for (Dgp d : {Dgp::linear, Dgp::nonlinear})
        for (std::size_t t0 : {4u, 9u}) {
          SimConfig s;
          s.dgp = d;
          s.t0 = t0;
          s.T = t0 + 3;
          base.push_back(s);
        }
    } else if (grid == "extended") {
      for (Dgp d : {Dgp::linear, Dgp::nonlinear})
        for (auto& s : scenario_grid(d)) base.push_back(s);
    } else if (grid == "custom") {
      if (!sim.has("scenarios")) fail(sim.at("scenarios"), "required when grid is custom");
    } else {
      fail(sim.at("grid"), "unknown grid '" + grid + "' (expected core, extended or custom)");
    }
    if (const json* list = sim.raw("scenarios")) {
      if (!list->is_array()) fail(sim.at("scenarios"), "expected a list");
      for (std::size_t k = 0; k < list->size(); ++k) {
        Section s(&(*list)[k], sim.at("scenarios") + "[" + std::to_string(k) + "]");
        base.push_back(detail::parse_sim(s, SimConfig{}));
        s.done();
      }
    }
    // Shared overrides applied to every scenario.
    auto over = sim.sub("override");
    const json* ov = sim.raw("override");
    for (std::size_t k = 0; k < base.size(); ++k) {
      auto& s = base[k];
      if (ov) {
        json merged = *ov;
        detail::Section os(&merged, over.path());
        s = detail::parse_sim(os, s);
        os.done();
      }
      const bool own_seed = ov && ov->contains("seed");
      if (!own_seed) s.seed = derive_seed(c.seed, Stream::Scenario, k + 1);
      c.simulate.labels.push_back(std::string(to_string(s.dgp)) + "_N" + std::to_string(s.N) + "_phi" +
                                  format_double(s.phi) + "_su" + format_double(s.sigma_u) + "_t0" +
                                  std::to_string(s.t0));
    }
    c.simulate.scenarios = std::move(base);
    c.simulate.R = sim.get("R", c.simulate.R);
    if (c.simulate.R < 1) fail(sim.at("R"), "must be >= 1");
    c.simulate.B = sim.get("B", c.simulate.B);
    if (c.simulate.B == 1) fail(sim.at("B"), "must be 0 (no intervals) or >= 2");
    if (auto m = sim.opt<std::string>("bootstrap_mode"))
      c.simulate.mode = detail::checked(sim.at("bootstrap_mode"), [&] { return bootstrap_mode_from_string(*m); });
    c.simulate.alpha = sim.get("alpha", c.simulate.alpha);
    c.simulate.truth_units = sim.get("truth_units", c.simulate.truth_units);
    if (c.simulate.truth_units < 1) fail(sim.at("truth_units"), "must be >= 1");
    c.simulate.write_panels = sim.get("write_panels", c.simulate.write_panels);
    sim.done();
  }
  root.done();

  json dh;
  dh["seed"] = c.seed;
  dh["data"] = raw.value("data", json::object());
  dh["design"] = raw.value("design", json::object());
  c.design_hash = detail::hash_of(dh);
  return c;
}

/// Applies `a.b.c=value` overrides. Values parse as JSON when they can and
/// are taken as strings otherwise.
inline void apply_override(json& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), value = assignment.substr(eq + 1);
  json* node = &raw;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      json v;
      try {
        v = json::parse(value);
      } catch (const json::parse_error&) {
        v = value;
      }
      if (v.is_object() || v.is_array()) throw ConfigError("override '" + key + "' must set a scalar");
      (*node)[part] = v;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline json read_config_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// artifact io
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p, const std::string& producer) {
  std::ifstream in(p);
  if (!in) throw Error("missing " + p.filename().string() + " in " + p.parent_path().string() + "; run `mlcm " +
                       producer + "` first");
  return json::parse(in);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) {
    row_strings(header);
  }
  CsvWriter& cell(const std::string& s) {
    sep();
    os_ << csv_escape(s);
    return *this;
  }
  CsvWriter& cell(double v) {
    sep();
    os_ << format_double(v);
    return *this;
  }
  CsvWriter& cell(std::size_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& cell(std::int64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  void end() {
    os_ << '\n';
    first_ = true;
  }
  void save(const fs::path& p) const { write_text(p, os_.str()); }

 private:
  void sep() {
    if (!first_) os_ << ',';
    first_ = false;
  }
  void row_strings(const std::vector<std::string>& r) {
    for (const auto& s : r) cell(s);
    end();
  }
  std::ostringstream os_;
  bool first_ = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name, const fs::path& p) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw Error(p.string() + " lacks column '" + name + "'");
  }
};

inline CsvTable read_csv_table(const fs::path& p, const std::string& producer) {
  std::ifstream in(p);
  if (!in) throw Error("missing " + p.filename().string() + " in " + p.parent_path().string() + "; run `mlcm " +
                       producer + "` first");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(p.string() + " is empty");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
    if (t.rows.back().size() != t.header.size()) throw Error(p.string() + ": ragged row");
  }
  return t;
}

inline double to_double(const std::string& s, const fs::path& p) {
  auto v = parse_double(s);
  if (!v) throw Error(p.string() + ": bad number '" + s + "'");
  return *v;
}

inline void write_effects_csv(const fs::path& p, const EffectSet& e) {
  CsvWriter w({"unit", "time", "horizon", "observed", "counterfactual", "effect"});
  for (std::size_t i = 0; i < e.n_units(); ++i)
    for (std::size_t k = 0; k < e.n_horizons(); ++k) {
      w.cell(e.unit_ids[i]).cell(e.periods[k]).cell(e.horizons[k]);
      w.cell(e.observed(i, k)).cell(e.counterfactual(i, k)).cell(e.individual(i, k));
      w.end();
    }
  w.save(p);
}

inline EffectSet read_effects_csv(const fs::path& p, const std::string& producer) {
  auto t = read_csv_table(p, producer);
  const auto cu = t.column("unit", p), ct = t.column("time", p), ch = t.column("horizon", p),
             co = t.column("observed", p), cc = t.column("counterfactual", p);
  std::vector<std::string> units;
  std::map<std::string, std::size_t> upos;
  std::map<std::size_t, std::int64_t> periods;
  for (const auto& r : t.rows) {
    if (!upos.count(r[cu])) {
      upos[r[cu]] = units.size();
      units.push_back(r[cu]);
    }
    const auto h = static_cast<std::size_t>(to_double(r[ch], p));
    periods[h] = static_cast<std::int64_t>(to_double(r[ct], p));
  }
  const std::size_t n = units.size(), K = periods.size();
  if (n * K != t.rows.size()) throw Error(p.string() + " is not a complete unit x horizon table");
  EffectSet e;
  e.unit_ids = units;
  for (const auto& [h, per] : periods) {
    e.horizons.push_back(h);
    e.periods.push_back(per);
  }
  e.observed = Matrix(n, K);
  e.counterfactual = Matrix(n, K);
  e.individual = Matrix(n, K);
  for (const auto& r : t.rows) {
    const std::size_t i = upos[r[cu]];
    const auto h = static_cast<std::size_t>(to_double(r[ch], p));
    if (h < 1 || h > K) throw Error(p.string() + ": horizons must run 1..K");
    e.observed(i, h - 1) = to_double(r[co], p);
    e.counterfactual(i, h - 1) = to_double(r[cc], p);
    e.individual(i, h - 1) = e.observed(i, h - 1) - e.counterfactual(i, h - 1);
  }
  aggregate(e);
  return e;
}

inline json interval_json(const Interval& iv) { return json::array({iv.lower, iv.upper}); }

inline json stamp(const Config& c, const std::string& command) {
  return {{"command", command}, {"config_hash", c.hash}, {"seed", c.seed}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

struct Context {
  Config config;
  std::ostream* log = &std::cerr;
};

inline PanelDataset load_dataset(const Config& c) {
  if (c.simulated_data) return gen_panel(*c.simulated_data).data;
  if (!c.data_path) throw ConfigError("config error at config.data: give data.path or data.simulated");
  return load_csv(c.data_path->string(), c.schema);
}

namespace detail {

inline void ensure_out(const Config& c) { fs::create_directories(c.output_dir); }

inline void write_design(const Config& c, const CvReport& rep) {
  json j = stamp(c, "design");
  j["design_hash"] = c.design_hash;
  j["report"] = cv_report_to_json(rep);
  j["winner"] = describe(rep.best().hp);
  j["winner_mse"] = rep.mean_mse[rep.winner];
  std::map<std::string, double> best_by_learner;
  for (std::size_t k = 0; k < rep.candidates.size(); ++k) {
    const std::string name = to_string(kind_of(rep.candidates[k].hp));
    auto it = best_by_learner.find(name);
    if (it == best_by_learner.end() || rep.mean_mse[k] < it->second) best_by_learner[name] = rep.mean_mse[k];
  }
  j["best_mse_by_learner"] = best_by_learner;
  write_json(c.output_dir / "design_report.json", j);

  std::vector<std::string> header{"candidate", "learner", "hyperparams", "n_features"};
  for (std::size_t k = 0; k < rep.folds.size(); ++k) header.push_back("fold_" + std::to_string(k + 1) + "_mse");
  header.insert(header.end(), {"mean_mse", "winner"});
  CsvWriter w(header);
  for (std::size_t k = 0; k < rep.candidates.size(); ++k) {
    const auto& cand = rep.candidates[k];
    w.cell(k).cell(std::string(to_string(kind_of(cand.hp)))).cell(describe(cand.hp)).cell(cand.columns.size());
    for (std::size_t f = 0; f < rep.folds.size(); ++f) w.cell(rep.fold_mse(k, f));
    w.cell(rep.mean_mse[k]).cell(std::size_t{k == rep.winner ? 1u : 0u});
    w.end();
  }
  w.save(c.output_dir / "cv_results.csv");
  if (rep.pilot_ran) {
    CsvWriter p({"rank", "feature", "importance"});
    for (std::size_t k = 0; k < rep.ranking.size(); ++k)
      p.cell(k + 1).cell(rep.feature_names[rep.ranking[k]]).cell(rep.ranking_importance[k]).end();
    p.save(c.output_dir / "pilot_importance.csv");
  }
}

/// The design report for this config: read from disk, or produced inline
/// when analysis.run_design is set.
inline CvReport design_report(const Context& ctx, const PanelDataset& ds, const std::string& command) {
  const Config& c = ctx.config;
  const auto path = c.output_dir / "design_report.json";
  if (c.run_design && !fs::exists(path)) {
    auto rep = panel_cv(ds.pre(), c.pipeline.lags, c.pipeline.grid, c.pipeline.keep_grid,
                        CvOptions{c.pipeline.rolling_window, c.seed}, c.pipeline.pilot);
    write_design(c, rep);
    return rep;
  }
  if (!fs::exists(path))
    throw Error(command + " needs design_report.json in " + c.output_dir.string() +
                "; run `mlcm design` first (or set analysis.run_design = true)");
  auto j = read_json(path, "design");
  if (j.value("design_hash", "") != c.design_hash)
    throw Error("design_report.json in " + c.output_dir.string() +
                " was produced from different data, design settings or seed; rerun `mlcm design`");
  return cv_report_from_json(j.at("report"));
}

inline PipelineResult pipeline_from_design(const PanelDataset& ds, const PipelineConfig& pc,
                                           const CvReport& rep) {
  FrozenPipeline fz{rep.best().hp, rep.best().columns, {}, {}};
  auto r = run_pipeline(ds, pc, &fz);
  r.report = rep;
  return r;
}

inline json chain_json(const ForecastChain& ch) {
  json steps = json::array();
  for (const auto& s : ch.steps) {
    json cand = json::array();
    for (std::size_t k = 0; k < s.candidates.size(); ++k)
      cand.push_back({{"hyperparams", describe(s.candidates[k].hp)},
                      {"validation_mse", s.validation_mse.empty() ? json(nullptr) : json(s.validation_mse[k])}});
    steps.push_back({{"horizon", s.horizon}, {"winner", describe(s.candidates[s.winner].hp)}, {"candidates", cand}});
  }
  return {{"recursive", ch.recursive()}, {"base", describe(ch.base.model.hyperparams())}, {"steps", steps}};
}

inline json step_json(const StepModel& m) {
  return {{"lags", {{"p", m.lags.p}, {"q", m.lags.q}, {"contemporaneous", m.lags.contemporaneous}}},
          {"columns", m.columns},
          {"model", m.model.to_json()}};
}

inline json model_json(const ForecastChain& ch) {
  json j;
  j["base"] = step_json(ch.base);
  j["steps"] = json::array();
  for (const auto& s : ch.steps) j["steps"].push_back({{"horizon", s.horizon}, {"model", step_json(s.model)}});
  return j;
}

inline void write_ate_csv(const fs::path& p, const EffectSet& e) {
  CsvWriter w({"horizon", "time", "ate"});
  for (std::size_t k = 0; k < e.n_horizons(); ++k) w.cell(e.horizons[k]).cell(e.periods[k]).cell(e.ate[k]).end();
  w.save(p);
}

}  // namespace detail

inline int cmd_design(const Context& ctx) {
  const Config& c = ctx.config;
  auto ds = load_dataset(c);
  detail::ensure_out(c);
  auto rep = panel_cv(ds.pre(), c.pipeline.lags, c.pipeline.grid, c.pipeline.keep_grid,
                      CvOptions{c.pipeline.rolling_window, c.seed}, c.pipeline.pilot);
  for (const auto& w : rep.warnings) *ctx.log << "warning: " << w << '\n';
  detail::write_design(c, rep);
  *ctx.log << "design: winner " << describe(rep.best().hp) << " (mean MSE "
           << format_double(rep.mean_mse[rep.winner]) << ")\n";
  return 0;
}

inline int cmd_estimate(const Context& ctx) {
  const Config& c = ctx.config;
  auto ds = load_dataset(c);
  detail::ensure_out(c);
  auto rep = detail::design_report(ctx, ds, "estimate");
  auto res = detail::pipeline_from_design(ds, c.pipeline, rep);
  detail::write_effects_csv(c.output_dir / "effects.csv", res.effects);
  detail::write_ate_csv(c.output_dir / "ate.csv", res.effects);

  json j = detail::stamp(c, "estimate");
  j["winner"] = describe(rep.best().hp);
  j["covariate_mode"] = to_string(c.pipeline.covariate_mode);
  j["horizon"] = res.horizon;
  j["n_units"] = res.effects.n_units();
  j["periods"] = res.effects.periods;
  j["ate"] = res.effects.ate;
  j["temporal_ate"] = res.effects.temporal_ate;
  j["chain"] = detail::chain_json(res.chain);
  json covs = json::array();
  for (const auto& cp : res.covariates)
    covs.push_back({{"covariate", cp.name}, {"winner", describe(cp.report.best().hp)}, {"chain", detail::chain_json(cp.chain)}});
  j["covariate_pipelines"] = covs;

  if (c.att_asa) {
    if (!ds.has_treatment_mask()) throw Error("analysis.att_asa needs data.treated");
    auto aa = estimate_att_asa(ds, c.pipeline);
    j["att"] = aa.estimate.att;
    j["asa"] = aa.estimate.asa ? json(*aa.estimate.asa) : json(nullptr);
    j["n_treated"] = aa.estimate.n_treated;
    j["n_untreated"] = aa.estimate.n_untreated;
    j["att_winner"] = describe(aa.treated.report.best().hp);
    if (aa.untreated) j["asa_winner"] = describe(aa.untreated->report.best().hp);
  }
  if (c.group_time) {
    auto gt = group_time_effects(ds, c.pipeline);
    detail::CsvWriter w({"cohort", "time", "horizon", "n_units", "ate"});
    for (const auto& cell : gt.cells)
      w.cell(cell.cohort).cell(cell.period).cell(cell.horizon).cell(cell.n_units).cell(cell.ate).end();
    w.save(c.output_dir / "group_time.csv");
    json coh = json::array();
    for (const auto& r : gt.cohorts)
      coh.push_back({{"cohort", r.cohort}, {"n_units", r.n_units}, {"winner", r.winner}, {"temporal_ate", r.temporal_ate}});
    j["group_time"] = {{"cohorts", coh}, {"skipped", gt.skipped}, {"overall", gt.overall}};
    for (const auto& s : gt.skipped) *ctx.log << "warning: " << s << '\n';
  }
  detail::write_json(c.output_dir / "estimate.json", j);
  detail::write_json(c.output_dir / "model.json", detail::model_json(res.chain));
  *ctx.log << "estimate: temporal ATE " << format_double(res.effects.temporal_ate) << " over "
           << res.horizon << " horizon(s)\n";
  return 0;
}

inline int cmd_bootstrap(const Context& ctx) {
  const Config& c = ctx.config;
  auto ds = load_dataset(c);
  detail::ensure_out(c);
  auto rep = detail::design_report(ctx, ds, "bootstrap");
  auto point = detail::pipeline_from_design(ds, c.pipeline, rep);
  // The full-pipeline mode reruns the horse race on every replicate; the
  // point estimate above uses the stored design.
  auto br = bootstrap_ate(ds, c.pipeline, c.bootstrap, &point);
  json j = detail::stamp(c, "bootstrap");
  j["mode"] = to_string(br.mode);
  j["B"] = br.B;
  j["alpha"] = br.alpha;
  j["ate"] = point.effects.ate;
  j["temporal_ate"] = point.effects.temporal_ate;
  json iv = json::array();
  for (std::size_t k = 0; k < br.intervals.size(); ++k)
    iv.push_back({{"horizon", k + 1}, {"time", point.effects.periods[k]}, {"ate", point.effects.ate[k]},
                  {"lower", br.intervals[k].lower}, {"upper", br.intervals[k].upper}});
  j["intervals"] = iv;
  j["temporal_interval"] = detail::interval_json(br.temporal_interval);
  j["retried_replicates"] = br.failures;
  j["retry_messages"] = br.failure_messages;
  detail::write_json(c.output_dir / "bootstrap.json", j);
  std::vector<std::string> header{"replicate"};
  for (std::size_t k = 0; k < br.replicates.cols(); ++k) header.push_back("ate_h" + std::to_string(k + 1));
  header.push_back("temporal_ate");
  detail::CsvWriter w(header);
  for (std::size_t b = 0; b < br.B; ++b) {
    w.cell(b);
    for (std::size_t k = 0; k < br.replicates.cols(); ++k) w.cell(br.replicates(b, k));
    w.cell(br.temporal[b]).end();
  }
  w.save(c.output_dir / "bootstrap_replicates.csv");
  *ctx.log << "bootstrap: " << br.B << " replicates (" << to_string(br.mode) << ")\n";
  return 0;
}

inline int cmd_placebo(const Context& ctx) {
  const Config& c = ctx.config;
  auto ds = load_dataset(c);
  detail::ensure_out(c);
  std::optional<EffectSet> main_effects;
  if (!c.placebo.trim_fractions.empty())
    main_effects = detail::read_effects_csv(c.output_dir / "effects.csv", "estimate");
  std::optional<BootstrapOptions> bo;
  if (c.placebo.bootstrap) {
    bo = c.bootstrap;
    bo->seed = derive_seed(c.seed, Stream::Placebo, 1);
  }
  auto pr = placebo_test(ds, c.pipeline, c.placebo.n_holdout, bo);
  const auto& e = pr.run.effects;
  detail::write_effects_csv(c.output_dir / "placebo_effects.csv", e);
  std::vector<double> errors(e.individual.data().begin(), e.individual.data().end());
  auto summary = error_distribution(errors, c.placebo.error_threshold, c.placebo.bins);
  detail::CsvWriter h({"lower", "upper", "count"});
  for (const auto& b : summary.histogram) h.cell(b.lower).cell(b.upper).cell(b.count).end();
  h.save(c.output_dir / "placebo_histogram.csv");

  json j = detail::stamp(c, "placebo");
  j["n_holdout"] = pr.n_holdout;
  j["fake_t0_time"] = pr.fake_t0_time;
  j["winner"] = describe(pr.run.report.best().hp);
  j["periods"] = e.periods;
  j["ate"] = e.ate;
  j["temporal_ate"] = e.temporal_ate;
  if (pr.bootstrap) {
    json iv = json::array();
    for (const auto& x : pr.bootstrap->intervals) iv.push_back(detail::interval_json(x));
    j["intervals"] = iv;
    j["bootstrap_mode"] = to_string(pr.bootstrap->mode);
    j["B"] = pr.bootstrap->B;
  }
  j["errors"] = {{"n", summary.n},
                 {"mean", summary.mean},
                 {"sd", summary.sd},
                 {"skewness", summary.skewness},
                 {"excess_kurtosis", summary.excess_kurtosis},
                 {"threshold", summary.threshold},
                 {"share_below", summary.frac_below},
                 {"share_above", summary.frac_above}};
  if (main_effects) {
    auto rows = sensitivity_trim(*main_effects, e, c.placebo.trim_fractions);
    std::vector<std::string> header{"fraction", "n_dropped", "n_kept"};
    for (std::size_t k = 0; k < main_effects->n_horizons(); ++k) header.push_back("ate_h" + std::to_string(k + 1));
    header.push_back("temporal_ate");
    detail::CsvWriter w(header);
    for (const auto& r : rows) {
      w.cell(r.fraction).cell(r.n_dropped).cell(r.n_kept);
      for (double v : r.ate) w.cell(v);
      w.cell(r.temporal_ate).end();
    }
    w.save(c.output_dir / "trim.csv");
  }
  detail::write_json(c.output_dir / "placebo.json", j);
  *ctx.log << "placebo: mean forecast error " << format_double(e.temporal_ate) << " over "
           << pr.n_holdout << " held-out period(s)\n";
  return 0;
}

inline int cmd_cate(const Context& ctx) {
  const Config& c = ctx.config;
  if (c.cate.covariates.empty() && c.cate.groups.empty())
    throw ConfigError("config error at config.cate.covariates: name at least one heterogeneity covariate");
  auto ds = load_dataset(c);
  detail::ensure_out(c);
  auto e = detail::read_effects_csv(c.output_dir / "effects.csv", "estimate");
  if (e.n_units() != ds.n_units()) throw Error("effects.csv does not match the configured data; rerun `mlcm estimate`");
  for (std::size_t i = 0; i < ds.n_units(); ++i)
    if (e.unit_ids[i] != ds.unit_id(i)) throw Error("effects.csv unit order does not match the data; rerun `mlcm estimate`");
  if (c.cate.horizon > e.n_horizons())
    throw ConfigError("config error at config.cate.horizon: only " + std::to_string(e.n_horizons()) + " horizons");
  const auto effects = c.cate.horizon == 0 ? e.unit_temporal() : e.horizon_column(c.cate.horizon);
  // Heterogeneity covariates are read at the last pre-intervention period.
  const std::size_t t_h = ds.t0() - 1;
  auto cov_index = [&](const std::string& name, const std::string& path) {
    auto j = ds.covariate_index(name);
    if (!j) throw ConfigError("config error at " + path + ": unknown covariate '" + name + "'");
    return *j;
  };
  json out = detail::stamp(c, "cate");
  out["horizon"] = c.cate.horizon;
  out["covariate_period"] = ds.time_point(t_h);
  if (!c.cate.covariates.empty()) {
    Matrix h(ds.n_units(), c.cate.covariates.size());
    for (std::size_t k = 0; k < c.cate.covariates.size(); ++k) {
      const auto j = cov_index(c.cate.covariates[k], "config.cate.covariates[" + std::to_string(k) + "]");
      for (std::size_t i = 0; i < ds.n_units(); ++i) h(i, k) = ds.x(i, t_h, j);
    }
    const std::size_t min_node = c.cate.min_node ? *c.cate.min_node : default_cate_min_node(ds.n_units());
    auto tree = grow_cate_tree(effects, h, c.cate.covariates, min_node, c.cate.max_depth, e.unit_ids);
    bootstrap_cate(effects, tree, c.cate.B, derive_seed(c.seed, Stream::CateBootstrap, 0), c.cate.alpha);
    json tj = cate_tree_to_json(tree);
    std::vector<std::string> lines;
    std::istringstream is(describe_tree(tree));
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    tj["diagram"] = lines;
    out["tree"] = tj;
    detail::CsvWriter w({"leaf", "rule", "n_units", "cate", "lower", "upper", "single_unit"});
    detail::CsvWriter u({"unit", "leaf"});
    std::vector<std::size_t> leaf_of(ds.n_units(), 0);
    for (auto k : tree.leaves()) {
      const auto& nd = tree.nodes[k];
      w.cell(k).cell(node_path(tree, k)).cell(nd.size).cell(nd.mean);
      w.cell(nd.interval ? nd.interval->lower : kNaN).cell(nd.interval ? nd.interval->upper : kNaN);
      w.cell(std::size_t{nd.degenerate ? 1u : 0u}).end();
      for (auto i : nd.units) leaf_of[i] = k;
    }
    for (std::size_t i = 0; i < ds.n_units(); ++i) u.cell(e.unit_ids[i]).cell(leaf_of[i]).end();
    w.save(c.output_dir / "cate_leaves.csv");
    u.save(c.output_dir / "cate_units.csv");
  }
  if (!c.cate.groups.empty()) {
    const auto j = cov_index(c.cate.groups, "config.cate.groups");
    GroupSpec g;
    for (std::size_t i = 0; i < ds.n_units(); ++i) g.labels.push_back(format_double(ds.x(i, t_h, j)));
    detail::CsvWriter w({"group", "horizon", "n_units", "cate"});
    json groups = json::array();
    for (std::size_t k = c.cate.horizon == 0 ? 0 : c.cate.horizon; k <= (c.cate.horizon == 0 ? 0 : c.cate.horizon); ++k)
      for (const auto& ge : cate(e, g, k)) {
        w.cell(c.cate.groups + "=" + ge.group).cell(k).cell(ge.size).cell(ge.effect).end();
        groups.push_back({{"group", ge.group}, {"n_units", ge.size}, {"cate", ge.effect}});
      }
    w.save(c.output_dir / "cate_groups.csv");
    out["groups"] = {{"covariate", c.cate.groups}, {"cells", groups}};
  }
  detail::write_json(c.output_dir / "cate.json", out);
  *ctx.log << "cate: done\n";
  return 0;
}

inline int cmd_simulate(const Context& ctx) {
  const Config& c = ctx.config;
  if (c.simulate.scenarios.empty())
    throw ConfigError("config error at config.simulate: section missing or no scenarios");
  detail::ensure_out(c);
  detail::CsvWriter table({"scenario", "dgp", "N", "phi", "sigma_u", "t0", "horizon", "True ATE", "Bias",
                           "Rel. Bias", "Coverage", "Population ATE", "Signed bias", "Coverage (sample ATE)",
                           "Mean CI width", "R", "B", "failures"});
  detail::CsvWriter reps({"scenario", "replication", "horizon", "estimate", "truth", "lower", "upper",
                          "winner", "error"});
  json scen = json::array();
  for (std::size_t s = 0; s < c.simulate.scenarios.size(); ++s) {
    const auto& sc = c.simulate.scenarios[s];
    const auto& label = c.simulate.labels[s];
    BootstrapOptions bo;
    bo.B = c.simulate.B;
    bo.mode = c.simulate.mode;
    bo.alpha = c.simulate.alpha;
    auto est = mlcm_estimator(c.pipeline, bo);
    auto mc = run_monte_carlo(sc, c.simulate.R, est, c.simulate.B, c.simulate.truth_units);
    for (const auto& r : mc.rows) {
      table.cell(label).cell(std::string(to_string(sc.dgp))).cell(sc.N).cell(sc.phi).cell(sc.sigma_u).cell(sc.t0);
      table.cell(r.horizon).cell(r.true_ate).cell(r.bias).cell(r.rel_bias).cell(r.coverage);
      table.cell(r.population_ate).cell(r.signed_bias).cell(r.coverage_sample).cell(r.mean_width);
      table.cell(mc.R).cell(mc.B).cell(mc.failures).end();
    }
    for (const auto& r : mc.replications) {
      if (r.failed) {
        reps.cell(label).cell(r.replication).cell(std::size_t{0}).cell(kNaN).cell(kNaN).cell(kNaN).cell(kNaN);
        reps.cell(std::string()).cell(r.error).end();
        continue;
      }
      for (std::size_t k = 0; k < r.estimate.size(); ++k) {
        reps.cell(label).cell(r.replication).cell(k + 1).cell(r.estimate[k]).cell(r.truth[k]);
        reps.cell(r.intervals.empty() ? kNaN : r.intervals[k].lower).cell(r.intervals.empty() ? kNaN : r.intervals[k].upper);
        reps.cell(r.winner).cell(std::string()).end();
      }
    }
    json rows = json::array();
    for (const auto& r : mc.rows)
      rows.push_back({{"horizon", r.horizon}, {"true_ate", r.true_ate}, {"bias", r.bias}, {"rel_bias", r.rel_bias},
                      {"coverage", r.coverage}, {"population_ate", r.population_ate}, {"signed_bias", r.signed_bias}});
    scen.push_back({{"scenario", label}, {"seed", sc.seed}, {"R", mc.R}, {"B", mc.B}, {"failures", mc.failures}, {"rows", rows}});
    if (c.simulate.write_panels) {
      auto sp = gen_panel(sc);
      std::ostringstream os;
      write_panel_csv(sp.data, os);
      detail::write_text(c.output_dir / ("panel_" + label + ".csv"), os.str());
    }
    *ctx.log << "simulate: " << label << " done (" << mc.failures << " failed replications)\n";
  }
  table.save(c.output_dir / "mc_table.csv");
  reps.save(c.output_dir / "mc_replications.csv");
  json j = detail::stamp(c, "simulate");
  j["bootstrap_mode"] = to_string(c.simulate.mode);
  j["scenarios"] = scen;
  detail::write_json(c.output_dir / "simulate.json", j);
  return 0;
}

/// Merges whatever artifacts a directory holds into summary.json plus
/// plot-data CSVs. A directory without artifacts is an error.
inline int cmd_report(const fs::path& dir, const fs::path& out_dir, std::ostream& log) {
  if (!fs::is_directory(dir)) throw Error("report: " + dir.string() + " is not a directory");
  json summary;
  std::size_t found = 0;
  auto maybe = [&](const std::string& file, const std::string& key) {
    const auto p = dir / file;
    if (!fs::exists(p)) return false;
    std::ifstream in(p);
    summary[key] = json::parse(in);
    ++found;
    return true;
  };
  if (maybe("design_report.json", "design")) {
    auto& d = summary["design"];
    d.erase("report");  // candidate detail lives in cv_results.csv
  }
  maybe("estimate.json", "estimate");
  maybe("bootstrap.json", "bootstrap");
  maybe("placebo.json", "placebo");
  maybe("cate.json", "cate");
  maybe("simulate.json", "simulate");
  if (found == 0)
    throw Error("report: no artifacts in " + dir.string() + "; run design, estimate, placebo, bootstrap, cate or simulate first");
  fs::create_directories(out_dir);
  std::set<std::string> hashes;
  for (auto it = summary.begin(); it != summary.end(); ++it)
    if (it->contains("config_hash")) hashes.insert((*it)["config_hash"].get<std::string>());
  summary["config_hashes"] = hashes;
  if (hashes.size() > 1) log << "warning: artifacts come from " << hashes.size() << " different configs\n";
  if (summary.contains("estimate")) {
    summary["seed"] = summary["estimate"]["seed"];
    summary["config_hash"] = summary["estimate"]["config_hash"];
  }

  auto histogram_csv = [&](const std::vector<double>& v, const fs::path& p) {
    auto s = error_distribution(v, 1.0, 20);
    detail::CsvWriter w({"lower", "upper", "count"});
    for (const auto& b : s.histogram) w.cell(b.lower).cell(b.upper).cell(b.count).end();
    w.save(p);
  };
  if (fs::exists(dir / "effects.csv")) {
    auto e = detail::read_effects_csv(dir / "effects.csv", "estimate");
    histogram_csv(e.unit_temporal(), out_dir / "plot_effect_distribution.csv");
    detail::CsvWriter w({"horizon", "time", "ate", "lower", "upper"});
    const json* iv = summary.contains("bootstrap") ? &summary["bootstrap"]["intervals"] : nullptr;
    for (std::size_t k = 0; k < e.n_horizons(); ++k) {
      w.cell(e.horizons[k]).cell(e.periods[k]).cell(e.ate[k]);
      if (iv && k < iv->size()) w.cell((*iv)[k]["lower"].get<double>()).cell((*iv)[k]["upper"].get<double>());
      else w.cell(kNaN).cell(kNaN);
      w.end();
    }
    w.save(out_dir / "plot_ate_path.csv");
  }
  if (fs::exists(dir / "placebo_effects.csv")) {
    auto e = detail::read_effects_csv(dir / "placebo_effects.csv", "placebo");
    histogram_csv(std::vector<double>(e.individual.data().begin(), e.individual.data().end()),
                  out_dir / "plot_placebo_errors.csv");
  }
  if (fs::exists(dir / "mc_table.csv") && out_dir != dir) fs::copy_file(dir / "mc_table.csv", out_dir / "plot_mc_table.csv", fs::copy_options::overwrite_existing);
  else if (fs::exists(dir / "mc_table.csv")) {
    std::ifstream in(dir / "mc_table.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    detail::write_text(out_dir / "plot_mc_table.csv", ss.str());
  }
  detail::write_json(out_dir / "summary.json", summary);
  log << "report: merged " << found << " artifact(s) into " << (out_dir / "summary.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 runtime
/// error, 2 usage or config error.
inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mlcm: machine learning control method for panel data"};
  app.require_subcommand(1, 1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker threads (default: MLCM_THREADS or 1)");

  std::string config_path, out_override;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::map<std::string, CLI::App*> cmds;
  const std::vector<std::pair<std::string, std::string>> names{
      {"design", "panel cross-validation horse race on the pre-treatment periods"},
      {"estimate", "refit the winner, forecast counterfactuals and estimate effects"},
      {"placebo", "in-time placebo test with a fake intervention date"},
      {"bootstrap", "unit block bootstrap intervals for the ATE"},
      {"cate", "CATE tree and group effects from estimated unit effects"},
      {"simulate", "Monte Carlo bias and coverage study"}};
  for (const auto& [name, help] : names) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("config", config_path, "JSON config file")->required();
    sc->add_option("--out", out_override, "output directory (overrides output_dir)");
    sc->add_option("--set", sets, "override a scalar config field, key.path=value");
    sc->add_option("--seed", seed, "master seed (overrides seed)");
    cmds[name] = sc;
  }
  std::string report_dir, report_out;
  auto* rep = app.add_subcommand("report", "merge artifacts into summary.json and plot-data CSVs");
  rep->add_option("dir", report_dir, "directory holding command outputs")->required();
  rep->add_option("--out", report_out, "where to write the summary (default: dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  if (threads > 0) set_max_threads(threads);
  try {
    if (rep->parsed()) return cmd_report(report_dir, report_out.empty() ? report_dir : report_out, err);
    json raw = read_config_json(config_path);
    if (!raw.is_object()) throw ConfigError("config error at config: expected an object");
    for (const auto& s : sets) apply_override(raw, s);
    if (seed) raw["seed"] = *seed;
    if (!out_override.empty()) raw["output_dir"] = fs::absolute(out_override).string();
    Context ctx{parse_config(raw, fs::path(config_path).parent_path()), &err};
    for (const auto& [name, sc] : cmds) {
      if (!sc->parsed()) continue;
      if (name == "design") return cmd_design(ctx);
      if (name == "estimate") return cmd_estimate(ctx);
      if (name == "placebo") return cmd_placebo(ctx);
      if (name == "bootstrap") return cmd_bootstrap(ctx);
      if (name == "cate") return cmd_cate(ctx);
      if (name == "simulate") return cmd_simulate(ctx);
    }
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mlcm::cli
