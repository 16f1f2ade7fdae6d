#pragma once

// Simulated panels with known treatment effects and the Monte Carlo
// harness that scores the estimator against them.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mlcm/inference.hpp"

namespace mlcm {

enum class Dgp { linear, nonlinear };
enum class EffectScale { pre_period, full_path };

inline const char* to_string(Dgp d) { return d == Dgp::linear ? "linear" : "nonlinear"; }
inline Dgp dgp_from_string(const std::string& s) {
  if (s == "linear") return Dgp::linear;
  if (s == "nonlinear" || s == "non-linear") return Dgp::nonlinear;
  throw Error("unknown dgp '" + s + "' (expected linear or nonlinear)");
}
inline const char* to_string(EffectScale e) { return e == EffectScale::pre_period ? "pre_period" : "full_path"; }
inline EffectScale effect_scale_from_string(const std::string& s) {
  if (s == "pre_period") return EffectScale::pre_period;
  if (s == "full_path") return EffectScale::full_path;
  throw Error("unknown effect scale '" + s + "' (expected pre_period or full_path)");
}

inline constexpr std::size_t kSimCovariates = 11;

struct SimConfig {
  std::size_t N = 400;
  std::size_t T = 7;
  std::size_t t0 = 4;  // pre periods
  double phi = 0.8;
  double sigma_eps = 2.0;
  double sigma_u = 1.0;
  std::array<double, kSimCovariates> beta{0, 2, 1, 2.5, 0.1, 2, 1, 0, 0, 2, 1.5};
  Dgp dgp = Dgp::linear;
  std::vector<double> effect_sd_multipliers{2.0, 1.5, 1.0};
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;              // periods simulated and dropped before period 1
  double y_init = 0.0;                  // outcome before the first simulated period
  bool contemporaneous_covariates = false;  // Y_t driven by X_t instead of X_{t-1}
  EffectScale effect_scale = EffectScale::pre_period;
  bool fixed_categoricals = false;      // X8, X9 drawn once per unit
  bool absolute_effects = false;        // multipliers are the effects themselves

  void validate() const {
    if (N < 1) throw Error("simulation needs N >= 1");
    if (t0 < 2 || t0 >= T) throw Error("simulation needs T > t0 >= 2");
    if (!(sigma_eps > 0.0)) throw Error("sigma_eps must be > 0");
    if (!(sigma_u >= 0.0)) throw Error("sigma_u must be >= 0");
    if (effect_sd_multipliers.size() != T - t0)
      throw Error("effect_sd_multipliers needs T - t0 = " + std::to_string(T - t0) + " entries");
  }
};

inline std::vector<std::string> sim_covariate_names() {
  std::vector<std::string> out;
  for (std::size_t j = 1; j <= kSimCovariates; ++j) out.push_back("x" + std::to_string(j));
  return out;
}

/// One unit's simulated path. Covariates cover periods 0..T (period 0 is
/// hidden and feeds Y_1); outcomes cover periods 1..T.
struct UnitPath {
  std::vector<double> y0;                  // T untreated outcomes
  std::vector<std::array<double, kSimCovariates>> x;  // T+1 rows, index = period
  double u = 0.0;
};

namespace detail {

// Cholesky factor of the covariance of (X3, X4, X5) shocks.
inline const std::array<std::array<double, 3>, 3>& mvn_factor() {
  static const auto f = [] {
    const double s[3][3] = {{1.0, 0.5, 0.7}, {0.5, 1.0, 0.3}, {0.7, 0.3, 1.0}};
    std::array<std::array<double, 3>, 3> l{};
    for (int j = 0; j < 3; ++j) {
      double d = s[j][j];
      for (int k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
      l[j][j] = std::sqrt(d);
      for (int i = j + 1; i < 3; ++i) {
        double v = s[i][j];
        for (int k = 0; k < j; ++k) v -= l[i][k] * l[j][k];
        l[i][j] = v / l[j][j];
      }
    }
    return l;
  }();
  return f;
}

inline std::array<double, kSimCovariates> draw_covariates(double t, double u, Rng& rng,
                                                          double fixed8, double fixed9, bool fixed) {
  std::array<double, kSimCovariates> x{};
  const double nu1 = standard_normal(rng);
  const double nu2 = 0.2 * standard_normal(rng);
  const double z[3] = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
  const auto& l = mvn_factor();
  double mv[3];
  for (int i = 0; i < 3; ++i) {
    mv[i] = 0.0;
    for (int k = 0; k <= i; ++k) mv[i] += l[i][k] * z[k];
  }
  const double nu6 = standard_normal(rng);
  const double nu7 = 0.2 * standard_normal(rng);
  const double b8 = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  const double c9 = static_cast<double>(1 + uniform_index(rng, 3));
  x[0] = 0.1 * t + u + nu1;
  x[1] = 0.1 * t + u + nu2;
  x[2] = u + mv[0];
  x[3] = u + mv[1];
  x[4] = u + mv[2];
  x[5] = u - nu6;
  x[6] = (0.1 * t + nu1) * (0.1 * t + nu1) + u + nu7;
  x[7] = fixed ? fixed8 : b8;
  x[8] = fixed ? fixed9 : c9;
  x[9] = x[2] * x[8];
  x[10] = x[1] * x[7];
  return x;
}

}  // namespace detail

/// Simulates unit i of the panel from its own random stream.
inline UnitPath simulate_unit(const SimConfig& cfg, Rng& rng) {
  UnitPath p;
  p.u = 1.0 + cfg.sigma_u * standard_normal(rng);
  const double f8 = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  const double f9 = static_cast<double>(1 + uniform_index(rng, 3));
  const auto burn = static_cast<long>(cfg.burn_in);
  double y = cfg.y_init;
  std::array<double, kSimCovariates> prev{};
  p.x.resize(cfg.T + 1);
  p.y0.resize(cfg.T);
  for (long t = -burn; t <= static_cast<long>(cfg.T); ++t) {
    auto x = detail::draw_covariates(static_cast<double>(t), p.u, rng, f8, f9, cfg.fixed_categoricals);
    if (t > -burn) {
      const auto& drive = cfg.contemporaneous_covariates ? x : prev;
      double lin = cfg.phi * y;
      for (std::size_t j = 0; j < kSimCovariates; ++j) lin += drive[j] * cfg.beta[j];
      const double eps = cfg.sigma_eps * standard_normal(rng);
      y = (cfg.dgp == Dgp::linear ? lin : std::sin(lin)) + eps;
      if (t >= 1) p.y0[static_cast<std::size_t>(t - 1)] = y;
    }
    if (t >= 0) p.x[static_cast<std::size_t>(t)] = x;
    prev = x;
  }
  return p;
}

/// Unit-level effect scale: SD of the untreated outcome over the pre
/// periods (or the whole path).
inline double effect_sd(const SimConfig& cfg, const std::vector<double>& y0) {
  const std::size_t len = cfg.effect_scale == EffectScale::pre_period ? cfg.t0 : cfg.T;
  return stddev(std::span<const double>(y0.data(), len), 1);
}

struct SimPanel {
  PanelDataset data;
  Matrix y0_post;          // N x K hidden untreated outcomes
  Matrix delta;            // N x K true effects
  std::vector<double> true_ate;
};

inline SimPanel gen_panel(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.N, T = cfg.T, m = kSimCovariates, K = T - cfg.t0;
  PanelArrays a;
  a.covariate_names = sim_covariate_names();
  a.covariate_kinds.assign(m, CovariateKind::continuous);
  for (std::size_t t = 1; t <= T; ++t) a.time_points.push_back(static_cast<std::int64_t>(t));
  a.outcome.resize(n * T);
  a.covariates.resize(n * T * m);
  SimPanel sp;
  sp.y0_post = Matrix(n, K);
  sp.delta = Matrix(n, K);
  sp.true_ate.assign(K, 0.0);
  std::vector<UnitPath> paths(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = make_rng(cfg.seed, Stream::Covariates, i);
    paths[i] = simulate_unit(cfg, rng);
  });
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = paths[i];
    a.unit_ids.push_back("u" + std::to_string(i + 1));
    const double sd = effect_sd(cfg, p.y0);
    for (std::size_t t = 0; t < T; ++t) {
      double y = p.y0[t];
      if (t >= cfg.t0) {
        const std::size_t k = t - cfg.t0;
        const double d = cfg.effect_sd_multipliers[k] * (cfg.absolute_effects ? 1.0 : sd);
        sp.y0_post(i, k) = p.y0[t];
        sp.delta(i, k) = d;
        y = p.y0[t] + d;
      }
      a.outcome[i * T + t] = y;
      for (std::size_t j = 0; j < m; ++j) a.covariates[(i * T + t) * m + j] = p.x[t + 1][j];
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sp.delta(i, k);
    sp.true_ate[k] = s / static_cast<double>(n);
  }
  sp.data = PanelDataset(std::move(a), cfg.t0);
  return sp;
}

/// Population ATE per horizon, approximated on a large independent panel
/// generated in chunks from the Truth stream.
inline std::vector<double> population_ate(const SimConfig& cfg, std::size_t n_units = 100000) {
  cfg.validate();
  if (cfg.absolute_effects) return cfg.effect_sd_multipliers;
  const std::size_t chunk = 10000;
  const std::size_t chunks = (n_units + chunk - 1) / chunk;
  std::vector<double> sums(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    SimConfig sc = cfg;
    sc.seed = derive_seed(cfg.seed, Stream::Truth, c);
    const std::size_t lo = c * chunk, hi = std::min(n_units, lo + chunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = make_rng(sc.seed, Stream::Covariates, i - lo);
      s += effect_sd(cfg, simulate_unit(cfg, rng).y0);
    }
    sums[c] = s;
  });
  double total = 0.0;
  for (double s : sums) total += s;
  const double mean_sd = total / static_cast<double>(n_units);
  std::vector<double> out;
  for (double mlt : cfg.effect_sd_multipliers) out.push_back(mlt * mean_sd);
  return out;
}

/// Extended scenario grid: N x phi x sigma_u, each at T = 7 (t0 = 4)
/// and T = 12 (t0 = 9).
inline std::vector<SimConfig> scenario_grid(Dgp dgp = Dgp::linear) {
  std::vector<SimConfig> out;
  for (std::size_t n : {400u, 200u})
    for (double phi : {0.8, 1.2})
      for (double su : {1.0, 0.1})
        for (std::size_t t0 : {4u, 9u}) {
          SimConfig c;
          c.N = n;
          c.phi = phi;
          c.sigma_u = su;
          c.t0 = t0;
          c.T = t0 + 3;
          c.dgp = dgp;
          out.push_back(c);
        }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct McEstimate {
  std::vector<double> ate;
  std::vector<Interval> intervals;  // empty when no bootstrap was run
  std::string winner;
};

using McEstimator = std::function<McEstimate(const SimPanel&, std::uint64_t seed)>;

/// The MLCM estimator: pipeline plus optional bootstrap.
inline McEstimator mlcm_estimator(PipelineConfig pipeline, BootstrapOptions boot) {
  return [pipeline, boot](const SimPanel& sp, std::uint64_t seed) {
    PipelineConfig pc = pipeline;
    pc.seed = seed;
    auto res = run_pipeline(sp.data, pc);
    McEstimate e;
    e.ate = res.effects.ate;
    e.winner = describe(res.report.best().hp);
    if (boot.B >= 2) {
      BootstrapOptions bo = boot;
      bo.seed = derive_seed(seed, Stream::Bootstrap, 0);
      e.intervals = bootstrap_ate(sp.data, pc, bo, &res).intervals;
    }
    return e;
  };
}

struct McReplication {
  std::size_t replication = 0;
  bool failed = false;
  std::string error;
  std::vector<double> estimate;
  std::vector<double> truth;        // sample ATE of the replication
  std::vector<Interval> intervals;
  std::string winner;
};

struct McRow {
  std::size_t horizon = 0;
  double true_ate = 0.0;            // mean sample truth over replications
  double population_ate = 0.0;
  double bias = 0.0;                // mean |estimate - sample truth|
  double signed_bias = 0.0;         // mean (estimate - sample truth)
  double rel_bias = 0.0;            // bias / |true_ate|
  double coverage = kNaN;           // intervals covering the population ATE
  double coverage_sample = kNaN;    // intervals covering the sample ATE
  double mean_width = kNaN;
};

struct MonteCarloReport {
  SimConfig sim;
  std::size_t R = 0;
  std::size_t B = 0;
  std::size_t failures = 0;
  std::vector<McRow> rows;
  std::vector<McReplication> replications;

  double mean_rel_bias() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.rel_bias;
    return rows.empty() ? kNaN : s / static_cast<double>(rows.size());
  }
};

inline MonteCarloReport run_monte_carlo(const SimConfig& sim, std::size_t R, const McEstimator& est,
                                        std::size_t B = 0, std::size_t truth_units = 100000) {
  if (R < 1) throw Error("Monte Carlo needs R >= 1");
  sim.validate();
  MonteCarloReport rep;
  rep.sim = sim;
  rep.R = R;
  rep.B = B;
  const std::size_t K = sim.T - sim.t0;
  const auto pop = population_ate(sim, truth_units);
  rep.replications.resize(R);
  parallel_for(R, [&](std::size_t r) {
    auto& out = rep.replications[r];
    out.replication = r;
    try {
      SimConfig sc = sim;
      sc.seed = derive_seed(sim.seed, Stream::Replication, r);
      auto sp = gen_panel(sc);
      out.truth = sp.true_ate;
      auto e = est(sp, sc.seed);
      if (e.ate.size() != K) throw Error("estimator returned the wrong number of horizons");
      out.estimate = e.ate;
      out.intervals = e.intervals;
      out.winner = e.winner;
    } catch (const std::exception& ex) {
      out.failed = true;
      out.error = ex.what();
    }
  });
  std::size_t ok = 0;
  for (const auto& r : rep.replications) ok += r.failed ? 0 : 1;
  rep.failures = R - ok;
  if (ok == 0) throw Error("every Monte Carlo replication failed: " + rep.replications[0].error);
  for (std::size_t k = 0; k < K; ++k) {
    McRow row;
    row.horizon = k + 1;
    row.population_ate = pop[k];
    std::size_t nint = 0;
    double cov = 0.0, covs = 0.0, width = 0.0;
    for (const auto& r : rep.replications) {
      if (r.failed) continue;
      const double err = r.estimate[k] - r.truth[k];
      row.true_ate += r.truth[k];
      row.bias += std::abs(err);
      row.signed_bias += err;
      if (!r.intervals.empty()) {
        ++nint;
        cov += r.intervals[k].covers(pop[k]) ? 1.0 : 0.0;
        covs += r.intervals[k].covers(r.truth[k]) ? 1.0 : 0.0;
        width += r.intervals[k].upper - r.intervals[k].lower;
      }
    }
    const double dn = static_cast<double>(ok);
    row.true_ate /= dn;
    row.bias /= dn;
    row.signed_bias /= dn;
    row.rel_bias = row.bias / std::abs(row.true_ate);
    if (nint > 0) {
      row.coverage = cov / static_cast<double>(nint);
      row.coverage_sample = covs / static_cast<double>(nint);
      row.mean_width = width / static_cast<double>(nint);
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace mlcm
