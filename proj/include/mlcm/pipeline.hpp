#pragma once

// Design and Analysis stages end to end: horse race, refit, forecast chain,
// counterfactuals and effects. Also the frozen-model refit used by the
// fixed_model bootstrap, separate treated/untreated runs and staggered
// cohorts.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlcm/causal.hpp"

namespace mlcm {

struct PipelineConfig {
  LagSpec lags;
  GridSpec grid;
  std::optional<GridSpec> chain_grid;    // defaults to `grid`
  std::vector<std::size_t> keep_grid;    // empty: no pilot selection
  PilotOptions pilot;
  std::size_t rolling_window = 0;
  std::size_t horizon = 0;               // 0: every post period
  CovariateMode covariate_mode = CovariateMode::lags_only;
  std::uint64_t seed = 0;

  std::size_t resolve_horizon(const PanelDataset& ds) const {
    const std::size_t k = horizon == 0 ? ds.n_post() : horizon;
    if (k < 1 || k > ds.n_post())
      throw Error("horizon " + std::to_string(k) + " exceeds the " + std::to_string(ds.n_post()) +
                  " post periods");
    return k;
  }
};

struct CovariatePipeline {
  std::string name;
  CvReport report;
  ForecastChain chain;
  Matrix forecasts;  // N x K
};

struct PipelineResult {
  std::size_t horizon = 0;
  CvReport report;
  ForecastChain chain;
  Matrix counterfactuals;
  EffectSet effects;
  std::vector<CovariatePipeline> covariates;
};

/// Selected hyperparameters of a finished run, for refits that skip the
/// horse race.
struct FrozenPipeline {
  HyperParams winner;
  std::vector<std::size_t> columns;
  std::vector<HyperParams> chain;
  std::vector<FrozenPipeline> covariates;
};

inline FrozenPipeline freeze(const CvReport& report, const ForecastChain& chain) {
  return {report.best().hp, report.best().columns, chain_hyperparams(chain), {}};
}

inline FrozenPipeline freeze(const PipelineResult& r) {
  FrozenPipeline f = freeze(r.report, r.chain);
  for (const auto& c : r.covariates) f.covariates.push_back(freeze(c.report, c.chain));
  return f;
}

namespace detail {

struct ForecastRun {
  CvReport report;
  ForecastChain chain;
  Matrix forecasts;
};

inline ForecastRun forecast_outcome(const PanelDataset& ds, const PipelineConfig& cfg,
                                    std::size_t horizon, const std::vector<Matrix>* cov_fc,
                                    const FrozenPipeline* frozen) {
  ForecastRun run;
  const auto pre = ds.pre();
  StepModel base;
  ChainOptions copt;
  copt.grid = cfg.chain_grid ? *cfg.chain_grid : cfg.grid;
  copt.seed = cfg.seed;
  copt.mode = cfg.covariate_mode;
  copt.covariate_forecasts = cov_fc;
  if (frozen) {
    run.report.lags = cfg.lags;
    base = fit_step(pre, cfg.lags, frozen->winner, frozen->columns, cfg.rolling_window);
    copt.frozen = frozen->chain;
    if (base.model.linear() || horizon == 1) copt.frozen.clear();
  } else {
    run.report = panel_cv(pre, cfg.lags, cfg.grid, cfg.keep_grid,
                          CvOptions{cfg.rolling_window, cfg.seed}, cfg.pilot);
    base = refit_winner(pre, run.report, cfg.rolling_window);
  }
  run.chain = build_forecast_chain(ds, std::move(base), horizon, copt);
  run.forecasts = forecast_counterfactuals(ds, run.chain, horizon, cfg.covariate_mode, cov_fc);
  return run;
}

}  // namespace detail

/// Runs the whole pipeline on ds, or refits a frozen selection when
/// `frozen` is given.
inline PipelineResult run_pipeline(const PanelDataset& ds, const PipelineConfig& cfg,
                                   const FrozenPipeline* frozen = nullptr) {
  PipelineResult r;
  r.horizon = cfg.resolve_horizon(ds);
  std::vector<Matrix> cov_fc;
  if (cfg.covariate_mode == CovariateMode::forecasted_post) {
    // A frozen outcome model without frozen covariate models reruns the
    // covariate horse races.
    const bool frozen_cov = frozen && !frozen->covariates.empty();
    if (frozen_cov && frozen->covariates.size() != ds.n_covariates())
      throw Error("frozen pipeline has the wrong number of covariate forecast models");
    // Each covariate is forecast on its own from its own lags.
    PipelineConfig ccfg = cfg;
    ccfg.covariate_mode = CovariateMode::lags_only;
    ccfg.keep_grid.clear();
    for (std::size_t j = 0; j < ds.n_covariates(); ++j) {
      auto dsj = ds.covariate_as_outcome(j);
      auto run = detail::forecast_outcome(dsj, ccfg, r.horizon, nullptr,
                                          frozen_cov ? &frozen->covariates[j] : nullptr);
      cov_fc.push_back(run.forecasts);
      r.covariates.push_back(
          {ds.covariate_names()[j], std::move(run.report), std::move(run.chain), run.forecasts});
    }
  }
  auto run = detail::forecast_outcome(ds, cfg, r.horizon, cov_fc.empty() ? nullptr : &cov_fc, frozen);
  r.report = std::move(run.report);
  r.chain = std::move(run.chain);
  r.counterfactuals = std::move(run.forecasts);
  r.effects = individual_effects(ds, r.counterfactuals);
  return r;
}

// ---------------------------------------------------------------------------
// treated / untreated runs
// ---------------------------------------------------------------------------

struct AttAsaRun {
  PipelineResult treated;
  std::optional<PipelineResult> untreated;
  AttAsa estimate;
};

/// ATT from a pipeline on the treated units and ASA from a separate
/// pipeline on the untreated ones; each group runs its own horse race.
inline AttAsaRun estimate_att_asa(const PanelDataset& ds, const PipelineConfig& cfg) {
  std::vector<std::size_t> tr, un;
  for (std::size_t i = 0; i < ds.n_units(); ++i) (ds.treated(i) ? tr : un).push_back(i);
  if (tr.empty()) throw Error("treatment mask has no treated units");
  AttAsaRun out;
  out.treated = run_pipeline(ds.select_units(tr), cfg);
  out.estimate.n_treated = tr.size();
  out.estimate.n_untreated = un.size();
  out.estimate.att = out.treated.effects.ate;
  if (!un.empty()) {
    out.untreated = run_pipeline(ds.select_units(un), cfg);
    out.estimate.asa = out.untreated->effects.ate;
  }
  return out;
}

// ---------------------------------------------------------------------------
// staggered adoption
// ---------------------------------------------------------------------------

struct GroupTimeCell {
  std::int64_t cohort;
  std::int64_t period;
  std::size_t horizon;
  std::size_t n_units;
  double ate;
};

struct CohortRun {
  std::int64_t cohort;
  std::size_t n_units;
  std::string winner;
  double temporal_ate;
};

struct GroupTimeResult {
  std::vector<GroupTimeCell> cells;
  std::vector<CohortRun> cohorts;
  std::vector<std::string> skipped;  // warnings for cohorts that could not run
  double overall = kNaN;             // cohort-size-weighted temporal ATE
};

/// One pipeline per treatment cohort, each with its own intervention date
/// and its own horse race. Never-treated units are not used.
inline GroupTimeResult group_time_effects(const PanelDataset& ds, const PipelineConfig& cfg) {
  if (!ds.has_cohorts()) throw Error("group-time effects need a cohort column");
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ds.n_units(); ++i)
    if (auto c = ds.cohort(i)) members[*c].push_back(i);
  if (members.empty()) throw Error("no unit has a treatment cohort");
  const auto times = ds.time_points();
  const std::size_t need = cfg.lags.min_period() + 2;
  GroupTimeResult out;
  double wsum = 0.0, wn = 0.0;
  for (const auto& [cohort, units] : members) {
    const auto it = std::lower_bound(times.begin(), times.end(), cohort);
    const auto t0 = static_cast<std::size_t>(it - times.begin());
    if (it == times.end() || t0 < need) {
      out.skipped.push_back("cohort " + std::to_string(cohort) + " skipped: " +
                            std::to_string(it == times.end() ? times.size() : t0) +
                            " pre periods, " + std::to_string(need) + " required");
      continue;
    }
    PipelineConfig c = cfg;
    c.horizon = 0;
    auto sub = ds.select_units(units).with_t0(t0);
    auto r = run_pipeline(sub, c);
    for (std::size_t k = 0; k < r.effects.n_horizons(); ++k)
      out.cells.push_back({cohort, r.effects.periods[k], k + 1, units.size(), r.effects.ate[k]});
    out.cohorts.push_back({cohort, units.size(), describe(r.report.best().hp), r.effects.temporal_ate});
    wsum += static_cast<double>(units.size()) * r.effects.temporal_ate;
    wn += static_cast<double>(units.size());
  }
  if (wn > 0.0) out.overall = wsum / wn;
  return out;
}

}  // namespace mlcm
