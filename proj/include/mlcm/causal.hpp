#pragma once

// Counterfactual forecasts and the effect estimands built from them.

#include <map>
#include <string>
#include <vector>

#include "mlcm/panel_cv.hpp"

namespace mlcm {

/// N x K matrix of counterfactual outcomes for the first K post periods.
/// Horizon 1 applies the base model; later horizons use the chain's direct
/// models or, for a recursive chain, the base model with earlier forecasts
/// substituted for the unobserved lags.
inline Matrix forecast_counterfactuals(const PanelDataset& ds, const ForecastChain& chain,
                                       std::size_t horizon, CovariateMode mode,
                                       const std::vector<Matrix>* covariate_forecasts = nullptr) {
  if (!chain.recursive() && horizon > chain.horizon)
    throw Error("forecast chain was built for " + std::to_string(chain.horizon) +
                " horizons, " + std::to_string(horizon) + " requested");
  CounterfactualPanel cf(ds, horizon, mode, covariate_forecasts);
  for (std::size_t k = 1; k <= horizon; ++k) fill_horizon(cf, chain.model_for(k), k);
  return cf.forecasts();
}

struct EffectSet {
  std::vector<std::size_t> horizons;    // 1..K
  std::vector<std::int64_t> periods;    // time labels of the post periods
  std::vector<std::string> unit_ids;
  Matrix observed;                      // N x K
  Matrix counterfactual;                // N x K
  Matrix individual;                    // observed - counterfactual
  std::vector<double> ate;              // per horizon
  double temporal_ate = 0.0;

  std::size_t n_units() const { return individual.rows(); }
  std::size_t n_horizons() const { return individual.cols(); }

  /// Per-unit mean effect over horizons.
  std::vector<double> unit_temporal() const {
    std::vector<double> out(n_units(), 0.0);
    for (std::size_t i = 0; i < n_units(); ++i) {
      for (std::size_t k = 0; k < n_horizons(); ++k) out[i] += individual(i, k);
      out[i] /= static_cast<double>(n_horizons());
    }
    return out;
  }
  std::vector<double> horizon_column(std::size_t k) const { return individual.column(k - 1); }
};

/// Recomputes the per-horizon and temporal averages from `individual`.
inline void aggregate(EffectSet& e) {
  const std::size_t n = e.individual.rows(), kk = e.individual.cols();
  e.ate.assign(kk, 0.0);
  for (std::size_t k = 0; k < kk; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += e.individual(i, k);
    e.ate[k] = s / static_cast<double>(n);
  }
  double s = 0.0;
  for (double v : e.ate) s += v;
  e.temporal_ate = kk ? s / static_cast<double>(kk) : 0.0;
}

inline EffectSet individual_effects(const PanelDataset& ds, const Matrix& counterfactuals) {
  const std::size_t n = ds.n_units(), kk = counterfactuals.cols();
  if (counterfactuals.rows() != n || kk == 0 || ds.t0() + kk > ds.n_periods())
    throw Error("counterfactual matrix does not match the post-treatment observations");
  EffectSet e;
  e.observed = Matrix(n, kk);
  e.counterfactual = counterfactuals;
  e.individual = Matrix(n, kk);
  for (std::size_t k = 0; k < kk; ++k) {
    e.horizons.push_back(k + 1);
    e.periods.push_back(ds.time_point(ds.t0() + k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    e.unit_ids.push_back(ds.unit_id(i));
    for (std::size_t k = 0; k < kk; ++k) {
      e.observed(i, k) = ds.y(i, ds.t0() + k);
      e.individual(i, k) = e.observed(i, k) - counterfactuals(i, k);
    }
  }
  aggregate(e);
  return e;
}

/// Effects restricted to a subset of units (positions into e).
inline EffectSet subset_units(const EffectSet& e, const std::vector<std::size_t>& units) {
  if (units.empty()) throw Error("effect subset is empty");
  EffectSet out;
  out.horizons = e.horizons;
  out.periods = e.periods;
  out.observed = e.observed.select_rows(units);
  out.counterfactual = e.counterfactual.select_rows(units);
  out.individual = e.individual.select_rows(units);
  for (auto i : units) out.unit_ids.push_back(e.unit_ids.at(i));
  aggregate(out);
  return out;
}

/// Unit-to-group assignment. Groups are ordered by first appearance.
struct GroupSpec {
  std::vector<std::string> labels;  // one per unit

  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& l : labels)
      if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    return out;
  }
};

struct GroupEffect {
  std::string group;
  std::size_t size = 0;
  double effect = 0.0;
};

/// Mean effect per group at horizon k (1-based), or over the temporal
/// average when k == 0.
inline std::vector<GroupEffect> cate(const EffectSet& e, const GroupSpec& g, std::size_t k) {
  if (g.labels.size() != e.n_units()) throw Error("group labels must cover every unit");
  if (k > e.n_horizons()) throw Error("horizon out of range");
  const auto values = k == 0 ? e.unit_temporal() : e.horizon_column(k);
  std::vector<GroupEffect> out;
  for (const auto& name : g.groups()) {
    GroupEffect ge{name, 0, 0.0};
    for (std::size_t i = 0; i < values.size(); ++i)
      if (g.labels[i] == name) {
        ge.effect += values[i];
        ++ge.size;
      }
    ge.effect /= static_cast<double>(ge.size);
    out.push_back(ge);
  }
  return out;
}

struct TemporalAverages {
  double ate = 0.0;
  std::vector<GroupEffect> by_group;
};

/// Temporal ATE, and per-group temporal CATEs (mean over horizons of the
/// per-horizon group means) when groups are given.
inline TemporalAverages temporal_averages(const EffectSet& e, const GroupSpec* groups = nullptr) {
  TemporalAverages t;
  t.ate = e.temporal_ate;
  if (groups) {
    const auto names = groups->groups();
    for (const auto& name : names) t.by_group.push_back({name, 0, 0.0});
    for (std::size_t k = 1; k <= e.n_horizons(); ++k) {
      auto per = cate(e, *groups, k);
      for (std::size_t gi = 0; gi < per.size(); ++gi) {
        t.by_group[gi].size = per[gi].size;
        t.by_group[gi].effect += per[gi].effect;
      }
    }
    for (auto& ge : t.by_group) ge.effect /= static_cast<double>(e.n_horizons());
  }
  return t;
}

struct AttAsa {
  std::vector<double> att;
  std::optional<std::vector<double>> asa;  // empty when every unit is treated
  std::size_t n_treated = 0;
  std::size_t n_untreated = 0;
};

/// ATT and ASA from one effect set over treated and untreated units.
inline AttAsa att_asa(const EffectSet& e, const std::vector<bool>& treated) {
  if (treated.size() != e.n_units()) throw Error("treatment mask must cover every unit");
  std::vector<std::size_t> tr, un;
  for (std::size_t i = 0; i < treated.size(); ++i) (treated[i] ? tr : un).push_back(i);
  if (tr.empty()) throw Error("treatment mask has no treated units");
  AttAsa r;
  r.n_treated = tr.size();
  r.n_untreated = un.size();
  r.att = subset_units(e, tr).ate;
  if (!un.empty()) r.asa = subset_units(e, un).ate;
  return r;
}

/// Throws when ASA is requested for an all-treated panel.
inline const std::vector<double>& require_asa(const AttAsa& r) {
  if (!r.asa) throw Error("ASA is undefined: every unit is treated");
  return *r.asa;
}

/// Size-weighted average of group means.
inline double weighted_group_mean(const std::vector<GroupEffect>& groups) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    s += static_cast<double>(g.size) * g.effect;
    n += g.size;
  }
  if (n == 0) throw Error("no units in groups");
  return s / static_cast<double>(n);
}

}  // namespace mlcm
