#pragma once

// In-time placebo tests, forecast-error summaries and sensitivity trimming.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mlcm/inference.hpp"

namespace mlcm {

struct PlaceboResult {
  std::size_t n_holdout = 0;
  std::int64_t fake_t0_time = 0;    // last period before the fake date
  PipelineResult run;               // effects on the held-out periods
  std::optional<BootstrapResult> bootstrap;
};

/// Largest hold-out that still leaves one CV fold before the fake date.
inline std::size_t max_placebo_holdout(const PanelDataset& ds, const LagSpec& lags) {
  const std::size_t need = lags.min_period() + 2;
  return ds.t0() > need ? ds.t0() - need : 0;
}

/// Treats t0 - n_holdout as a fake intervention date and reruns the full
/// pipeline (its own horse race) on pre-treatment data only. Effects on the
/// held-out periods are forecast errors. Optionally bootstraps them.
inline PlaceboResult placebo_test(const PanelDataset& ds, const PipelineConfig& cfg,
                                  std::size_t n_holdout,
                                  const std::optional<BootstrapOptions>& boot = std::nullopt) {
  const std::size_t maxh = max_placebo_holdout(ds, cfg.lags);
  if (n_holdout < 1 || n_holdout > maxh)
    throw Error("placebo hold-out of " + std::to_string(n_holdout) +
                " periods is infeasible; the largest feasible hold-out is " + std::to_string(maxh));
  const std::size_t fake = ds.t0() - n_holdout;
  auto cut = ds.window(0, ds.t0()).with_t0(fake);
  PipelineConfig c = cfg;
  c.horizon = n_holdout;
  PlaceboResult r;
  r.n_holdout = n_holdout;
  r.fake_t0_time = cut.time_point(fake - 1);
  r.run = run_pipeline(cut, c);
  if (boot) r.bootstrap = bootstrap_ate(cut, c, *boot, &r.run);
  return r;
}

struct HistogramBin {
  double lower;
  double upper;
  std::size_t count;
};

struct ErrorSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double threshold = 1.0;
  double frac_below = 0.0;  // share < -threshold
  double frac_above = 0.0;  // share > +threshold
  std::vector<HistogramBin> histogram;
};

/// Moments (population form) and a histogram with `bins` equal-width bins.
/// A zero SD gives zero higher moments.
inline ErrorSummary error_distribution(const std::vector<double>& e, double threshold = 1.0,
                                       std::size_t bins = 20) {
  if (e.empty()) throw Error("no placebo errors to summarize");
  ErrorSummary s;
  s.n = e.size();
  s.threshold = threshold;
  s.mean = mean(e);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : e) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(e.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.sd = std::sqrt(variance(e, e.size() > 1 ? 1 : 0));
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  for (double v : e) {
    if (v < -threshold) s.frac_below += 1.0;
    if (v > threshold) s.frac_above += 1.0;
  }
  s.frac_below /= n;
  s.frac_above /= n;
  const auto [lo_it, hi_it] = std::minmax_element(e.begin(), e.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  bins = std::max<std::size_t>(bins, 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    s.histogram.push_back({lo + width * static_cast<double>(b),
                           b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1), 0});
  for (double v : e) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    s.histogram[std::min(b, bins - 1)].count++;
  }
  return s;
}

struct TrimRow {
  double fraction = 0.0;
  std::size_t n_dropped = 0;
  std::size_t n_kept = 0;
  std::vector<double> ate;
  double temporal_ate = 0.0;
  std::vector<std::string> dropped_units;
};

/// Drops the ceil(f N) units with the largest absolute temporal placebo
/// effect and recomputes the ATE from the existing counterfactuals. Ties
/// keep the earlier unit.
inline std::vector<TrimRow> sensitivity_trim(const EffectSet& effects, const EffectSet& placebo,
                                             const std::vector<double>& fractions) {
  const std::size_t n = effects.n_units();
  if (placebo.n_units() != n || placebo.unit_ids != effects.unit_ids)
    throw Error("placebo effects must cover the same units in the same order");
  const auto score = placebo.unit_temporal();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(score[a]) > std::abs(score[b]); });
  std::vector<TrimRow> out;
  for (double f : fractions) {
    if (!(f >= 0.0) || f >= 1.0) throw Error("trim fraction must lie in [0, 1)");
    const auto drop = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
    if (drop >= n) throw Error("trim fraction removes every unit");
    std::vector<bool> gone(n, false);
    TrimRow row;
    row.fraction = f;
    row.n_dropped = drop;
    row.n_kept = n - drop;
    for (std::size_t k = 0; k < drop; ++k) {
      gone[order[k]] = true;
      row.dropped_units.push_back(effects.unit_ids[order[k]]);
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
      if (!gone[i]) keep.push_back(i);
    auto sub = subset_units(effects, keep);
    row.ate = sub.ate;
    row.temporal_ate = sub.temporal_ate;
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// leakage audits by perturbation
// ---------------------------------------------------------------------------

struct PerturbedPanel {
  PanelDataset data;
  Matrix outcome_delta;  // N x (T - outcome_from)
};

/// Copy of ds with every outcome at periods >= outcome_from and every
/// covariate at periods >= covariate_from replaced by junk. Binary and
/// categorical indicators are flipped so the copy stays valid.
inline PerturbedPanel perturb_after(const PanelDataset& ds, std::size_t outcome_from,
                                    std::size_t covariate_from, std::uint64_t seed) {
  auto a = ds.to_arrays();
  const std::size_t n = ds.n_units(), T = ds.n_periods(), m = ds.n_covariates();
  Rng rng = make_rng(seed, Stream::Placebo, 0);
  Matrix delta(n, T > outcome_from ? T - outcome_from : 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < T; ++t) {
      if (t >= outcome_from) {
        double& y = a.outcome[i * T + t];
        const double d = (10.0 + std::abs(y)) * standard_normal(rng);
        delta(i, t - outcome_from) = (y + d) - y;
        y += d;
      }
      if (t >= covariate_from)
        for (std::size_t j = 0; j < m; ++j) {
          double& x = a.covariates[(i * T + t) * m + j];
          if (a.covariate_kinds[j] == CovariateKind::continuous)
            x += (10.0 + std::abs(x)) * standard_normal(rng);
          else
            x = 1.0 - x;
        }
    }
  // Resampled views repeat unit ids; the copy only needs distinct labels.
  for (std::size_t i = 0; i < n; ++i) a.unit_ids[i] = std::to_string(i);
  return {PanelDataset(std::move(a), ds.t0()), delta};
}

inline std::size_t count_differences(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::max<std::size_t>(1, a.data().size());
  std::size_t d = 0;
  for (std::size_t k = 0; k < a.data().size(); ++k)
    if (!(a.data()[k] == b.data()[k])) ++d;
  return d;
}

/// Counterfactual cells that move when post-intervention outcomes (and,
/// unless covariates are observed after t0, post covariates) are scrambled.
inline std::size_t audit_counterfactuals(const PanelDataset& ds, const PipelineConfig& cfg,
                                         std::uint64_t seed = 1) {
  const std::size_t cov_from =
      cfg.covariate_mode == CovariateMode::observed_post ? ds.n_periods() : ds.t0();
  auto base = run_pipeline(ds, cfg);
  auto pert = perturb_after(ds, ds.t0(), cov_from, seed);
  auto moved = run_pipeline(pert.data, cfg);
  return count_differences(base.counterfactuals, moved.counterfactuals);
}

/// Placebo counterfactuals that move when everything from the fake date on
/// is scrambled (covariates in the hold-out stay when they count as
/// observed).
inline std::size_t audit_placebo(const PanelDataset& ds, const PipelineConfig& cfg,
                                 std::size_t n_holdout, std::uint64_t seed = 1) {
  const std::size_t fake = ds.t0() - std::min(n_holdout, ds.t0());
  const std::size_t cov_from =
      cfg.covariate_mode == CovariateMode::observed_post ? ds.t0() : fake;
  auto base = placebo_test(ds, cfg, n_holdout);
  auto pert = perturb_after(ds, fake, cov_from, seed);
  auto moved = placebo_test(pert.data, cfg, n_holdout);
  return count_differences(base.run.counterfactuals, moved.run.counterfactuals);
}

/// Bootstrap audit. Replicates must keep whole unit paths, and scrambling
/// post outcomes must shift each replicate ATE by exactly the mean
/// perturbation of the units it drew (so the counterfactuals did not move).
/// Returns the number of violations.
inline std::size_t audit_bootstrap(const PanelDataset& ds, const PipelineConfig& cfg,
                                   const BootstrapOptions& opt, std::uint64_t seed = 1) {
  std::size_t bad = 0;
  const std::size_t n = ds.n_units(), T = ds.n_periods(), m = ds.n_covariates();
  for (std::size_t b = 0; b < opt.B; ++b) {
    const auto pos = bootstrap_sample(opt.seed, b, 0, n);
    const auto rep = ds.select_units(pos);
    for (std::size_t i = 0; i < n; ++i) {
      if (rep.source_unit(i) != ds.source_unit(pos[i])) ++bad;
      for (std::size_t t = 0; t < T; ++t) {
        if (!(rep.y(i, t) == ds.y(pos[i], t))) ++bad;
        for (std::size_t j = 0; j < m; ++j)
          if (!(rep.x(i, t, j) == ds.x(pos[i], t, j))) ++bad;
      }
    }
  }
  const std::size_t cov_from =
      cfg.covariate_mode == CovariateMode::observed_post ? T : ds.t0();
  auto base = bootstrap_ate(ds, cfg, opt);
  auto pert = perturb_after(ds, ds.t0(), cov_from, seed);
  auto moved = bootstrap_ate(pert.data, cfg, opt);
  if (base.failures || moved.failures) throw Error("bootstrap audit needs replicates without retries");
  const std::size_t K = base.replicates.cols();
  for (std::size_t b = 0; b < opt.B; ++b) {
    const auto pos = bootstrap_sample(opt.seed, b, 0, n);
    for (std::size_t k = 0; k < K; ++k) {
      double shift = 0.0, scale = 1.0;
      for (auto i : pos) {
        shift += pert.outcome_delta(i, k);
        scale += std::abs(pert.outcome_delta(i, k));
      }
      shift /= static_cast<double>(n);
      const double got = moved.replicates(b, k) - base.replicates(b, k);
      if (std::abs(got - shift) > 1e-9 * (scale + std::abs(base.replicates(b, k)))) ++bad;
    }
  }
  return bad;
}

}  // namespace mlcm
