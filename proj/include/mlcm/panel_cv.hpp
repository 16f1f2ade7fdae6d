#pragma once

// Expanding-window panel cross-validation and the learner horse race.
//
// Folds: with f = lags.min_period() the first period that can host a design
// row, fold s trains on periods f..s (or the last `rolling_window` of them)
// and validates on period s+1, for s = f .. t0-2.

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <string>
#include <vector>

#include "mlcm/learners.hpp"
#include "mlcm/panel_data.hpp"
#include "mlcm/parallel.hpp"
#include "mlcm/random.hpp"

namespace mlcm {

/// Hyperparameter grids per learner. Defaults are the full application
/// grids; desk-scale runs override them from the config.
struct GridSpec {
  std::vector<LearnerKind> learners{LearnerKind::lasso, LearnerKind::pls, LearnerKind::gbm,
                                    LearnerKind::forest};
  std::vector<double> lasso_lambda{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t pls_max_components = 0;  // 0: up to the feature count
  std::vector<std::size_t> gbm_n_trees{1000, 2000};
  std::vector<std::size_t> gbm_max_depth{1, 2};
  std::vector<std::size_t> gbm_min_node{5, 10};
  std::vector<double> gbm_learning_rate{0.001, 0.002, 0.005};
  double gbm_subsample = 0.5;
  std::vector<double> forest_mtry_fraction{1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0};
  std::size_t forest_n_trees = 1000;
  std::size_t forest_min_node = 5;
  std::vector<std::size_t> tree_max_depth{2, 4, 8};
  std::vector<std::size_t> tree_min_node{5};
};

struct CvCandidate {
  HyperParams hp;
  std::size_t grid_index = 0;         // position within its learner's grid
  std::vector<std::size_t> columns;   // into the full design row
};

/// Expands grids for a feature subset. Learner seeds all equal `seed` so
/// candidates differ only in their hyperparameters.
inline std::vector<CvCandidate> expand_grid(const GridSpec& g, const std::vector<std::size_t>& columns,
                                            std::uint64_t seed) {
  std::vector<CvCandidate> out;
  const std::size_t f = columns.size();
  if (f == 0) throw Error("candidate feature subset is empty");
  for (LearnerKind k : g.learners) {
    std::size_t idx = 0;
    auto add = [&](HyperParams hp) { out.push_back({std::move(hp), idx++, columns}); };
    switch (k) {
      case LearnerKind::lasso:
        for (double l : g.lasso_lambda) add(LassoParams{l});
        break;
      case LearnerKind::pls: {
        const std::size_t top = g.pls_max_components == 0 ? f : std::min(f, g.pls_max_components);
        for (std::size_t c = 1; c <= top; ++c) add(PlsParams{c});
        break;
      }
      case LearnerKind::gbm:
        for (auto nt : g.gbm_n_trees)
          for (auto d : g.gbm_max_depth)
            for (auto mn : g.gbm_min_node)
              for (auto lr : g.gbm_learning_rate)
                add(GbmParams{nt, d, mn, lr, g.gbm_subsample, seed});
        break;
      case LearnerKind::forest:
        for (double fr : g.forest_mtry_fraction) {
          const auto mtry = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::floor(fr * static_cast<double>(f) + 1e-9)));
          add(ForestParams{mtry, g.forest_n_trees, g.forest_min_node, 0, seed});
        }
        break;
      case LearnerKind::tree:
        for (auto d : g.tree_max_depth)
          for (auto mn : g.tree_min_node) add(TreeParams{d, mn});
        break;
    }
  }
  if (out.empty()) throw Error("learner grid is empty");
  return out;
}

/// True when a should win over b at equal or better score.
inline bool candidate_precedes(double mse_a, const CvCandidate& a, double mse_b,
                               const CvCandidate& b) {
  if (mse_a != mse_b) return mse_a < mse_b;
  if (a.columns.size() != b.columns.size()) return a.columns.size() < b.columns.size();
  if (a.hp.index() != b.hp.index()) return a.hp.index() < b.hp.index();
  return a.grid_index < b.grid_index;
}

inline std::size_t select_winner(const std::vector<double>& scores,
                                 const std::vector<CvCandidate>& cands) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < cands.size(); ++c)
    if (candidate_precedes(scores[c], cands[c], scores[best], cands[best])) best = c;
  return best;
}

// ---------------------------------------------------------------------------
// pilot forest
// ---------------------------------------------------------------------------

struct PilotOptions {
  std::size_t n_trees = 500;
  double mtry_fraction = 1.0 / 3.0;
  std::size_t min_node = 5;
};

struct PilotResult {
  std::vector<std::size_t> ranking;        // design columns by importance
  std::vector<double> importance;          // aligned with ranking
  std::vector<std::size_t> keep_grid;      // clamped, deduplicated
  std::vector<std::string> warnings;
};

inline PilotResult pilot_select_features(const PanelDataset& ds, const LagSpec& lags,
                                         const std::vector<std::size_t>& keep_grid,
                                         const PilotOptions& opt, std::uint64_t seed) {
  const std::size_t f = lags.min_period();
  if (ds.t0() < f + 2)
    throw Error("pilot selection needs at least two usable pre periods after lagging");
  auto d = build_design(ds, lags, f, ds.t0() - 1);
  const std::size_t m = d.names.size();
  const auto mtry = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(opt.mtry_fraction * static_cast<double>(m))));
  auto model = fit(ForestParams{mtry, opt.n_trees, opt.min_node, 0,
                                derive_seed(seed, Stream::Pilot, 0)},
                   d.features, d.target, d.names);
  PilotResult r;
  for (const auto& imp : variable_importance(model)) {
    r.ranking.push_back(imp.column);
    r.importance.push_back(imp.score);
  }
  for (std::size_t k : keep_grid) {
    if (k == 0) throw Error("keep size must be >= 1");
    std::size_t kk = k;
    if (k > m) {
      r.warnings.push_back("keep size " + std::to_string(k) + " exceeds the " + std::to_string(m) +
                           " available features; clamped");
      kk = m;
    }
    if (std::find(r.keep_grid.begin(), r.keep_grid.end(), kk) == r.keep_grid.end())
      r.keep_grid.push_back(kk);
  }
  return r;
}

// ---------------------------------------------------------------------------
// panel CV
// ---------------------------------------------------------------------------

struct CvOptions {
  std::size_t rolling_window = 0;  // 0 = expanding window
  std::uint64_t seed = 0;
};

struct CvFold {
  std::size_t train_first;
  std::size_t train_last;
  std::size_t validate;
};

inline std::vector<CvFold> cv_folds(std::size_t t0, const LagSpec& lags, std::size_t rolling) {
  const std::size_t f = lags.min_period();
  if (t0 < f + 2)
    throw Error("no feasible cross-validation fold: " + std::to_string(t0) +
                " pre periods but the lag specification needs at least " + std::to_string(f + 2) +
                "; reduce p or q");
  std::vector<CvFold> folds;
  for (std::size_t s = f; s + 2 <= t0; ++s) {
    std::size_t first = f;
    if (rolling > 0 && s + 1 > f + rolling) first = s + 1 - rolling;
    folds.push_back({first, s, s + 1});
  }
  return folds;
}

struct CvReport {
  LagSpec lags;
  std::vector<std::string> feature_names;  // full design columns
  std::vector<CvCandidate> candidates;
  std::vector<CvFold> folds;
  Matrix fold_mse;                 // candidate x fold
  std::vector<double> mean_mse;    // per candidate
  std::size_t winner = 0;
  bool pilot_ran = false;
  std::vector<std::size_t> ranking;
  std::vector<double> ranking_importance;
  std::vector<std::string> warnings;

  const CvCandidate& best() const { return candidates.at(winner); }
  std::vector<std::string> column_names(const CvCandidate& c) const {
    std::vector<std::string> out;
    for (auto j : c.columns) out.push_back(feature_names.at(j));
    return out;
  }
};

inline Matrix rows_of(const Matrix& m, std::size_t first, std::size_t count,
                      const std::vector<std::size_t>& cols) {
  Matrix out(count, cols.size());
  for (std::size_t r = 0; r < count; ++r) {
    auto src = m.row(first + r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < cols.size(); ++k) dst[k] = src[cols[k]];
  }
  return out;
}

/// Runs every candidate on every fold of the pre-treatment periods of ds.
/// With a non-empty keep grid a pilot forest ranks the features and each
/// keep size becomes an extra hyperparameter.
inline CvReport panel_cv(const PanelDataset& ds, const LagSpec& lags, const GridSpec& grid,
                         const std::vector<std::size_t>& keep_grid = {},
                         const CvOptions& opt = {}, const PilotOptions& pilot = {}) {
  CvReport rep;
  rep.lags = lags;
  rep.folds = cv_folds(ds.t0(), lags, opt.rolling_window);
  const std::size_t f = lags.min_period();
  const auto design = build_design(ds, lags, f, ds.t0() - 1);
  rep.feature_names = design.names;
  const std::size_t n = ds.n_units();
  const std::size_t m = design.names.size();
  const std::uint64_t learner_seed = derive_seed(opt.seed, Stream::Learner, 0);

  if (!keep_grid.empty()) {
    auto pr = pilot_select_features(ds, lags, keep_grid, pilot, opt.seed);
    rep.pilot_ran = true;
    rep.ranking = pr.ranking;
    rep.ranking_importance = pr.importance;
    rep.warnings = pr.warnings;
    for (std::size_t k : pr.keep_grid) {
      std::vector<std::size_t> cols(pr.ranking.begin(), pr.ranking.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(cols.begin(), cols.end());
      auto c = expand_grid(grid, cols, learner_seed);
      rep.candidates.insert(rep.candidates.end(), c.begin(), c.end());
    }
  } else {
    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rep.candidates = expand_grid(grid, all, learner_seed);
  }

  const std::size_t nc = rep.candidates.size(), nf = rep.folds.size();
  rep.fold_mse = Matrix(nc, nf);
  parallel_for(nc * nf, [&](std::size_t job) {
    const std::size_t c = job / nf, k = job % nf;
    const auto& cand = rep.candidates[c];
    const auto& fold = rep.folds[k];
    // Design rows are period-major, so each period is a contiguous block.
    const std::size_t tr_first = (fold.train_first - f) * n;
    const std::size_t tr_count = (fold.train_last - fold.train_first + 1) * n;
    const std::size_t va_first = (fold.validate - f) * n;
    Matrix xtr = rows_of(design.features, tr_first, tr_count, cand.columns);
    std::span<const double> ytr(design.target.data() + tr_first, tr_count);
    std::vector<std::string> names;
    for (auto j : cand.columns) names.push_back(design.names[j]);
    auto model = fit(cand.hp, xtr, ytr, names);
    Matrix xva = rows_of(design.features, va_first, n, cand.columns);
    auto pred = model.predict_unchecked(xva);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = design.target[va_first + i] - pred[i];
      sse += e * e;
    }
    rep.fold_mse(c, k) = sse / static_cast<double>(n);
  });
  rep.mean_mse.assign(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < nf; ++k) s += rep.fold_mse(c, k);
    rep.mean_mse[c] = s / static_cast<double>(nf);
  }
  rep.winner = select_winner(rep.mean_mse, rep.candidates);
  return rep;
}

inline nlohmann::json cv_report_to_json(const CvReport& r) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["lags"] = {{"p", r.lags.p}, {"q", r.lags.q}, {"contemporaneous", r.lags.contemporaneous}};
  j["features"] = r.feature_names;
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"train_first", f.train_first}, {"train_last", f.train_last}, {"validate", f.validate}});
  auto& cands = j["candidates"] = nlohmann::json::array();
  for (std::size_t c = 0; c < r.candidates.size(); ++c) {
    const auto& cand = r.candidates[c];
    cands.push_back({{"hyperparams", hp_to_json(cand.hp)},
                     {"grid_index", cand.grid_index},
                     {"columns", r.column_names(cand)},
                     {"fold_mse", r.fold_mse.row(c)},
                     {"mean_mse", r.mean_mse[c]}});
  }
  j["winner"] = r.winner;
  j["pilot_ran"] = r.pilot_ran;
  if (r.pilot_ran) {
    auto& rank = j["pilot_ranking"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.ranking.size(); ++k)
      rank.push_back({{"feature", r.feature_names[r.ranking[k]]}, {"importance", r.ranking_importance[k]}});
  }
  j["warnings"] = r.warnings;
  return j;
}

inline CvReport cv_report_from_json(const nlohmann::json& j) {
  CvReport r;
  const auto& l = j.at("lags");
  r.lags = {l.at("p").get<std::size_t>(), l.at("q").get<std::size_t>(), l.at("contemporaneous").get<bool>()};
  r.feature_names = j.at("features").get<std::vector<std::string>>();
  auto col = [&](const std::string& name) {
    auto it = std::find(r.feature_names.begin(), r.feature_names.end(), name);
    if (it == r.feature_names.end()) throw Error("CV report names an unknown column '" + name + "'");
    return static_cast<std::size_t>(it - r.feature_names.begin());
  };
  for (const auto& f : j.at("folds"))
    r.folds.push_back({f.at("train_first").get<std::size_t>(), f.at("train_last").get<std::size_t>(),
                       f.at("validate").get<std::size_t>()});
  const auto& cands = j.at("candidates");
  r.fold_mse = Matrix(cands.size(), r.folds.size());
  for (std::size_t c = 0; c < cands.size(); ++c) {
    CvCandidate cand;
    cand.hp = hp_from_json(cands[c].at("hyperparams"));
    cand.grid_index = cands[c].at("grid_index").get<std::size_t>();
    for (const auto& name : cands[c].at("columns")) cand.columns.push_back(col(name.get<std::string>()));
    const auto fm = cands[c].at("fold_mse").get<std::vector<double>>();
    if (fm.size() != r.folds.size()) throw Error("CV report fold count mismatch");
    for (std::size_t k = 0; k < fm.size(); ++k) r.fold_mse(c, k) = fm[k];
    r.mean_mse.push_back(cands[c].at("mean_mse").get<double>());
    r.candidates.push_back(std::move(cand));
  }
  r.winner = j.at("winner").get<std::size_t>();
  if (r.winner >= r.candidates.size()) throw Error("CV report winner out of range");
  r.pilot_ran = j.value("pilot_ran", false);
  if (r.pilot_ran)
    for (const auto& e : j.at("pilot_ranking")) {
      r.ranking.push_back(col(e.at("feature").get<std::string>()));
      r.ranking_importance.push_back(e.at("importance").get<double>());
    }
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

/// Counts leaking reads over every fold: the traced training design must
/// read nothing after the fold's last training period, and the validation
/// features nothing at or after the validation period (covariates: after).
/// Also checks that the traced rows equal the period blocks panel_cv slices.
inline std::size_t audit_cv_folds(const PanelDataset& ds, const LagSpec& lags,
                                  std::size_t rolling = 0) {
  const auto folds = cv_folds(ds.t0(), lags, rolling);
  const std::size_t f = lags.min_period();
  const auto full = build_design(ds, lags, f, ds.t0() - 1);
  const std::size_t n = ds.n_units();
  std::size_t leaks = 0;
  for (const auto& fold : folds) {
    TracingPanel<PanelDataset> tr(ds);
    auto train = build_design(tr, lags, fold.train_first, fold.train_last, ds.covariate_names());
    for (const auto& r : tr.reads())
      if (r.period > fold.train_last) ++leaks;
    Matrix sliced = full.features.select_rows([&] {
      std::vector<std::size_t> idx;
      for (std::size_t k = 0; k < train.rows.size(); ++k) idx.push_back((fold.train_first - f) * n + k);
      return idx;
    }());
    if (!(sliced == train.features)) ++leaks;
    tr.clear();
    std::vector<double> row(full.names.size());
    for (std::size_t i = 0; i < n; ++i) design_row(tr, lags, i, fold.validate, row);
    for (const auto& r : tr.reads())
      if (r.outcome ? r.period >= fold.validate : r.period > fold.validate) ++leaks;
  }
  return leaks;
}

// ---------------------------------------------------------------------------
// counterfactual reads, refit and the multi-step chain
// ---------------------------------------------------------------------------

enum class CovariateMode { lags_only, observed_post, forecasted_post };

inline const char* to_string(CovariateMode m) {
  switch (m) {
    case CovariateMode::lags_only: return "lags_only";
    case CovariateMode::observed_post: return "observed_post";
    case CovariateMode::forecasted_post: return "forecasted_post";
  }
  return "?";
}

inline CovariateMode covariate_mode_from_string(const std::string& s) {
  if (s == "lags_only") return CovariateMode::lags_only;
  if (s == "observed_post") return CovariateMode::observed_post;
  if (s == "forecasted_post") return CovariateMode::forecasted_post;
  throw Error("unknown covariate mode '" + s +
              "' (expected lags_only, observed_post or forecasted_post)");
}

/// Panel as seen by the forecaster after the intervention. Pre-period cells
/// are the data. Post-period outcomes are the forecasts filled so far (an
/// unfilled read throws). Post-period covariates depend on the mode:
/// lags_only holds each unit's last pre-period value, observed_post reads
/// the data, forecasted_post reads supplied covariate forecasts.
class CounterfactualPanel {
 public:
  CounterfactualPanel(const PanelDataset& ds, std::size_t horizon, CovariateMode mode,
                      const std::vector<Matrix>* covariate_forecasts = nullptr)
      : ds_(&ds), t0_(ds.t0()), forecasts_(ds.n_units(), horizon, kNaN), mode_(mode),
        cov_(covariate_forecasts) {
    if (horizon < 1 || t0_ + horizon > ds.n_periods())
      throw Error("forecast horizon " + std::to_string(horizon) + " exceeds the " +
                  std::to_string(ds.n_periods() - t0_) + " available post periods");
    if (mode == CovariateMode::forecasted_post) {
      if (!cov_ || cov_->size() != ds.n_covariates())
        throw Error("forecasted_post mode needs one forecast matrix per covariate");
      for (const auto& m : *cov_)
        if (m.rows() != ds.n_units() || m.cols() < horizon)
          throw Error("covariate forecast matrix has the wrong shape");
    }
  }

  std::size_t n_units() const { return ds_->n_units(); }
  std::size_t n_periods() const { return t0_ + forecasts_.cols(); }
  std::size_t n_covariates() const { return ds_->n_covariates(); }
  std::size_t t0() const { return t0_; }

  double y(std::size_t i, std::size_t t) const {
    if (t < t0_) return ds_->y(i, t);
    const std::size_t k = t - t0_;
    if (k >= forecasts_.cols()) throw Error("counterfactual read beyond the forecast horizon");
    const double v = forecasts_(i, k);
    if (std::isnan(v))
      throw Error("counterfactual outcome at horizon " + std::to_string(k + 1) +
                  " read before it was forecast");
    return v;
  }
  double x(std::size_t i, std::size_t t, std::size_t j) const {
    if (t < t0_) return ds_->x(i, t, j);
    if (t - t0_ >= forecasts_.cols()) throw Error("covariate read beyond the forecast horizon");
    switch (mode_) {
      case CovariateMode::lags_only: return ds_->x(i, t0_ - 1, j);
      case CovariateMode::observed_post: return ds_->x(i, t, j);
      case CovariateMode::forecasted_post: return (*cov_)[j](i, t - t0_);
    }
    return kNaN;
  }

  void set(std::size_t i, std::size_t k, double v) { forecasts_(i, k) = v; }
  const Matrix& forecasts() const { return forecasts_; }

 private:
  const PanelDataset* ds_;
  std::size_t t0_;
  Matrix forecasts_;
  CovariateMode mode_;
  const std::vector<Matrix>* cov_;
};

/// A fitted model plus the design it consumes.
struct StepModel {
  FittedModel model;
  LagSpec lags;
  std::vector<std::size_t> columns;  // into the full design row for `lags`

  template <PanelSource S>
  double predict(const S& src, std::size_t i, std::size_t t) const {
    thread_local std::vector<double> row, sel;
    row.resize(lags.n_features(src.n_covariates()));
    design_row(src, lags, i, t, row);
    sel.resize(columns.size());
    for (std::size_t k = 0; k < columns.size(); ++k) sel[k] = row[columns[k]];
    return model.predict_row(sel);
  }
};

/// First period used when refitting on the whole pre sample.
inline std::size_t refit_first_period(const LagSpec& lags, std::size_t t0, std::size_t rolling) {
  const std::size_t f = lags.min_period();
  if (rolling > 0 && t0 > f + rolling) return t0 - rolling;
  return f;
}

inline StepModel fit_step(const PanelDataset& ds, const LagSpec& lags, const HyperParams& hp,
                          const std::vector<std::size_t>& columns, std::size_t rolling = 0) {
  const std::size_t first = refit_first_period(lags, ds.t0(), rolling);
  if (first + 1 > ds.t0()) throw Error("no pre-period design rows for the refit");
  auto d = build_design(ds, lags, first, ds.t0() - 1);
  std::vector<std::string> names;
  for (auto j : columns) names.push_back(d.names.at(j));
  Matrix x = rows_of(d.features, 0, d.features.rows(), columns);
  return {fit(hp, x, d.target, names), lags, columns};
}

/// Winner of the horse race refit on every pre-treatment design row.
inline StepModel refit_winner(const PanelDataset& ds, const CvReport& report,
                              std::size_t rolling = 0) {
  return fit_step(ds, report.lags, report.best().hp, report.best().columns, rolling);
}

struct ChainStep {
  std::size_t horizon = 0;
  StepModel model;
  std::vector<CvCandidate> candidates;
  std::vector<double> validation_mse;
  std::size_t winner = 0;
};

/// Horizon-1 model plus, for a non-linear winner, one direct model per
/// further horizon.
struct ForecastChain {
  StepModel base;
  std::vector<ChainStep> steps;  // horizons 2..K when non-recursive
  std::size_t horizon = 1;

  bool recursive() const { return steps.empty(); }
  const StepModel& model_for(std::size_t k) const {
    if (k <= 1 || steps.empty()) return base;
    return steps.at(k - 2).model;
  }
};

struct ChainOptions {
  GridSpec grid;
  std::uint64_t seed = 0;
  CovariateMode mode = CovariateMode::lags_only;
  const std::vector<Matrix>* covariate_forecasts = nullptr;
  /// Frozen hyperparameters for horizons 2..K; skips selection when set.
  std::vector<HyperParams> frozen;
};

/// Lag specification of the direct model for horizon k.
inline LagSpec chain_lags(const LagSpec& base, std::size_t k) {
  return {base.p + k - 1, std::max(k - 1, base.q), base.contemporaneous};
}

inline void fill_horizon(CounterfactualPanel& cf, const StepModel& m, std::size_t k) {
  const std::size_t t = cf.t0() + k - 1;
  for (std::size_t i = 0; i < cf.n_units(); ++i) cf.set(i, k - 1, m.predict(cf, i, t));
}

/// Builds the forecast chain. A linear winner (or K = 1) keeps only the base
/// model and forecasts by recursive substitution. Otherwise each horizon
/// k >= 2 gets a direct model over outcome lags 1..p+k (the first k-1 are
/// filled with earlier forecasts at forecast time). Candidates are trained
/// on pre-period rows, validated at the first post period against the
/// horizon-1 forecast, and the winner is retrained with the validation rows
/// included.
inline ForecastChain build_forecast_chain(const PanelDataset& ds, StepModel base, std::size_t horizon,
                                          const ChainOptions& opt) {
  if (horizon < 1) throw Error("forecast horizon must be >= 1");
  ForecastChain chain;
  chain.horizon = horizon;
  const bool linear = base.model.linear();
  chain.base = std::move(base);
  if (linear || horizon == 1) return chain;
  if (!opt.frozen.empty() && opt.frozen.size() != horizon - 1)
    throw Error("frozen chain needs one hyperparameter set per horizon beyond the first");

  const std::size_t t0 = ds.t0();
  CounterfactualPanel cf(ds, horizon, opt.mode, opt.covariate_forecasts);
  fill_horizon(cf, chain.base, 1);
  const std::uint64_t seed = derive_seed(opt.seed, Stream::Learner, 0);
  for (std::size_t k = 2; k <= horizon; ++k) {
    const LagSpec lk = chain_lags(chain.base.lags, k);
    const std::size_t fk = lk.min_period();
    if (fk + 1 > t0)
      throw Error("horizon-" + std::to_string(k) + " model needs at least " +
                  std::to_string(fk + 1) + " pre periods (have " + std::to_string(t0) +
                  "); lengthen the pre period or shorten the horizon");
    auto train = build_design(cf, lk, fk, t0 - 1, ds.covariate_names());
    auto val = build_design(cf, lk, t0, t0, ds.covariate_names());  // target = horizon-1 forecast
    std::vector<std::size_t> all(train.names.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    ChainStep step;
    step.horizon = k;
    if (opt.frozen.empty()) {
      step.candidates = expand_grid(opt.grid, all, seed);
      step.validation_mse.assign(step.candidates.size(), 0.0);
      parallel_for(step.candidates.size(), [&](std::size_t c) {
        auto m = fit(step.candidates[c].hp, train.features, train.target, train.names);
        auto pred = m.predict_unchecked(val.features);
        double sse = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
          const double e = val.target[i] - pred[i];
          sse += e * e;
        }
        step.validation_mse[c] = sse / static_cast<double>(pred.size());
      });
      step.winner = select_winner(step.validation_mse, step.candidates);
    } else {
      step.candidates.push_back({opt.frozen[k - 2], 0, all});
      step.winner = 0;
    }
    Matrix x = train.features;
    x.append_rows(val.features);
    std::vector<double> y = train.target;
    y.insert(y.end(), val.target.begin(), val.target.end());
    step.model = {fit(step.candidates[step.winner].hp, x, y, train.names), lk, all};
    fill_horizon(cf, step.model, k);
    chain.steps.push_back(std::move(step));
  }
  return chain;
}

/// Hyperparameters of the chain's direct models, for frozen refits.
inline std::vector<HyperParams> chain_hyperparams(const ForecastChain& chain) {
  std::vector<HyperParams> out;
  for (const auto& s : chain.steps) out.push_back(s.candidates.at(s.winner).hp);
  return out;
}

}  // namespace mlcm
