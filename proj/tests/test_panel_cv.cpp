#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "mlcm/panel_cv.hpp"
#include "mlcm/parallel.hpp"
#include "support.hpp"

using namespace mlcm;

namespace {

GridSpec lasso_only(std::vector<double> lambdas) {
  GridSpec g;
  g.learners = {LearnerKind::lasso};
  g.lasso_lambda = std::move(lambdas);
  return g;
}

// Fold MSE of unpenalized OLS computed directly with Eigen.
double ols_fold_mse(const PanelDataset& ds, const LagSpec& lags, const CvFold& f) {
  auto tr = build_design(ds, lags, f.train_first, f.train_last);
  auto va = build_design(ds, lags, f.validate, f.validate);
  const std::size_t n = tr.features.rows(), m = tr.features.cols();
  Eigen::MatrixXd a(n, m + 1);
  Eigen::VectorXd b(n);
  for (std::size_t r = 0; r < n; ++r) {
    a(r, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) a(r, j + 1) = tr.features(r, j);
    b(r) = tr.target[r];
  }
  Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  double sse = 0.0;
  for (std::size_t r = 0; r < va.features.rows(); ++r) {
    double p = coef(0);
    for (std::size_t j = 0; j < m; ++j) p += coef(j + 1) * va.features(r, j);
    sse += (va.target[r] - p) * (va.target[r] - p);
  }
  return sse / static_cast<double>(va.features.rows());
}

}  // namespace

TEST(Folds, ExpandingWindow) {
  auto folds = cv_folds(6, LagSpec{0, 0, false}, 0);
  ASSERT_EQ(folds.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(folds[k].train_first, 1u);
    EXPECT_EQ(folds[k].train_last, 1 + k);
    EXPECT_EQ(folds[k].validate, 2 + k);
  }
}

TEST(Folds, RollingWindow) {
  auto folds = cv_folds(7, LagSpec{0, 0, false}, 2);
  ASSERT_EQ(folds.size(), 5u);
  EXPECT_EQ(folds[0].train_first, 1u);
  EXPECT_EQ(folds[4].train_first, 4u);
  EXPECT_EQ(folds[4].train_last, 5u);
  for (const auto& f : folds) EXPECT_LE(f.train_last - f.train_first + 1, 2u);
}

TEST(Folds, InfeasibleLagsNameTheFix) {
  try {
    cv_folds(3, LagSpec{1, 0, true}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("reduce p or q"), std::string::npos);
  }
}

TEST(PanelCv, FoldMseMatchesIndependentOls) {
  auto ds = fixtures::ar_panel(30, 7, 7 - 1, 4, 0.6, 0.0, 1.0, 2).pre();
  LagSpec lags{1, 0, true};
  auto rep = panel_cv(ds, lags, lasso_only({0.0}));
  ASSERT_EQ(rep.folds.size(), ds.t0() - lags.min_period() - 1);
  for (std::size_t k = 0; k < rep.folds.size(); ++k)
    EXPECT_NEAR(rep.fold_mse(0, k), ols_fold_mse(ds, lags, rep.folds[k]), 1e-8);
  double s = 0.0;
  for (std::size_t k = 0; k < rep.folds.size(); ++k) s += rep.fold_mse(0, k);
  EXPECT_DOUBLE_EQ(rep.mean_mse[0], s / static_cast<double>(rep.folds.size()));
}

TEST(PanelCv, WinnerHasMinimumMse) {
  auto ds = fixtures::ar_panel(40, 7, 5, 8);
  auto rep = panel_cv(ds, LagSpec{0, 0, false}, fixtures::quick_grid());
  for (double m : rep.mean_mse) EXPECT_LE(rep.mean_mse[rep.winner], m);
  EXPECT_EQ(rep.candidates.size(), rep.mean_mse.size());
}

TEST(PanelCv, TiesGoToSimplerCandidate) {
  CvCandidate a{LassoParams{0.5}, 1, {0, 1}};
  CvCandidate b{PlsParams{1}, 0, {0}};
  CvCandidate c{LassoParams{0.1}, 0, {0, 1}};
  EXPECT_TRUE(candidate_precedes(1.0, b, 1.0, a));  // fewer features
  EXPECT_TRUE(candidate_precedes(1.0, c, 1.0, a));  // earlier grid position
  EXPECT_TRUE(candidate_precedes(0.9, a, 1.0, b));  // score dominates
  EXPECT_EQ(select_winner({1.0, 1.0, 1.0}, {a, b, c}), 1u);
}

TEST(PanelCv, FeatureLeakAuditIsClean) {
  Rng rng(17);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t t0 = 5 + uniform_index(rng, 5);
    auto ds = fixtures::ar_panel(6, t0 + 2, t0, 50 + rep, 0.5, 0.0, 1.0, 2);
    LagSpec lags{uniform_index(rng, 2), uniform_index(rng, 2), uniform01(rng) < 0.5};
    if (lags.min_period() + 2 > t0) continue;
    EXPECT_EQ(audit_cv_folds(ds.pre(), lags, uniform_index(rng, 3)), 0u);
  }
}

TEST(PanelCv, ThreadCountDoesNotChangeResults) {
  auto ds = fixtures::ar_panel(30, 7, 5, 2);
  set_max_threads(1);
  auto a = panel_cv(ds, LagSpec{0, 0, false}, fixtures::quick_grid(), {}, {0, 3});
  set_max_threads(4);
  auto b = panel_cv(ds, LagSpec{0, 0, false}, fixtures::quick_grid(), {}, {0, 3});
  set_max_threads(0);
  EXPECT_EQ(a.fold_mse, b.fold_mse);
  EXPECT_EQ(a.winner, b.winner);
}

TEST(PanelCv, PilotAddsKeepSizeAsHyperparameter) {
  auto ds = fixtures::ar_panel(60, 8, 6, 12, 0.6, 0.0, 1.0, 3);
  PilotOptions pilot;
  pilot.n_trees = 50;
  auto rep = panel_cv(ds, LagSpec{0, 0, false}, lasso_only({0.1}), {2, 4, 99}, {}, pilot);
  EXPECT_TRUE(rep.pilot_ran);
  ASSERT_EQ(rep.ranking.size(), 4u);
  // 99 clamps to the full design and merges with 4.
  ASSERT_EQ(rep.candidates.size(), 2u);
  EXPECT_EQ(rep.candidates[0].columns.size(), 2u);
  EXPECT_EQ(rep.candidates[1].columns.size(), 4u);
  EXPECT_FALSE(rep.warnings.empty());
  for (std::size_t k = 1; k < rep.ranking_importance.size(); ++k)
    EXPECT_GE(rep.ranking_importance[k - 1], rep.ranking_importance[k]);
}

TEST(PanelCv, ReportJsonRoundTrip) {
  auto ds = fixtures::ar_panel(25, 7, 5, 3);
  auto rep = panel_cv(ds, LagSpec{0, 1, true}, fixtures::quick_grid(), {}, {0, 9});
  auto back = cv_report_from_json(cv_report_to_json(rep));
  EXPECT_EQ(back.lags, rep.lags);
  EXPECT_EQ(back.feature_names, rep.feature_names);
  EXPECT_EQ(back.winner, rep.winner);
  EXPECT_EQ(back.fold_mse, rep.fold_mse);
  ASSERT_EQ(back.candidates.size(), rep.candidates.size());
  for (std::size_t k = 0; k < rep.candidates.size(); ++k) {
    EXPECT_EQ(back.candidates[k].hp, rep.candidates[k].hp);
    EXPECT_EQ(back.candidates[k].columns, rep.candidates[k].columns);
  }
}

TEST(Refit, UsesEveryPrePeriodRow) {
  auto ds = fixtures::ar_panel(20, 6, 4, 21);
  LagSpec lags{0, 0, false};
  auto step = fit_step(ds, lags, LassoParams{0.0}, {0, 1});
  // OLS on rows 1..3 reproduces the training targets' mean exactly.
  auto d = build_design(ds, lags, 1, 3);
  double resid = 0.0;
  for (std::size_t r = 0; r < d.rows.size(); ++r)
    resid += d.target[r] - step.predict(ds, d.rows[r].first, d.rows[r].second);
  EXPECT_NEAR(resid, 0.0, 1e-8);
  EXPECT_EQ(refit_first_period(lags, 10, 3), 7u);
  EXPECT_EQ(refit_first_period(lags, 10, 0), 1u);
}

TEST(Counterfactual, ModesReadTheRightCovariates) {
  auto ds = fixtures::ar_panel(3, 6, 3, 1);
  CounterfactualPanel lags_only(ds, 2, CovariateMode::lags_only);
  CounterfactualPanel observed(ds, 2, CovariateMode::observed_post);
  std::vector<Matrix> fc{Matrix(3, 2, 7.0)};
  CounterfactualPanel forecast(ds, 2, CovariateMode::forecasted_post, &fc);
  EXPECT_EQ(lags_only.x(1, 4, 0), ds.x(1, 2, 0));
  EXPECT_EQ(observed.x(1, 4, 0), ds.x(1, 4, 0));
  EXPECT_EQ(forecast.x(1, 4, 0), 7.0);
  EXPECT_EQ(observed.y(1, 2), ds.y(1, 2));
  EXPECT_THROW(observed.y(1, 3), Error);  // not forecast yet
  observed.set(1, 0, 5.0);
  EXPECT_EQ(observed.y(1, 3), 5.0);
  EXPECT_THROW(observed.x(1, 5, 0), Error);
  EXPECT_THROW(CounterfactualPanel(ds, 4, CovariateMode::lags_only), Error);
  EXPECT_THROW(CounterfactualPanel(ds, 2, CovariateMode::forecasted_post), Error);
}

TEST(Chain, LinearWinnerIsRecursive) {
  auto ds = fixtures::ar_panel(40, 8, 5, 6);
  auto base = fit_step(ds.pre(), LagSpec{0, 0, false}, LassoParams{0.1}, {0, 1});
  auto chain = build_forecast_chain(ds, base, 3, ChainOptions{});
  EXPECT_TRUE(chain.recursive());
}

TEST(Chain, NonLinearWinnerGetsDirectModels) {
  auto ds = fixtures::ar_panel(40, 8, 5, 6);
  auto base = fit_step(ds.pre(), LagSpec{0, 0, false}, TreeParams{3, 5}, {0, 1});
  ChainOptions opt;
  opt.grid = fixtures::quick_grid();
  auto chain = build_forecast_chain(ds, base, 3, opt);
  ASSERT_EQ(chain.steps.size(), 2u);
  EXPECT_EQ(chain.steps[0].horizon, 2u);
  EXPECT_EQ(chain.steps[1].model.lags, (LagSpec{2, 2, false}));
  EXPECT_EQ(chain.steps[0].validation_mse.size(), chain.steps[0].candidates.size());
  // Frozen hyperparameters skip selection and reproduce the same models.
  opt.frozen = chain_hyperparams(chain);
  auto again = build_forecast_chain(ds, base, 3, opt);
  for (std::size_t k = 0; k < 2; ++k)
    EXPECT_EQ(again.steps[k].model.model.to_json(), chain.steps[k].model.model.to_json());
}

TEST(Chain, ShortPrePeriodIsAnError) {
  auto ds = fixtures::ar_panel(20, 6, 3, 6);
  auto base = fit_step(ds.pre(), LagSpec{1, 0, false}, TreeParams{2, 5}, {0, 1, 2});
  EXPECT_THROW(build_forecast_chain(ds, base, 3, ChainOptions{}), Error);
}
