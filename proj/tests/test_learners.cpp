#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mlcm/learners.hpp"
#include "mlcm/parallel.hpp"
#include "mlcm/random.hpp"

using namespace mlcm;

namespace {

struct Problem {
  Matrix x;
  std::vector<double> y;
  std::vector<std::string> names;
};

Problem random_problem(std::uint64_t seed, std::size_t n, std::size_t m, double noise = 1.0) {
  Rng rng(seed);
  Problem p{Matrix(n, m), std::vector<double>(n), {}};
  std::vector<double> beta(m);
  for (auto& b : beta) b = 3.0 * standard_normal(rng);
  for (std::size_t r = 0; r < n; ++r) {
    double v = 1.5;
    for (std::size_t j = 0; j < m; ++j) {
      p.x(r, j) = (j + 1.0) * standard_normal(rng) + 0.5 * j;
      v += beta[j] * p.x(r, j);
    }
    p.y[r] = v + noise * standard_normal(rng);
  }
  for (std::size_t j = 0; j < m; ++j) p.names.push_back("f" + std::to_string(j));
  return p;
}

// OLS with intercept through Eigen's QR, independent of the library code.
std::vector<double> ols_predictions(const Problem& p, const Matrix& at) {
  const std::size_t n = p.x.rows(), m = p.x.cols();
  Eigen::MatrixXd a(n, m + 1);
  Eigen::VectorXd b(n);
  for (std::size_t r = 0; r < n; ++r) {
    a(r, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) a(r, j + 1) = p.x(r, j);
    b(r) = p.y[r];
  }
  Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  std::vector<double> out(at.rows());
  for (std::size_t r = 0; r < at.rows(); ++r) {
    double v = coef(0);
    for (std::size_t j = 0; j < m; ++j) v += coef(j + 1) * at(r, j);
    out[r] = v;
  }
  return out;
}

}  // namespace

TEST(Lasso, ZeroPenaltyMatchesOls) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = random_problem(100 + s, 40 + s, 2 + s % 5);
    auto model = fit(LassoParams{0.0}, p.x, p.y, p.names);
    auto got = model.predict(p.x, p.names);
    auto want = ols_predictions(p, p.x);
    for (std::size_t r = 0; r < got.size(); ++r) EXPECT_NEAR(got[r], want[r], 1e-8) << "seed " << s;
  }
}

TEST(Lasso, HugePenaltyPredictsMean) {
  auto p = random_problem(7, 30, 4);
  auto model = fit(LassoParams{1e6}, p.x, p.y, p.names);
  for (double c : model.linear_fit().coef) EXPECT_EQ(c, 0.0);
  const double ybar = mean(p.y);
  for (double v : model.predict(p.x, p.names)) EXPECT_NEAR(v, ybar, 1e-12);
}

TEST(Lasso, ObjectiveNeverIncreases) {
  auto p = random_problem(11, 60, 6, 3.0);
  learners::LassoOptions opt;
  opt.record_objective = true;
  opt.polish = false;
  auto fit = learners::fit_lasso(p.x, p.y, 0.3, opt);
  ASSERT_GE(fit.objective_trace.size(), 2u);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
    EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] + 1e-12);
}

TEST(Lasso, ScaleEquivariance) {
  auto p = random_problem(12, 50, 3);
  auto base = fit(LassoParams{0.2}, p.x, p.y, p.names);
  Problem q = p;
  const double c = 17.5;
  for (std::size_t r = 0; r < q.x.rows(); ++r) q.x(r, 1) *= c;
  auto scaled = fit(LassoParams{0.2}, q.x, q.y, q.names);
  EXPECT_NEAR(scaled.linear_fit().coef[1] * c, base.linear_fit().coef[1], 1e-8);
  auto a = base.predict(p.x, p.names);
  auto b = scaled.predict(q.x, q.names);
  for (std::size_t r = 0; r < a.size(); ++r) EXPECT_NEAR(a[r], b[r], 1e-8);
}

TEST(Pls, FullComponentsMatchOls) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = random_problem(300 + s, 35 + s, 2 + s % 4);
    auto model = fit(PlsParams{p.x.cols()}, p.x, p.y, p.names);
    auto got = model.predict(p.x, p.names);
    auto want = ols_predictions(p, p.x);
    for (std::size_t r = 0; r < got.size(); ++r) EXPECT_NEAR(got[r], want[r], 1e-8) << "seed " << s;
  }
}

TEST(Pls, ConstantTargetPredictsConstant) {
  auto p = random_problem(5, 20, 3);
  std::fill(p.y.begin(), p.y.end(), 4.25);
  auto model = fit(PlsParams{2}, p.x, p.y, p.names);
  for (double v : model.predict(p.x, p.names)) EXPECT_NEAR(v, 4.25, 1e-12);
}

TEST(Pls, RejectsTooManyComponents) {
  auto p = random_problem(5, 20, 3);
  EXPECT_THROW(fit(PlsParams{4}, p.x, p.y, p.names), Error);
}

TEST(Tree, UnboundedTreeInterpolatesTrainingRows) {
  auto p = random_problem(21, 50, 3);
  auto model = fit(TreeParams{0, 1}, p.x, p.y, p.names);
  auto pred = model.predict(p.x, p.names);
  for (std::size_t r = 0; r < pred.size(); ++r) EXPECT_DOUBLE_EQ(pred[r], p.y[r]);
}

TEST(Tree, TiesGoToLowestFeatureAndThreshold) {
  // Two identical columns: the split must use column 0.
  Matrix x(6, 2);
  std::vector<double> y{0, 0, 0, 5, 5, 5};
  for (std::size_t r = 0; r < 6; ++r) x(r, 0) = x(r, 1) = static_cast<double>(r);
  auto t = learners::grow_tree(x, y, {1, 1.0, 0});
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(t.nodes[0].threshold, 2.5);
}

TEST(Forest, SingleTreeAllFeaturesEqualsCartOnSameBootstrap) {
  auto p = random_problem(31, 80, 4);
  ForestParams fp{4, 1, 3, 0, 99};
  auto forest = fit(fp, p.x, p.y, p.names);
  auto w = learners::forest_bootstrap_counts(99, 0, p.x.rows());
  auto tree = learners::grow_tree(p.x, p.y, w, learners::presort_columns(p.x), {0, 3.0, 0}, nullptr);
  auto fpred = forest.predict(p.x, p.names);
  for (std::size_t r = 0; r < fpred.size(); ++r)
    EXPECT_DOUBLE_EQ(fpred[r], tree.predict_row(p.x.row(r)));
}

TEST(Forest, DeterministicAcrossThreadCounts) {
  auto p = random_problem(32, 120, 5);
  ForestParams fp{2, 40, 5, 0, 7};
  set_max_threads(1);
  auto a = fit(fp, p.x, p.y, p.names).predict(p.x, p.names);
  set_max_threads(4);
  auto b = fit(fp, p.x, p.y, p.names).predict(p.x, p.names);
  set_max_threads(0);
  EXPECT_EQ(a, b);
}

TEST(Forest, ImportanceFindsDriver) {
  Rng rng(3);
  Matrix x(300, 2);
  std::vector<double> y(300);
  for (std::size_t r = 0; r < 300; ++r) {
    x(r, 0) = standard_normal(rng);
    x(r, 1) = standard_normal(rng);
    y[r] = 3.0 * x(r, 0) + 0.3 * standard_normal(rng);
  }
  auto model = fit(ForestParams{1, 100, 5, 0, 1}, x, y, {"x1", "x2"});
  auto imp = variable_importance(model);
  EXPECT_EQ(imp[0].feature, "x1");
  EXPECT_GT(imp[0].score, imp[1].score);
}

TEST(Forest, SingleFeatureHoldsAllImportance) {
  auto p = random_problem(4, 60, 1);
  auto imp = variable_importance(fit(ForestParams{1, 20, 5, 0, 1}, p.x, p.y, p.names));
  ASSERT_EQ(imp.size(), 1u);
  EXPECT_DOUBLE_EQ(imp[0].share, 1.0);
}

TEST(Forest, ConstantTargetHasZeroImportance) {
  auto p = random_problem(4, 60, 3);
  std::fill(p.y.begin(), p.y.end(), 2.0);
  for (const auto& i : variable_importance(fit(ForestParams{2, 20, 5, 0, 1}, p.x, p.y, p.names))) {
    EXPECT_EQ(i.score, 0.0);
    EXPECT_EQ(i.share, 0.0);
  }
}

TEST(Importance, RejectsLinearModels) {
  auto p = random_problem(4, 30, 2);
  EXPECT_THROW(variable_importance(fit(LassoParams{0.1}, p.x, p.y, p.names)), Error);
  EXPECT_THROW(variable_importance(fit(PlsParams{1}, p.x, p.y, p.names)), Error);
}

TEST(Gbm, ZeroLearningRatePredictsMean) {
  auto p = random_problem(8, 40, 3);
  auto model = fit(GbmParams{50, 2, 5, 0.0, 0.5, 3}, p.x, p.y, p.names);
  const double ybar = mean(p.y);
  for (double v : model.predict(p.x, p.names)) EXPECT_DOUBLE_EQ(v, ybar);
}

TEST(Gbm, StagedPredictionsAddOneTreeAtATime) {
  auto p = random_problem(9, 80, 3);
  const double lr = 0.05;
  auto model = fit(GbmParams{30, 2, 5, lr, 0.5, 3}, p.x, p.y, p.names);
  const auto& e = model.ensemble();
  for (std::size_t r = 0; r < 10; ++r) {
    auto row = p.x.row(r);
    for (std::size_t k = 1; k <= e.trees.size(); ++k) {
      const double prev = e.predict_row_staged(row, k - 1);
      const double next = e.predict_row_staged(row, k);
      EXPECT_NEAR(next, prev + lr * e.trees[k - 1].predict_row(row), 1e-12);
    }
  }
}

TEST(Gbm, SeededDeterminism) {
  auto p = random_problem(10, 80, 3);
  GbmParams gp{40, 2, 5, 0.1, 0.5, 17};
  EXPECT_EQ(fit(gp, p.x, p.y, p.names).predict(p.x, p.names),
            fit(gp, p.x, p.y, p.names).predict(p.x, p.names));
  gp.seed = 18;
  EXPECT_NE(fit(gp, p.x, p.y, p.names).predict(p.x, p.names),
            fit(GbmParams{40, 2, 5, 0.1, 0.5, 17}, p.x, p.y, p.names).predict(p.x, p.names));
}

TEST(Predict, RejectsMismatchedColumns) {
  auto p = random_problem(4, 30, 2);
  auto model = fit(LassoParams{0.1}, p.x, p.y, p.names);
  try {
    model.predict(p.x, {"f0", "zz"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Fit, RejectsZeroRowsAndNonFinite) {
  Matrix x(0, 2);
  std::vector<double> y;
  EXPECT_THROW(fit(LassoParams{0.1}, x, y, {"a", "b"}), Error);
  auto p = random_problem(4, 30, 2);
  p.x(3, 1) = std::nan("");
  EXPECT_THROW(fit(LassoParams{0.1}, p.x, p.y, p.names), Error);
}

TEST(Serialization, JsonHasVersionAndHyperparams) {
  auto p = random_problem(4, 30, 2);
  auto j = fit(GbmParams{5, 1, 5, 0.1, 0.5, 2}, p.x, p.y, p.names).to_json();
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["trees"].size(), 5u);
  EXPECT_EQ(hp_from_json(j["hyperparams"]), (HyperParams{GbmParams{5, 1, 5, 0.1, 0.5, 2}}));
}
