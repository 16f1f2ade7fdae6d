#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mlcm/pipeline.hpp"
#include "mlcm/random.hpp"

namespace mlcm::fixtures {

// y_t = a + phi y_{t-1} + b x_{t-1} + noise, x an AR(1) covariate; post
// outcomes get `effect` added.
inline PanelDataset ar_panel(std::size_t n, std::size_t T, std::size_t t0, std::uint64_t seed,
                             double phi = 0.6, double effect = 0.0, double noise = 1.0,
                             std::size_t n_cov = 1) {
  Rng rng(seed);
  PanelArrays a;
  for (std::size_t i = 0; i < n; ++i) a.unit_ids.push_back("u" + std::to_string(i));
  for (std::size_t t = 0; t < T; ++t) a.time_points.push_back(static_cast<std::int64_t>(2000 + t));
  for (std::size_t j = 0; j < n_cov; ++j) a.covariate_names.push_back("x" + std::to_string(j + 1));
  a.outcome.resize(n * T);
  a.covariates.resize(n * T * n_cov);
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = standard_normal(rng);
    std::vector<double> x(n_cov, 0.0);
    double y = alpha;
    for (std::size_t t = 0; t < T; ++t) {
      double drive = 0.0;
      for (std::size_t j = 0; j < n_cov; ++j) drive += (j + 1.0) * 0.5 * x[j];
      y = alpha + phi * y + drive + noise * standard_normal(rng);
      for (std::size_t j = 0; j < n_cov; ++j) {
        x[j] = 0.5 * x[j] + standard_normal(rng);
        a.covariates[(i * T + t) * n_cov + j] = x[j];
      }
      a.outcome[i * T + t] = y + (t >= t0 ? effect : 0.0);
    }
  }
  return PanelDataset(std::move(a), t0);
}

inline GridSpec quick_grid() {
  GridSpec g;
  g.lasso_lambda = {0.0, 0.1};
  g.pls_max_components = 2;
  g.gbm_n_trees = {30};
  g.gbm_max_depth = {1};
  g.gbm_min_node = {5};
  g.gbm_learning_rate = {0.1};
  g.forest_mtry_fraction = {0.5};
  g.forest_n_trees = 20;
  return g;
}

inline PipelineConfig quick_config(CovariateMode mode = CovariateMode::lags_only) {
  PipelineConfig c;
  c.lags = {0, 0, false};
  c.grid = quick_grid();
  c.covariate_mode = mode;
  c.seed = 5;
  return c;
}

}  // namespace mlcm::fixtures
