#pragma once

// Random forest and stochastic gradient boosting on top of the CART builder.

#include <cstdint>
#include <vector>

#include "mlcm/learners/tree.hpp"
#include "mlcm/parallel.hpp"
#include "mlcm/random.hpp"

namespace mlcm::learners {

struct ForestOptions {
  std::size_t n_trees = 1000;
  std::size_t mtry = 1;
  double min_node = 5.0;
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
};

struct GbmOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 1;
  double min_node = 10.0;
  double learning_rate = 0.1;
  double subsample = 0.5;
  std::uint64_t seed = 0;
};

struct Ensemble {
  double base = 0.0;   // forest: 0, gbm: initial mean
  double scale = 1.0;  // forest: 1/n_trees, gbm: learning rate
  std::vector<Tree> trees;

  double predict_row(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict_row(x);
    return base + scale * s;
  }
  /// Prediction using only the first `n` trees (boosting stages).
  double predict_row_staged(std::span<const double> x, std::size_t n) const {
    double s = 0.0;
    for (std::size_t k = 0; k < n && k < trees.size(); ++k) s += trees[k].predict_row(x);
    return base + scale * s;
  }
};

/// Multiplicities of a bootstrap resample of n rows for one tree.
inline std::vector<double> forest_bootstrap_counts(std::uint64_t seed, std::size_t tree,
                                                   std::size_t n) {
  Rng rng = make_rng(seed, Stream::ForestTree, tree);
  std::vector<double> w(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) w[uniform_index(rng, n)] += 1.0;
  return w;
}

inline Ensemble fit_forest(const Matrix& x, std::span<const double> y, const ForestOptions& opt) {
  if (x.rows() == 0) throw Error("cannot fit a forest on zero rows");
  if (opt.n_trees == 0) throw Error("forest needs at least one tree");
  if (opt.mtry == 0) throw Error("forest mtry must be >= 1");
  const SortedColumns sorted = presort_columns(x);
  Ensemble e;
  e.trees.resize(opt.n_trees);
  e.scale = 1.0 / static_cast<double>(opt.n_trees);
  TreeOptions to{opt.max_depth, opt.min_node, opt.mtry};
  parallel_for(opt.n_trees, [&](std::size_t t) {
    auto w = forest_bootstrap_counts(opt.seed, t, x.rows());
    // The split-sampling stream continues after the bootstrap draws.
    Rng rng = make_rng(opt.seed, Stream::ForestTree, t);
    for (std::size_t k = 0; k < x.rows(); ++k) rng();
    e.trees[t] = grow_tree(x, y, w, sorted, to, &rng);
  });
  return e;
}

inline Ensemble fit_gbm(const Matrix& x, std::span<const double> y, const GbmOptions& opt) {
  const std::size_t n = x.rows();
  if (n == 0) throw Error("cannot fit boosting on zero rows");
  if (!(opt.learning_rate >= 0.0)) throw Error("boosting learning_rate must be >= 0");
  if (!(opt.subsample > 0.0 && opt.subsample <= 1.0))
    throw Error("boosting subsample fraction must lie in (0, 1]");
  const SortedColumns sorted = presort_columns(x);
  Ensemble e;
  e.base = mean(y);
  e.scale = opt.learning_rate;
  std::vector<double> f(n, e.base), resid(n), w(n);
  std::vector<std::size_t> perm(n);
  const std::size_t take =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(opt.subsample * static_cast<double>(n))));
  TreeOptions to{opt.max_depth, opt.min_node, 0};
  for (std::size_t t = 0; t < opt.n_trees; ++t) {
    for (std::size_t r = 0; r < n; ++r) resid[r] = y[r] - f[r];
    if (take >= n) {
      std::fill(w.begin(), w.end(), 1.0);
    } else {
      Rng rng = make_rng(opt.seed, Stream::GbmTree, t);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t k = 0; k < take; ++k) {
        std::swap(perm[k], perm[k + uniform_index(rng, n - k)]);
        w[perm[k]] = 1.0;
      }
    }
    e.trees.push_back(grow_tree(x, resid, w, sorted, to, nullptr));
    const Tree& tree = e.trees.back();
    for (std::size_t r = 0; r < n; ++r) f[r] += opt.learning_rate * tree.predict_row(x.row(r));
  }
  return e;
}

}  // namespace mlcm::learners
