#pragma once

// CART regression trees. Rows carry non-negative weights (bootstrap
// multiplicities); weight-0 rows are ignored. Each feature's row order is
// sorted once and partitioned stably as the tree grows, so one level costs
// O(features x rows).

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "mlcm/core.hpp"
#include "mlcm/random.hpp"

namespace mlcm::learners {

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;   // weighted mean target of the node
  double weight = 0.0;  // total row weight in the node
  double gain = 0.0;    // SSE reduction of this node's split
  int depth = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  int leaf_of(std::span<const double> x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return k;
  }
  double predict_row(std::span<const double> x) const {
    return nodes[static_cast<std::size_t>(leaf_of(x))].value;
  }
  std::size_t n_leaves() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
  }
  void add_importance(std::vector<double>& imp) const {
    for (const auto& n : nodes)
      if (n.feature >= 0) imp[static_cast<std::size_t>(n.feature)] += n.gain;
  }
};

struct TreeOptions {
  std::size_t max_depth = 0;  // 0 = unbounded
  double min_node = 1.0;      // minimum child weight
  std::size_t mtry = 0;       // 0 or >= features: every feature at every node
};

/// Row indices of each feature sorted by value (ties by row index).
using SortedColumns = std::vector<std::vector<std::uint32_t>>;

inline SortedColumns presort_columns(const Matrix& x) {
  SortedColumns out(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    auto& idx = out[j];
    idx.resize(x.rows());
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, j) < x(b, j); });
  }
  return out;
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, std::span<const double> w,
              const SortedColumns& sorted, const TreeOptions& opt, Rng* rng)
      : x_(x), y_(y), w_(w), opt_(opt), rng_(rng), goes_left_(x.rows(), 0) {
    const std::size_t m = x.cols();
    order_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      order_[j].reserve(sorted[j].size());
      for (std::uint32_t r : sorted[j])
        if (w_[r] > 0.0) order_[j].push_back(r);
    }
    scratch_.reserve(x.rows());
    features_.resize(m);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  Tree build() {
    Tree tree;
    const std::size_t n = order_.empty() ? count_rows() : order_[0].size();
    struct Work {
      int node;
      std::size_t lo, hi;
      int depth;
    };
    std::vector<Work> stack;
    tree.nodes.push_back({});
    stack.push_back({0, 0, n, 0});
    // Row list for the feature-less case.
    if (order_.empty()) {
      for (std::size_t r = 0; r < x_.rows(); ++r)
        if (w_[r] > 0.0) plain_.push_back(static_cast<std::uint32_t>(r));
    }
    while (!stack.empty()) {
      Work wk = stack.back();
      stack.pop_back();
      const auto& rows = order_.empty() ? plain_ : order_[0];
      double sw = 0.0, sy = 0.0, syy = 0.0;
      for (std::size_t k = wk.lo; k < wk.hi; ++k) {
        const std::uint32_t r = rows[k];
        sw += w_[r];
        sy += w_[r] * y_[r];
        syy += w_[r] * y_[r] * y_[r];
      }
      {
        auto& nd = tree.nodes[static_cast<std::size_t>(wk.node)];
        nd.weight = sw;
        nd.value = sw > 0.0 ? sy / sw : 0.0;
        nd.depth = wk.depth;
      }
      const bool depth_ok = opt_.max_depth == 0 || static_cast<std::size_t>(wk.depth) < opt_.max_depth;
      if (!depth_ok || sw < 2.0 * opt_.min_node || order_.empty()) continue;

      auto split = best_split(wk.lo, wk.hi, sw, sy, syy);
      if (split.feature < 0) continue;

      // Mark rows going left, then stably partition every feature's segment.
      const auto& fcol = order_[static_cast<std::size_t>(split.feature)];
      std::size_t n_left = 0;
      for (std::size_t k = wk.lo; k < wk.hi; ++k) {
        const std::uint32_t r = fcol[k];
        const bool left = x_(r, static_cast<std::size_t>(split.feature)) <= split.threshold;
        goes_left_[r] = left ? 1 : 0;
        n_left += left ? 1 : 0;
      }
      for (auto& col : order_) {
        scratch_.clear();
        std::size_t out = wk.lo;
        for (std::size_t k = wk.lo; k < wk.hi; ++k) {
          if (goes_left_[col[k]]) col[out++] = col[k];
          else scratch_.push_back(col[k]);
        }
        std::copy(scratch_.begin(), scratch_.end(), col.begin() + static_cast<std::ptrdiff_t>(out));
      }
      const int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      const int right_id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      auto& nd = tree.nodes[static_cast<std::size_t>(wk.node)];
      nd.feature = split.feature;
      nd.threshold = split.threshold;
      nd.gain = split.gain;
      nd.left = left_id;
      nd.right = right_id;
      // Right first so the left subtree is expanded first.
      stack.push_back({right_id, wk.lo + n_left, wk.hi, wk.depth + 1});
      stack.push_back({left_id, wk.lo, wk.lo + n_left, wk.depth + 1});
    }
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::size_t count_rows() const {
    std::size_t n = 0;
    for (double v : w_) n += v > 0.0 ? 1 : 0;
    return n;
  }

  Split best_split(std::size_t lo, std::size_t hi, double sw, double sy, double syy) {
    const std::size_t m = order_.size();
    std::span<const std::size_t> cand(features_);
    if (opt_.mtry > 0 && opt_.mtry < m && rng_) {
      // Partial Fisher-Yates over a fresh identity permutation.
      std::iota(features_.begin(), features_.end(), std::size_t{0});
      for (std::size_t k = 0; k < opt_.mtry; ++k) {
        const std::size_t pick = k + uniform_index(*rng_, m - k);
        std::swap(features_[k], features_[pick]);
      }
      std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(opt_.mtry));
      cand = cand.first(opt_.mtry);
    } else {
      std::iota(features_.begin(), features_.end(), std::size_t{0});
    }
    const double parent = sy * sy / sw;
    const double floor = 1e-12 * std::max(syy, 1e-300);
    Split best;
    for (std::size_t j : cand) {
      const auto& col = order_[j];
      double wl = 0.0, sl = 0.0;
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        const std::uint32_t r = col[k];
        wl += w_[r];
        sl += w_[r] * y_[r];
        const double xv = x_(r, j);
        const double xn = x_(col[k + 1], j);
        if (!(xn > xv)) continue;
        const double wr = sw - wl;
        if (wl < opt_.min_node || wr < opt_.min_node) continue;
        const double sr = sy - sl;
        const double gain = sl * sl / wl + sr * sr / wr - parent;
        if (gain > best.gain && gain > floor) {
          best.gain = gain;
          best.feature = static_cast<int>(j);
          double mid = xv + (xn - xv) / 2.0;
          if (!(mid < xn)) mid = xv;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> y_;
  std::span<const double> w_;
  TreeOptions opt_;
  Rng* rng_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint32_t> plain_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> features_;
  std::vector<unsigned char> goes_left_;
};

}  // namespace detail

/// Grows one tree. `rng` is only consumed when mtry restricts the features.
inline Tree grow_tree(const Matrix& x, std::span<const double> y, std::span<const double> w,
                      const SortedColumns& sorted, const TreeOptions& opt, Rng* rng = nullptr) {
  if (x.rows() != y.size() || y.size() != w.size()) throw Error("tree inputs size mismatch");
  detail::TreeBuilder b(x, y, w, sorted, opt, rng);
  return b.build();
}

inline Tree grow_tree(const Matrix& x, std::span<const double> y, const TreeOptions& opt) {
  std::vector<double> w(y.size(), 1.0);
  return grow_tree(x, y, w, presort_columns(x), opt, nullptr);
}

}  // namespace mlcm::learners
