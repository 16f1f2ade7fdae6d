#pragma once

// One fit/predict interface over the five regression learners.

#include <nlohmann/json.hpp>
#include <string>
#include <variant>
#include <vector>

#include "mlcm/core.hpp"
#include "mlcm/learners/ensemble.hpp"
#include "mlcm/learners/linear.hpp"
#include "mlcm/learners/tree.hpp"

namespace mlcm {

// Declaration order is the tie-break order of the horse race.
enum class LearnerKind { lasso = 0, pls = 1, gbm = 2, forest = 3, tree = 4 };

inline const char* to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::lasso: return "lasso";
    case LearnerKind::pls: return "pls";
    case LearnerKind::gbm: return "gbm";
    case LearnerKind::forest: return "forest";
    case LearnerKind::tree: return "tree";
  }
  return "?";
}

inline LearnerKind learner_from_string(const std::string& s) {
  if (s == "lasso") return LearnerKind::lasso;
  if (s == "pls") return LearnerKind::pls;
  if (s == "gbm") return LearnerKind::gbm;
  if (s == "forest") return LearnerKind::forest;
  if (s == "tree") return LearnerKind::tree;
  throw Error("unknown learner '" + s + "' (expected lasso, pls, gbm, forest or tree)");
}

inline bool is_linear(LearnerKind k) { return k == LearnerKind::lasso || k == LearnerKind::pls; }

struct LassoParams {
  double lambda = 0.1;
  friend bool operator==(const LassoParams&, const LassoParams&) = default;
};
struct PlsParams {
  std::size_t n_components = 1;
  friend bool operator==(const PlsParams&, const PlsParams&) = default;
};
struct GbmParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 1;
  std::size_t min_node = 10;
  double learning_rate = 0.1;
  double subsample = 0.5;
  std::uint64_t seed = 0;
  friend bool operator==(const GbmParams&, const GbmParams&) = default;
};
struct ForestParams {
  std::size_t mtry = 1;
  std::size_t n_trees = 1000;
  std::size_t min_node = 5;
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};
struct TreeParams {
  std::size_t max_depth = 0;
  std::size_t min_node = 5;
  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

// Alternative index equals LearnerKind.
using HyperParams = std::variant<LassoParams, PlsParams, GbmParams, ForestParams, TreeParams>;

inline LearnerKind kind_of(const HyperParams& hp) { return static_cast<LearnerKind>(hp.index()); }

inline void validate(const HyperParams& hp, std::size_t n_features) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LassoParams>) {
          if (!(p.lambda >= 0.0)) throw Error("lasso lambda must be >= 0");
        } else if constexpr (std::is_same_v<P, PlsParams>) {
          if (p.n_components < 1 || p.n_components > n_features)
            throw Error("pls n_components must lie in 1.." + std::to_string(n_features));
        } else if constexpr (std::is_same_v<P, GbmParams>) {
          if (p.n_trees < 1) throw Error("gbm n_trees must be >= 1");
          if (!(p.learning_rate >= 0.0)) throw Error("gbm learning_rate must be >= 0");
          if (!(p.subsample > 0.0 && p.subsample <= 1.0))
            throw Error("gbm subsample must lie in (0, 1]");
          if (p.min_node < 1) throw Error("gbm min_node must be >= 1");
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          if (p.mtry < 1) throw Error("forest mtry must be >= 1");
          if (p.n_trees < 1) throw Error("forest n_trees must be >= 1");
          if (p.min_node < 1) throw Error("forest min_node must be >= 1");
        } else {
          if (p.min_node < 1) throw Error("tree min_node must be >= 1");
        }
      },
      hp);
}

/// Copy of hp with every seed replaced.
inline HyperParams with_seed(HyperParams hp, std::uint64_t seed) {
  if (auto* g = std::get_if<GbmParams>(&hp)) g->seed = seed;
  if (auto* f = std::get_if<ForestParams>(&hp)) f->seed = seed;
  return hp;
}

inline nlohmann::json hp_to_json(const HyperParams& hp) {
  nlohmann::json j;
  j["learner"] = to_string(kind_of(hp));
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LassoParams>) {
          j["lambda"] = p.lambda;
        } else if constexpr (std::is_same_v<P, PlsParams>) {
          j["n_components"] = p.n_components;
        } else if constexpr (std::is_same_v<P, GbmParams>) {
          j["n_trees"] = p.n_trees;
          j["max_depth"] = p.max_depth;
          j["min_node"] = p.min_node;
          j["learning_rate"] = p.learning_rate;
          j["subsample"] = p.subsample;
          j["seed"] = p.seed;
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          j["mtry"] = p.mtry;
          j["n_trees"] = p.n_trees;
          j["min_node"] = p.min_node;
          j["max_depth"] = p.max_depth;
          j["seed"] = p.seed;
        } else {
          j["max_depth"] = p.max_depth;
          j["min_node"] = p.min_node;
        }
      },
      hp);
  return j;
}

inline HyperParams hp_from_json(const nlohmann::json& j) {
  switch (learner_from_string(j.at("learner").get<std::string>())) {
    case LearnerKind::lasso: return LassoParams{j.at("lambda").get<double>()};
    case LearnerKind::pls: return PlsParams{j.at("n_components").get<std::size_t>()};
    case LearnerKind::gbm:
      return GbmParams{j.at("n_trees").get<std::size_t>(), j.at("max_depth").get<std::size_t>(),
                       j.at("min_node").get<std::size_t>(), j.at("learning_rate").get<double>(),
                       j.at("subsample").get<double>(), j.at("seed").get<std::uint64_t>()};
    case LearnerKind::forest:
      return ForestParams{j.at("mtry").get<std::size_t>(), j.at("n_trees").get<std::size_t>(),
                          j.at("min_node").get<std::size_t>(), j.at("max_depth").get<std::size_t>(),
                          j.at("seed").get<std::uint64_t>()};
    case LearnerKind::tree:
      return TreeParams{j.at("max_depth").get<std::size_t>(), j.at("min_node").get<std::size_t>()};
  }
  throw Error("unreachable learner kind");
}

/// Compact single-line description, e.g. "gbm(n_trees=100,max_depth=1,...)".
inline std::string describe(const HyperParams& hp) {
  auto j = hp_to_json(hp);
  std::string out = j["learner"].get<std::string>() + "(";
  bool first = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "learner" || it.key() == "seed") continue;
    if (!first) out += ";";
    first = false;
    out += it.key() + "=";
    out += it->is_number_float() ? format_double(it->get<double>()) : it->dump();
  }
  return out + ")";
}

class FittedModel {
 public:
  FittedModel() = default;

  LearnerKind kind() const { return kind_of(hp_); }
  const HyperParams& hyperparams() const { return hp_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  bool linear() const { return is_linear(kind()); }

  /// Original-scale coefficients (linear learners only).
  const learners::LinearFit& linear_fit() const {
    if (!linear()) throw Error("model is not linear");
    return std::get<learners::LinearFit>(body_);
  }
  const learners::Ensemble& ensemble() const {
    if (linear()) throw Error("model is not a tree ensemble");
    return std::get<learners::Ensemble>(body_);
  }

  /// Fast path without the column-name check; callers own the layout.
  double predict_row(std::span<const double> x) const {
    if (const auto* lf = std::get_if<learners::LinearFit>(&body_)) return lf->predict_row(x);
    return std::get<learners::Ensemble>(body_).predict_row(x);
  }

  std::vector<double> predict(const Matrix& x, const std::vector<std::string>& names) const {
    check_columns(names);
    return predict_unchecked(x);
  }
  std::vector<double> predict_unchecked(const Matrix& x) const {
    if (x.cols() != names_.size())
      throw Error("feature matrix has " + std::to_string(x.cols()) + " columns, model expects " +
                  std::to_string(names_.size()));
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
    return out;
  }

  void check_columns(const std::vector<std::string>& names) const {
    if (names == names_) return;
    std::string bad;
    for (std::size_t k = 0; k < std::max(names.size(), names_.size()); ++k) {
      const std::string a = k < names.size() ? names[k] : "<none>";
      const std::string b = k < names_.size() ? names_[k] : "<none>";
      if (a != b) bad += " [" + std::to_string(k) + "] got '" + a + "' expected '" + b + "'";
    }
    throw Error("predict column mismatch:" + bad);
  }

  nlohmann::json to_json() const;

  friend FittedModel fit(const HyperParams& hp, const Matrix& x, std::span<const double> y,
                         std::vector<std::string> names);

 private:
  HyperParams hp_;
  std::vector<std::string> names_;
  std::variant<learners::LinearFit, learners::Ensemble> body_;
};

inline FittedModel fit(const HyperParams& hp, const Matrix& x, std::span<const double> y,
                       std::vector<std::string> names) {
  if (x.rows() != y.size()) throw Error("fit: feature rows and target length differ");
  if (x.rows() == 0) throw Error("fit: zero training rows");
  if (names.size() != x.cols()) throw Error("fit: feature name count does not match columns");
  for (double v : x.data())
    if (!std::isfinite(v)) throw Error("fit: non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw Error("fit: non-finite target value");
  validate(hp, x.cols());
  FittedModel m;
  m.hp_ = hp;
  m.names_ = std::move(names);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LassoParams>) {
          m.body_ = learners::fit_lasso(x, y, p.lambda);
        } else if constexpr (std::is_same_v<P, PlsParams>) {
          m.body_ = learners::fit_pls(x, y, p.n_components);
        } else if constexpr (std::is_same_v<P, GbmParams>) {
          m.body_ = learners::fit_gbm(
              x, y,
              {p.n_trees, p.max_depth, static_cast<double>(p.min_node), p.learning_rate, p.subsample,
               p.seed});
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          m.body_ = learners::fit_forest(
              x, y,
              {p.n_trees, std::min(p.mtry, x.cols()), static_cast<double>(p.min_node), p.max_depth,
               p.seed});
        } else {
          learners::Ensemble e;
          e.trees.push_back(learners::grow_tree(
              x, y, {p.max_depth, static_cast<double>(p.min_node), 0}));
          m.body_ = std::move(e);
        }
      },
      hp);
  return m;
}

struct Importance {
  std::string feature;
  std::size_t column;
  double score;  // total SSE reduction
  double share;  // score / sum of scores, 0 when nothing was split
};

/// Split-gain importance, descending; ties keep column order.
inline std::vector<Importance> variable_importance(const FittedModel& model) {
  if (model.linear())
    throw Error("variable importance is only defined for tree ensembles (got " +
                std::string(to_string(model.kind())) + ")");
  const auto& names = model.feature_names();
  std::vector<double> imp(names.size(), 0.0);
  for (const auto& t : model.ensemble().trees) t.add_importance(imp);
  double total = 0.0;
  for (double v : imp) total += v;
  std::vector<Importance> out;
  for (std::size_t j = 0; j < names.size(); ++j)
    out.push_back({names[j], j, imp[j], total > 0.0 ? imp[j] / total : 0.0});
  std::stable_sort(out.begin(), out.end(),
                   [](const Importance& a, const Importance& b) { return a.score > b.score; });
  return out;
}

inline nlohmann::json FittedModel::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["hyperparams"] = hp_to_json(hp_);
  j["features"] = names_;
  if (const auto* lf = std::get_if<learners::LinearFit>(&body_)) {
    j["intercept"] = lf->intercept;
    j["coefficients"] = lf->coef;
    j["feature_mean"] = lf->standardizer.mean;
    j["feature_scale"] = lf->standardizer.scale;
  } else {
    const auto& e = std::get<learners::Ensemble>(body_);
    j["base"] = e.base;
    j["scale"] = e.scale;
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : e.trees) {
      nlohmann::json tj;
      std::vector<int> feat, left, right;
      std::vector<double> thr, val;
      for (const auto& nd : t.nodes) {
        feat.push_back(nd.feature);
        thr.push_back(nd.threshold);
        left.push_back(nd.left);
        right.push_back(nd.right);
        val.push_back(nd.value);
      }
      tj["feature"] = feat;
      tj["threshold"] = thr;
      tj["left"] = left;
      tj["right"] = right;
      tj["value"] = val;
      trees.push_back(std::move(tj));
    }
  }
  return j;
}

}  // namespace mlcm
