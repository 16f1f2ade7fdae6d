#pragma once

// Post-estimation CATE tree: CART of unit effects on heterogeneity
// covariates, grown without pruning or a holdout.

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlcm/inference.hpp"
#include "mlcm/learners/tree.hpp"

namespace mlcm {

struct CateNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t size = 0;
  double mean = 0.0;
  std::vector<std::size_t> units;  // leaves only
  std::optional<Interval> interval;
  bool degenerate = false;
};

struct CateTree {
  std::vector<std::string> feature_names;
  std::vector<std::string> unit_ids;
  std::vector<CateNode> nodes;  // node 0 is the root, preorder
  std::size_t min_node = 0;
  std::size_t max_depth = 0;

  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (nodes[k].feature < 0) out.push_back(k);
    return out;
  }
  std::size_t n_units() const { return nodes.empty() ? 0 : nodes[0].size; }
};

inline std::size_t default_cate_min_node(std::size_t n) {
  return std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n) - 1e-9)));
}

/// Grows the tree. Node means are recomputed from member effects so each
/// equals the plain mean of its units.
inline CateTree grow_cate_tree(const std::vector<double>& effects, const Matrix& h,
                               const std::vector<std::string>& names, std::size_t min_node,
                               std::size_t max_depth,
                               const std::vector<std::string>& unit_ids = {}) {
  const std::size_t n = effects.size();
  if (h.rows() != n) throw Error("heterogeneity matrix must have one row per unit");
  if (names.size() != h.cols()) throw Error("heterogeneity names do not match columns");
  if (n == 0) throw Error("no units for the CATE tree");
  if (min_node < 1) throw Error("min_node must be >= 1");
  auto tree = learners::grow_tree(h, effects, {max_depth, static_cast<double>(min_node), 0});
  CateTree ct;
  ct.feature_names = names;
  ct.unit_ids = unit_ids;
  ct.min_node = min_node;
  ct.max_depth = max_depth;
  ct.nodes.resize(tree.nodes.size());
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const auto& src = tree.nodes[k];
    auto& dst = ct.nodes[k];
    dst.feature = src.feature;
    dst.threshold = src.threshold;
    dst.left = src.left;
    dst.right = src.right;
  }
  std::vector<std::vector<std::size_t>> members(tree.nodes.size());
  for (std::size_t i = 0; i < n; ++i) {
    int k = 0;
    members[0].push_back(i);
    while (tree.nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = tree.nodes[static_cast<std::size_t>(k)];
      k = h(i, static_cast<std::size_t>(nd.feature)) <= nd.threshold ? nd.left : nd.right;
      members[static_cast<std::size_t>(k)].push_back(i);
    }
  }
  for (std::size_t k = 0; k < ct.nodes.size(); ++k) {
    auto& nd = ct.nodes[k];
    nd.size = members[k].size();
    double s = 0.0;
    for (auto i : members[k]) s += effects[i];
    nd.mean = nd.size ? s / static_cast<double>(nd.size) : kNaN;
    if (nd.feature < 0) nd.units = members[k];
  }
  return ct;
}

/// Leaf-level bootstrap; attaches intervals to the tree's leaves.
inline std::vector<NodeBootstrap> bootstrap_cate(const std::vector<double>& effects, CateTree& tree,
                                                 std::size_t B, std::uint64_t seed, double alpha) {
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> leaves;
  for (auto k : tree.leaves()) leaves.emplace_back(k, tree.nodes[k].units);
  auto out = bootstrap_leaf_means(effects, leaves, B, seed, alpha);
  for (const auto& nb : out) {
    tree.nodes[nb.node].interval = nb.interval;
    tree.nodes[nb.node].degenerate = nb.degenerate;
  }
  return out;
}

namespace detail {
inline void render_node(const CateTree& t, std::size_t k, const std::string& indent,
                        const std::string& label, std::ostringstream& os) {
  const auto& nd = t.nodes[k];
  os << indent << label << "n=" << nd.size << " cate=" << format_double(nd.mean);
  if (nd.interval)
    os << " ci=[" << format_double(nd.interval->lower) << ", " << format_double(nd.interval->upper)
       << "]";
  if (nd.degenerate) os << " (single unit)";
  os << '\n';
  if (nd.feature < 0) return;
  const std::string& f = t.feature_names[static_cast<std::size_t>(nd.feature)];
  const std::string thr = format_double(nd.threshold);
  render_node(t, static_cast<std::size_t>(nd.left), indent + "  ", f + " <= " + thr + ": ", os);
  render_node(t, static_cast<std::size_t>(nd.right), indent + "  ", f + " > " + thr + ": ", os);
}
}  // namespace detail

/// Indented text diagram, one line per node.
inline std::string describe_tree(const CateTree& t) {
  std::ostringstream os;
  if (t.nodes.empty()) return "";
  detail::render_node(t, 0, "", "root: ", os);
  return os.str();
}

/// Split conditions leading to a node, e.g. "x <= 1.5 & z > 0".
inline std::string node_path(const CateTree& t, std::size_t target) {
  std::vector<std::string> conds;
  std::function<bool(std::size_t)> walk = [&](std::size_t k) -> bool {
    if (k == target) return true;
    const auto& nd = t.nodes[k];
    if (nd.feature < 0) return false;
    const std::string& f = t.feature_names[static_cast<std::size_t>(nd.feature)];
    conds.push_back(f + " <= " + format_double(nd.threshold));
    if (walk(static_cast<std::size_t>(nd.left))) return true;
    conds.back() = f + " > " + format_double(nd.threshold);
    if (walk(static_cast<std::size_t>(nd.right))) return true;
    conds.pop_back();
    return false;
  };
  walk(0);
  std::string out;
  for (std::size_t k = 0; k < conds.size(); ++k) out += (k ? " & " : "") + conds[k];
  return out.empty() ? "(all units)" : out;
}

inline nlohmann::json cate_tree_to_json(const CateTree& t) {
  std::function<nlohmann::json(std::size_t)> node = [&](std::size_t k) {
    const auto& nd = t.nodes[k];
    nlohmann::json j;
    j["id"] = k;
    j["size"] = nd.size;
    j["mean"] = nd.mean;
    if (nd.interval) j["interval"] = {nd.interval->lower, nd.interval->upper};
    if (nd.degenerate) j["degenerate"] = true;
    if (nd.feature >= 0) {
      j["feature"] = t.feature_names[static_cast<std::size_t>(nd.feature)];
      j["threshold"] = nd.threshold;
      j["left"] = node(static_cast<std::size_t>(nd.left));
      j["right"] = node(static_cast<std::size_t>(nd.right));
    } else {
      j["units"] = nd.units;
    }
    return j;
  };
  nlohmann::json j;
  j["format_version"] = 1;
  j["features"] = t.feature_names;
  j["unit_ids"] = t.unit_ids;
  j["min_node"] = t.min_node;
  j["max_depth"] = t.max_depth;
  j["root"] = node(0);
  return j;
}

inline CateTree cate_tree_from_json(const nlohmann::json& j) {
  CateTree t;
  t.feature_names = j.at("features").get<std::vector<std::string>>();
  t.unit_ids = j.at("unit_ids").get<std::vector<std::string>>();
  t.min_node = j.at("min_node").get<std::size_t>();
  t.max_depth = j.at("max_depth").get<std::size_t>();
  std::function<void(const nlohmann::json&)> node = [&](const nlohmann::json& n) {
    const auto id = n.at("id").get<std::size_t>();
    if (t.nodes.size() <= id) t.nodes.resize(id + 1);
    CateNode nd;
    nd.size = n.at("size").get<std::size_t>();
    nd.mean = n.at("mean").get<double>();
    if (n.contains("interval")) nd.interval = Interval{n["interval"][0].get<double>(), n["interval"][1].get<double>()};
    nd.degenerate = n.value("degenerate", false);
    if (n.contains("feature")) {
      const auto f = n["feature"].get<std::string>();
      auto it = std::find(t.feature_names.begin(), t.feature_names.end(), f);
      if (it == t.feature_names.end()) throw Error("CATE tree JSON names an unknown feature '" + f + "'");
      nd.feature = static_cast<int>(it - t.feature_names.begin());
      nd.threshold = n.at("threshold").get<double>();
      nd.left = n.at("left").at("id").get<int>();
      nd.right = n.at("right").at("id").get<int>();
      node(n["left"]);
      node(n["right"]);
    } else {
      nd.units = n.at("units").get<std::vector<std::size_t>>();
    }
    t.nodes[id] = std::move(nd);
  };
  node(j.at("root"));
  return t;
}

}  // namespace mlcm
