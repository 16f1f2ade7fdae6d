#pragma once

// Unit block bootstrap for the ATE and within-leaf bootstrap for CATEs.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "mlcm/pipeline.hpp"

namespace mlcm {

enum class BootstrapMode { full_pipeline, fixed_model };

inline const char* to_string(BootstrapMode m) {
  return m == BootstrapMode::full_pipeline ? "full_pipeline" : "fixed_model";
}

inline BootstrapMode bootstrap_mode_from_string(const std::string& s) {
  if (s == "full_pipeline") return BootstrapMode::full_pipeline;
  if (s == "fixed_model") return BootstrapMode::fixed_model;
  throw Error("unknown bootstrap mode '" + s + "' (expected full_pipeline or fixed_model)");
}

struct Interval {
  double lower = kNaN;
  double upper = kNaN;
  bool covers(double v) const { return lower <= v && v <= upper; }
};

/// Percentile interval [G^-1(alpha/2), G^-1(1 - alpha/2)] with type-1
/// quantiles.
inline Interval percentile_interval(std::vector<double> replicates, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  std::sort(replicates.begin(), replicates.end());
  return {quantile_type1(replicates, alpha / 2.0), quantile_type1(replicates, 1.0 - alpha / 2.0)};
}

struct BootstrapResult {
  std::string estimand = "ate";
  BootstrapMode mode = BootstrapMode::full_pipeline;
  std::size_t B = 0;
  double alpha = 0.05;
  Matrix replicates;                  // B x K per-horizon ATE
  std::vector<double> temporal;       // B temporal ATEs
  std::vector<Interval> intervals;    // per horizon
  Interval temporal_interval;
  std::size_t failures = 0;           // retried replicates
  std::vector<std::string> failure_messages;
};

namespace detail {
inline void finish_intervals(BootstrapResult& r) {
  r.intervals.clear();
  for (std::size_t k = 0; k < r.replicates.cols(); ++k)
    r.intervals.push_back(percentile_interval(r.replicates.column(k), r.alpha));
  r.temporal_interval = percentile_interval(r.temporal, r.alpha);
}
}  // namespace detail

/// Unit positions for replicate b, attempt a.
inline std::vector<std::size_t> bootstrap_sample(std::uint64_t seed, std::size_t b, std::size_t attempt,
                                                 std::size_t n) {
  Rng rng = make_rng(seed, Stream::Bootstrap, (static_cast<std::uint64_t>(attempt) << 32) | b);
  std::vector<std::size_t> pos(n);
  for (auto& p : pos) p = uniform_index(rng, n);
  return pos;
}

struct BootstrapOptions {
  std::size_t B = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  BootstrapMode mode = BootstrapMode::full_pipeline;
  std::size_t max_attempts = 20;
};

/// Resamples whole units with replacement and re-estimates the per-horizon
/// ATE. full_pipeline reruns the horse race per replicate; fixed_model
/// refits the frozen selection of `point` (an approximation). A failing
/// replicate is retried with the next derived seed; more than 5% failures
/// is an error.
inline BootstrapResult bootstrap_ate(const PanelDataset& ds, const PipelineConfig& cfg,
                                     const BootstrapOptions& opt,
                                     const PipelineResult* point = nullptr) {
  if (opt.B < 2) throw Error("bootstrap needs B >= 2");
  BootstrapResult r;
  r.mode = opt.mode;
  r.B = opt.B;
  r.alpha = opt.alpha;
  const std::size_t horizon = cfg.resolve_horizon(ds);
  std::optional<FrozenPipeline> frozen;
  if (opt.mode == BootstrapMode::fixed_model) {
    if (point) {
      frozen = freeze(*point);
    } else {
      frozen = freeze(run_pipeline(ds, cfg));
    }
  }
  r.replicates = Matrix(opt.B, horizon);
  r.temporal.assign(opt.B, 0.0);
  std::vector<std::size_t> attempts(opt.B, 0);
  std::vector<std::string> last_error(opt.B);
  parallel_for(opt.B, [&](std::size_t b) {
    for (std::size_t a = 0; a < opt.max_attempts; ++a) {
      try {
        auto rep = ds.select_units(bootstrap_sample(opt.seed, b, a, ds.n_units()));
        auto res = run_pipeline(rep, cfg, frozen ? &*frozen : nullptr);
        for (std::size_t k = 0; k < horizon; ++k) r.replicates(b, k) = res.effects.ate[k];
        r.temporal[b] = res.effects.temporal_ate;
        attempts[b] = a;
        return;
      } catch (const Error& e) {
        last_error[b] = e.what();
      }
    }
    throw Error("bootstrap replicate " + std::to_string(b) + " failed " +
                std::to_string(opt.max_attempts) + " times: " + last_error[b]);
  });
  for (std::size_t b = 0; b < opt.B; ++b) {
    r.failures += attempts[b];
    if (attempts[b] > 0) r.failure_messages.push_back("replicate " + std::to_string(b) + ": " + last_error[b]);
  }
  if (static_cast<double>(r.failures) > 0.05 * static_cast<double>(opt.B))
    throw Error("bootstrap: " + std::to_string(r.failures) + " failed replicates exceed 5% of B");
  detail::finish_intervals(r);
  return r;
}

/// Applies a monotone increasing map (such as exp after a log-outcome
/// estimation) to every replicate and interval endpoint.
inline BootstrapResult transform_bootstrap(const BootstrapResult& in,
                                           const std::function<double(double)>& f,
                                           const std::string& label) {
  BootstrapResult out = in;
  out.estimand = label;
  for (double& v : out.replicates.data()) v = f(v);
  for (double& v : out.temporal) v = f(v);
  detail::finish_intervals(out);
  return out;
}

// ---------------------------------------------------------------------------
// CATE bootstrap
// ---------------------------------------------------------------------------

struct NodeBootstrap {
  std::size_t node = 0;       // leaf id
  std::size_t size = 0;
  double estimate = 0.0;      // leaf mean
  std::vector<double> replicates;
  Interval interval;
  bool degenerate = false;    // single-member leaf
};

/// Resamples each leaf's members' effects B times; the statistic is the
/// leaf mean. `leaves` lists member positions into `effects` per leaf.
inline std::vector<NodeBootstrap> bootstrap_leaf_means(
    const std::vector<double>& effects, const std::vector<std::pair<std::size_t, std::vector<std::size_t>>>& leaves,
    std::size_t B, std::uint64_t seed, double alpha) {
  if (B < 2) throw Error("bootstrap needs B >= 2");
  std::vector<NodeBootstrap> out;
  for (const auto& [node, members] : leaves) {
    if (members.empty()) throw Error("CATE leaf has no members");
    NodeBootstrap nb;
    nb.node = node;
    nb.size = members.size();
    for (auto i : members) nb.estimate += effects.at(i);
    nb.estimate /= static_cast<double>(members.size());
    nb.degenerate = members.size() == 1;
    nb.replicates.resize(B);
    Rng rng = make_rng(seed, Stream::CateBootstrap, node);
    for (std::size_t b = 0; b < B; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < members.size(); ++k)
        s += effects[members[uniform_index(rng, members.size())]];
      nb.replicates[b] = s / static_cast<double>(members.size());
    }
    nb.interval = percentile_interval(nb.replicates, alpha);
    out.push_back(std::move(nb));
  }
  return out;
}

}  // namespace mlcm
