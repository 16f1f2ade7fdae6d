#pragma once

// Balanced panel storage, pre/post views and lagged design matrices.
//
// Periods are addressed by 0-based position inside a dataset's window. t0()
// is the number of pre-intervention periods, so position t0()-1 is the last
// pre period and position t0() the first post period.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlcm/core.hpp"

namespace mlcm {

enum class CovariateKind { continuous, binary, categorical };

inline const char* to_string(CovariateKind k) {
  switch (k) {
    case CovariateKind::continuous: return "continuous";
    case CovariateKind::binary: return "binary";
    case CovariateKind::categorical: return "categorical";
  }
  return "?";
}

/// Raw arrays used to construct a dataset. Covariates are laid out as
/// [(unit * T + period) * m + covariate].
struct PanelArrays {
  std::vector<std::string> unit_ids;
  std::vector<std::int64_t> time_points;
  std::vector<double> outcome;
  std::vector<double> covariates;
  std::vector<std::string> covariate_names;
  std::vector<CovariateKind> covariate_kinds;
  std::vector<int> treated;                      // empty = all treated
  std::vector<std::optional<std::int64_t>> cohort;  // first treated time, empty = none
};

class PanelDataset {
 public:
  PanelDataset() = default;

  /// Validates and takes ownership. t0 is the number of pre periods.
  PanelDataset(PanelArrays arrays, std::size_t t0) {
    const std::size_t n = arrays.unit_ids.size();
    const std::size_t t = arrays.time_points.size();
    const std::size_t m = arrays.covariate_names.size();
    if (n == 0) throw Error("panel has no units");
    if (t < 2) throw Error("panel needs at least two periods");
    if (t0 < 1 || t0 >= t)
      throw Error("t0 must leave at least one pre and one post period (got " +
                  std::to_string(t0) + " pre periods of " + std::to_string(t) + ")");
    for (std::size_t k = 1; k < t; ++k)
      if (arrays.time_points[k] <= arrays.time_points[k - 1])
        throw Error("time points must be strictly increasing");
    if (arrays.outcome.size() != n * t) throw Error("outcome size does not match N x T");
    if (arrays.covariates.size() != n * t * m)
      throw Error("covariate size does not match N x T x m");
    if (arrays.covariate_kinds.empty())
      arrays.covariate_kinds.assign(m, CovariateKind::continuous);
    if (arrays.covariate_kinds.size() != m) throw Error("covariate kinds size mismatch");
    if (!arrays.treated.empty() && arrays.treated.size() != n)
      throw Error("treatment mask size mismatch");
    if (!arrays.cohort.empty() && arrays.cohort.size() != n)
      throw Error("cohort vector size mismatch");
    for (double v : arrays.outcome)
      if (!std::isfinite(v)) throw Error("non-finite outcome value");
    for (std::size_t c = 0; c < arrays.covariates.size(); ++c) {
      const double v = arrays.covariates[c];
      if (!std::isfinite(v)) throw Error("non-finite covariate value");
      if (arrays.covariate_kinds[c % m] != CovariateKind::continuous && v != 0.0 && v != 1.0)
        throw Error("covariate '" + arrays.covariate_names[c % m] +
                    "' is tagged binary but holds a value outside {0,1}");
    }
    n_storage_periods_ = t;
    data_ = std::make_shared<const PanelArrays>(std::move(arrays));
    units_.resize(n);
    for (std::size_t i = 0; i < n; ++i) units_[i] = i;
    begin_ = 0;
    end_ = t;
    t0_ = t0;
  }

  std::size_t n_units() const noexcept { return units_.size(); }
  std::size_t n_periods() const noexcept { return end_ - begin_; }
  std::size_t n_covariates() const noexcept { return data_ ? data_->covariate_names.size() : 0; }
  std::size_t t0() const noexcept { return t0_; }
  std::size_t n_post() const noexcept { return n_periods() - t0_; }

  double y(std::size_t i, std::size_t t) const {
    check(i, t);
    return data_->outcome[units_[i] * n_storage_periods_ + begin_ + t];
  }
  double x(std::size_t i, std::size_t t, std::size_t j) const {
    check(i, t);
    return data_->covariates[(units_[i] * n_storage_periods_ + begin_ + t) * n_covariates() + j];
  }

  const std::string& unit_id(std::size_t i) const { return data_->unit_ids.at(units_.at(i)); }
  std::int64_t time_point(std::size_t t) const {
    if (t >= n_periods()) throw Error("period position out of range");
    return data_->time_points[begin_ + t];
  }
  std::vector<std::int64_t> time_points() const {
    return {data_->time_points.begin() + static_cast<std::ptrdiff_t>(begin_),
            data_->time_points.begin() + static_cast<std::ptrdiff_t>(end_)};
  }
  const std::vector<std::string>& covariate_names() const { return data_->covariate_names; }
  const std::vector<CovariateKind>& covariate_kinds() const { return data_->covariate_kinds; }
  std::optional<std::size_t> covariate_index(const std::string& name) const {
    for (std::size_t j = 0; j < n_covariates(); ++j)
      if (data_->covariate_names[j] == name) return j;
    return std::nullopt;
  }

  bool has_treatment_mask() const noexcept { return data_ && !data_->treated.empty(); }
  bool treated(std::size_t i) const {
    return !has_treatment_mask() || data_->treated.at(units_.at(i)) != 0;
  }
  bool has_cohorts() const noexcept { return data_ && !data_->cohort.empty(); }
  std::optional<std::int64_t> cohort(std::size_t i) const {
    if (!has_cohorts()) return std::nullopt;
    return data_->cohort.at(units_.at(i));
  }

  /// Index of unit i in the original storage. Bootstrap audits use this to
  /// confirm that resampled panels hold whole original time paths.
  std::size_t source_unit(std::size_t i) const { return units_.at(i); }

  /// Periods 0..t0-1 only. The returned view has t0() == n_periods().
  PanelDataset pre() const { return window(0, t0_).with_t0_unchecked(t0_); }

  /// Periods t0..T-1 only. The returned view has t0() == 0.
  PanelDataset post() const { return window(t0_, n_periods()).with_t0_unchecked(0); }

  /// Sub-window [first, last) of the current window. t0 is shifted and
  /// clamped into the new window.
  PanelDataset window(std::size_t first, std::size_t last) const {
    if (first >= last || last > n_periods()) throw Error("invalid period window");
    PanelDataset out = *this;
    out.begin_ = begin_ + first;
    out.end_ = begin_ + last;
    const std::size_t shifted = t0_ > first ? t0_ - first : 0;
    out.t0_ = std::min(shifted, last - first);
    return out;
  }

  /// Same data with a different intervention position; needs 1 <= t0 < T.
  PanelDataset with_t0(std::size_t t0) const {
    if (t0 < 1 || t0 >= n_periods())
      throw Error("t0 must leave at least one pre and one post period");
    return with_t0_unchecked(t0);
  }

  /// Subset (or resample, repeats allowed) of units by position.
  PanelDataset select_units(const std::vector<std::size_t>& positions) const {
    if (positions.empty()) throw Error("unit selection is empty");
    PanelDataset out = *this;
    out.units_.resize(positions.size());
    for (std::size_t k = 0; k < positions.size(); ++k) out.units_[k] = units_.at(positions[k]);
    return out;
  }

  /// Copies the view into fresh storage with the outcome replaced by
  /// covariate j and no covariates. Used to forecast covariates with the
  /// outcome machinery.
  PanelDataset covariate_as_outcome(std::size_t j) const {
    PanelArrays a;
    const std::size_t n = n_units(), t = n_periods();
    for (std::size_t i = 0; i < n; ++i) a.unit_ids.push_back(unit_id(i));
    a.time_points = time_points();
    a.outcome.resize(n * t);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < t; ++s) a.outcome[i * t + s] = x(i, s, j);
    // Unit ids may repeat after resampling; the copy keeps positions, not ids.
    PanelDataset out;
    out.n_storage_periods_ = t;
    out.data_ = std::make_shared<const PanelArrays>(std::move(a));
    out.units_.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.units_[i] = i;
    out.begin_ = 0;
    out.end_ = t;
    out.t0_ = t0_;
    return out;
  }

  /// Deep copy of the current view (units and window) as raw arrays.
  PanelArrays to_arrays() const {
    PanelArrays a;
    const std::size_t n = n_units(), t = n_periods(), m = n_covariates();
    for (std::size_t i = 0; i < n; ++i) a.unit_ids.push_back(unit_id(i));
    a.time_points = time_points();
    a.outcome.resize(n * t);
    a.covariates.resize(n * t * m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < t; ++s) {
        a.outcome[i * t + s] = y(i, s);
        for (std::size_t j = 0; j < m; ++j) a.covariates[(i * t + s) * m + j] = x(i, s, j);
      }
    a.covariate_names = covariate_names();
    a.covariate_kinds = covariate_kinds();
    if (has_treatment_mask())
      for (std::size_t i = 0; i < n; ++i) a.treated.push_back(treated(i) ? 1 : 0);
    if (has_cohorts())
      for (std::size_t i = 0; i < n; ++i) a.cohort.push_back(cohort(i));
    return a;
  }

  /// Outcome of every unit at period t.
  std::vector<double> outcome_column(std::size_t t) const {
    std::vector<double> v(n_units());
    for (std::size_t i = 0; i < n_units(); ++i) v[i] = y(i, t);
    return v;
  }

 private:
  void check(std::size_t i, std::size_t t) const {
    if (i >= units_.size() || t >= n_periods())
      throw Error("panel read outside the dataset window (unit " + std::to_string(i) +
                  ", period " + std::to_string(t) + ")");
  }
  PanelDataset with_t0_unchecked(std::size_t t0) const {
    PanelDataset out = *this;
    out.t0_ = t0;
    return out;
  }

  std::shared_ptr<const PanelArrays> data_;
  std::size_t n_storage_periods_ = 0;
  std::vector<std::size_t> units_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  std::size_t t0_ = 0;
};

// ---------------------------------------------------------------------------
// lag specification and design matrices
// ---------------------------------------------------------------------------

/// Outcome lags 1..p+1. Covariate lags 0..q when contemporaneous covariates
/// are used, otherwise 1..q+1.
struct LagSpec {
  std::size_t p = 0;
  std::size_t q = 0;
  bool contemporaneous = true;

  std::size_t covariate_lag_first() const noexcept { return contemporaneous ? 0 : 1; }
  std::size_t covariate_lag_last() const noexcept { return q + covariate_lag_first(); }
  /// Earliest period position that can host a design row.
  std::size_t min_period() const noexcept { return std::max(p + 1, covariate_lag_last()); }
  std::size_t n_features(std::size_t m) const noexcept { return p + 1 + m * (q + 1); }
  friend bool operator==(const LagSpec&, const LagSpec&) = default;
};

inline std::vector<std::string> design_column_names(const LagSpec& lags,
                                                    const std::vector<std::string>& covariates) {
  std::vector<std::string> names;
  for (std::size_t l = 1; l <= lags.p + 1; ++l) names.push_back("y_lag_" + std::to_string(l));
  for (const auto& c : covariates)
    for (std::size_t l = lags.covariate_lag_first(); l <= lags.covariate_lag_last(); ++l)
      names.push_back(c + "_lag_" + std::to_string(l));
  return names;
}

/// Anything that answers outcome and covariate reads like a PanelDataset.
template <class S>
concept PanelSource = requires(const S& s, std::size_t i, std::size_t t, std::size_t j) {
  { s.n_units() } -> std::convertible_to<std::size_t>;
  { s.n_periods() } -> std::convertible_to<std::size_t>;
  { s.n_covariates() } -> std::convertible_to<std::size_t>;
  { s.y(i, t) } -> std::convertible_to<double>;
  { s.x(i, t, j) } -> std::convertible_to<double>;
};

struct DesignMatrix {
  std::vector<std::pair<std::size_t, std::size_t>> rows;  // (unit, period)
  Matrix features;
  std::vector<double> target;
  std::vector<std::string> names;
};

/// Fills `out` with the feature row of unit i at period t.
template <PanelSource S>
void design_row(const S& src, const LagSpec& lags, std::size_t i, std::size_t t,
                std::span<double> out) {
  std::size_t c = 0;
  for (std::size_t l = 1; l <= lags.p + 1; ++l) out[c++] = src.y(i, t - l);
  const std::size_t m = src.n_covariates();
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t l = lags.covariate_lag_first(); l <= lags.covariate_lag_last(); ++l)
      out[c++] = src.x(i, t - l, j);
}

inline void check_design_window(const LagSpec& lags, std::size_t first, std::size_t last,
                                std::size_t n_periods) {
  if (first > last) throw Error("design window is empty");
  if (last >= n_periods) throw Error("design window extends past the panel");
  if (first < lags.min_period())
    throw Error("design window starts at period position " + std::to_string(first) +
                " but the lag specification needs it to start at " +
                std::to_string(lags.min_period()) + " or later");
}

/// One row per (unit, period) for periods first..last inclusive, period-major
/// (all units at `first`, then all units at `first+1`, ...).
template <PanelSource S>
DesignMatrix build_design(const S& src, const LagSpec& lags, std::size_t first, std::size_t last,
                          const std::vector<std::string>& covariate_names, bool with_target = true) {
  check_design_window(lags, first, last, src.n_periods());
  DesignMatrix d;
  d.names = design_column_names(lags, covariate_names);
  const std::size_t n = src.n_units();
  const std::size_t rows = n * (last - first + 1);
  d.features = Matrix(rows, d.names.size());
  d.rows.reserve(rows);
  if (with_target) d.target.reserve(rows);
  std::size_t r = 0;
  for (std::size_t t = first; t <= last; ++t)
    for (std::size_t i = 0; i < n; ++i, ++r) {
      d.rows.emplace_back(i, t);
      design_row(src, lags, i, t, d.features.row(r));
      if (with_target) d.target.push_back(src.y(i, t));
    }
  return d;
}

inline DesignMatrix build_design(const PanelDataset& ds, const LagSpec& lags, std::size_t first,
                                 std::size_t last) {
  return build_design(ds, lags, first, last, ds.covariate_names());
}

/// Pre-intervention view and post-intervention view sharing storage.
inline std::pair<PanelDataset, PanelDataset> split_pre_post(const PanelDataset& ds) {
  return {ds.pre(), ds.post()};
}

// ---------------------------------------------------------------------------
// read tracing for leakage audits
// ---------------------------------------------------------------------------

struct PanelRead {
  bool outcome;
  std::size_t unit;
  std::size_t period;
};

/// Wraps a source and records every read.
template <PanelSource S>
class TracingPanel {
 public:
  explicit TracingPanel(const S& src) : src_(&src) {}
  std::size_t n_units() const { return src_->n_units(); }
  std::size_t n_periods() const { return src_->n_periods(); }
  std::size_t n_covariates() const { return src_->n_covariates(); }
  double y(std::size_t i, std::size_t t) const {
    reads_.push_back({true, i, t});
    return src_->y(i, t);
  }
  double x(std::size_t i, std::size_t t, std::size_t j) const {
    reads_.push_back({false, i, t});
    return src_->x(i, t, j);
  }
  const std::vector<PanelRead>& reads() const { return reads_; }
  void clear() { reads_.clear(); }

  /// Latest period read for outcomes (or covariates), or nullopt if none.
  std::optional<std::size_t> max_period(bool outcome) const {
    std::optional<std::size_t> best;
    for (const auto& r : reads_)
      if (r.outcome == outcome && (!best || r.period > *best)) best = r.period;
    return best;
  }

 private:
  const S* src_;
  mutable std::vector<PanelRead> reads_;
};

/// Number of leaking reads when building each design row of [first, last]
/// individually: outcome reads at periods >= t or covariate reads at periods
/// > t. Zero means the design is clean.
template <PanelSource S>
std::size_t audit_design_leakage(const S& src, const LagSpec& lags, std::size_t first,
                                 std::size_t last) {
  check_design_window(lags, first, last, src.n_periods());
  TracingPanel<S> tracer(src);
  std::vector<double> row(lags.n_features(src.n_covariates()));
  std::size_t leaks = 0;
  for (std::size_t t = first; t <= last; ++t)
    for (std::size_t i = 0; i < src.n_units(); ++i) {
      tracer.clear();
      design_row(tracer, lags, i, t, row);
      for (const auto& r : tracer.reads())
        if (r.unit != i || (r.outcome ? r.period >= t : r.period > t)) ++leaks;
    }
  return leaks;
}

}  // namespace mlcm
