#pragma once

// Linear learners on standardized features: LASSO by coordinate descent and
// PLS1 by NIPALS. Both report coefficients on the original feature scale.

#include <cmath>
#include <vector>

#include "mlcm/core.hpp"

namespace mlcm::learners {

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population SD; 0 marks a constant column

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const std::size_t n = x.rows(), m = x.cols();
    s.mean.assign(m, 0.0);
    s.scale.assign(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) s.mean[j] += x(r, j);
    for (double& v : s.mean) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) {
        const double d = x(r, j) - s.mean[j];
        s.scale[j] += d * d;
      }
    for (std::size_t j = 0; j < m; ++j) {
      const double sd = std::sqrt(s.scale[j] / static_cast<double>(n));
      s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 0.0;
    }
    return s;
  }

  Matrix transform(const Matrix& x) const {
    Matrix z(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols(); ++j)
        z(r, j) = scale[j] > 0.0 ? (x(r, j) - mean[j]) / scale[j] : 0.0;
    return z;
  }
};

struct LinearFit {
  double intercept = 0.0;
  std::vector<double> coef;  // original scale
  Standardizer standardizer;
  std::size_t iterations = 0;
  std::vector<double> objective_trace;

  double predict_row(std::span<const double> x) const {
    double v = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * x[j];
    return v;
  }
};

namespace detail {

/// Maps standardized slopes back to the raw feature scale.
inline void unstandardize(LinearFit& fit, const std::vector<double>& b, double ybar) {
  const auto& st = fit.standardizer;
  fit.coef.assign(b.size(), 0.0);
  fit.intercept = ybar;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (st.scale[j] <= 0.0) continue;
    fit.coef[j] = b[j] / st.scale[j];
    fit.intercept -= fit.coef[j] * st.mean[j];
  }
}

inline double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

}  // namespace detail

struct LassoOptions {
  double tolerance = 1e-7;
  std::size_t max_sweeps = 10000;
  bool polish = true;
  bool record_objective = false;
};

/// Minimizes (1/2n)|y - ybar - Z b|^2 + lambda |b|_1 over standardized Z.
inline LinearFit fit_lasso(const Matrix& x, std::span<const double> y, double lambda,
                           const LassoOptions& opt = {}) {
  const std::size_t n = x.rows(), m = x.cols();
  if (n == 0) throw Error("cannot fit LASSO on zero rows");
  if (!(lambda >= 0.0)) throw Error("LASSO lambda must be >= 0");
  LinearFit fit;
  fit.standardizer = Standardizer::fit(x);
  const Matrix z = fit.standardizer.transform(x);
  const double ybar = mean(y);
  const double dn = static_cast<double>(n);

  // Gram matrix and correlations; the covariance-update form only touches
  // these m x m quantities inside the sweeps.
  Matrix g(m, m);
  std::vector<double> c(m, 0.0);
  double yy = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double yc = y[r] - ybar;
    yy += yc * yc;
    auto zr = z.row(r);
    for (std::size_t j = 0; j < m; ++j) {
      c[j] += zr[j] * yc;
      for (std::size_t k = j; k < m; ++k) g(j, k) += zr[j] * zr[k];
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    c[j] /= dn;
    for (std::size_t k = j; k < m; ++k) {
      g(j, k) /= dn;
      g(k, j) = g(j, k);
    }
  }
  yy /= dn;

  auto objective = [&](const std::vector<double>& b) {
    double quad = 0.0, lin = 0.0, l1 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (b[j] == 0.0) continue;
      lin += c[j] * b[j];
      l1 += std::abs(b[j]);
      for (std::size_t k = 0; k < m; ++k) quad += b[j] * g(j, k) * b[k];
    }
    return 0.5 * (yy - 2.0 * lin + quad) + lambda * l1;
  };

  std::vector<double> b(m, 0.0);
  std::vector<double> grad = c;  // c - G b
  if (opt.record_objective) fit.objective_trace.push_back(objective(b));
  std::size_t sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (g(j, j) <= 0.0) continue;
      const double zj = grad[j] + g(j, j) * b[j];
      const double nb = detail::soft_threshold(zj, lambda) / g(j, j);
      const double delta = nb - b[j];
      if (delta == 0.0) continue;
      for (std::size_t k = 0; k < m; ++k) grad[k] -= delta * g(k, j);
      b[j] = nb;
      max_delta = std::max(max_delta, std::abs(delta));
    }
    if (opt.record_objective) fit.objective_trace.push_back(objective(b));
    if (max_delta < opt.tolerance) {
      ++sweep;
      break;
    }
  }
  fit.iterations = sweep;

  // Active-set polish: solve the KKT system exactly on the support found by
  // coordinate descent. Kept only when it is a valid LASSO solution that is
  // no worse than the iterate.
  if (opt.polish) {
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < m; ++j)
      if (b[j] != 0.0) active.push_back(j);
    if (!active.empty()) {
      const std::size_t a = active.size();
      Matrix ga(a, a);
      std::vector<double> rhs(a);
      for (std::size_t u = 0; u < a; ++u) {
        const double s = b[active[u]] > 0 ? 1.0 : -1.0;
        rhs[u] = c[active[u]] - lambda * s;
        for (std::size_t v = 0; v < a; ++v) ga(u, v) = g(active[u], active[v]);
      }
      if (auto sol = cholesky_solve(ga, rhs)) {
        std::vector<double> nb(m, 0.0);
        bool ok = true;
        for (std::size_t u = 0; u < a; ++u) {
          nb[active[u]] = (*sol)[u];
          if (lambda > 0.0 && ((*sol)[u] > 0) != (b[active[u]] > 0)) ok = false;
        }
        if (ok) {
          for (std::size_t j = 0; j < m && ok; ++j) {
            if (nb[j] != 0.0 || g(j, j) <= 0.0) continue;
            double gj = c[j];
            for (std::size_t k = 0; k < m; ++k) gj -= g(j, k) * nb[k];
            if (std::abs(gj) > lambda + 1e-9) ok = false;
          }
        }
        if (ok && objective(nb) <= objective(b) + 1e-12 * std::max(1.0, std::abs(objective(b))))
          b = nb;
      }
    }
  }
  detail::unstandardize(fit, b, ybar);
  return fit;
}

/// PLS1 via NIPALS with deflation on standardized features. Stops early
/// when the deflated covariance vanishes, so a constant target gives the
/// constant prediction.
inline LinearFit fit_pls(const Matrix& x, std::span<const double> y, std::size_t n_components) {
  const std::size_t n = x.rows(), m = x.cols();
  if (n == 0) throw Error("cannot fit PLS on zero rows");
  if (n_components < 1 || n_components > m)
    throw Error("PLS n_components must lie in 1.." + std::to_string(m));
  LinearFit fit;
  fit.standardizer = Standardizer::fit(x);
  Matrix z = fit.standardizer.transform(x);
  const double ybar = mean(y);
  std::vector<double> yr(n);
  double ynorm = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    yr[r] = y[r] - ybar;
    ynorm += yr[r] * yr[r];
  }
  ynorm = std::sqrt(ynorm);

  std::vector<std::vector<double>> ws, ps;
  std::vector<double> cs;
  double first_norm = 0.0;
  for (std::size_t a = 0; a < n_components; ++a) {
    std::vector<double> w(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) w[j] += z(r, j) * yr[r];
    double wn = 0.0;
    for (double v : w) wn += v * v;
    wn = std::sqrt(wn);
    if (a == 0) first_norm = wn;
    if (!(wn > 1e-10 * std::max(1.0, first_norm)) || ynorm == 0.0) break;
    for (double& v : w) v /= wn;
    std::vector<double> t(n, 0.0);
    double tt = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < m; ++j) t[r] += z(r, j) * w[j];
      tt += t[r] * t[r];
    }
    if (!(tt > 0.0)) break;
    std::vector<double> p(m, 0.0);
    double cval = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < m; ++j) p[j] += z(r, j) * t[r];
      cval += yr[r] * t[r];
    }
    for (double& v : p) v /= tt;
    cval /= tt;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < m; ++j) z(r, j) -= t[r] * p[j];
      yr[r] -= cval * t[r];
    }
    ws.push_back(std::move(w));
    ps.push_back(std::move(p));
    cs.push_back(cval);
  }
  fit.iterations = ws.size();

  std::vector<double> b(m, 0.0);
  const std::size_t a = ws.size();
  if (a > 0) {
    // B = W (P'W)^{-1} c
    Matrix pw(a, a);
    for (std::size_t u = 0; u < a; ++u)
      for (std::size_t v = 0; v < a; ++v) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += ps[u][j] * ws[v][j];
        pw(u, v) = s;
      }
    auto q = lu_solve(pw, cs);
    if (!q) throw Error("PLS loading system is singular");
    for (std::size_t v = 0; v < a; ++v)
      for (std::size_t j = 0; j < m; ++j) b[j] += ws[v][j] * (*q)[v];
  }
  detail::unstandardize(fit, b, ybar);
  return fit;
}

}  // namespace mlcm::learners
