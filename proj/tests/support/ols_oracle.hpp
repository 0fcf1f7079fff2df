#pragma once

// Reference least-squares fits for the Granger tests: explicit normal
// equations solved by Gaussian elimination with partial pivoting.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

struct Fit {
  std::vector<double> beta;
  double sigma2 = 0.0;
  double aic = 0.0;
};

inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw std::runtime_error("oracle: singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

// covariate may be empty for the own-lags model
inline Fit ar_fit(const std::vector<double>& y, const std::vector<double>& c, std::size_t lag, double ridge = 1e-8) {
  const std::size_t p = 1 + lag * (c.empty() ? 1 : 2);
  const std::size_t n = y.size() - lag;
  std::vector<std::vector<double>> rows;
  for (std::size_t t = lag; t < y.size(); ++t) {
    std::vector<double> row{1.0};
    for (std::size_t k = 1; k <= lag; ++k) row.push_back(y[t - k]);
    if (!c.empty())
      for (std::size_t k = 1; k <= lag; ++k) row.push_back(c[t - k]);
    rows.push_back(std::move(row));
  }
  std::vector<std::vector<double>> g(p, std::vector<double>(p, 0.0));
  std::vector<double> rhs(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      rhs[i] += rows[r][i] * y[r + lag];
      for (std::size_t j = 0; j < p; ++j) g[i][j] += rows[r][i] * rows[r][j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) g[i][i] += ridge;
  Fit f;
  f.beta = solve(g, rhs);
  double rss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double pred = 0.0;
    for (std::size_t i = 0; i < p; ++i) pred += rows[r][i] * f.beta[i];
    rss += (y[r + lag] - pred) * (y[r + lag] - pred);
  }
  f.sigma2 = std::max(rss / static_cast<double>(n), 1e-12);
  f.aic = static_cast<double>(n) * std::log(f.sigma2) + 2.0 * static_cast<double>(p);
  return f;
}

inline std::size_t best_lag(const std::vector<double>& y, const std::vector<double>& c, std::size_t l_max) {
  std::size_t best = 0;
  double best_aic = std::numeric_limits<double>::infinity();
  for (std::size_t l = 1; l <= l_max; ++l) {
    const double a = ar_fit(y, c, l).aic;
    if (a < best_aic) {
      best_aic = a;
      best = l;
    }
  }
  return best;
}

}  // namespace oracle
