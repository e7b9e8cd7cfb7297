#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "curlyfm/matrix.hpp"
#include "curlyfm/rng.hpp"

namespace testing {

inline curlyfm::Matrix random_matrix(std::size_t r, std::size_t c, curlyfm::Rng& rng, double scale = 1.0) {
  curlyfm::Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline std::vector<double> random_times(std::size_t n, curlyfm::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> t(n);
  for (double& v : t) v = rng.uniform(lo, hi);
  return t;
}

/// max_i |a_i - b_i| / max_i |b_i|: normwise relative error against reference b.
inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0.0 ? num / den : num;
}

inline double max_rel_err(const curlyfm::Matrix& a, const curlyfm::Matrix& b) {
  return max_rel_err(a.values(), b.values());
}

/// Central differences of a scalar function of a parameter vector.
inline std::vector<double> fd_gradient(std::vector<double> p, const std::function<double(const std::vector<double>&)>& f,
                                       double h = 1e-4) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace testing
