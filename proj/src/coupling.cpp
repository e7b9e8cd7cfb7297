#include "curlyfm/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "curlyfm/errors.hpp"
#include "curlyfm/kernels.hpp"

namespace curlyfm {

namespace {

constexpr std::size_t kPairChunk = 512;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_cost(const Matrix& c) {
  if (c.rows() == 0 || c.cols() == 0) throw ContractError("empty cost matrix");
  for (double v : c.values())
    if (!std::isfinite(v)) throw ContractError("cost matrix has non-finite entries");
}

// Shortest augmenting path Hungarian algorithm (rows assigned one at a time).
// Returns the assignment and the final dual potentials.
struct HungarianResult {
  std::vector<std::size_t> perm;
  std::vector<double> u, v;
};

HungarianResult hungarian(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult r;
  r.perm.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) r.perm[p[j] - 1] = j - 1;
  r.u.assign(u.begin() + 1, u.end());
  r.v.assign(v.begin() + 1, v.end());
  return r;
}

// Every optimal permutation uses only edges that are tight under optimal
// duals. Walk rows in order and move each row to its smallest tight column
// that still admits a perfect tight matching of the remaining rows.
class TightMatching {
 public:
  TightMatching(const Matrix& a, const HungarianResult& h, double tol) : n_(a.rows()) {
    tight_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (a(i, j) - h.u[i] - h.v[j] <= tol) tight_[i].push_back(j);
    row_to_col_ = h.perm;
    col_to_row_.assign(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) col_to_row_[row_to_col_[i]] = i;
  }

  std::vector<std::size_t> lexicographic() {
    fixed_row_.assign(n_, 0);
    fixed_col_.assign(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j : tight_[i]) {
        if (fixed_col_[j]) continue;
        if (j == row_to_col_[i]) break;
        if (reroute(i, j)) break;
      }
      fixed_row_[i] = 1;
      fixed_col_[row_to_col_[i]] = 1;
    }
    return row_to_col_;
  }

 private:
  // Give column j to row i; the displaced row must reach i's old column
  // through an alternating path over unfixed rows.
  bool reroute(std::size_t i, std::size_t j) {
    const std::size_t freed = row_to_col_[i];
    const std::size_t displaced = col_to_row_[j];
    visited_.assign(n_, 0);
    visited_[j] = 1;
    fixed_row_[i] = 1;
    path_.clear();
    const bool ok = augment(displaced, freed);
    fixed_row_[i] = 0;
    if (!ok) return false;
    // path_ holds (row, new column) moves.
    for (auto [r, c] : path_) {
      row_to_col_[r] = c;
      col_to_row_[c] = r;
    }
    row_to_col_[i] = j;
    col_to_row_[j] = i;
    return true;
  }

  bool augment(std::size_t row, std::size_t target) {
    for (std::size_t c : tight_[row]) {
      if (visited_[c] || fixed_col_[c]) continue;
      visited_[c] = 1;
      if (c == target || (!fixed_row_[col_to_row_[c]] && augment(col_to_row_[c], target))) {
        path_.emplace_back(row, c);
        return true;
      }
    }
    return false;
  }

  std::size_t n_;
  std::vector<std::vector<std::size_t>> tight_;
  std::vector<std::size_t> row_to_col_, col_to_row_;
  std::vector<char> fixed_row_, fixed_col_, visited_;
  std::vector<std::pair<std::size_t, std::size_t>> path_;
};

double log_sum_exp(const std::vector<double>& x) {
  double m = -kInf;
  for (double v : x) m = std::max(m, v);
  if (m == -kInf) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

TimeSampling time_sampling_from_string(const std::string& name) {
  if (name == "uniform") return TimeSampling::Uniform;
  if (name == "equispaced") return TimeSampling::Equispaced;
  throw ConfigError("unknown time sampling '" + name + "'");
}

std::vector<double> cost_times(std::size_t K, TimeSampling sampling, std::uint64_t seed) {
  if (K == 0) throw ConfigError("cost estimator needs K >= 1");
  std::vector<double> t(K);
  if (sampling == TimeSampling::Equispaced) {
    for (std::size_t k = 0; k < K; ++k) t[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(K);
  } else {
    Rng rng(seed);
    for (double& v : t) v = rng.uniform();
  }
  return t;
}

CostMatrix cost_matrix(const PathInterpolant& interp, const ReferenceField& field, const Matrix& batch0,
                       const Matrix& batch1, std::size_t K, TimeSampling sampling, std::uint64_t seed,
                       std::size_t segment) {
  if (batch0.rows() == 0 || batch1.rows() == 0) throw ContractError("cost matrix needs nonempty batches");
  if (field.dim() != interp.dim()) throw DimensionError("field and interpolant dimensions differ");
  const std::vector<double> times = cost_times(K, sampling, seed);
  const std::size_t n = batch0.rows(), m = batch1.rows(), d = interp.dim();
  const std::size_t pairs = n * m;
  CostMatrix out{Matrix(n, m), K, sampling};
  // Running mean over the K draws: a constant integrand comes out exactly.
  for (std::size_t kk = 0; kk < times.size(); ++kk) {
    const double tk = times[kk];
    const double tg = global_time(interp, segment, tk);
    for (std::size_t begin = 0; begin < pairs; begin += kPairChunk) {
      const std::size_t len = std::min(kPairChunk, pairs - begin);
      Matrix a(len, d), b(len, d);
      for (std::size_t q = 0; q < len; ++q) {
        const std::size_t i = (begin + q) / m, j = (begin + q) % m;
        std::copy_n(batch0.row(i).data(), d, a.row(q).data());
        std::copy_n(batch1.row(j).data(), d, b.row(q).data());
      }
      const std::vector<double> tl(len, tk), tgv(len, tg);
      const PathBatch path = evaluate_paths(interp, a, b, tl, segment);
      const Matrix f = field.eval_batch(path.mu, tgv);
      for (std::size_t q = 0; q < len; ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double r = path.mu_dot(q, k) - f(q, k);
          s += r * r;
        }
        double& acc = out.values.data()[begin + q];
        acc += (s - acc) / static_cast<double>(kk + 1);
      }
    }
  }
  return out;
}

double path_cost(const PathInterpolant& interp, const ReferenceField& field, std::span<const double> x0,
                 std::span<const double> x1, std::size_t K, TimeSampling sampling, std::uint64_t seed,
                 std::size_t segment) {
  const Matrix a(1, x0.size(), {x0.begin(), x0.end()});
  const Matrix b(1, x1.size(), {x1.begin(), x1.end()});
  return cost_matrix(interp, field, a, b, K, sampling, seed, segment).values(0, 0);
}

CostMatrix squared_euclidean_cost(const Matrix& batch0, const Matrix& batch1) {
  return {kernels::pairwise_sqdist(batch0, batch1), 1, TimeSampling::Uniform};
}

CouplingMode coupling_mode_from_string(const std::string& name) {
  if (name == "exact") return CouplingMode::ExactAssignment;
  if (name == "sinkhorn") return CouplingMode::Sinkhorn;
  if (name == "independent") return CouplingMode::Independent;
  throw ConfigError("unknown coupling mode '" + name + "'");
}

std::string to_string(CouplingMode mode) {
  switch (mode) {
    case CouplingMode::ExactAssignment: return "exact";
    case CouplingMode::Sinkhorn: return "sinkhorn";
    case CouplingMode::Independent: return "independent";
  }
  return "?";
}

std::vector<std::size_t> Coupling::permutation() const {
  std::vector<std::size_t> perm(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) perm[i] = pairs[i].second;
  return perm;
}

double assignment_cost(const Matrix& cost, std::span<const std::size_t> perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += cost(i, perm[i]);
  return total;
}

Coupling solve_assignment(const Matrix& cost) {
  check_cost(cost);
  if (cost.rows() != cost.cols())
    throw ContractError("exact assignment needs a square cost matrix; use sinkhorn for unbalanced batches");
  const HungarianResult h = hungarian(cost);
  double scale = 0.0;
  for (double v : cost.values()) scale = std::max(scale, std::abs(v));
  const double tol = 1e-10 * (1.0 + scale) * static_cast<double>(cost.rows());
  std::vector<std::size_t> perm = h.perm;
  const double base = assignment_cost(cost, perm);
  std::vector<std::size_t> lex = TightMatching(cost, h, tol).lexicographic();
  if (lex != perm && assignment_cost(cost, lex) <= base) perm = std::move(lex);

  Coupling c;
  c.mode = CouplingMode::ExactAssignment;
  for (std::size_t i = 0; i < perm.size(); ++i) c.pairs.emplace_back(i, perm[i]);
  c.total_cost = assignment_cost(cost, perm);
  return c;
}

Coupling solve_assignment(const CostMatrix& cost) { return solve_assignment(cost.values); }

Coupling solve_sinkhorn(const Matrix& cost, double reg, double tol, std::size_t max_iter) {
  check_cost(cost);
  if (!(reg > 0.0)) throw ConfigError("sinkhorn regularization must be positive");
  const std::size_t n = cost.rows(), m = cost.cols();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  std::vector<double> f(n, 0.0), g(m, 0.0), buf;
  Coupling c;
  c.mode = CouplingMode::Sinkhorn;
  c.converged = false;
  auto row_violation = [&]() {
    double viol = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp((f[i] + g[j] - cost(i, j)) / reg);
      viol += std::abs(s - std::exp(log_a));
    }
    return viol;
  };
  for (std::size_t it = 1; it <= max_iter; ++it) {
    buf.resize(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost(i, j)) / reg;
      f[i] = reg * (log_a - log_sum_exp(buf));
    }
    buf.resize(n);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / reg;
      g[j] = reg * (log_b - log_sum_exp(buf));
    }
    c.iterations = it;
    c.marginal_violation = row_violation();
    if (c.marginal_violation < tol) {
      c.converged = true;
      break;
    }
  }
  c.plan = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      c.plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / reg);
      c.total_cost += c.plan(i, j) * cost(i, j);
    }
  return c;
}

Coupling solve_sinkhorn(const CostMatrix& cost, double reg, double tol, std::size_t max_iter) {
  return solve_sinkhorn(cost.values, reg, tol, max_iter);
}

Coupling independent_coupling(const Matrix& batch0, const Matrix& batch1, const CostMatrix* cost) {
  if (batch0.rows() != batch1.rows()) throw DimensionError("independent coupling needs equal batch sizes");
  Coupling c;
  c.mode = CouplingMode::Independent;
  for (std::size_t i = 0; i < batch0.rows(); ++i) c.pairs.emplace_back(i, i);
  if (cost)
    for (std::size_t i = 0; i < batch0.rows(); ++i) c.total_cost += cost->values(i, i);
  return c;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_plan(const Coupling& coupling, std::size_t n, Rng& rng) {
  if (coupling.plan.empty()) throw ContractError("sample_plan needs a dense plan");
  const auto& w = coupling.plan.values();
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  std::vector<std::pair<std::size_t, std::size_t>> out(n);
  for (auto& p : out) {
    const std::size_t k = dist(rng.engine());
    p = {k / coupling.plan.cols(), k % coupling.plan.cols()};
  }
  return out;
}

}  // namespace curlyfm
