#include "curlyfm/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <tuple>

#include "curlyfm/coupling.hpp"
#include "curlyfm/errors.hpp"
#include "curlyfm/kernels.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

constexpr double kNormFloor = 1e-9;

Matrix subsample(const Matrix& m, std::size_t n, Rng& rng) {
  if (m.rows() == n) return m;
  std::vector<std::size_t> idx(m.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return m.select_rows(idx);
}

Matrix transport_cost(const Matrix& a, const Matrix& b, const TransportOptions& options) {
  if (a.empty() || b.empty()) throw DataError("transport distance between empty sets");
  if (a.cols() != b.cols()) throw DimensionError("transport distance between sets of different dimension");
  std::size_t n = std::min(a.rows(), b.rows());
  if (options.max_points > 0) n = std::min(n, options.max_points);
  Rng rng(derive_seed(options.seed, {0x773264}));
  const Matrix sa = subsample(a, n, rng);
  const Matrix sb = subsample(b, n, rng);
  return kernels::pairwise_sqdist(sa, sb);
}

void check_aligned(const Matrix& v, const Matrix& f) {
  if (!v.same_shape(f)) throw DimensionError("velocity sets are not index-aligned");
}

template <class PerRow>
AlongResult along(const BridgeModel& model, const ReferenceField& field, const Trajectory& traj, PerRow per_row) {
  if (traj.states.size() < 2) throw DataError("trajectory has no steps");
  AlongResult total;
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const Matrix& x = traj.states[k];
    const std::vector<double> t(x.rows(), traj.times[k]);
    const Matrix v = k < traj.velocities.size() ? traj.velocities[k] : mlp_forward(model.drift, x, t);
    const Matrix f = field.eval_batch(x, t);
    const AlongResult part = per_row(v, f);
    sum += part.value * static_cast<double>(part.pairs);
    total.pairs += part.pairs;
    total.skipped += part.skipped;
  }
  if (total.pairs > 0) total.value = sum / static_cast<double>(total.pairs);
  return total;
}

void put(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

double wasserstein2(const Matrix& a, const Matrix& b, const TransportOptions& options) {
  const Matrix cost = transport_cost(a, b, options);
  const Coupling c = solve_assignment(cost);
  return std::sqrt(std::max(0.0, c.total_cost / static_cast<double>(cost.rows())));
}

double emd(const Matrix& a, const Matrix& b, const TransportOptions& options) {
  Matrix cost = transport_cost(a, b, options);
  for (double& v : cost.values()) v = std::sqrt(v);
  const Coupling c = solve_assignment(cost);
  return std::max(0.0, c.total_cost / static_cast<double>(cost.rows()));
}

double median_heuristic(const Matrix& a, const Matrix& b) {
  const Matrix* parts[] = {&a, &b};
  const Matrix pooled = vconcat(parts);
  const Matrix d2 = kernels::pairwise_sqdist(pooled, pooled);
  std::vector<double> dists;
  dists.reserve(pooled.rows() * (pooled.rows() - 1) / 2);
  for (std::size_t i = 0; i < pooled.rows(); ++i)
    for (std::size_t j = i + 1; j < pooled.rows(); ++j) dists.push_back(std::sqrt(d2(i, j)));
  if (dists.empty()) throw DataError("median heuristic needs at least two points");
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double med = *mid;
  if (dists.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dists.begin(), mid));
  return med;
}

MmdResult mmd(const Matrix& a, const Matrix& b, std::optional<double> bandwidth) {
  if (a.rows() < 2 || b.rows() < 2) throw DataError("unbiased MMD needs at least two samples per set");
  if (a.cols() != b.cols()) throw DimensionError("MMD between sets of different dimension");
  MmdResult r;
  r.bandwidth = bandwidth ? *bandwidth : median_heuristic(a, b);
  if (!(r.bandwidth > 0.0)) throw ConfigError("MMD bandwidth must be positive");
  const double scale = -1.0 / (2.0 * r.bandwidth * r.bandwidth);
  const auto mean_kernel = [&](const Matrix& x, const Matrix& y, bool skip_diagonal) {
    const Matrix d2 = kernels::pairwise_sqdist(x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < d2.rows(); ++i)
      for (std::size_t j = 0; j < d2.cols(); ++j)
        if (!skip_diagonal || i != j) s += std::exp(scale * d2(i, j));
    const double count = skip_diagonal ? static_cast<double>(d2.rows() * (d2.rows() - 1))
                                       : static_cast<double>(d2.rows() * d2.cols());
    return s / count;
  };
  r.raw = mean_kernel(a, a, true) + mean_kernel(b, b, true) - 2.0 * mean_kernel(a, b, false);
  r.reported = std::max(r.raw, 0.0);
  return r;
}

AlongResult cosine_distance(const Matrix& v, const Matrix& f) {
  check_aligned(v, f);
  AlongResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double nv = norm(v.row(i)), nf = norm(f.row(i));
    if (nv < kNormFloor || nf < kNormFloor) {
      ++r.skipped;
      continue;
    }
    sum += 1.0 - std::clamp(dot(v.row(i), f.row(i)) / (nv * nf), -1.0, 1.0);
    ++r.pairs;
  }
  if (r.pairs > 0) r.value = sum / static_cast<double>(r.pairs);
  return r;
}

AlongResult l2_cost(const Matrix& v, const Matrix& f, bool squared) {
  check_aligned(v, f);
  AlongResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double d2 = squared_distance(v.row(i), f.row(i));
    sum += squared ? d2 : std::sqrt(d2);
  }
  r.pairs = v.rows();
  if (r.pairs > 0) r.value = sum / static_cast<double>(r.pairs);
  return r;
}

AlongResult cosine_distance_along(const BridgeModel& model, const ReferenceField& field, const Trajectory& traj) {
  return along(model, field, traj, [](const Matrix& v, const Matrix& f) { return cosine_distance(v, f); });
}

AlongResult l2_cost_along(const BridgeModel& model, const ReferenceField& field, const Trajectory& traj,
                          bool squared) {
  return along(model, field, traj, [squared](const Matrix& v, const Matrix& f) { return l2_cost(v, f, squared); });
}

double mse_known_coupling(const Matrix& predicted, const Matrix& truth) {
  if (!predicted.same_shape(truth)) throw DimensionError("predictions and ground truth differ in shape");
  if (predicted.empty()) throw DataError("no particles to compare");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.rows(); ++i) sum += squared_distance(predicted.row(i), truth.row(i));
  return sum / static_cast<double>(predicted.rows());
}

double precision_at_k(const Matrix& predicted, const Matrix& truth, std::size_t k) {
  if (!predicted.same_shape(truth)) throw DimensionError("predictions and ground truth differ in shape");
  if (k == 0) throw ConfigError("precision@k needs k >= 1");
  if (k > truth.rows()) throw ConfigError("precision@k: k exceeds the number of particles");
  const Matrix d2 = kernels::pairwise_sqdist(predicted, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d2.rows(); ++i) {
    const double own = d2(i, i);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < d2.cols() && ahead < k; ++j)
      if (d2(i, j) < own || (d2(i, j) == own && j < i)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d2.rows());
}

std::vector<MetricSummary> summarize(const std::vector<MetricRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::size_t, std::string>;
  std::map<Key, std::vector<const MetricRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    Key key{r.method, r.dataset, r.marginal, r.metric};
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<MetricSummary> out;
  for (const auto& key : order) {
    const auto& rows = groups.at(key);
    MetricSummary s{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), 0.0, 0.0, {}};
    for (const auto* r : rows) {
      s.mean += r->value;
      s.seeds.push_back(r->seed);
    }
    s.mean /= static_cast<double>(rows.size());
    if (rows.size() > 1) {
      double ss = 0.0;
      for (const auto* r : rows) ss += (r->value - s.mean) * (r->value - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(rows.size() - 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_metric_records_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
  out << "method,dataset,marginal,metric,seed,value\n";
  for (const auto& r : records) {
    out << r.method << ',' << r.dataset << ',' << r.marginal << ',' << r.metric << ',' << r.seed << ',';
    put(out, r.value);
    out << '\n';
  }
}

void write_metric_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summary) {
  out << "method,dataset,marginal,metric,mean,std,n_seeds\n";
  for (const auto& s : summary) {
    out << s.method << ',' << s.dataset << ',' << s.marginal << ',' << s.metric << ',';
    put(out, s.mean);
    out << ',';
    put(out, s.std);
    out << ',' << s.seeds.size() << '\n';
  }
}

}  // namespace curlyfm
