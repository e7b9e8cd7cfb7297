#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "curlyfm/coupling.hpp"
#include "curlyfm/errors.hpp"
#include "curlyfm/kernels.hpp"
#include "curlyfm/metrics.hpp"
#include "support.hpp"

using namespace curlyfm;
using testing::random_matrix;

namespace {

double brute_min_mean(const Matrix& cost) {
  std::vector<std::size_t> p(cost.rows());
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do best = std::min(best, assignment_cost(cost, p));
  while (std::next_permutation(p.begin(), p.end()));
  return best / static_cast<double>(cost.rows());
}

double naive_mmd(const Matrix& a, const Matrix& b, double h) {
  const auto k = [h](std::span<const double> x, std::span<const double> y) {
    return std::exp(-squared_distance(x, y) / (2 * h * h));
  };
  const double n = a.rows(), m = b.rows();
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.rows(); ++j)
      if (i != j) aa += k(a.row(i), a.row(j));
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      if (i != j) bb += k(b.row(i), b.row(j));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) ab += k(a.row(i), b.row(j));
  return aa / (n * (n - 1)) + bb / (m * (m - 1)) - 2 * ab / (n * m);
}

double naive_precision(const Matrix& pred, const Matrix& truth, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < truth.rows(); ++j) order.push_back({squared_distance(pred.row(i), truth.row(j)), j});
    std::sort(order.begin(), order.end());
    for (std::size_t q = 0; q < k; ++q)
      if (order[q].second == i) ++hits;
  }
  return double(hits) / pred.rows();
}

Matrix shifted(Matrix m, double dx) {
  for (std::size_t r = 0; r < m.rows(); ++r) m(r, 0) += dx;
  return m;
}

Trajectory two_step(const Matrix& x) {
  Trajectory t;
  t.times = {0.0, 0.5, 1.0};
  t.states = {x, x, x};
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("transport distances: identity, singletons, brute force") {
  Rng rng(1);
  const Matrix a = random_matrix(9, 2, rng);
  CHECK(wasserstein2(a, a) == 0.0);
  CHECK(emd(a, a) == 0.0);
  const Matrix z = Matrix::from_rows({{0.0}}), three = Matrix::from_rows({{3.0}});
  CHECK(wasserstein2(z, three) == 3.0);
  CHECK(emd(z, three) == 3.0);

  for (int draw = 0; draw < 30; ++draw) {
    const std::size_t n = 2 + draw % 5;
    const Matrix x = random_matrix(n, 3, rng), y = random_matrix(n, 3, rng);
    Matrix sq = kernels::pairwise_sqdist(x, y), eu = sq;
    for (double& v : eu.values()) v = std::sqrt(v);
    CHECK(wasserstein2(x, y) == std::sqrt(brute_min_mean(sq)));
    CHECK(emd(x, y) == brute_min_mean(eu));
  }
  CHECK_THROWS_AS(wasserstein2(Matrix(), a), DataError);
}

TEST_CASE("transport distances are symmetric and satisfy the triangle inequality") {
  Rng rng(2);
  for (int draw = 0; draw < 30; ++draw) {
    const Matrix x = random_matrix(12, 2, rng), y = random_matrix(12, 2, rng), z = random_matrix(12, 2, rng);
    CHECK(std::abs(wasserstein2(x, y) - wasserstein2(y, x)) < 1e-12);
    CHECK(std::abs(emd(x, y) - emd(y, x)) < 1e-12);
    CHECK(wasserstein2(x, z) <= wasserstein2(x, y) + wasserstein2(y, z) + 1e-9);
    CHECK(emd(x, z) <= emd(x, y) + emd(y, z) + 1e-9);
    CHECK(wasserstein2(x, y) > 0.0);
  }
  // Permuted rows are the same multiset.
  const Matrix x = random_matrix(7, 2, rng);
  CHECK(wasserstein2(x, x.select_rows(std::vector<std::size_t>{3, 1, 0, 6, 5, 2, 4})) == 0.0);
}

TEST_CASE("transport distances subsample unequal sets reproducibly") {
  Rng rng(3);
  const Matrix a = random_matrix(30, 2, rng), b = random_matrix(50, 2, rng);
  CHECK(wasserstein2(a, b, {4, 0}) == wasserstein2(a, b, {4, 0}));
  CHECK(wasserstein2(a, b, {4, 10}) == wasserstein2(a, b, {4, 10}));
  CHECK(wasserstein2(a, b, {4, 10}) != wasserstein2(a, b, {5, 10}));
}

TEST_CASE("mmd: identical sets, direct double loop, separation") {
  Rng rng(4);
  const Matrix a = random_matrix(20, 2, rng), b = random_matrix(20, 2, rng);
  const MmdResult same = mmd(a, a);
  CHECK(same.raw <= 0.0);
  CHECK(same.reported == 0.0);
  for (double h : {0.3, 1.0, 4.0}) CHECK(std::abs(mmd(a, b, h).raw - naive_mmd(a, b, h)) < 1e-12);
  const MmdResult med = mmd(a, b);
  CHECK(med.bandwidth == doctest::Approx(median_heuristic(a, b)));
  CHECK(std::abs(med.raw - naive_mmd(a, b, med.bandwidth)) < 1e-12);

  double prev = -INFINITY;
  for (double sep : {0.0, 0.5, 1.0, 2.0, 4.0, 16.0}) {
    const double v = mmd(a, shifted(b, sep), 0.5).raw;
    CHECK(v > prev);
    prev = v;
  }
  const double plateau = naive_mmd(a, shifted(b, 1e3), 0.5);
  CHECK(std::abs(mmd(a, shifted(b, 1e3), 0.5).raw - plateau) < 1e-12);
  CHECK_THROWS_AS(mmd(a.select_rows(std::vector<std::size_t>{0}), b, 1.0), DataError);
  CHECK_THROWS_AS(mmd(a, b, 0.0), ConfigError);
}

TEST_CASE("median heuristic averages the two middle pooled distances") {
  // pooled {0, 1, 3}: distances 1, 3, 2 -> median 2
  CHECK(median_heuristic(Matrix::from_rows({{0.0}, {1.0}}), Matrix::from_rows({{3.0}})) == 2.0);
  // pooled {0, 1, 3, 7}: distances 1, 3, 7, 2, 6, 4 -> (3 + 4) / 2
  CHECK(median_heuristic(Matrix::from_rows({{0.0}, {1.0}}), Matrix::from_rows({{3.0}, {7.0}})) == 3.5);
}

TEST_CASE("mmd between samples of one distribution shrinks with sample size") {
  Rng rng(5);
  double prev = INFINITY;
  for (std::size_t n : {50u, 200u, 800u}) {
    std::vector<double> v;
    for (int trial = 0; trial < 20; ++trial)
      v.push_back(std::abs(mmd(random_matrix(n, 2, rng), random_matrix(n, 2, rng), 1.0).raw));
    std::nth_element(v.begin(), v.begin() + 10, v.end());
    CHECK(v[10] < prev);
    prev = v[10];
  }
}

TEST_CASE("cosine distance: aligned, opposite, orthogonal, degenerate") {
  Rng rng(6);
  const Matrix f = random_matrix(10, 3, rng);
  Matrix neg = f;
  for (double& v : neg.values()) v = -v;
  CHECK(cosine_distance(f, f).value == doctest::Approx(0.0));
  CHECK(cosine_distance(neg, f).value == doctest::Approx(2.0));
  const Matrix a = Matrix::from_rows({{1, 0}, {0, 2}, {3, 3}}), b = Matrix::from_rows({{0, 5}, {-1, 0}, {3, -3}});
  CHECK(cosine_distance(a, b).value == doctest::Approx(1.0));
  const AlongResult deg = cosine_distance(Matrix::from_rows({{0, 0}, {1, 0}}), Matrix::from_rows({{1, 0}, {1, 0}}));
  CHECK(deg.pairs == 1);
  CHECK(deg.skipped == 1);
  CHECK_FALSE(cosine_distance(Matrix(2, 2), Matrix(2, 2)).defined());
}

TEST_CASE("metrics along trajectories use the learned drift at every step but the last") {
  // v(x) = (1, 0), reference rotation at states (0, 1) and (1, 1): f = (-1, 0) and (-1, 1).
  Mlp net({3, 2}, Activation::Silu);
  net.layers()[0].bias = Matrix::from_rows({{1, 0}});
  const BridgeModel model{net, std::nullopt, 0.0, true};
  const ReferenceField f = ReferenceField::rotational(1.0);
  const Trajectory tr = two_step(Matrix::from_rows({{0, 1}, {1, 1}}));
  const AlongResult c = cosine_distance_along(model, f, tr);
  CHECK(c.pairs == 4);
  CHECK(c.value == doctest::Approx((2.0 + (1.0 + 1.0 / std::sqrt(2.0))) / 2.0));
  // squared residuals: |(2, 0)|^2 = 4 and |(2, -1)|^2 = 5
  const AlongResult l2 = l2_cost_along(model, f, tr);
  CHECK(l2.value == doctest::Approx(4.5));
  CHECK(l2_cost_along(model, f, tr, false).value == doctest::Approx((2.0 + std::sqrt(5.0)) / 2.0));

  Trajectory rec = tr;
  rec.velocities = {Matrix::from_rows({{-1, 0}, {-1, 1}}), Matrix::from_rows({{-1, 0}, {-1, 1}})};
  CHECK(cosine_distance_along(model, f, rec).value == doctest::Approx(0.0));
  CHECK(l2_cost_along(model, f, rec).value == 0.0);
}

TEST_CASE("l2 cost: offset field") {
  Rng rng(7);
  const Matrix f = random_matrix(6, 2, rng);
  Matrix v = f;
  for (std::size_t r = 0; r < 6; ++r) {
    v(r, 0) += 0.6;
    v(r, 1) -= 0.8;
  }
  CHECK(l2_cost(v, f).value == doctest::Approx(1.0));
  CHECK(l2_cost(f, f).value == 0.0);
}

TEST_CASE("mse under a known coupling") {
  Rng rng(8);
  const Matrix t = random_matrix(15, 3, rng);
  CHECK(mse_known_coupling(t, t) == 0.0);
  CHECK(mse_known_coupling(shifted(t, 2.0), t) == doctest::Approx(4.0));
  const Matrix p = random_matrix(15, 3, rng);
  double naive = 0.0;
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t c = 0; c < 3; ++c) naive += (p(i, c) - t(i, c)) * (p(i, c) - t(i, c));
  CHECK(mse_known_coupling(p, t) == doctest::Approx(naive / 15).epsilon(1e-14));
  CHECK_THROWS_AS(mse_known_coupling(p, random_matrix(14, 3, rng)), DimensionError);
}

TEST_CASE("precision at k") {
  Rng rng(9);
  const Matrix t = random_matrix(30, 2, rng);
  for (std::size_t k : {1u, 3u, 30u}) CHECK(precision_at_k(t, t, k) == 1.0);
  // prediction 0 lands exactly on particle 1
  Matrix p = t;
  p.row(0)[0] = t(1, 0);
  p.row(0)[1] = t(1, 1);
  CHECK(precision_at_k(p, t, 1) == doctest::Approx(29.0 / 30.0));

  const Matrix noisy = [&] {
    Matrix m = t;
    for (double& v : m.values()) v += 0.4 * rng.normal();
    return m;
  }();
  double prev = 0.0;
  for (std::size_t k = 1; k <= 30; ++k) {
    const double v = precision_at_k(noisy, t, k);
    CHECK(v == naive_precision(noisy, t, k));
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
  }
  CHECK_THROWS_AS(precision_at_k(t, t, 31), ConfigError);
  // ties go to the lower index: both truth points sit at the same place
  const Matrix twin = Matrix::from_rows({{0.0}, {0.0}});
  CHECK(precision_at_k(twin, twin, 1) == 0.5);
}

TEST_CASE("summaries and csv output") {
  std::vector<MetricRecord> recs{{"curly", "spiral", 1, "w2", 0, 1.0}, {"curly", "spiral", 1, "w2", 1, 3.0},
                                 {"otcfm", "spiral", 1, "w2", 0, 5.0}, {"curly", "spiral", 1, "w2", 2, 2.0}};
  const auto s = summarize(recs);
  REQUIRE(s.size() == 2);
  CHECK(s[0].method == "curly");
  CHECK(s[0].mean == 2.0);
  CHECK(s[0].std == doctest::Approx(1.0));
  CHECK(s[0].seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(s[1].std == 0.0);
  std::ostringstream a;
  write_metric_records_csv(a, recs);
  CHECK(a.str().rfind("method,dataset,marginal,metric,seed,value\ncurly,spiral,1,w2,0,1\n", 0) == 0);
  std::ostringstream b;
  write_metric_summary_csv(b, s);
  CHECK(b.str().find("otcfm,spiral,1,w2") != std::string::npos);
}

}  // TEST_SUITE
