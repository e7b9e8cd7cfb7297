#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

#include "curlyfm/datasets.hpp"
#include "curlyfm/errors.hpp"
#include "support.hpp"

using namespace curlyfm;

namespace {

double angle_of(std::span<const double> p) {
  const double a = std::atan2(p[1], p[0]);
  return a < 0 ? a + 2 * std::numbers::pi : a;
}

/// Circular mean direction and mean resultant length of the rows' polar angles.
std::pair<double, double> circular_stats(const Matrix& m) {
  double c = 0.0, s = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double a = angle_of(m.row(r));
    c += std::cos(a);
    s += std::sin(a);
  }
  return {std::atan2(s, c), std::hypot(c, s) / m.rows()};
}

std::string csv_of(const Snapshot& s) {
  std::ostringstream out;
  write_snapshot_csv(out, s);
  return out.str();
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("circles: exact radii without noise, replay, dense sides") {
  CirclesConfig cfg;
  cfg.n = 500;
  cfg.noise = 0.0;
  cfg.omega = 1.2;
  cfg.seed = 3;
  const SyntheticPair p = gen_asymmetric_circles(cfg);
  for (std::size_t r = 0; r < p.source.size(); ++r) {
    CHECK(std::abs(norm(p.source.positions.row(r)) - 1.0) < 1e-12);
    CHECK(std::abs(norm(p.target.positions.row(r)) - 2.0) < 1e-12);
  }
  CHECK(p.source.time == 0.0);
  CHECK(p.target.time == 1.0);
  CHECK(p.field.name() == "rotational");
  const SyntheticPair q = gen_asymmetric_circles(cfg);
  CHECK(q.source.positions == p.source.positions);
  CHECK(q.target.positions == p.target.positions);

  CHECK(std::abs(circular_stats(p.source.positions).first) < 0.15);
  CHECK(std::abs(circular_stats(p.target.positions).first - 1.2) < 0.15);
}

TEST_CASE("circles without skew have a uniform angular histogram") {
  CirclesConfig cfg;
  cfg.n = 10000;
  cfg.skew = 0.0;
  cfg.seed = 5;
  const SyntheticPair p = gen_asymmetric_circles(cfg);
  const std::size_t bins = 20;
  std::vector<double> count(bins, 0.0);
  for (std::size_t r = 0; r < p.source.size(); ++r)
    count[std::min(bins - 1, std::size_t(angle_of(p.source.positions.row(r)) / (2 * std::numbers::pi) * bins))] += 1;
  const double expect = double(cfg.n) / bins;
  double chi2 = 0.0;
  for (double c : count) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 36.19);  // 99th percentile of chi-square with 19 degrees of freedom
}

TEST_CASE("von Mises samples have the right mean direction and concentration") {
  Rng rng(7);
  for (double kappa : {0.5, 2.0, 8.0}) {
    const std::size_t n = 50000;
    double c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = sample_von_mises(1.0, kappa, rng);
      CHECK(a >= 0.0);
      CHECK(a < 2 * std::numbers::pi);
      c += std::cos(a);
      s += std::sin(a);
    }
    const double length = std::hypot(c, s) / n;
    const double expect = std::cyl_bessel_i(1.0, kappa) / std::cyl_bessel_i(0.0, kappa);
    CHECK(std::abs(length - expect) < 0.01);
    CHECK(std::abs(std::atan2(s, c) - 1.0) < 0.05);
  }
}

TEST_CASE("gaussian spiral: centres, field, dimensions") {
  const SyntheticPair p = gen_gaussian_spiral(3, 100000, 1);
  for (const auto& [snap, centre] : {std::pair{&p.source, -0.1}, std::pair{&p.target, 0.1}}) {
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < snap->size(); ++r) m += snap->positions(r, c);
      m /= snap->size();
      CHECK(std::abs(m - (c == 0 ? centre : 0.0)) < 3.0 / std::sqrt(double(snap->size())));
    }
  }
  const double x[] = {5.0, 1.0, 0.0};
  const auto v = p.field.eval(x, 0.0);
  CHECK(v[0] == doctest::Approx(0.2));
  CHECK(v[1] == 0.0);
  CHECK(v[2] == doctest::Approx(-std::numbers::pi));
  const SyntheticPair big = gen_gaussian_spiral(20, 10, 2);
  CHECK(big.source.dim() == 20);
  CHECK(big.field.dim() == 20);
  CHECK_THROWS_AS(gen_gaussian_spiral(2, 10, 0), ConfigError);
}

TEST_CASE("rollout: zero field, replay, periodicity, aligned rows") {
  RolloutConfig cfg;
  cfg.n = 50;
  cfg.times = {0.0, 0.5, 1.0};
  cfg.center = {1.0, 0.0};
  const MultiMarginalDataset still = rollout_dataset(ReferenceField::zero(2), 2, cfg);
  for (std::size_t k = 1; k < 3; ++k) CHECK(still.marginal(k).positions == still.marginal(0).positions);
  CHECK(still.aligned_rows());
  CHECK(still.marginal(0).has_velocities());
  for (std::size_t i = 0; i < 50; ++i) CHECK(norm(still.marginal(0).positions.row(i)) <= 1.05 + 1e-12);

  const MultiMarginalDataset a = rollout_dataset(ReferenceField::rotational(1.0), 2, cfg);
  const MultiMarginalDataset b = rollout_dataset(ReferenceField::rotational(1.0), 2, cfg);
  CHECK(a.marginal(2).positions == b.marginal(2).positions);

  RolloutConfig period = cfg;
  period.times = {0.0, 2 * std::numbers::pi};
  period.solver_dt = 1e-4;
  const MultiMarginalDataset loop = rollout_dataset(ReferenceField::rotational(1.0), 2, period);
  for (std::size_t i = 0; i < loop.marginal(0).positions.size(); ++i)
    CHECK(std::abs(loop.marginal(1).positions.values()[i] - loop.marginal(0).positions.values()[i]) < 1e-3);
}

TEST_CASE("rollout finite-difference velocities converge at first order") {
  const ReferenceField f = ReferenceField::rotational(1.0);
  const auto err = [&](double h) {
    RolloutConfig cfg;
    cfg.n = 20;
    cfg.times = {0.0, 0.3};
    cfg.center = {1.0, 0.0};
    cfg.solver_dt = 1e-6;
    cfg.fd_step = h;
    const MultiMarginalDataset d = rollout_dataset(f, 2, cfg);
    const Snapshot& s = d.marginal(1);
    const std::vector<double> t(s.size(), s.time);
    return testing::max_rel_err(*s.velocities, f.eval_batch(s.positions, t));
  };
  const double e1 = err(0.04), e2 = err(0.02), e3 = err(0.01);
  MESSAGE("fd errors " << e1 << " " << e2 << " " << e3);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("held-out marginals stay interior and hidden from training") {
  RolloutConfig cfg;
  cfg.n = 5;
  cfg.times = {0, 1, 2, 3, 4};
  cfg.held_out = {1, 3};
  const MultiMarginalDataset d = rollout_dataset(ReferenceField::rotational(1.0), 2, cfg);
  CHECK(d.training_indices() == std::vector<std::size_t>{0, 2, 4});
  const auto train = d.training_marginals();
  REQUIRE(train.size() == 3);
  CHECK(train[1].time == 2.0);
  CHECK(d.is_held_out(3));
  CHECK_FALSE(d.is_held_out(2));
  cfg.held_out = {4};
  CHECK_THROWS_AS(rollout_dataset(ReferenceField::rotational(1.0), 2, cfg), ConfigError);
  cfg.held_out = {0};
  CHECK_THROWS_AS(rollout_dataset(ReferenceField::rotational(1.0), 2, cfg), ConfigError);
}

TEST_CASE("csv round trips bitwise, with and without velocities") {
  Rng rng(9);
  Snapshot s;
  s.time = 0.375;
  s.positions = testing::random_matrix(25, 3, rng, 1e-3);
  s.positions(0, 0) = 1e300;
  s.positions(1, 1) = -0.1;
  const Snapshot back = [&] {
    std::istringstream in(csv_of(s));
    return read_snapshot_csv(in);
  }();
  CHECK(back.time == s.time);
  CHECK(back.positions == s.positions);
  CHECK_FALSE(back.has_velocities());

  s.velocities = testing::random_matrix(25, 3, rng);
  const std::string text = csv_of(s);
  CHECK(text.rfind("t,x1,x2,x3,v1,v2,v3\n", 0) == 0);
  std::istringstream in(text);
  const Snapshot withv = read_snapshot_csv(in);
  REQUIRE(withv.has_velocities());
  CHECK(*withv.velocities == *s.velocities);

  const auto dir = std::filesystem::temp_directory_path() / "curlyfm_test_csv";
  std::filesystem::create_directories(dir);
  export_csv(dir / "s.csv", s);
  CHECK(ingest_csv(dir / "s.csv").positions == s.positions);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv errors cite the offending line") {
  std::string text = "t,x1,x2\n";
  for (int i = 2; i <= 20; ++i) text += i == 17 ? "0,1.5,1.2.3\n" : "0,1.5,2\n";
  std::istringstream in(text);
  try {
    read_snapshot_csv(in);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 17);
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
  }
  const auto fails_at = [](const std::string& s) {
    std::istringstream is(s);
    try {
      read_snapshot_csv(is);
    } catch (const DataError& e) {
      return e.line();
    }
    return std::size_t(999);
  };
  CHECK(fails_at("x1,t\n0,1\n") == 1);
  CHECK(fails_at("t,x1,v2\n0,1,1\n") == 1);
  CHECK(fails_at("t,x1\n0,1\n0,2,3\n") == 3);
  CHECK(fails_at("t,x1\n0,1\n0,nan\n") == 3);
  CHECK(fails_at("t,x1\n0,1\n1,2\n") == 3);
  CHECK(fails_at("t,x1\n0, 1\n") == 2);
  CHECK(fails_at("") == 1);
}

TEST_CASE("multi-marginal csv groups rows by time") {
  Rng rng(10);
  std::vector<Snapshot> ms(3);
  for (std::size_t k = 0; k < 3; ++k) {
    ms[k].time = 0.5 * k;
    ms[k].positions = testing::random_matrix(4 + k, 2, rng);
  }
  const auto dir = std::filesystem::temp_directory_path() / "curlyfm_test_mm";
  std::filesystem::create_directories(dir);
  export_marginals_csv(dir / "m.csv", ms);
  const auto back = ingest_marginals_csv(dir / "m.csv");
  std::filesystem::remove_all(dir);
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].time == ms[k].time);
    CHECK(back[k].positions == ms[k].positions);
  }
  std::istringstream bad("t,x1\n1,0\n0,0\n");
  CHECK_THROWS_AS(read_marginals_csv(bad), DataError);
}

TEST_CASE("split: counts, replay, disjoint and exhaustive tags") {
  Snapshot s;
  s.positions = Matrix(10, 1);
  for (std::size_t i = 0; i < 10; ++i) s.positions(i, 0) = double(i);
  const SplitResult r = split(s, {0.8, 0.1, 0.1}, 4);
  CHECK(r.counts == std::vector<std::size_t>{8, 1, 1});
  CHECK_FALSE(r.has_empty_split);
  CHECK(r.snapshot.tags == split(s, {0.8, 0.1, 0.1}, 4).snapshot.tags);
  std::set<std::size_t> seen;
  for (SplitTag t : {SplitTag::Train, SplitTag::Val, SplitTag::Test})
    for (std::size_t i : r.snapshot.rows_with(t)) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 10);
  CHECK(r.snapshot.subset(SplitTag::Train).size() == 8);

  CHECK(split(s, {0.8, 0.2}, 1).counts == std::vector<std::size_t>{8, 2});
  Snapshot tiny;
  tiny.positions = Matrix(3, 1);
  CHECK(split(tiny, {0.8, 0.1, 0.1}, 0).has_empty_split);
  CHECK_THROWS_AS(split(s, {0.5, 0.4}, 0), ConfigError);
}

}  // TEST_SUITE
