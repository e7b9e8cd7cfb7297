#include "curlyfm/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "curlyfm/errors.hpp"

namespace curlyfm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Snapshot ring(std::size_t n, double radius, double mu, const CirclesConfig& c, Rng& rng) {
  Snapshot s;
  s.positions = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = sample_von_mises(mu, c.skew, rng);
    const double r = c.noise > 0.0 ? radius + c.noise * rng.normal() : radius;
    s.positions(i, 0) = r * std::cos(theta);
    s.positions(i, 1) = r * std::sin(theta);
  }
  return s;
}

Matrix ball(std::size_t n, std::span<const double> center, double radius, Rng& rng) {
  const std::size_t d = center.size();
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    double nn = 0.0;
    do {
      for (double& v : row) v = rng.normal();
      nn = norm(row);
    } while (nn == 0.0);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    for (std::size_t c = 0; c < d; ++c) row[c] = center[c] + r * row[c] / nn;
  }
  return x;
}

void euler_advance(const ReferenceField& field, Matrix& x, double t0, double t1, double max_dt) {
  if (!(t1 > t0)) return;
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil((t1 - t0) / max_dt - 1e-9)));
  const double h = (t1 - t0) / static_cast<double>(steps);
  std::vector<double> t(x.rows());
  for (std::size_t k = 0; k < steps; ++k) {
    std::fill(t.begin(), t.end(), t0 + static_cast<double>(k) * h);
    const Matrix f = field.eval_batch(x, t);
    for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += h * f.values()[i];
  }
}

Matrix difference(const Matrix& later, const Matrix& earlier, double h) {
  Matrix v(later.rows(), later.cols());
  for (std::size_t i = 0; i < v.size(); ++i) v.values()[i] = (later.values()[i] - earlier.values()[i]) / h;
  return v;
}

void put(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view text, std::size_t line) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc{} || res.ptr != end)
    throw DataError("malformed number '" + std::string(text) + "'", line);
  if (!std::isfinite(v)) throw DataError("non-finite value '" + std::string(text) + "'", line);
  return v;
}

struct CsvLayout {
  std::size_t dim = 0;
  bool velocities = false;
};

CsvLayout parse_header(std::string_view header) {
  const auto cols = fields_of(header);
  if (cols.empty() || cols[0] != "t") throw DataError("header must start with 't'", 1);
  CsvLayout layout;
  std::size_t i = 1;
  while (i < cols.size() && cols[i] == "x" + std::to_string(layout.dim + 1)) {
    ++layout.dim;
    ++i;
  }
  if (layout.dim == 0) throw DataError("header needs position columns x1..xd", 1);
  if (i < cols.size()) {
    for (std::size_t c = 0; c < layout.dim; ++c, ++i)
      if (i >= cols.size() || cols[i] != "v" + std::to_string(c + 1))
        throw DataError("velocity columns must be v1..v" + std::to_string(layout.dim), 1);
    if (i != cols.size()) throw DataError("unexpected column '" + std::string(cols[i]) + "'", 1);
    layout.velocities = true;
  }
  return layout;
}

struct CsvRow {
  double t;
  std::vector<double> x;
  std::vector<double> v;
  std::size_t line;
};

std::vector<CsvRow> read_rows(std::istream& in, CsvLayout& layout) {
  std::string text;
  if (!std::getline(in, text)) throw DataError("empty CSV input", 1);
  if (!text.empty() && text.back() == '\r') text.pop_back();
  layout = parse_header(text);
  const std::size_t expected = 1 + layout.dim * (layout.velocities ? 2 : 1);
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto cols = fields_of(text);
    if (cols.size() != expected)
      throw DataError("expected " + std::to_string(expected) + " fields, found " + std::to_string(cols.size()), line);
    CsvRow row{parse_double(cols[0], line), {}, {}, line};
    for (std::size_t c = 0; c < layout.dim; ++c) row.x.push_back(parse_double(cols[1 + c], line));
    if (layout.velocities)
      for (std::size_t c = 0; c < layout.dim; ++c) row.v.push_back(parse_double(cols[1 + layout.dim + c], line));
    rows.push_back(std::move(row));
  }
  return rows;
}

Snapshot assemble(const std::vector<const CsvRow*>& rows, const CsvLayout& layout) {
  Snapshot s;
  s.time = rows.front()->t;
  s.positions = Matrix(rows.size(), layout.dim);
  if (layout.velocities) s.velocities = Matrix(rows.size(), layout.dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r]->x.begin(), rows[r]->x.end(), s.positions.row(r).begin());
    if (layout.velocities) std::copy(rows[r]->v.begin(), rows[r]->v.end(), s.velocities->row(r).begin());
  }
  return s;
}

void write_header(std::ostream& out, std::size_t d, bool velocities) {
  out << 't';
  for (std::size_t c = 0; c < d; ++c) out << ",x" << c + 1;
  if (velocities)
    for (std::size_t c = 0; c < d; ++c) out << ",v" << c + 1;
  out << '\n';
}

void write_rows(std::ostream& out, const Snapshot& s) {
  for (std::size_t r = 0; r < s.size(); ++r) {
    put(out, s.time);
    for (double v : s.positions.row(r)) {
      out << ',';
      put(out, v);
    }
    if (s.velocities)
      for (double v : s.velocities->row(r)) {
        out << ',';
        put(out, v);
      }
    out << '\n';
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

}  // namespace

double sample_von_mises(double mu, double kappa, Rng& rng) {
  double theta = 0.0;
  if (kappa < 1e-8) {
    theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
  } else {
    // Best & Fisher (1979) rejection sampler.
    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);
    double f = 0.0;
    while (true) {
      const double u1 = rng.uniform(), u2 = rng.uniform();
      const double z = std::cos(std::numbers::pi * u1);
      f = (1.0 + r * z) / (r + z);
      const double c = kappa * (r - f);
      if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) break;
    }
    theta = (rng.uniform() > 0.5 ? 1.0 : -1.0) * std::acos(std::clamp(f, -1.0, 1.0));
  }
  double a = std::fmod(mu + theta, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

SyntheticPair gen_asymmetric_circles(const CirclesConfig& config) {
  if (config.n == 0) throw ConfigError("circles need n >= 1");
  if (config.skew < 0.0 || config.noise < 0.0) throw ConfigError("circles need skew >= 0 and noise >= 0");
  Rng rng(derive_seed(config.seed, {0x636972}));
  SyntheticPair p;
  p.source = ring(config.n, config.source_radius, 0.0, config, rng);
  p.source.time = 0.0;
  p.target = ring(config.n, config.target_radius, config.omega, config, rng);
  p.target.time = 1.0;
  p.field = ReferenceField::rotational(config.omega);
  return p;
}

SyntheticPair gen_gaussian_spiral(std::size_t dim, std::size_t n, std::uint64_t seed, double spread) {
  if (dim < 3) throw ConfigError("the spiral benchmark needs d >= 3");
  if (n == 0) throw ConfigError("spiral benchmark needs n >= 1");
  Rng rng(derive_seed(seed, {0x737069}));
  const auto cloud = [&](double shift, double time) {
    Snapshot s;
    s.time = time;
    s.positions = Matrix(n, dim);
    for (double& v : s.positions.values()) v = spread * rng.normal();
    for (std::size_t i = 0; i < n; ++i) s.positions(i, 0) += shift;
    return s;
  };
  SyntheticPair p;
  p.source = cloud(-0.1, 0.0);
  p.target = cloud(0.1, 1.0);
  p.field = ReferenceField::spiral(dim, 0.2, std::numbers::pi);
  return p;
}

MultiMarginalDataset::MultiMarginalDataset(std::vector<Snapshot> marginals, std::vector<std::size_t> held_out,
                                           std::string source, bool aligned_rows)
    : marginals_(std::move(marginals)), held_out_(std::move(held_out)), source_(std::move(source)),
      aligned_(aligned_rows) {
  if (marginals_.size() < 2) throw ConfigError("a dataset needs at least two marginals");
  for (std::size_t i = 0; i < marginals_.size(); ++i) {
    if (!std::isfinite(marginals_[i].time)) throw DataError("marginal time is not finite");
    if (i > 0 && !(marginals_[i].time > marginals_[i - 1].time))
      throw ConfigError("marginal times must increase strictly");
    if (marginals_[i].dim() != marginals_[0].dim()) throw DimensionError("marginals differ in dimension");
  }
  std::sort(held_out_.begin(), held_out_.end());
  held_out_.erase(std::unique(held_out_.begin(), held_out_.end()), held_out_.end());
  for (std::size_t h : held_out_)
    if (h == 0 || h + 1 >= marginals_.size()) throw ConfigError("held-out marginals must be interior");
}

bool MultiMarginalDataset::is_held_out(std::size_t i) const {
  return std::binary_search(held_out_.begin(), held_out_.end(), i);
}

std::vector<std::size_t> MultiMarginalDataset::training_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < marginals_.size(); ++i)
    if (!is_held_out(i)) idx.push_back(i);
  return idx;
}

std::vector<Snapshot> MultiMarginalDataset::training_marginals() const {
  std::vector<Snapshot> out;
  for (std::size_t i : training_indices()) out.push_back(marginals_[i]);
  return out;
}

MultiMarginalDataset rollout_dataset(const ReferenceField& field, std::size_t dim, const RolloutConfig& config) {
  if (config.times.size() < 2) throw ConfigError("rollout needs at least two marginal times");
  if (!(config.solver_dt > 0.0)) throw ConfigError("rollout solver step must be positive");
  if (config.n == 0) throw ConfigError("rollout needs particles");
  if (field.dim() != 0 && field.dim() != dim) throw DimensionError("field dimension does not match rollout dimension");
  std::vector<double> center = config.center.empty() ? std::vector<double>(dim, 0.0) : config.center;
  if (center.size() != dim) throw DimensionError("rollout center has the wrong dimension");
  Rng rng(derive_seed(config.seed, {0x726f6c}));
  Matrix x = ball(config.n, center, config.radius, rng);

  std::vector<Snapshot> marginals;
  for (std::size_t k = 0; k < config.times.size(); ++k) {
    if (k > 0) {
      if (!(config.times[k] > config.times[k - 1])) throw ConfigError("marginal times must increase strictly");
      euler_advance(field, x, config.times[k - 1], config.times[k], config.solver_dt);
    }
    Snapshot s;
    s.time = config.times[k];
    s.positions = x;
    marginals.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < marginals.size(); ++k) {
    Snapshot& s = marginals[k];
    if (config.fd_step > 0.0) {
      Matrix ahead = s.positions;
      euler_advance(field, ahead, s.time, s.time + config.fd_step, config.solver_dt);
      s.velocities = difference(ahead, s.positions, config.fd_step);
    } else if (k + 1 < marginals.size()) {
      s.velocities = difference(marginals[k + 1].positions, s.positions, marginals[k + 1].time - s.time);
    } else {
      s.velocities = difference(s.positions, marginals[k - 1].positions, s.time - marginals[k - 1].time);
    }
  }
  return MultiMarginalDataset(std::move(marginals), config.held_out, field.name(), true);
}

void write_snapshot_csv(std::ostream& out, const Snapshot& snapshot) {
  write_header(out, snapshot.dim(), snapshot.has_velocities());
  write_rows(out, snapshot);
}

void export_csv(const std::filesystem::path& path, const Snapshot& snapshot) {
  auto out = open_out(path);
  write_snapshot_csv(out, snapshot);
}

Snapshot read_snapshot_csv(std::istream& in) {
  CsvLayout layout;
  const auto rows = read_rows(in, layout);
  if (rows.empty()) throw DataError("CSV has no data rows", 1);
  std::vector<const CsvRow*> ptrs;
  for (const auto& r : rows) {
    if (r.t != rows.front().t) throw DataError("snapshot rows must share one time label", r.line);
    ptrs.push_back(&r);
  }
  return assemble(ptrs, layout);
}

Snapshot ingest_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_snapshot_csv(in);
}

std::vector<Snapshot> read_marginals_csv(std::istream& in) {
  CsvLayout layout;
  const auto rows = read_rows(in, layout);
  if (rows.empty()) throw DataError("CSV has no data rows", 1);
  std::vector<std::vector<const CsvRow*>> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.front()->t == r.t; });
    if (it != groups.end()) {
      it->push_back(&r);
    } else {
      if (!groups.empty() && !(r.t > groups.back().front()->t))
        throw DataError("time labels must appear in increasing order", r.line);
      groups.push_back({&r});
    }
  }
  std::vector<Snapshot> out;
  for (const auto& g : groups) out.push_back(assemble(g, layout));
  return out;
}

std::vector<Snapshot> ingest_marginals_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_marginals_csv(in);
}

void export_marginals_csv(const std::filesystem::path& path, const std::vector<Snapshot>& marginals) {
  if (marginals.empty()) throw DataError("nothing to export");
  auto out = open_out(path);
  write_header(out, marginals.front().dim(), marginals.front().has_velocities());
  for (const auto& s : marginals) {
    if (s.dim() != marginals.front().dim() || s.has_velocities() != marginals.front().has_velocities())
      throw DimensionError("marginals disagree on columns");
    write_rows(out, s);
  }
}

SplitResult split(const Snapshot& snapshot, const std::vector<double>& fractions, std::uint64_t seed) {
  if (fractions.size() < 2 || fractions.size() > 3) throw ConfigError("split takes two or three fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const std::size_t n = snapshot.size();
  SplitResult result;
  result.counts.resize(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    result.counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += result.counts[i];
    remainders.push_back({exact - static_cast<double>(result.counts[i]), i});
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++result.counts[remainders[i % remainders.size()].second];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x73706c}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  result.snapshot = snapshot;
  result.snapshot.tags.assign(n, SplitTag::Train);
  const SplitTag kinds[] = {SplitTag::Train, SplitTag::Val, SplitTag::Test};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < result.counts.size(); ++i) {
    for (std::size_t c = 0; c < result.counts[i]; ++c) result.snapshot.tags[order[pos++]] = kinds[i];
    if (result.counts[i] == 0) result.has_empty_split = true;
  }
  return result;
}

}  // namespace curlyfm
