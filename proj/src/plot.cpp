#include "curlyfm/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "curlyfm/errors.hpp"

namespace curlyfm {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
  double x0, x1, y0, y1;
  double w, h, pad;

  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); }
  double py(double y) const { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); }
};

void extend(Frame& f, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double x = m(r, 0), y = m.cols() > 1 ? m(r, 1) : 0.0;
    f.x0 = std::min(f.x0, x);
    f.x1 = std::max(f.x1, x);
    f.y0 = std::min(f.y0, y);
    f.y1 = std::max(f.y1, y);
  }
}

double parse_cell(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("malformed number '" + std::string(s) + "'", line);
  return v;
}

}  // namespace

void write_trajectory_svg(std::ostream& out, const Trajectory& traj, const std::vector<Snapshot>& marginals,
                          const SvgOptions& options) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Frame f{inf, -inf, inf, -inf, double(options.width), double(options.height), 24.0};
  for (const auto& s : traj.states) extend(f, s);
  for (const auto& m : marginals) extend(f, m.positions);
  if (!(f.x1 > f.x0)) f.x0 -= 1.0, f.x1 += 1.0;
  if (!(f.y1 > f.y0)) f.y0 -= 1.0, f.y1 += 1.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height
      << "\" viewBox=\"0 0 " << options.width << ' ' << options.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty())
    out << "<text x=\"" << f.pad << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" << options.title
        << "</text>\n";
  for (std::size_t k = 0; k < marginals.size(); ++k) {
    out << "<g fill=\"" << kPalette[k % std::size(kPalette)] << "\" fill-opacity=\"0.35\">\n";
    const Matrix& p = marginals[k].positions;
    for (std::size_t r = 0; r < p.rows(); ++r)
      out << "<circle cx=\"" << f.px(p(r, 0)) << "\" cy=\"" << f.py(p.cols() > 1 ? p(r, 1) : 0.0)
          << "\" r=\"1.5\"/>\n";
    out << "</g>\n";
  }
  const std::size_t n = traj.particles();
  const std::size_t shown = std::min(n, options.max_paths);
  out << "<g fill=\"none\" stroke=\"#333\" stroke-opacity=\"0.6\" stroke-width=\"0.8\">\n";
  for (std::size_t q = 0; q < shown; ++q) {
    const std::size_t p = q * n / shown;
    out << "<polyline points=\"";
    for (const auto& s : traj.states) out << f.px(s(p, 0)) << ',' << f.py(s.cols() > 1 ? s(p, 1) : 0.0) << ' ';
    out << "\"/>\n";
  }
  out << "</g>\n";
  if (!traj.states.empty()) {
    const Matrix& first = traj.states.front();
    const Matrix& last = traj.states.back();
    out << "<g stroke=\"none\">\n";
    for (std::size_t q = 0; q < shown; ++q) {
      const std::size_t p = q * n / shown;
      out << "<circle cx=\"" << f.px(first(p, 0)) << "\" cy=\"" << f.py(first.cols() > 1 ? first(p, 1) : 0.0)
          << "\" r=\"2\" fill=\"#2ca02c\"/><circle cx=\"" << f.px(last(p, 0)) << "\" cy=\""
          << f.py(last.cols() > 1 ? last(p, 1) : 0.0) << "\" r=\"2\" fill=\"#d62728\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

PlotBounds bounds_of(const Trajectory& traj) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Frame f{inf, -inf, inf, -inf, 1.0, 1.0, 0.0};
  for (const auto& s : traj.states) extend(f, s);
  if (!(f.x1 >= f.x0)) return {};
  const double px = 0.05 * std::max(f.x1 - f.x0, 1e-3), py = 0.05 * std::max(f.y1 - f.y0, 1e-3);
  return {f.x0 - px, f.x1 + px, f.y0 - py, f.y1 + py};
}

void write_field_svg(std::ostream& out, const ReferenceField& field, double t, const PlotBounds& bounds,
                     std::size_t grid, const SvgOptions& options) {
  if (grid < 2) throw ConfigError("quiver grid needs at least 2 points per side");
  if (field.dim() != 0 && field.dim() < 2) throw DimensionError("quiver plot needs a field of dimension >= 2");
  const std::size_t d = field.dim() == 0 ? 2 : field.dim();
  const Frame f{bounds.x0, bounds.x1, bounds.y0, bounds.y1, double(options.width), double(options.height), 24.0};
  Matrix x(grid * grid, d);
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      x(i * grid + j, 0) = bounds.x0 + (bounds.x1 - bounds.x0) * double(j) / double(grid - 1);
      x(i * grid + j, 1) = bounds.y0 + (bounds.y1 - bounds.y0) * double(i) / double(grid - 1);
    }
  const Matrix v = field.eval_batch(x, std::vector<double>(x.rows(), t));
  double vmax = 0.0;
  for (std::size_t r = 0; r < v.rows(); ++r) vmax = std::max(vmax, std::hypot(v(r, 0), v(r, 1)));
  const double cell = 0.8 * std::min(f.w, f.h) / double(grid);
  const double scale = vmax > 0.0 ? cell / vmax : 0.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height
      << "\" viewBox=\"0 0 " << options.width << ' ' << options.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty())
    out << "<text x=\"" << f.pad << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" << options.title
        << "</text>\n";
  out << "<g stroke=\"#1f77b4\" stroke-width=\"1\" fill=\"#1f77b4\">\n";
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double sx = f.px(x(r, 0)), sy = f.py(x(r, 1));
    const double dx = scale * v(r, 0), dy = -scale * v(r, 1);
    const double ex = sx + dx, ey = sy + dy;
    out << "<line x1=\"" << sx << "\" y1=\"" << sy << "\" x2=\"" << ex << "\" y2=\"" << ey << "\"/>";
    const double len = std::hypot(dx, dy);
    if (len > 1e-9) {
      const double ux = dx / len, uy = dy / len, head = std::min(4.0, 0.4 * len);
      out << "<polygon points=\"" << ex << ',' << ey << ' ' << ex - head * ux - 0.5 * head * uy << ','
          << ey - head * uy + 0.5 * head * ux << ' ' << ex - head * ux + 0.5 * head * uy << ','
          << ey - head * uy - 0.5 * head * ux << "\"/>";
    }
    out << '\n';
  }
  out << "</g>\n</svg>\n";
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("particle,step,t,x1", 0) != 0)
    throw DataError("trajectory CSV must start with 'particle,step,t,x1'", 1);
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  struct Row {
    std::size_t particle, step;
    double t;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  std::size_t no = 1, particles = 0, steps = 0;
  while (std::getline(in, line)) {
    ++no;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto c = rest.find(',');
      cells.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (cells.size() != d + 3) throw DataError("wrong number of fields", no);
    Row r{static_cast<std::size_t>(parse_cell(cells[0], no)), static_cast<std::size_t>(parse_cell(cells[1], no)),
          parse_cell(cells[2], no), {}};
    for (std::size_t c = 0; c < d; ++c) r.x.push_back(parse_cell(cells[3 + c], no));
    particles = std::max(particles, r.particle + 1);
    steps = std::max(steps, r.step + 1);
    rows.push_back(std::move(r));
  }
  if (rows.size() != particles * steps) throw DataError("trajectory CSV is not a full particle x step grid");
  Trajectory traj;
  traj.times.assign(steps, 0.0);
  traj.states.assign(steps, Matrix(particles, d));
  for (const auto& r : rows) {
    traj.times[r.step] = r.t;
    std::copy(r.x.begin(), r.x.end(), traj.states[r.step].row(r.particle).begin());
  }
  return traj;
}

}  // namespace curlyfm
