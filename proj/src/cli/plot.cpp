#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ipo/cli.hpp"

namespace ipo::cli {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

struct Series {
  std::vector<double> x, mean, lo, hi;
  bool band = false;
};

Series aggregate(const std::vector<MetricsTable>& tables, const std::string& column) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& t : tables) n = std::min(n, t.rows.size());
  Series s;
  s.band = tables.size() > 1;
  const auto x = tables.front().numeric("trajectories_so_far");
  std::vector<std::vector<double>> ys;
  for (const auto& t : tables) ys.push_back(t.numeric(column));
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& y : ys) {
      sum += y[r];
      lo = std::min(lo, y[r]);
      hi = std::max(hi, y[r]);
    }
    s.x.push_back(x[r]);
    s.mean.push_back(sum / static_cast<double>(ys.size()));
    s.lo.push_back(lo);
    s.hi.push_back(hi);
  }
  return s;
}

void write_chart(const std::filesystem::path& path, const std::string& title,
                 const std::string& ylabel, const Series& s, std::optional<double> limit) {
  double x0 = s.x.empty() ? 0.0 : s.x.front(), x1 = s.x.empty() ? 1.0 : s.x.back();
  if (x1 <= x0) x1 = x0 + 1.0;
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    y0 = std::min(y0, s.lo[k]);
    y1 = std::max(y1, s.hi[k]);
  }
  if (limit) {
    y0 = std::min(y0, *limit);
    y1 = std::max(y1, *limit);
  }
  if (!std::isfinite(y0) || !std::isfinite(y1)) y0 = 0.0, y1 = 1.0;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // Axes and ticks.
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw
     << "\" y2=\"" << kTop + ph << "\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << kTop + ph + 16
       << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(yv) + 4)
       << "\" text-anchor=\"end\">" << num(yv) << "</text>\n"
       << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << kLeft + pw
       << "\" y2=\"" << num(py(yv)) << "\" stroke=\"#dddddd\"/>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
     << "\" text-anchor=\"middle\">trajectories</text>\n"
     << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" "
     << "transform=\"rotate(-90 16 " << kTop + ph / 2 << ")\">" << ylabel << "</text>\n"
     << "</g>\n";

  if (s.band && !s.x.empty()) {
    os << "<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) os << num(px(s.x[k])) << ',' << num(py(s.hi[k])) << ' ';
    for (std::size_t k = s.x.size(); k-- > 0;) os << num(px(s.x[k])) << ',' << num(py(s.lo[k])) << ' ';
    os << "\"/>\n";
  }
  if (!s.x.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) os << num(px(s.x[k])) << ',' << num(py(s.mean[k])) << ' ';
    os << "\"/>\n";
  }
  if (limit) {
    os << "<line class=\"limit\" x1=\"" << kLeft << "\" y1=\"" << num(py(*limit)) << "\" x2=\""
       << kLeft + pw << "\" y2=\"" << num(py(*limit))
       << "\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
  }
  os << "</svg>\n";

  std::ofstream f(path);
  if (!f) throw ConfigError("plot: cannot write " + path.string());
  f << os.str();
}

}  // namespace

std::vector<std::filesystem::path> plot_metrics(
    const std::vector<std::filesystem::path>& metrics_files,
    const std::filesystem::path& out_dir, const std::vector<double>& limits) {
  if (metrics_files.empty()) throw ConfigError("plot: at least one metrics file is required");
  std::vector<MetricsTable> tables;
  for (const auto& p : metrics_files) {
    tables.push_back(read_metrics(p));
    if (tables.back().header != tables.front().header) {
      throw ConfigError("plot: " + p.string() + " has a different column set than " +
                        metrics_files.front().string());
    }
  }
  const std::size_t m = tables.front().num_constraints();
  if (!limits.empty() && limits.size() != m) {
    throw ConfigError("plot: " + std::to_string(limits.size()) + " limits for " +
                      std::to_string(m) + " constraints");
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const std::string runs = tables.size() == 1 ? "1 run" : std::to_string(tables.size()) + " runs";

  written.push_back(out_dir / "reward.svg");
  write_chart(written.back(), "Discounted return (" + runs + ")", "J_R",
              aggregate(tables, "J_R"), std::nullopt);
  for (std::size_t i = 1; i <= m; ++i) {
    const std::string col = "J_C_" + std::to_string(i);
    written.push_back(out_dir / ("cost_" + std::to_string(i) + ".svg"));
    std::optional<double> lim;
    if (!limits.empty()) lim = limits[i - 1];
    write_chart(written.back(), "Constraint " + std::to_string(i) + " (" + runs + ")", col,
                aggregate(tables, col), lim);
  }
  return written;
}

}  // namespace ipo::cli
