#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ipo/cli.hpp"

namespace ipo::cli {

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
}

}  // namespace

std::vector<std::string> metrics_header(std::size_t m) {
  std::vector<std::string> h{"iteration", "trajectories_so_far", "J_R"};
  for (std::size_t i = 1; i <= m; ++i) h.push_back("J_C_" + std::to_string(i));
  for (std::size_t i = 1; i <= m; ++i) h.push_back("J_C_ema_" + std::to_string(i));
  h.insert(h.end(), {"L_clip", "barrier_sum", "approx_kl"});
  for (std::size_t i = 1; i <= m; ++i) h.push_back("lambda_" + std::to_string(i));
  h.push_back("wall_time_s");
  return h;
}

std::string metrics_row(const IterationMetrics& r, std::size_t m) {
  std::ostringstream os;
  os << r.iteration << ',' << r.trajectories << ',' << fmt(r.J_R);
  for (std::size_t i = 0; i < m; ++i) os << ',' << fmt(r.J_C.at(i));
  for (std::size_t i = 0; i < m; ++i) os << ',' << fmt(r.J_C_ema.at(i));
  os << ',' << fmt(r.L_clip) << ',';
  if (r.barrier_sum) os << fmt(*r.barrier_sum);
  os << ',' << fmt(r.approx_kl);
  for (std::size_t i = 0; i < m; ++i) {
    os << ',';
    if (!r.lambda.empty()) os << fmt(r.lambda.at(i));
  }
  os << ',';
  if (r.wall_time_s) os << fmt(*r.wall_time_s);
  return os.str();
}

std::size_t MetricsTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  throw ConfigError("metrics: no column '" + name + "'");
}

std::vector<double> MetricsTable::numeric(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back(r.at(c).empty() ? std::nan("") : std::stod(r.at(c)));
  }
  return out;
}

std::size_t MetricsTable::num_constraints() const {
  std::size_t m = 0;
  while (std::find(header.begin(), header.end(), "J_C_" + std::to_string(m + 1)) !=
         header.end()) {
    ++m;
  }
  return m;
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("metrics: cannot read " + path.string());
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("metrics: empty file " + path.string());
  t.header = split_csv(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != t.header.size()) {
      throw ConfigError("metrics: ragged row in " + path.string());
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

SummaryRow summarize(const std::string& algorithm,
                     const std::vector<IterationMetrics>& final_rows,
                     const std::vector<double>& limits) {
  if (final_rows.empty()) throw ContractError("summarize: no runs");
  SummaryRow s;
  s.algorithm = algorithm;
  s.seeds = final_rows.size();
  std::vector<double> jr;
  for (const auto& r : final_rows) jr.push_back(r.J_R);
  mean_std(jr, s.J_R_mean, s.J_R_std);
  const std::size_t m = limits.size();
  s.J_C_mean.resize(m);
  s.J_C_std.resize(m);
  s.satisfied_fraction.resize(m);
  s.satisfied.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> jc;
    std::size_t ok = 0;
    for (const auto& r : final_rows) {
      jc.push_back(r.J_C.at(i));
      if (r.J_C[i] <= limits[i]) ++ok;
    }
    mean_std(jc, s.J_C_mean[i], s.J_C_std[i]);
    s.satisfied_fraction[i] = static_cast<double>(ok) / static_cast<double>(s.seeds);
    s.satisfied[i] = s.J_C_mean[i] <= limits[i];
  }
  return s;
}

void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows,
                   const std::vector<double>& limits) {
  os << "algorithm,seeds,J_R_mean,J_R_std";
  for (std::size_t i = 1; i <= limits.size(); ++i) {
    os << ",J_C_" << i << "_mean,J_C_" << i << "_std,limit_" << i << ",satisfied_" << i
       << ",satisfied_fraction_" << i;
  }
  os << '\n';
  for (const auto& r : rows) {
    os << r.algorithm << ',' << r.seeds << ',' << fmt(r.J_R_mean) << ',' << fmt(r.J_R_std);
    for (std::size_t i = 0; i < limits.size(); ++i) {
      os << ',' << fmt(r.J_C_mean[i]) << ',' << fmt(r.J_C_std[i]) << ',' << fmt(limits[i])
         << ',' << (r.satisfied[i] ? "yes" : "no") << ',' << fmt(r.satisfied_fraction[i]);
    }
    os << '\n';
  }
}

}  // namespace ipo::cli
