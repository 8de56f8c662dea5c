#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ipo/cli.hpp"

namespace ipo::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Reads --config then applies the leftover --key value pairs in order.
RunConfig assemble(const std::string& config_path, const std::vector<std::string>& extras) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_run_config(config_path);
  for (std::size_t k = 0; k < extras.size(); ++k) {
    std::string tok = extras[k];
    if (tok.rfind("--", 0) != 0) throw ConfigError(tok + ": unexpected argument");
    tok = tok.substr(2);
    std::string value;
    if (const auto eq = tok.find('='); eq != std::string::npos) {
      value = tok.substr(eq + 1);
      tok = tok.substr(0, eq);
    } else if (k + 1 < extras.size() && extras[k + 1].rfind("--", 0) != 0) {
      value = extras[++k];
    } else {
      value = "true";
    }
    std::replace(tok.begin(), tok.end(), '-', '_');
    apply_override(cfg, tok, value);
  }
  return cfg;
}

class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, std::size_t m) : os_(path), m_(m) {
    if (!os_) throw ConfigError("output_dir: cannot write " + path.string());
    const auto h = metrics_header(m);
    for (std::size_t c = 0; c < h.size(); ++c) os_ << (c ? "," : "") << h[c];
    os_ << '\n';
  }
  void write(const IterationMetrics& row) {
    os_ << metrics_row(row, m_) << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
  std::size_t m_;
};

struct RunOutcome {
  IterationMetrics final_row;
  fs::path dir;
};

// One (algorithm, seed) cell: trains, writes metrics, run config and
// checkpoint under dir.
RunOutcome run_cell(RunConfig cfg, const std::string& algorithm, std::uint64_t seed,
                    const fs::path& dir, std::ostream& err) {
  cfg.algorithm = algorithm;
  cfg.seeds = {seed};
  const Scenario scenario = resolve_scenario(cfg);
  const TrainConfig tcfg = make_train_config(cfg, scenario);
  cfg.limits = scenario.limits();
  cfg.gamma = scenario.gamma;
  cfg.noise_sigma = scenario.noise_sigma;
  auto env = make_env(scenario);

  fs::create_directories(dir);
  {
    std::ofstream rc(dir / "run_config.json");
    rc << serialize(cfg);
  }
  const std::size_t m = scenario.constraints.size();
  MetricsWriter writer(dir / "metrics.csv", m);
  auto on_row = [&](const IterationMetrics& row) {
    writer.write(row);
    if (cfg.log_every > 0 && (row.iteration + 1) % cfg.log_every == 0) {
      err << algorithm << " seed " << seed << " iter " << row.iteration + 1 << " J_R "
          << fmt(row.J_R);
      for (std::size_t i = 0; i < m; ++i) err << " J_C_" << i + 1 << ' ' << fmt(row.J_C[i]);
      err << '\n';
    }
  };
  TrainResult result;
  try {
    result = train(tcfg, *env, seed, on_row);
  } catch (const TrainingAborted& e) {
    std::ofstream dump(dir / "abort_dump.txt");
    dump << e.what() << '\n' << e.dump();
    throw;
  }
  save_checkpoint(dir / "checkpoint.txt", Checkpoint{result.policy, result.critics});
  RunOutcome out;
  out.dir = dir;
  if (!result.metrics.empty()) out.final_row = result.metrics.back();
  return out;
}

fs::path cell_dir(const RunConfig& cfg, const std::string& algorithm, std::uint64_t seed) {
  return output_root(cfg) / algorithm / ("seed_" + std::to_string(seed));
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  parse_algorithm(cfg.algorithm);
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  for (std::uint64_t seed : cfg.seeds) {
    const auto r = run_cell(cfg, cfg.algorithm, seed, cell_dir(cfg, cfg.algorithm, seed), err);
    out << cfg.algorithm << " seed " << seed << ": " << r.final_row.iteration + 1
        << " iterations, J_R " << fmt(r.final_row.J_R);
    for (std::size_t i = 0; i < r.final_row.J_C.size(); ++i) {
      out << ", J_C_" << i + 1 << ' ' << fmt(r.final_row.J_C[i]);
    }
    out << " -> " << (r.dir / "metrics.csv").string() << '\n';
  }
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.algorithms.empty()) throw ConfigError("algorithms: at least one is required");
  if (cfg.num_seeds == 0) throw ConfigError("num_seeds: must be at least 1");
  for (const auto& a : cfg.algorithms) parse_algorithm(a);
  const std::vector<double> limits = resolve_scenario(cfg).limits();

  std::vector<SummaryRow> rows;
  for (const auto& algorithm : cfg.algorithms) {
    std::vector<IterationMetrics> finals;
    for (std::uint64_t seed = 0; seed < cfg.num_seeds; ++seed) {
      finals.push_back(
          run_cell(cfg, algorithm, seed, cell_dir(cfg, algorithm, seed), err).final_row);
    }
    rows.push_back(summarize(algorithm, finals, limits));
  }

  const fs::path summary = output_root(cfg) / "summary.csv";
  {
    std::ofstream os(summary);
    if (!os) throw ConfigError("output_dir: cannot write " + summary.string());
    write_summary(os, rows, limits);
  }
  for (const auto& r : rows) {
    out << std::left << std::setw(5) << r.algorithm << " J_R " << fmt(r.J_R_mean) << " +- "
        << fmt(r.J_R_std);
    for (std::size_t i = 0; i < limits.size(); ++i) {
      out << " | J_C_" << i + 1 << ' ' << fmt(r.J_C_mean[i]) << " +- " << fmt(r.J_C_std[i])
          << " (limit " << fmt(limits[i]) << ", " << (r.satisfied[i] ? "satisfied" : "violated")
          << ", " << fmt(r.satisfied_fraction[i] * 100.0) << "% of seeds)";
    }
    out << '\n';
  }
  out << "summary -> " << summary.string() << '\n';
  return kExitOk;
}

int cmd_gap_check(const std::vector<std::size_t>& ms, const std::vector<double>& ts,
                  std::size_t resolution, std::ostream& out) {
  out << "m,t,p_star,barrier_value,gap,bound,grid_tolerance,multipliers,result\n";
  bool all = true;
  for (std::size_t m : ms) {
    for (double t : ts) {
      const auto r = duality_gap_check(m, t, resolution);
      out << r.m << ',' << fmt(r.t) << ',' << fmt(r.p_star) << ',' << fmt(r.barrier_value)
          << ',' << fmt(r.gap) << ',' << fmt(r.bound) << ',' << fmt(r.grid_tolerance) << ',';
      for (std::size_t i = 0; i < r.multipliers.size(); ++i) {
        out << (i ? ";" : "") << fmt(r.multipliers[i]);
      }
      out << ',' << (r.pass ? "pass" : "fail") << '\n';
      all = all && r.pass;
    }
  }
  return all ? kExitOk : kExitFailure;
}

int cmd_tsearch(const RunConfig& cfg, std::ostream& out) {
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  const Scenario scenario = resolve_scenario(cfg);
  TrainConfig tcfg = make_train_config(cfg, scenario);
  tcfg.iterations = cfg.probe_iterations;
  auto env = make_env(scenario);
  const double t_hi = cfg.t_hi.value_or(env->reward_scale());
  if (cfg.budget == 0) {
    out << "t-search failed: probe budget is zero\n";
    return kExitFailure;
  }
  auto probe = training_probe(tcfg, *env, cfg.seeds.front());
  std::size_t k = 0;
  auto logged = [&](double t) {
    Probe p = probe(t);
    out << "probe " << ++k << ": t " << fmt(t) << " J_R " << fmt(p.J_R);
    for (std::size_t i = 0; i < p.J_C.size(); ++i) out << " J_C_" << i + 1 << ' ' << fmt(p.J_C[i]);
    out << (p.feasible ? " feasible" : " violated") << '\n';
    return p;
  };
  const auto r = t_search(logged, cfg.t_lo, t_hi, cfg.budget, cfg.t_tol);
  if (!r.found) {
    out << "t-search failed: " << r.message << '\n';
    return kExitFailure;
  }
  out << "recommended t " << fmt(r.t) << " (bracket [" << fmt(r.lo) << ", " << fmt(r.hi)
      << "], " << r.probes.size() << " probes)\n";
  return kExitOk;
}

int cmd_plot(const std::vector<std::string>& files, std::string out_dir,
             std::vector<double> limits, std::ostream& out) {
  if (files.empty()) throw ConfigError("plot: at least one metrics file is required");
  std::vector<fs::path> paths(files.begin(), files.end());
  if (limits.empty()) {
    const fs::path rc = paths.front().parent_path() / "run_config.json";
    if (fs::exists(rc)) {
      const RunConfig cfg = load_run_config(rc);
      limits = cfg.limits ? *cfg.limits : resolve_scenario(cfg).limits();
    }
  }
  if (out_dir.empty()) out_dir = (paths.front().parent_path() / "plots").string();
  for (const auto& p : plot_metrics(paths, out_dir, limits)) out << p.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: required key is missing");
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (cfg.eval_episodes == 0) throw ConfigError("eval_episodes: must be at least 1");
  const Scenario scenario = resolve_scenario(cfg);
  auto env = make_env(scenario);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  if (ckpt.policy.obs_dim() != env->spec().obs_dim) {
    throw ConfigError("checkpoint: observation size does not match scenario '" +
                      scenario.name + "'");
  }
  const auto ev = evaluate(ckpt.policy, *env, cfg.eval_episodes, cfg.seeds.front(),
                           scenario.gamma);
  out << "episodes " << cfg.eval_episodes << " J_R " << fmt(ev.J_R);
  for (std::size_t i = 0; i < ev.J_C.size(); ++i) {
    out << " J_C_" << i + 1 << ' ' << fmt(ev.J_C[i]) << " (limit "
        << fmt(scenario.constraints[i].limit) << ')';
  }
  out << " mean_length " << fmt(ev.mean_episode_length) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained policy optimization toolkit", "ipo"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_config_command = [&](const std::string& name, const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->allow_extras();
    sub->footer("Any configuration key may be given as --key value.");
    return sub;
  };
  auto* train_cmd = add_config_command("train", "Train one run per seed");
  auto* compare_cmd = add_config_command("compare", "Algorithms x seeds sweep with summary");
  auto* tsearch_cmd = add_config_command("t-search", "Bisection search over the barrier t");
  auto* eval_cmd = add_config_command("eval", "Roll out a checkpoint and report J_R / J_C");

  std::vector<std::size_t> gap_m{1, 2};
  std::vector<double> gap_t{10, 50, 100};
  std::size_t resolution = 2001;
  auto* gap_cmd = app.add_subcommand("gap-check", "Duality gap on the convex bandit");
  gap_cmd->add_option("--m", gap_m, "Constraint counts (1 or 2)")->delimiter(',');
  gap_cmd->add_option("--t", gap_t, "Barrier parameters")->delimiter(',');
  gap_cmd->add_option("--resolution", resolution, "Grid points per axis");

  std::vector<std::string> plot_files;
  std::string plot_out;
  std::vector<double> plot_limits;
  auto* plot_cmd = app.add_subcommand("plot", "SVG charts from metrics files");
  plot_cmd->add_option("files", plot_files, "metrics.csv files")->required();
  plot_cmd->add_option("--out", plot_out, "Output directory");
  plot_cmd->add_option("--limits", plot_limits, "Constraint limits")->delimiter(',');

  std::vector<std::string> argv_store{"ipo"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gap_cmd->parsed()) return cmd_gap_check(gap_m, gap_t, resolution, out);
    if (plot_cmd->parsed()) return cmd_plot(plot_files, plot_out, plot_limits, out);
    for (auto* sub : {train_cmd, compare_cmd, tsearch_cmd, eval_cmd}) {
      if (!sub->parsed()) continue;
      const RunConfig cfg = assemble(config_path, sub->remaining());
      if (sub == train_cmd) return cmd_train(cfg, out, err);
      if (sub == compare_cmd) return cmd_compare(cfg, out, err);
      if (sub == tsearch_cmd) return cmd_tsearch(cfg, out);
      return cmd_eval(cfg, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingAborted& e) {
    err << e.what() << '\n' << e.dump();
    return kExitAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ipo::cli
