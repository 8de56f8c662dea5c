#pragma once

// Command-line harness: run configuration, metrics files, plots and the
// subcommands behind the `ipo` executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ipo/algo.hpp"
#include "ipo/envs.hpp"

namespace ipo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAbort = 3;

// Every key has a default except `scenario`. Unknown keys are rejected.
struct RunConfig {
  std::string algorithm = "ipo";
  std::string scenario;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";
  std::optional<double> noise_sigma;         // scenario value when unset
  std::optional<double> gamma;               // scenario value when unset
  std::optional<std::vector<double>> limits;  // scenario value when unset

  double t = 20.0;
  double barrier_margin = 0.0;
  double clip = 0.2;
  double gae_lambda = 0.95;
  std::size_t epochs = 10;
  std::size_t minibatch = 64;
  double policy_lr = 3e-4;
  double critic_lr = 1e-3;
  std::size_t iterations = 300;
  double kl_stop = 0.015;
  std::size_t episodes = 30;
  std::vector<std::size_t> hidden{64, 64};
  double lambda_init = 0.01;
  double lambda_lr = 0.01;
  bool freeze_lambda = false;
  std::size_t workers = 1;
  bool record_wall_time = false;
  std::size_t log_every = 0;  // progress line to stderr every k iterations

  // compare
  std::vector<std::string> algorithms{"ipo", "pdo", "ppo"};
  std::size_t num_seeds = 10;

  // t-search
  double t_lo = 1.0;
  std::optional<double> t_hi;  // scenario reward scale when unset
  std::size_t budget = 8;
  double t_tol = 1.0;
  std::size_t probe_iterations = 50;

  // eval
  std::string checkpoint;
  std::size_t eval_episodes = 30;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_run_config(const std::string& json_text);
std::string serialize(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);
// `value` is parsed as JSON when possible and as a bare string otherwise;
// lists may also be written comma separated ("0,1,2").
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
// Keys accepted by parse_run_config / apply_override.
const std::vector<std::string>& config_keys();

// Scenario with the config's gamma, limit and noise overrides applied.
Scenario resolve_scenario(const RunConfig& cfg);
TrainConfig make_train_config(const RunConfig& cfg, const Scenario& scenario);
// IPO_OUTPUT_ROOT joined with output_dir unless output_dir is absolute.
std::filesystem::path output_root(const RunConfig& cfg);

// ------------------------------------------------------------- metrics

std::vector<std::string> metrics_header(std::size_t num_constraints);
std::string metrics_row(const IterationMetrics& row, std::size_t num_constraints);

struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ConfigError
  std::vector<double> numeric(const std::string& name) const;
  std::size_t num_constraints() const;
};

MetricsTable read_metrics(const std::filesystem::path& path);

struct SummaryRow {
  std::string algorithm;
  std::size_t seeds = 0;
  double J_R_mean = 0.0, J_R_std = 0.0;
  std::vector<double> J_C_mean, J_C_std;
  std::vector<double> satisfied_fraction;  // seeds with final J_C_i <= limit
  std::vector<bool> satisfied;             // mean final J_C_i <= limit
};

// One entry per seed: the final metrics row of that run.
SummaryRow summarize(const std::string& algorithm,
                     const std::vector<IterationMetrics>& final_rows,
                     const std::vector<double>& limits);
void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows,
                   const std::vector<double>& limits);

// --------------------------------------------------------------- plots

// Writes reward.svg and cost_<i>.svg into out_dir. Returns the files
// written. `limits` draws the dashed limit line on each cost chart.
std::vector<std::filesystem::path> plot_metrics(
    const std::vector<std::filesystem::path>& metrics_files,
    const std::filesystem::path& out_dir, const std::vector<double>& limits);

// ------------------------------------------------------------ commands

int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipo::cli
