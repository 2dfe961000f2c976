#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vepo/mdp_core.hpp"
#include "vepo/policy_optim.hpp"

// The two-state benchmark environment, its kappa-parameterized initial
// policies, nuisance-corruption scenarios and the replication sweep drivers
// behind the command-line tool.

namespace vepo {

/// Which nuisance groups are replaced by corrupted versions.
///   origin: none; mod1: ratio; mod2: Q; mod3: transition; mod4: all three.
struct ScenarioSpec {
  std::string name = "origin";
  bool corrupt_ratio_fn = false;
  bool corrupt_q_fn = false;
  bool corrupt_transition_fn = false;

  static ScenarioSpec from_name(const std::string& name);
  static const std::vector<std::string>& all_names();
};

/// Grid of experiment settings for a full sweep.
struct SweepSpec {
  std::vector<double> kappas;
  std::vector<double> deltas;
  std::vector<std::pair<int, int>> sizes;  // (N, T)
  int n_replications = 100;
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct ReportRow {
  int replication = 0;
  int iteration = 0;
  double eta1_hat = 0.0;
  double kl = 0.0;
  double value_mc = 0.0;
  double value_exact = 0.0;
  std::string scenario;
  double kappa = 0.0;
  double delta = 0.0;
  int n = 0;
  int t = 0;
  std::uint64_t seed = 0;

  bool operator==(const ReportRow&) const = default;
};

/// Per-replication, per-iteration results of a toy run.
struct ExperimentReport {
  std::vector<ReportRow> rows;

  bool operator==(const ExperimentReport&) const = default;

  void save_csv(const std::filesystem::path& path) const;
  static ExperimentReport load_csv(const std::filesystem::path& path);
  /// Per-iteration mean and 1.96-stderr band of the evaluated values.
  void save_json_summary(const std::filesystem::path& path) const;
};

/// Writes the CSV plus the JSON summary next to it.
void emit_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path);

/// Two states, two actions, r(a,s) = I(s=a), gamma = 0.9, reward noise
/// variance 2 by default, initial and reference distribution (0.4, 0.6).
TabularMDP build_toy_mdp(double noise_var = 2.0);

/// Behavior policy that generated the benchmark data: rows (0.7,0.3), (0.2,0.8).
StochasticPolicy toy_behavior_policy();

/// [[kappa, 1-kappa], [1-kappa, kappa]].
StochasticPolicy kappa_policy(double kappa);

/// Extra knobs for the toy scenario runner.
struct ToyRunConfig {
  int n_folds = 2;
  int n_iterations = 3;
  int mc_rollouts = 1000;
  int pseudo_m = 1000;
  int pseudo_t = -1;  // -1: solver default
  SolverOptions optimizer;
};

/// Runs `n_reps` replications of the enhancement loop on the toy MDP with
/// oracle nuisances corrupted per the scenario, evaluating every iterate by
/// Monte Carlo and by the exact oracle.
ExperimentReport run_toy_scenario(const ScenarioSpec& scenario, double kappa, double delta, int n,
                                  int t, int n_reps, std::uint64_t seed,
                                  const ToyRunConfig& cfg = {});

/// Full grid sweep over kappas, deltas, sizes and the given scenarios.
ExperimentReport run_toy_sweep(const SweepSpec& sweep, const std::vector<ScenarioSpec>& scenarios,
                               const ToyRunConfig& cfg = {});

struct EstimatorComparisonRow {
  std::string estimator;
  std::string scenario;
  int n = 0;
  int t = 0;
  double mean = 0.0;
  double stderr = 0.0;
  double bias_vs_oracle = 0.0;
};

struct EstimatorComparisonReport {
  std::vector<EstimatorComparisonRow> rows;
  void save_csv(const std::filesystem::path& path) const;
};

/// Bias and spread of the four first-order value-difference estimators
/// against the exact oracle, per scenario and sample size. The comparison
/// target policy is fixed to the deterministic a=s policy with pi_old the
/// kappa=0.5 policy.
EstimatorComparisonReport run_estimator_comparison(const std::vector<std::pair<int, int>>& sizes,
                                                   const std::vector<ScenarioSpec>& scenarios,
                                                   int n_reps, std::uint64_t seed,
                                                   const ToyRunConfig& cfg = {});

}  // namespace vepo
