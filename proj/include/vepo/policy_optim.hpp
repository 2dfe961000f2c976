#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "vepo/eta_estimators.hpp"
#include "vepo/mdp_core.hpp"
#include "vepo/nuisance_q.hpp"
#include "vepo/nuisance_ratio.hpp"
#include "vepo/nuisance_transition.hpp"

// KL-trust-region policy updates over the linearized value-difference
// objective, the penalized variant, and the full enhancement loop.

namespace vepo {

struct SolverOptions {
  double lambda_min = 1e-8;
  double lambda_max = 1e6;
  int dual_max_iters = 60;
  double dual_bisection_tol = 1e-6;  // on |KL(pi) - delta| at the active constraint
  int inner_max_iters = 200;
  double inner_tol = 1e-13;
  double policy_floor = 1e-9;  // keeps later iterations at finite KL
};

/// maximize sum c(s,a) pi(a|s)  s.t.
///   (1/L) sum_l E_{S*~weights_l} KL(pi_old_l(.|S*), pi(.|S*)) <= delta.
struct TrustRegionProblem {
  Eigen::MatrixXd coeffs;  // c(s,a)
  std::vector<StochasticPolicy> pi_old_per_fold;
  std::vector<Eigen::VectorXd> kl_weights_per_fold;  // each sums to 1
  double delta = 0.0;

  void validate() const;
};

struct TrustRegionSolution {
  StochasticPolicy policy;
  double kl = 0.0;      // averaged KL of the returned policy
  double lambda = 0.0;  // dual multiplier (0 when the constraint is slack)
  double objective = 0.0;
};

/// Dual bisection on the KL multiplier with an exact per-state concave
/// subproblem solve. The returned policy always satisfies the constraint
/// within dual_bisection_tol. Throws NumericalError when no policy in the
/// bracket is feasible (reports the constraint slack).
TrustRegionSolution solve_trust_region(const TrustRegionProblem& problem,
                                       const SolverOptions& opts = {});

/// Penalized variant: maximize sum c(s,a) pi(a|s) - penalty * E KL(pi_old, pi)
/// with the same inner solver at fixed multiplier.
StochasticPolicy solve_penalized(const Eigen::MatrixXd& coeffs, const StochasticPolicy& pi_old,
                                 const Eigen::VectorXd& state_weights, double penalty,
                                 const SolverOptions& opts = {});

struct MdpMeta {
  double gamma = 0.0;
  Eigen::VectorXd nu;
  int n_states = 0;
  int n_actions = 0;
};

struct VepoConfig {
  int n_folds = 2;
  double delta = 0.1;
  int n_enhancement_iters = 3;
  RegressorConfig fqe_cfg;
  RatioFitConfig ratio_cfg;
  double transition_smoothing = 0.5;
  int pseudo_m = 1000;
  int pseudo_t = -1;  // -1: default_pseudo_horizon(gamma)
  SolverOptions optimizer;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationDiagnostics {
  int iteration = 0;
  double eta1_hat = 0.0;      // estimator value at the accepted policy
  double kl = 0.0;            // averaged KL actually used
  double q_residual = 0.0;    // mean squared empirical Bellman residual of Q_hat
  double ratio_norm_gap = 0.0;  // max |sum omega_hat p_hat_inf - 1| over anchors
};

struct VepoResult {
  StochasticPolicy policy;
  std::vector<IterationDiagnostics> iterations;
};

using InitialPolicyProvider =
    std::function<StochasticPolicy(const Dataset& fold_complement, std::uint64_t seed)>;

/// Optional overrides for the three nuisance fits; unset entries fall back
/// to fitting from the fold complement (fqe / minimax ratio / tabular MLE).
/// Hooks receive the fold and iteration indices so corruption studies can
/// keep their noise fixed per fold while refitting per iteration.
struct NuisanceHooks {
  std::function<QEstimate(const Dataset& fold_complement, const StochasticPolicy& pi_old, int fold,
                          int iteration)>
      q;
  std::function<RatioEstimate(const Dataset& fold_complement, const StochasticPolicy& pi_old,
                              int fold, int iteration)>
      ratio;
  std::function<TabularTransition(const Dataset& fold_complement, int fold)> transition;
};

/// The full enhancement loop: fold split, per-fold initial policies, per-fold
/// nuisance estimation, cross-fitted linear coefficients, trust-region solve,
/// and repeat with all fold policies set to the accepted update.
VepoResult vepo(const Dataset& data, const MdpMeta& meta, const InitialPolicyProvider& provider,
                const VepoConfig& cfg, const NuisanceHooks& hooks = {});

}  // namespace vepo
