#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "vepo/mdp_core.hpp"
#include "vepo/nuisance_q.hpp"
#include "vepo/nuisance_ratio.hpp"
#include "vepo/nuisance_transition.hpp"

// The triply-robust estimating function psi = psi1 + psi2 + psi3 for the
// first-order value difference, its cross-fitted estimator, and the three
// baseline estimators it is compared against.

namespace vepo {

/// Per-fold nuisance bundle consumed by the estimating function. Holds the
/// fitted (or injected) Q/V/A, ratio and transition estimates plus derived
/// caches: the pseudo-sample state weights standing in for the integrated
/// visitation, and the conditional visitation of the estimated kernel
/// (exact tabular formula, no Monte Carlo).
struct NuisanceSet {
  StochasticPolicy pi_old;
  QEstimate q;
  RatioEstimate ratio;
  TabularTransition transition;
  PseudoSampleSet d_nu_samples;
  double gamma = 0.0;

  Eigen::VectorXd d_nu_weights;  // per-state mass of d_nu_samples, sums to 1-gamma^{T'+1}
  Eigen::MatrixXd d_cond;        // (n_sa x n_states): d_tilde(s*|a,s) of the estimated kernel

  /// Computes the caches and enforces the advantage centering invariant.
  static NuisanceSet build(StochasticPolicy pi_old, QEstimate q, RatioEstimate ratio,
                           TabularTransition transition, PseudoSampleSet d_nu_samples,
                           double gamma);

  /// E_{S* ~ d_tilde(.|a,s)} g(S*) for a per-state value vector g.
  double conditional_expectation(int a, int s, const Eigen::VectorXd& g) const;
};

/// Trajectory-level fold split; sizes differ by at most one.
struct FoldAssignment {
  int n_folds = 1;
  std::vector<int> fold_of_traj;

  static FoldAssignment split(std::size_t n_traj, int n_folds, std::uint64_t seed);
  void validate() const;
};

/// Plug-in term: E_{S*~d_nu} sum_a pi(a|S*) A_tilde(a,S*).
double psi1(const StochasticPolicy& pi, const NuisanceSet& nuis);

/// Bellman-residual augmentation weighted by the conditional ratio.
double psi2(const Transition& o, const StochasticPolicy& pi, const NuisanceSet& nuis);

/// Visitation augmentation weighted by the integrated ratio.
double psi3(const Transition& o, const StochasticPolicy& pi, const NuisanceSet& nuis);

double psi_total(const Transition& o, const StochasticPolicy& pi, const NuisanceSet& nuis);

/// Cross-fitted estimator: tuples in fold l are scored with the nuisances
/// fitted on the complement of fold l, averaged over all decision points.
double eta1_crossfit(const Dataset& data, const FoldAssignment& folds,
                     const std::vector<NuisanceSet>& per_fold_nuisances,
                     const StochasticPolicy& pi);

/// The estimator is linear in the policy: eta1_hat(pi) =
/// sum_{s,a} coeffs(s,a) pi(a|s) + constant. Used by the trust-region solver.
struct Eta1Linearization {
  Eigen::MatrixXd coeffs;
  double constant = 0.0;

  double evaluate(const StochasticPolicy& pi) const {
    return (coeffs.array() * pi.matrix().array()).sum() + constant;
  }
};

Eta1Linearization eta1_coefficients(const Dataset& data, const FoldAssignment& folds,
                                    const std::vector<NuisanceSet>& per_fold_nuisances);

/// Baseline (i): plug-in, identical to psi1.
double eta1_plugin(const StochasticPolicy& pi, const NuisanceSet& nuis);

/// Baseline (ii): importance sampling against rewards with the conditional ratio.
double eta1_is1(const Dataset& fold, const StochasticPolicy& pi, const NuisanceSet& nuis);

/// Baseline (iii): importance sampling with the integrated ratio and advantages.
double eta1_is2(const Dataset& fold, const StochasticPolicy& pi, const NuisanceSet& nuis);

}  // namespace vepo
