#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>

#include "vepo/mdp_core.hpp"

// Minimax estimation of the conditional discounted stationary probability
// ratio with an RKHS discriminator class, plus the ratio corruption used by
// the robustness studies.

namespace vepo {

/// Estimated ratio omega_hat(a',s'; a,s) and its nu-integrated form.
struct RatioEstimate {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd conditional;  // (n_sa x n_sa), row target pair, col anchor pair
  Eigen::MatrixXd integrated;   // (n_states x n_actions) at (s,a)

  int sa(int s, int a) const { return s * n_actions + a; }
  void save_csv(const std::filesystem::path& path) const;
};

struct RatioFitConfig {
  enum class Kernel { tabular_indicator, gaussian_rbf };

  Kernel kernel = Kernel::tabular_indicator;
  /// Multiplier on the median-heuristic bandwidth (RBF kernel only).
  double rbf_bandwidth_multiplier = 1.0;
  double step_size = 2.0;
  int batch_size = 24;
  int n_iterations = 1500;
  std::uint64_t seed = 0;

  void validate() const;
};

/// omega evaluated at (target pair; anchor pair).
using RatioFn = std::function<double(int a_target, int s_target, int a_anchor, int s_anchor)>;
/// Discriminator f evaluated at ((s,a) pair; anchor pair).
using TestFn = std::function<double(int s1, int a1, int a_anchor, int s_anchor)>;

/// One-sample residual of the ratio estimating equation:
///   omega(target; anchor) * {gamma * E_{a~pi(.|s_next)} f((s_next,a); anchor)
///                            - f(target; anchor)}
///   + (1-gamma) * f(anchor; anchor).
/// Mean zero over independent tuple pairs exactly when omega is the true ratio.
double delta_residual(const RatioFn& omega, const TestFn& f, const StochasticPolicy& pi,
                      double gamma, const Transition& transition, const Transition& anchor);

/// Minimizes the closed-form RKHS objective over a softplus-parameterized
/// tabular ratio by minibatch SGD, then normalizes every anchor slice against
/// the fold's empirical state-action frequency. The integrated ratio is
/// assembled from nu and pi_old.
RatioEstimate fit_ratio_minimax(const Dataset& fold, const StochasticPolicy& pi_old, double gamma,
                                const Eigen::VectorXd& nu, const RatioFitConfig& cfg);

/// Adds i.i.d. Uniform(0,2) noise to every conditional entry and re-derives
/// the integrated ratio. No re-normalization: the corruption is meant to
/// break consistency.
RatioEstimate corrupt_ratio(const RatioEstimate& estimate, const StochasticPolicy& pi_old,
                            const Eigen::VectorXd& nu, std::uint64_t seed);

/// Empirical state-action frequency of the fold's tuples, (n_states x n_actions).
Eigen::MatrixXd empirical_sa_frequency(const Dataset& fold, int n_states, int n_actions);

/// nu- and pi_old-integrated form of a conditional ratio table.
Eigen::MatrixXd integrate_ratio(const Eigen::MatrixXd& conditional, const StochasticPolicy& pi_old,
                                const Eigen::VectorXd& nu);

/// Full-data empirical minimax objective (quadruple sum over tuple pairs)
/// for a fixed ratio table. Desk-scale diagnostic; O(pairs^2) in the number
/// of transitions.
double ratio_objective_full(const Dataset& fold, const StochasticPolicy& pi_old, double gamma,
                            const Eigen::MatrixXd& conditional, const RatioFitConfig& cfg);

}  // namespace vepo
