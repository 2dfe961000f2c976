#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "vepo/errors.hpp"
#include "vepo/rng.hpp"

// Finite MDPs, trajectory simulation and exact linear-algebra oracles for the
// population quantities used throughout the library: Q/V/A, discounted
// visitation, the stationary state-action distribution and the discounted
// stationary probability ratio.
//
// Layout conventions used everywhere:
//  - state-action pairs flatten as sa = s * n_actions + a
//  - policy tables are (n_states x n_actions), (s,a) entry = pi(a|s)
//  - transition kernels are (n_states*n_actions x n_states), row sa, col s'
//  - ratio tensors are (n_sa x n_sa), row = target pair, col = anchor pair

namespace vepo {

/// Per-state action distributions pi(a|s). Rows sum to one.
class StochasticPolicy {
 public:
  /// Validates row sums (1 within 1e-12) and nonnegativity.
  explicit StochasticPolicy(Eigen::MatrixXd probs);

  static StochasticPolicy uniform(int n_states, int n_actions);
  /// Point mass on action_of_state[s] in each state.
  static StochasticPolicy deterministic(const std::vector<int>& action_of_state, int n_actions);
  /// Convex combination (1-eps)*a + eps*b.
  static StochasticPolicy mix(const StochasticPolicy& a, const StochasticPolicy& b, double eps);

  double prob(int a, int s) const { return probs_(s, a); }
  const Eigen::MatrixXd& matrix() const { return probs_; }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

  static StochasticPolicy load_json(const std::filesystem::path& path);
  void save_json(const std::filesystem::path& path) const;

 private:
  Eigen::MatrixXd probs_;
};

/// Finite MDP with Gaussian reward noise around a mean-reward table.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd transition;    // (n_states*n_actions x n_states), p(s'|a,s)
  Eigen::MatrixXd mean_reward;   // (n_states x n_actions), r(s,a)
  double reward_noise_var = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd initial_dist;   // distribution of S_0
  Eigen::VectorXd reference_dist; // nu, strictly positive

  int sa(int s, int a) const { return s * n_actions + a; }
  double p(int s_next, int a, int s) const { return transition(sa(s, a), s_next); }
  double r(int s, int a) const { return mean_reward(s, a); }

  /// Checks row sums, distribution normalization and nu > 0.
  void validate() const;

  /// State chain P_pi(s'|s) = sum_a pi(a|s) p(s'|a,s).
  Eigen::MatrixXd policy_state_chain(const StochasticPolicy& pi) const;

  void require_compatible(const StochasticPolicy& pi, const char* where) const;

  static TabularMDP load_json(const std::filesystem::path& path);
  void save_json(const std::filesystem::path& path) const;
};

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
};

struct Trajectory {
  std::vector<Transition> steps;
};

/// Offline data: N trajectories of (s, a, r, s') tuples.
struct Dataset {
  std::vector<Trajectory> trajectories;

  std::size_t n_trajectories() const { return trajectories.size(); }
  std::size_t total_steps() const;
  /// Consecutive tuples within a trajectory must chain: steps[k].s_next == steps[k+1].s.
  void validate() const;

  static Dataset load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
};

/// Discounted visitation d^pi: conditional slices d(s'|a,s) and the
/// nu-integrated state distribution.
struct VisitationDistribution {
  Eigen::MatrixXd conditional;  // (n_sa x n_states), row anchor, col s'
  Eigen::VectorXd integrated;   // d^{pi,nu}(s')
};

/// Discounted stationary probability ratio omega^pi together with its
/// nu-integrated form and the behavior stationary distribution it divides by.
struct RatioTensor {
  Eigen::MatrixXd conditional;  // (n_sa x n_sa), omega(target | anchor)
  Eigen::MatrixXd integrated;   // (n_states x n_actions), omega^nu(a',s') at (s',a')
  Eigen::MatrixXd stationary;   // (n_states x n_actions), p_inf(a,s) at (s,a)
};

struct McValue {
  double mean = 0.0;
  double stderr = 0.0;
};

/// Rolls out `n_traj` trajectories of length `horizon` under `behavior`.
/// s0 ~ initial_dist, a ~ behavior(.|s), r = r(s,a) + N(0, noise_var),
/// s' ~ p(.|a,s). Deterministic given the seed.
Dataset simulate_dataset(const TabularMDP& mdp, const StochasticPolicy& behavior, int n_traj,
                         int horizon, std::uint64_t seed);

/// Solves the policy-evaluation Bellman system exactly (dense LU).
/// Returned table is (n_states x n_actions).
Eigen::MatrixXd exact_q(const TabularMDP& mdp, const StochasticPolicy& pi);

/// V(s) = sum_a pi(a|s) Q(a,s) for a given Q table.
Eigen::VectorXd state_values(const Eigen::MatrixXd& q, const StochasticPolicy& pi);

/// A = Q - V, centered so sum_a pi(a|s) A(a,s) = 0.
Eigen::MatrixXd exact_advantage(const TabularMDP& mdp, const StochasticPolicy& pi);

/// nu-integrated value sum_s nu(s) V^pi(s).
double exact_value(const TabularMDP& mdp, const StochasticPolicy& pi);

/// Discounted visitation by dense resolvent solve.
VisitationDistribution exact_visitation(const TabularMDP& mdp, const StochasticPolicy& pi);

/// Stationary distribution of the (A_t, S_t) chain under `behavior`.
/// Throws NumericalError if the induced chain does not have a unique
/// strictly positive stationary distribution.
Eigen::MatrixXd exact_stationary(const TabularMDP& mdp, const StochasticPolicy& behavior);

/// Discounted stationary probability ratio of `pi` against the stationary
/// distribution of `behavior`.
RatioTensor exact_ratio(const TabularMDP& mdp, const StochasticPolicy& pi,
                        const StochasticPolicy& behavior);

/// First-order value-difference term between pi and pi_old.
double exact_eta1(const TabularMDP& mdp, const StochasticPolicy& pi,
                  const StochasticPolicy& pi_old);

/// Second-order remainder: (1-gamma)(V(pi) - V(pi_old)) - eta1.
double exact_eta2(const TabularMDP& mdp, const StochasticPolicy& pi,
                  const StochasticPolicy& pi_old);

/// Truncated-rollout Monte Carlo estimate of the nu-integrated value.
/// The horizon satisfies gamma^T * r_max/(1-gamma) < 1e-4. By default the
/// mean-reward table is accumulated so the spread reflects trajectory
/// randomness only; set noisy_rewards to include reward noise.
McValue monte_carlo_value(const TabularMDP& mdp, const StochasticPolicy& pi, int n_rollouts,
                          std::uint64_t seed, bool noisy_rewards = false);

/// Weighted KL divergence sum_s w(s) KL(pi_old(.|s) || pi(.|s)).
/// Throws NumericalError when pi puts zero mass where pi_old does not.
double avg_kl(const StochasticPolicy& pi_old, const StochasticPolicy& pi,
              const Eigen::VectorXd& state_weights);

}  // namespace vepo
