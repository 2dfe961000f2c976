#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>

#include "vepo/mdp_core.hpp"

// Fitted-Q evaluation for a fixed target policy, fitted-Q iteration as the
// built-in initial-policy learner, and the Q-corruption used by the
// robustness studies.

namespace vepo {

struct RegressorConfig {
  enum class Kind { lookup_table, linear_features };

  Kind kind = Kind::lookup_table;
  int max_iters = 1000;
  double tol = 1e-10;
  /// Feature map for linear mode; defaults to per-(s,a) one-hot when unset.
  std::function<Eigen::VectorXd(int s, int a)> feature_map;
  /// Greedy policy extraction in fqi when 0; softmax(Q/tau) when positive.
  double softmax_temperature = 0.0;

  void validate() const;
};

/// Q table with the derived state values and centered advantages for the
/// policy it was fitted against. sum_a pi_old(a|s) adv(a,s) = 0 by
/// construction on every build path.
struct QEstimate {
  Eigen::MatrixXd q;    // (n_states x n_actions)
  Eigen::VectorXd v;    // (n_states)
  Eigen::MatrixXd adv;  // (n_states x n_actions)
  StochasticPolicy fitted_for;

  static QEstimate from_q(Eigen::MatrixXd q, const StochasticPolicy& pi_old);

  void save_csv(const std::filesystem::path& path) const;
};

/// Fitted-Q evaluation of pi_old on a data fold. Lookup mode requires every
/// (s,a) cell to be visited and converges to the fixed point of the
/// empirical Bellman operator. When sup_deltas is given, the sup-norm change
/// of each iterate is appended to it.
QEstimate fqe(const Dataset& fold, const StochasticPolicy& pi_old, const RegressorConfig& cfg,
              double gamma, std::vector<double>* sup_deltas = nullptr);

struct FqiResult {
  QEstimate q_estimate;
  StochasticPolicy policy;
};

/// Fitted-Q iteration with max-action targets; returns the greedy policy
/// (ties toward the smallest action index) or a softmax policy when a
/// temperature is configured. The returned QEstimate is centered against the
/// returned policy.
FqiResult fqi(const Dataset& fold, const RegressorConfig& cfg, double gamma, int n_states,
              int n_actions);

/// Adds i.i.d. Uniform(0,2) noise to every Q entry, then re-derives V and
/// re-centers the advantages so the centering invariant still holds.
QEstimate corrupt_q(const QEstimate& estimate, std::uint64_t seed);

}  // namespace vepo
