#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "vepo/mdp_core.hpp"
#include "vepo/nuisance_q.hpp"

// Transition-kernel estimation (tabular MLE plus a reduced conditional
// Gaussian model for continuous states), pseudo-sample generation for the
// discounted visitation distributions, and the transition corruption.

namespace vepo {

/// Row-normalized smoothed transition counts.
struct TabularTransition {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd p;  // (n_states*n_actions x n_states)

  int sa(int s, int a) const { return s * n_actions + a; }
  void validate() const;
};

/// Continuous-state transitions for the Gaussian model.
struct ContinuousStep {
  Eigen::VectorXd s;
  int a = 0;
  Eigen::VectorXd s_next;
};

struct ContinuousDataset {
  int n_actions = 0;
  int state_dim = 0;
  std::vector<ContinuousStep> steps;
};

/// Conditional Gaussian transition model with per-action linear mean and
/// covariance-entry regressions; queried covariances are projected to the
/// nearest symmetric positive-definite matrix (eigenvalue floor 1e-6).
class GaussianTransition {
 public:
  Eigen::VectorXd mean(const Eigen::VectorXd& s, int a) const;
  Eigen::MatrixXd covariance(const Eigen::VectorXd& s, int a) const;
  Eigen::VectorXd sample_next(const Eigen::VectorXd& s, int a, Rng& rng) const;
  int state_dim() const { return state_dim_; }

  friend GaussianTransition fit_transition_gaussian(const ContinuousDataset& data,
                                                    const RegressorConfig& regressor);

 private:
  int state_dim_ = 0;
  int n_actions_ = 0;
  // mean_coef_[a] is (state_dim x (state_dim+1)): affine map [1; s] -> mean.
  std::vector<Eigen::MatrixXd> mean_coef_;
  // cov_coef_[a] row (j1*state_dim+j2) holds the affine map for Sigma_{j1,j2}.
  std::vector<Eigen::MatrixXd> cov_coef_;
};

/// M rollout chains of T'+1 states; geometric weights (1-gamma)*gamma^t are
/// implied and applied analytically, never by resampling.
struct PseudoSampleSet {
  std::vector<std::vector<int>> chains;
  double gamma = 0.0;

  int horizon() const { return chains.empty() ? 0 : static_cast<int>(chains[0].size()) - 1; }
  void save_csv(const std::filesystem::path& path) const;
};

/// p_hat(s'|a,s) = (count(s,a,s') + smoothing) / (count(s,a) + smoothing*n_states).
TabularTransition fit_transition_tabular(const Dataset& fold, double smoothing, int n_states,
                                         int n_actions);

GaussianTransition fit_transition_gaussian(const ContinuousDataset& data,
                                           const RegressorConfig& regressor);

/// Rolls M chains from anchor (s,a) under the estimated kernel with actions
/// from pi_old. Deterministic given the seed.
PseudoSampleSet pseudo_samples_conditional(const TabularTransition& model,
                                           const StochasticPolicy& pi_old, double gamma, int a,
                                           int s, int m_chains, int t_prime, std::uint64_t seed);

/// As above but chains start from nu and the action precedes the first
/// transition.
PseudoSampleSet pseudo_samples_integrated(const TabularTransition& model,
                                          const StochasticPolicy& pi_old, double gamma,
                                          const Eigen::VectorXd& nu, int m_chains, int t_prime,
                                          std::uint64_t seed);

/// (1-gamma) M^{-1} sum_m sum_{t'<=T'} gamma^{t'} f(state).
double approx_visitation_expectation(const PseudoSampleSet& samples,
                                     const std::function<double(int)>& f);

/// Per-state weighted empirical mass of the sample set. Sums to
/// 1 - gamma^{T'+1}; dot products against it equal the weighted average above.
Eigen::VectorXd pseudo_state_weights(const PseudoSampleSet& samples, int n_states);

/// Multiplies every kernel entry by an independent Exp(1) draw, clips to
/// [0,1] and re-normalizes rows. Rows clipped to all-zero fall back to
/// uniform.
TabularTransition corrupt_transition(const TabularTransition& model, std::uint64_t seed);

/// Default rollout length: smallest T' with gamma^{T'} < 1e-3.
int default_pseudo_horizon(double gamma);

}  // namespace vepo
