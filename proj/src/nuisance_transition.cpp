#include "vepo/nuisance_transition.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

namespace vepo {

void TabularTransition::validate() const {
  if (n_states < 1 || n_actions < 1 || p.rows() != n_states * n_actions || p.cols() != n_states)
    throw ConfigError("TabularTransition: inconsistent shape");
  for (Eigen::Index row = 0; row < p.rows(); ++row) {
    if (p.row(row).minCoeff() < 0.0)
      throw ConfigError("TabularTransition: negative entry in row " + std::to_string(row));
    if (std::abs(p.row(row).sum() - 1.0) > 1e-12)
      throw ConfigError("TabularTransition: row " + std::to_string(row) + " does not sum to 1");
  }
}

TabularTransition fit_transition_tabular(const Dataset& fold, double smoothing, int n_states,
                                         int n_actions) {
  if (fold.total_steps() == 0) throw ConfigError("fit_transition_tabular: empty fold");
  if (smoothing <= 0.0) throw ConfigError("fit_transition_tabular: smoothing must be positive");
  TabularTransition model;
  model.n_states = n_states;
  model.n_actions = n_actions;
  model.p = Eigen::MatrixXd::Constant(n_states * n_actions, n_states, smoothing);
  for (const auto& traj : fold.trajectories)
    for (const auto& step : traj.steps) {
      if (step.s < 0 || step.s >= n_states || step.a < 0 || step.a >= n_actions ||
          step.s_next < 0 || step.s_next >= n_states)
        throw ConfigError("fit_transition_tabular: tuple outside the state/action space");
      model.p(model.sa(step.s, step.a), step.s_next) += 1.0;
    }
  for (Eigen::Index row = 0; row < model.p.rows(); ++row) model.p.row(row) /= model.p.row(row).sum();
  return model;
}

namespace {

Eigen::VectorXd affine_features(const Eigen::VectorXd& s) {
  Eigen::VectorXd phi(s.size() + 1);
  phi(0) = 1.0;
  phi.tail(s.size()) = s;
  return phi;
}

// Least squares with a ridge fallback on rank deficiency.
Eigen::MatrixXd solve_ls(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets,
                         const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    std::cerr << "fit_transition_gaussian: rank-deficient design for " << what
              << "; using a ridge-regularized solve\n";
    const Eigen::MatrixXd gram = design.transpose() * design +
                                 1e-8 * Eigen::MatrixXd::Identity(design.cols(), design.cols());
    return gram.ldlt().solve(design.transpose() * targets);
  }
  return qr.solve(targets);
}

}  // namespace

GaussianTransition fit_transition_gaussian(const ContinuousDataset& data,
                                           const RegressorConfig& regressor) {
  regressor.validate();
  if (data.state_dim < 1) throw ConfigError("fit_transition_gaussian: state dimension must be >= 1");
  if (data.steps.empty()) throw ConfigError("fit_transition_gaussian: empty dataset");
  GaussianTransition model;
  model.state_dim_ = data.state_dim;
  model.n_actions_ = data.n_actions;
  model.mean_coef_.resize(static_cast<std::size_t>(data.n_actions));
  model.cov_coef_.resize(static_cast<std::size_t>(data.n_actions));
  const int dim = data.state_dim;
  for (int a = 0; a < data.n_actions; ++a) {
    std::vector<const ContinuousStep*> rows;
    for (const auto& step : data.steps)
      if (step.a == a) rows.push_back(&step);
    if (rows.empty())
      throw NumericalError("fit_transition_gaussian: no transitions for action " +
                           std::to_string(a));
    Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), dim + 1);
    Eigen::MatrixXd next(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      design.row(static_cast<Eigen::Index>(i)) = affine_features(rows[i]->s).transpose();
      next.row(static_cast<Eigen::Index>(i)) = rows[i]->s_next.transpose();
    }
    // Per-coordinate mean regression, then entrywise regression of the
    // residual products for the covariance model.
    const Eigen::MatrixXd mean_coef = solve_ls(design, next, "the mean model");
    model.mean_coef_[static_cast<std::size_t>(a)] = mean_coef.transpose();  // (dim x dim+1)
    const Eigen::MatrixXd residuals = next - design * mean_coef;
    Eigen::MatrixXd products(static_cast<Eigen::Index>(rows.size()), dim * dim);
    for (Eigen::Index i = 0; i < residuals.rows(); ++i)
      for (int j1 = 0; j1 < dim; ++j1)
        for (int j2 = 0; j2 < dim; ++j2)
          products(i, j1 * dim + j2) = residuals(i, j1) * residuals(i, j2);
    const Eigen::MatrixXd cov_coef = solve_ls(design, products, "the covariance model");
    model.cov_coef_[static_cast<std::size_t>(a)] = cov_coef.transpose();  // (dim^2 x dim+1)
  }
  return model;
}

Eigen::VectorXd GaussianTransition::mean(const Eigen::VectorXd& s, int a) const {
  if (a < 0 || a >= n_actions_) throw ConfigError("GaussianTransition::mean: action out of range");
  return mean_coef_[static_cast<std::size_t>(a)] * affine_features(s);
}

Eigen::MatrixXd GaussianTransition::covariance(const Eigen::VectorXd& s, int a) const {
  if (a < 0 || a >= n_actions_)
    throw ConfigError("GaussianTransition::covariance: action out of range");
  const Eigen::VectorXd flat = cov_coef_[static_cast<std::size_t>(a)] * affine_features(s);
  Eigen::MatrixXd sigma(state_dim_, state_dim_);
  for (int j1 = 0; j1 < state_dim_; ++j1)
    for (int j2 = 0; j2 < state_dim_; ++j2) sigma(j1, j2) = flat(j1 * state_dim_ + j2);
  sigma = 0.5 * (sigma + sigma.transpose().eval());
  // Nearest symmetric positive-definite projection with eigenvalue floor.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(1e-6);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::VectorXd GaussianTransition::sample_next(const Eigen::VectorXd& s, int a, Rng& rng) const {
  const Eigen::MatrixXd chol = covariance(s, a).llt().matrixL();
  Eigen::VectorXd z(state_dim_);
  for (int j = 0; j < state_dim_; ++j) z(j) = rng.gaussian();
  return mean(s, a) + chol * z;
}

void PseudoSampleSet::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "chain_id,t,state\n";
  for (std::size_t m = 0; m < chains.size(); ++m)
    for (std::size_t t = 0; t < chains[m].size(); ++t)
      out << m << ',' << t << ',' << chains[m][t] << '\n';
}

namespace {

void check_pseudo_args(const TabularTransition& model, const StochasticPolicy& pi_old,
                       double gamma, int m_chains, int t_prime) {
  model.validate();
  if (pi_old.n_states() != model.n_states || pi_old.n_actions() != model.n_actions)
    throw ConfigError("pseudo samples: policy shape does not match the kernel");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("pseudo samples: gamma must lie in [0,1)");
  if (m_chains < 1) throw ConfigError("pseudo samples: need at least one chain");
  if (t_prime < 0) throw ConfigError("pseudo samples: negative horizon");
}

int sample_row(const Eigen::MatrixXd& table, int row, Rng& rng) {
  const Eigen::VectorXd probs = table.row(row);
  return rng.categorical({probs.data(), static_cast<std::size_t>(probs.size())});
}

}  // namespace

PseudoSampleSet pseudo_samples_conditional(const TabularTransition& model,
                                           const StochasticPolicy& pi_old, double gamma, int a,
                                           int s, int m_chains, int t_prime, std::uint64_t seed) {
  check_pseudo_args(model, pi_old, gamma, m_chains, t_prime);
  if (s < 0 || s >= model.n_states || a < 0 || a >= model.n_actions)
    throw ConfigError("pseudo_samples_conditional: anchor outside the state/action space");
  PseudoSampleSet set;
  set.gamma = gamma;
  set.chains.resize(static_cast<std::size_t>(m_chains));
  for (int m = 0; m < m_chains; ++m) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
    auto& chain = set.chains[static_cast<std::size_t>(m)];
    chain.reserve(static_cast<std::size_t>(t_prime) + 1);
    int state = s;
    int action = a;
    chain.push_back(state);
    for (int t = 1; t <= t_prime; ++t) {
      state = sample_row(model.p, model.sa(state, action), rng);
      chain.push_back(state);
      action = sample_row(pi_old.matrix(), state, rng);
    }
  }
  return set;
}

PseudoSampleSet pseudo_samples_integrated(const TabularTransition& model,
                                          const StochasticPolicy& pi_old, double gamma,
                                          const Eigen::VectorXd& nu, int m_chains, int t_prime,
                                          std::uint64_t seed) {
  check_pseudo_args(model, pi_old, gamma, m_chains, t_prime);
  if (nu.size() != model.n_states) throw ConfigError("pseudo_samples_integrated: nu has wrong length");
  PseudoSampleSet set;
  set.gamma = gamma;
  set.chains.resize(static_cast<std::size_t>(m_chains));
  const std::span<const double> nu_span(nu.data(), static_cast<std::size_t>(nu.size()));
  for (int m = 0; m < m_chains; ++m) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
    auto& chain = set.chains[static_cast<std::size_t>(m)];
    chain.reserve(static_cast<std::size_t>(t_prime) + 1);
    int state = rng.categorical(nu_span);
    chain.push_back(state);
    for (int t = 0; t < t_prime; ++t) {
      const int action = sample_row(pi_old.matrix(), state, rng);
      state = sample_row(model.p, model.sa(state, action), rng);
      chain.push_back(state);
    }
  }
  return set;
}

double approx_visitation_expectation(const PseudoSampleSet& samples,
                                     const std::function<double(int)>& f) {
  if (samples.chains.empty()) throw ConfigError("approx_visitation_expectation: empty sample set");
  double total = 0.0;
  for (const auto& chain : samples.chains) {
    double discount = 1.0;
    double acc = 0.0;
    for (int state : chain) {
      acc += discount * f(state);
      discount *= samples.gamma;
    }
    total += acc;
  }
  return (1.0 - samples.gamma) * total / static_cast<double>(samples.chains.size());
}

Eigen::VectorXd pseudo_state_weights(const PseudoSampleSet& samples, int n_states) {
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(n_states);
  for (const auto& chain : samples.chains) {
    double discount = 1.0;
    for (int state : chain) {
      if (state < 0 || state >= n_states)
        throw ConfigError("pseudo_state_weights: state outside the given space");
      weights(state) += discount;
      discount *= samples.gamma;
    }
  }
  return (1.0 - samples.gamma) / static_cast<double>(samples.chains.size()) * weights;
}

TabularTransition corrupt_transition(const TabularTransition& model, std::uint64_t seed) {
  model.validate();
  Rng rng(seed);
  TabularTransition out = model;
  for (Eigen::Index row = 0; row < out.p.rows(); ++row) {
    for (Eigen::Index col = 0; col < out.p.cols(); ++col)
      out.p(row, col) = std::min(1.0, std::max(0.0, out.p(row, col) * rng.exponential()));
    const double total = out.p.row(row).sum();
    if (total <= 0.0) {
      std::cerr << "corrupt_transition: row " << row << " clipped to zero; using a uniform row\n";
      out.p.row(row).setConstant(1.0 / static_cast<double>(out.n_states));
    } else {
      out.p.row(row) /= total;
    }
  }
  return out;
}

int default_pseudo_horizon(double gamma) {
  if (gamma <= 0.0) return 0;
  return static_cast<int>(std::ceil(std::log(1e-3) / std::log(gamma)));
}

}  // namespace vepo
