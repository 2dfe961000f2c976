#include "vepo/nuisance_ratio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

namespace vepo {

void RatioFitConfig::validate() const {
  if (step_size <= 0.0) throw ConfigError("RatioFitConfig: step_size must be positive");
  if (batch_size < 2) throw ConfigError("RatioFitConfig: batch_size must be >= 2");
  if (n_iterations < 1) throw ConfigError("RatioFitConfig: n_iterations must be >= 1");
  if (rbf_bandwidth_multiplier <= 0.0)
    throw ConfigError("RatioFitConfig: bandwidth multiplier must be positive");
}

void RatioEstimate::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "a_prime,s_prime,a,s,omega\n";
  char buf[64];
  for (int sp = 0; sp < n_states; ++sp)
    for (int ap = 0; ap < n_actions; ++ap)
      for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
          std::snprintf(buf, sizeof(buf), "%.17g", conditional(sa(sp, ap), sa(s, a)));
          out << ap << ',' << sp << ',' << a << ',' << s << ',' << buf << '\n';
        }
}

double delta_residual(const RatioFn& omega, const TestFn& f, const StochasticPolicy& pi,
                      double gamma, const Transition& transition, const Transition& anchor) {
  double propagated = 0.0;
  for (int a = 0; a < pi.n_actions(); ++a)
    propagated += pi.prob(a, transition.s_next) * f(transition.s_next, a, anchor.a, anchor.s);
  const double w = omega(transition.a, transition.s, anchor.a, anchor.s);
  return w * (gamma * propagated - f(transition.s, transition.a, anchor.a, anchor.s)) +
         (1.0 - gamma) * f(anchor.s, anchor.a, anchor.a, anchor.s);
}

Eigen::MatrixXd empirical_sa_frequency(const Dataset& fold, int n_states, int n_actions) {
  Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (const auto& traj : fold.trajectories)
    for (const auto& step : traj.steps) {
      if (step.s < 0 || step.s >= n_states || step.a < 0 || step.a >= n_actions)
        throw ConfigError("empirical_sa_frequency: tuple outside the state/action space");
      freq(step.s, step.a) += 1.0;
    }
  const double total = freq.sum();
  if (total == 0.0) throw ConfigError("empirical_sa_frequency: empty fold");
  return freq / total;
}

Eigen::MatrixXd integrate_ratio(const Eigen::MatrixXd& conditional, const StochasticPolicy& pi_old,
                                const Eigen::VectorXd& nu) {
  const int n_states = pi_old.n_states();
  const int n_actions = pi_old.n_actions();
  Eigen::MatrixXd integrated = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      const double weight = pi_old.prob(a, s) * nu(s);
      for (int sp = 0; sp < n_states; ++sp)
        for (int ap = 0; ap < n_actions; ++ap)
          integrated(sp, ap) += weight * conditional(sp * n_actions + ap, s * n_actions + a);
    }
  return integrated;
}

namespace {

// Tuples collapse to (state-action index, next-state) types: the estimating
// function depends on a tuple only through these.
struct FoldIndex {
  std::vector<int> tuple_x;     // sa index per tuple
  std::vector<int> tuple_type;  // type id per tuple
  std::vector<int> type_x;      // per type
  std::vector<int> type_snext;  // per type
  int n_tuples = 0;
};

FoldIndex index_fold(const Dataset& fold, int n_states, int n_actions) {
  FoldIndex idx;
  std::vector<int> type_of(static_cast<std::size_t>(n_states * n_actions * n_states), -1);
  for (const auto& traj : fold.trajectories)
    for (const auto& step : traj.steps) {
      if (step.s < 0 || step.s >= n_states || step.a < 0 || step.a >= n_actions ||
          step.s_next < 0 || step.s_next >= n_states)
        throw ConfigError("ratio fit: tuple outside the state/action space");
      const int x = step.s * n_actions + step.a;
      const int key = x * n_states + step.s_next;
      if (type_of[static_cast<std::size_t>(key)] < 0) {
        type_of[static_cast<std::size_t>(key)] = static_cast<int>(idx.type_x.size());
        idx.type_x.push_back(x);
        idx.type_snext.push_back(step.s_next);
      }
      idx.tuple_x.push_back(x);
      idx.tuple_type.push_back(type_of[static_cast<std::size_t>(key)]);
    }
  idx.n_tuples = static_cast<int>(idx.tuple_x.size());
  return idx;
}

// Gram matrix of the discriminator kernel over state-action pairs. The
// pair-of-pairs kernel factorizes as K(u1,v1) * K(u2,v2).
Eigen::MatrixXd sa_gram(const RatioFitConfig& cfg, const FoldIndex& idx, int n_states,
                        int n_actions) {
  const int n_sa = n_states * n_actions;
  if (cfg.kernel == RatioFitConfig::Kernel::tabular_indicator)
    return Eigen::MatrixXd::Identity(n_sa, n_sa);
  // Median-heuristic bandwidth over the fold's observed embeddings (s,a).
  std::vector<double> distances;
  const int cap = std::min<int>(idx.n_tuples, 500);
  for (int i = 0; i < cap; ++i)
    for (int j = i + 1; j < cap; ++j) {
      const int xi = idx.tuple_x[static_cast<std::size_t>(i)];
      const int xj = idx.tuple_x[static_cast<std::size_t>(j)];
      const double ds = static_cast<double>(xi / n_actions - xj / n_actions);
      const double da = static_cast<double>(xi % n_actions - xj % n_actions);
      distances.push_back(std::sqrt(ds * ds + da * da));
    }
  std::nth_element(distances.begin(), distances.begin() + distances.size() / 2, distances.end());
  double bandwidth = distances[distances.size() / 2] * cfg.rbf_bandwidth_multiplier;
  if (bandwidth <= 0.0) bandwidth = cfg.rbf_bandwidth_multiplier;
  Eigen::MatrixXd gram(n_sa, n_sa);
  for (int u = 0; u < n_sa; ++u)
    for (int v = 0; v < n_sa; ++v) {
      const double ds = static_cast<double>(u / n_actions - v / n_actions);
      const double da = static_cast<double>(u % n_actions - v % n_actions);
      gram(u, v) = std::exp(-(ds * ds + da * da) / (2.0 * bandwidth * bandwidth));
    }
  return gram;
}

// Signed measures mu_t = gamma * sum_a pi(a|s'') e_{(s'',a)} - e_{x_t} per
// tuple type, premultiplied by the Gram matrix, plus their pairwise Gram.
struct KernelTables {
  Eigen::MatrixXd gram;    // (n_sa x n_sa)
  Eigen::MatrixXd k_mu;    // (n_types x n_sa): row t = (K mu_t)^T
  Eigen::MatrixXd mu_gram; // (n_types x n_types): mu_t1^T K mu_t2
};

KernelTables build_tables(const FoldIndex& idx, const StochasticPolicy& pi_old, double gamma,
                          const Eigen::MatrixXd& gram, int n_actions) {
  const int n_sa = static_cast<int>(gram.rows());
  const int n_types = static_cast<int>(idx.type_x.size());
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n_types, n_sa);
  for (int t = 0; t < n_types; ++t) {
    const int snext = idx.type_snext[static_cast<std::size_t>(t)];
    for (int a = 0; a < n_actions; ++a)
      mu(t, snext * n_actions + a) += gamma * pi_old.prob(a, snext);
    mu(t, idx.type_x[static_cast<std::size_t>(t)]) -= 1.0;
  }
  KernelTables tables;
  tables.gram = gram;
  tables.k_mu = mu * gram;  // gram symmetric
  tables.mu_gram = tables.k_mu * mu.transpose();
  return tables;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

RatioEstimate fit_ratio_minimax(const Dataset& fold, const StochasticPolicy& pi_old, double gamma,
                                const Eigen::VectorXd& nu, const RatioFitConfig& cfg) {
  cfg.validate();
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("fit_ratio_minimax: gamma must lie in [0,1)");
  const int n_states = pi_old.n_states();
  const int n_actions = pi_old.n_actions();
  const int n_sa = n_states * n_actions;
  const FoldIndex idx = index_fold(fold, n_states, n_actions);
  if (idx.n_tuples < 2) throw ConfigError("fit_ratio_minimax: need at least two transitions");

  const Eigen::MatrixXd freq = empirical_sa_frequency(fold, n_states, n_actions);
  if (cfg.kernel == RatioFitConfig::Kernel::tabular_indicator) {
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a)
        if (freq(s, a) == 0.0)
          throw NumericalError("fit_ratio_minimax: tabular kernel requires full coverage, cell "
                               "(s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                               ") unvisited");
  }

  const KernelTables tables =
      build_tables(idx, pi_old, gamma, sa_gram(cfg, idx, n_states, n_actions), n_actions);

  // Softplus-parameterized table, initialized at omega = 1.
  Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(n_sa, n_sa, std::log(std::exp(1.0) - 1.0));
  Eigen::MatrixXd omega = theta.unaryExpr([](double v) { return softplus(v); });

  // Normalization constant per anchor: the empirical-frequency-weighted slice
  // mean, the exact limit of a sampled normalization batch for a tabular omega.
  Eigen::VectorXd freq_flat(n_sa);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) freq_flat(s * n_actions + a) = freq(s, a);

  Rng rng(cfg.seed);
  const int batch = std::min<int>(cfg.batch_size, idx.n_tuples * (idx.n_tuples - 1));
  std::vector<int> anchor_x(static_cast<std::size_t>(batch));
  std::vector<int> trans_type(static_cast<std::size_t>(batch));
  Eigen::VectorXd v(batch), grad_v(batch);
  Eigen::MatrixXd grad(n_sa, n_sa);
  const double one_minus_gamma = 1.0 - gamma;

  // Mild step decay with Polyak averaging over the trailing half.
  const double decay_scale = std::max(1.0, static_cast<double>(cfg.n_iterations));
  const int tail_start = cfg.n_iterations - std::max(1, cfg.n_iterations / 2);
  Eigen::MatrixXd omega_avg = Eigen::MatrixXd::Zero(n_sa, n_sa);
  int n_averaged = 0;

  for (int iter = 0; iter < cfg.n_iterations; ++iter) {
    // Distinct ordered tuple pairs (anchor j, transition k).
    std::set<std::pair<int, int>> seen;
    for (int q = 0; q < batch; ++q) {
      int j = 0;
      int k = 0;
      for (int guard = 0;; ++guard) {
        j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(idx.n_tuples));
        k = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(idx.n_tuples));
        if (j == k) continue;
        if (seen.emplace(j, k).second || guard >= 64) break;
      }
      anchor_x[static_cast<std::size_t>(q)] = idx.tuple_x[static_cast<std::size_t>(j)];
      trans_type[static_cast<std::size_t>(q)] = idx.tuple_type[static_cast<std::size_t>(k)];
    }

    const Eigen::VectorXd z = omega.transpose() * freq_flat;

    for (int q = 0; q < batch; ++q)
      v(q) = omega(idx.type_x[static_cast<std::size_t>(trans_type[static_cast<std::size_t>(q)])],
                   anchor_x[static_cast<std::size_t>(q)]) /
             z(anchor_x[static_cast<std::size_t>(q)]);

    // dL/dv over the batch quadratic form. The diagonal q1 == q2 combos are
    // excluded: the population objective is a squared mean, so the batch
    // estimate must be the U-statistic over distinct pair samples.
    for (int q1 = 0; q1 < batch; ++q1) {
      double acc = 0.0;
      for (int q2 = 0; q2 < batch; ++q2) {
        if (q2 == q1) continue;
        const double k_anchor = tables.gram(anchor_x[static_cast<std::size_t>(q1)],
                                            anchor_x[static_cast<std::size_t>(q2)]);
        acc += k_anchor * (tables.mu_gram(trans_type[static_cast<std::size_t>(q1)],
                                          trans_type[static_cast<std::size_t>(q2)]) *
                               v(q2) +
                           one_minus_gamma * tables.k_mu(trans_type[static_cast<std::size_t>(q1)],
                                                         anchor_x[static_cast<std::size_t>(q2)]));
      }
      grad_v(q1) = 2.0 * acc / static_cast<double>(batch * (batch - 1));
    }
    if (!grad_v.allFinite())
      throw NumericalError("fit_ratio_minimax: non-finite gradient; try a smaller step_size");

    // Chain rule through v = omega/z and the softplus parameterization.
    grad.setZero();
    for (int q = 0; q < batch; ++q) {
      const int x = anchor_x[static_cast<std::size_t>(q)];
      const int row = idx.type_x[static_cast<std::size_t>(trans_type[static_cast<std::size_t>(q)])];
      grad(row, x) += grad_v(q) * logistic(theta(row, x)) / z(x);
      const double z_part = -grad_v(q) * omega(row, x) / (z(x) * z(x));
      for (int u = 0; u < n_sa; ++u)
        grad(u, x) += z_part * freq_flat(u) * logistic(theta(u, x));
    }
    theta -= cfg.step_size / (1.0 + static_cast<double>(iter) / decay_scale) * grad;
    if (!theta.allFinite())
      throw NumericalError("fit_ratio_minimax: parameters diverged; try a smaller step_size");
    omega = theta.unaryExpr([](double t) { return softplus(t); });
    if (iter >= tail_start) {
      omega_avg += omega;
      ++n_averaged;
    }
  }
  omega = omega_avg / static_cast<double>(n_averaged);

  // Exact slice normalization against the empirical state-action frequency.
  RatioEstimate est;
  est.n_states = n_states;
  est.n_actions = n_actions;
  est.conditional = omega;
  for (int x = 0; x < n_sa; ++x) {
    const double mass = freq_flat.dot(est.conditional.col(x));
    if (mass <= 0.0)
      throw NumericalError("fit_ratio_minimax: degenerate normalization for anchor " +
                           std::to_string(x));
    est.conditional.col(x) /= mass;
  }
  est.integrated = integrate_ratio(est.conditional, pi_old, nu);
  return est;
}

RatioEstimate corrupt_ratio(const RatioEstimate& estimate, const StochasticPolicy& pi_old,
                            const Eigen::VectorXd& nu, std::uint64_t seed) {
  Rng rng(seed);
  RatioEstimate out = estimate;
  for (Eigen::Index row = 0; row < out.conditional.rows(); ++row)
    for (Eigen::Index col = 0; col < out.conditional.cols(); ++col)
      out.conditional(row, col) += rng.uniform(0.0, 2.0);
  out.integrated = integrate_ratio(out.conditional, pi_old, nu);
  return out;
}

double ratio_objective_full(const Dataset& fold, const StochasticPolicy& pi_old, double gamma,
                            const Eigen::MatrixXd& conditional, const RatioFitConfig& cfg) {
  const int n_states = pi_old.n_states();
  const int n_actions = pi_old.n_actions();
  const int n_sa = n_states * n_actions;
  const FoldIndex idx = index_fold(fold, n_states, n_actions);
  const Eigen::MatrixXd gram = sa_gram(cfg, idx, n_states, n_actions);
  const int n_types = static_cast<int>(idx.type_x.size());

  Eigen::VectorXd anchor_count = Eigen::VectorXd::Zero(n_sa);
  Eigen::VectorXd type_count = Eigen::VectorXd::Zero(n_types);
  for (int i = 0; i < idx.n_tuples; ++i) {
    anchor_count(idx.tuple_x[static_cast<std::size_t>(i)]) += 1.0;
    type_count(idx.tuple_type[static_cast<std::size_t>(i)]) += 1.0;
  }

  // The summed estimating functional over all ordered tuple pairs is a finite
  // signed combination of kernel sections; W carries its weights.
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n_sa, n_sa);
  const double n_total = static_cast<double>(idx.n_tuples);
  for (int x = 0; x < n_sa; ++x) {
    if (anchor_count(x) == 0.0) continue;
    for (int t = 0; t < n_types; ++t) {
      // Ordered pairs with anchor value x and transition type t, minus the
      // diagonal j == k cases.
      double pairs = anchor_count(x) * type_count(t);
      if (idx.type_x[static_cast<std::size_t>(t)] == x) pairs -= type_count(t);
      if (pairs <= 0.0) continue;
      const double w = conditional(idx.type_x[static_cast<std::size_t>(t)], x);
      const int snext = idx.type_snext[static_cast<std::size_t>(t)];
      for (int a = 0; a < n_actions; ++a)
        weights(snext * n_actions + a, x) += pairs * w * gamma * pi_old.prob(a, snext);
      weights(idx.type_x[static_cast<std::size_t>(t)], x) -= pairs * w;
    }
    weights(x, x) += (1.0 - gamma) * (n_total - 1.0) * anchor_count(x);
  }
  return (weights.array() * (gram * weights * gram).array()).sum();
}

}  // namespace vepo
