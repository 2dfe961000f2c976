#include "vepo/nuisance_q.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace vepo {

void RegressorConfig::validate() const {
  if (max_iters < 1) throw ConfigError("RegressorConfig: max_iters must be >= 1");
  if (tol <= 0.0) throw ConfigError("RegressorConfig: tol must be positive");
  if (softmax_temperature < 0.0)
    throw ConfigError("RegressorConfig: softmax temperature must be >= 0");
}

QEstimate QEstimate::from_q(Eigen::MatrixXd q, const StochasticPolicy& pi_old) {
  if (q.rows() != pi_old.n_states() || q.cols() != pi_old.n_actions())
    throw ConfigError("QEstimate: table shape does not match the policy");
  QEstimate est{std::move(q), {}, {}, pi_old};
  est.v = (est.q.array() * pi_old.matrix().array()).rowwise().sum();
  est.adv = est.q.colwise() - est.v;
  return est;
}

void QEstimate::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "s,a,q,adv\n";
  char buf[64];
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      std::snprintf(buf, sizeof(buf), "%.17g", q(s, a));
      out << s << ',' << a << ',' << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", adv(s, a));
      out << buf << '\n';
    }
}

namespace {

// Sufficient statistics of a fold: per-cell visit counts, mean rewards and
// successor counts. The lookup-table regression of targets onto (s,a) is the
// per-cell sample mean, so iterating on these statistics reproduces it.
struct FoldStats {
  int n_states = 0;
  int n_actions = 0;
  Eigen::VectorXd counts;       // per sa cell
  Eigen::VectorXd mean_reward;  // per sa cell
  Eigen::MatrixXd successor;    // (n_sa x n_states) transition counts

  int sa(int s, int a) const { return s * n_actions + a; }
};

FoldStats collect_stats(const Dataset& fold, int n_states, int n_actions) {
  FoldStats st;
  st.n_states = n_states;
  st.n_actions = n_actions;
  const int n_sa = n_states * n_actions;
  st.counts = Eigen::VectorXd::Zero(n_sa);
  st.mean_reward = Eigen::VectorXd::Zero(n_sa);
  st.successor = Eigen::MatrixXd::Zero(n_sa, n_states);
  for (const auto& traj : fold.trajectories) {
    for (const auto& step : traj.steps) {
      if (step.s < 0 || step.s >= n_states || step.a < 0 || step.a >= n_actions ||
          step.s_next < 0 || step.s_next >= n_states)
        throw ConfigError("fold contains a tuple outside the state/action space");
      const int cell = st.sa(step.s, step.a);
      st.counts(cell) += 1.0;
      st.mean_reward(cell) += step.r;
      st.successor(cell, step.s_next) += 1.0;
    }
  }
  for (int cell = 0; cell < n_sa; ++cell)
    if (st.counts(cell) > 0.0) st.mean_reward(cell) /= st.counts(cell);
  return st;
}

void require_full_coverage(const FoldStats& st, const char* where) {
  for (int s = 0; s < st.n_states; ++s)
    for (int a = 0; a < st.n_actions; ++a)
      if (st.counts(st.sa(s, a)) == 0.0)
        throw NumericalError(std::string(where) + ": no visits to cell (s=" + std::to_string(s) +
                             ", a=" + std::to_string(a) + "); lookup regression is undefined");
}

// One application of the empirical Bellman operator for either evaluation
// (next_value = policy average) or control (next_value = max).
template <typename NextValue>
Eigen::MatrixXd empirical_backup(const FoldStats& st, const Eigen::MatrixXd& q, double gamma,
                                 NextValue&& next_value) {
  Eigen::VectorXd values(st.n_states);
  for (int sp = 0; sp < st.n_states; ++sp) values(sp) = next_value(q, sp);
  Eigen::MatrixXd out(st.n_states, st.n_actions);
  for (int s = 0; s < st.n_states; ++s)
    for (int a = 0; a < st.n_actions; ++a) {
      const int cell = st.sa(s, a);
      const double future =
          st.counts(cell) > 0.0 ? st.successor.row(cell).dot(values) / st.counts(cell) : 0.0;
      out(s, a) = st.mean_reward(cell) + gamma * future;
    }
  return out;
}

Eigen::VectorXd one_hot_feature(int s, int a, int n_states, int n_actions) {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n_states * n_actions);
  phi(s * n_actions + a) = 1.0;
  return phi;
}

// Least-squares iteration over an explicit feature map. The design factor is
// fixed across iterations; only targets change.
template <typename NextValue>
Eigen::MatrixXd linear_fq_iterate(const Dataset& fold, const RegressorConfig& cfg, double gamma,
                                  int n_states, int n_actions, NextValue&& next_value,
                                  std::vector<double>* sup_deltas) {
  const auto features = cfg.feature_map
                            ? cfg.feature_map
                            : [n_states, n_actions](int s, int a) {
                                return one_hot_feature(s, a, n_states, n_actions);
                              };
  const std::size_t n_rows = fold.total_steps();
  const int dim = static_cast<int>(features(0, 0).size());
  Eigen::MatrixXd design(n_rows, dim);
  std::vector<const Transition*> tuples;
  tuples.reserve(n_rows);
  for (const auto& traj : fold.trajectories)
    for (const auto& step : traj.steps) {
      design.row(static_cast<Eigen::Index>(tuples.size())) = features(step.s, step.a).transpose();
      tuples.push_back(&step);
    }
  const auto solver = (design.transpose() * design).ldlt();
  if (solver.info() != Eigen::Success)
    throw NumericalError("fq linear regression: singular normal equations");

  Eigen::MatrixXd cell_features(n_states * n_actions, dim);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      cell_features.row(s * n_actions + a) = features(s, a).transpose();

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n_states, n_actions);
  Eigen::VectorXd targets(n_rows);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Eigen::VectorXd values(n_states);
    for (int sp = 0; sp < n_states; ++sp) values(sp) = next_value(q, sp);
    for (std::size_t k = 0; k < tuples.size(); ++k)
      targets(static_cast<Eigen::Index>(k)) = tuples[k]->r + gamma * values(tuples[k]->s_next);
    const Eigen::VectorXd beta = solver.solve(design.transpose() * targets);
    const Eigen::VectorXd flat = cell_features * beta;
    Eigen::MatrixXd next(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) next(s, a) = flat(s * n_actions + a);
    const double delta = (next - q).cwiseAbs().maxCoeff();
    if (sup_deltas) sup_deltas->push_back(delta);
    q = next;
    if (delta < cfg.tol) break;
  }
  return q;
}

}  // namespace

QEstimate fqe(const Dataset& fold, const StochasticPolicy& pi_old, const RegressorConfig& cfg,
              double gamma, std::vector<double>* sup_deltas) {
  cfg.validate();
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("fqe: gamma must lie in [0,1)");
  const int n_states = pi_old.n_states();
  const int n_actions = pi_old.n_actions();
  const auto policy_value = [&pi_old, n_actions](const Eigen::MatrixXd& q, int sp) {
    double v = 0.0;
    for (int ap = 0; ap < n_actions; ++ap) v += pi_old.prob(ap, sp) * q(sp, ap);
    return v;
  };
  Eigen::MatrixXd q;
  if (cfg.kind == RegressorConfig::Kind::lookup_table) {
    const FoldStats stats = collect_stats(fold, n_states, n_actions);
    require_full_coverage(stats, "fqe");
    q = Eigen::MatrixXd::Zero(n_states, n_actions);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      const Eigen::MatrixXd next = empirical_backup(stats, q, gamma, policy_value);
      const double delta = (next - q).cwiseAbs().maxCoeff();
      if (sup_deltas) sup_deltas->push_back(delta);
      q = next;
      if (delta < cfg.tol) break;
    }
  } else {
    q = linear_fq_iterate(fold, cfg, gamma, n_states, n_actions, policy_value, sup_deltas);
  }
  return QEstimate::from_q(std::move(q), pi_old);
}

FqiResult fqi(const Dataset& fold, const RegressorConfig& cfg, double gamma, int n_states,
              int n_actions) {
  cfg.validate();
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("fqi: gamma must lie in [0,1)");
  const auto max_value = [](const Eigen::MatrixXd& q, int sp) { return q.row(sp).maxCoeff(); };
  Eigen::MatrixXd q;
  if (cfg.kind == RegressorConfig::Kind::lookup_table) {
    const FoldStats stats = collect_stats(fold, n_states, n_actions);
    require_full_coverage(stats, "fqi");
    q = Eigen::MatrixXd::Zero(n_states, n_actions);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      const Eigen::MatrixXd next = empirical_backup(stats, q, gamma, max_value);
      const double delta = (next - q).cwiseAbs().maxCoeff();
      q = next;
      if (delta < cfg.tol) break;
    }
  } else {
    q = linear_fq_iterate(fold, cfg, gamma, n_states, n_actions, max_value, nullptr);
  }

  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(n_states, n_actions);
  if (cfg.softmax_temperature > 0.0) {
    for (int s = 0; s < n_states; ++s) {
      const Eigen::VectorXd scaled =
          (q.row(s).array() - q.row(s).maxCoeff()) / cfg.softmax_temperature;
      const Eigen::VectorXd expd = scaled.array().exp();
      probs.row(s) = expd.transpose() / expd.sum();
    }
  } else {
    for (int s = 0; s < n_states; ++s) {
      int best = 0;  // ties resolve toward the smallest action index
      for (int a = 1; a < n_actions; ++a)
        if (q(s, a) > q(s, best)) best = a;
      probs(s, best) = 1.0;
    }
  }
  StochasticPolicy policy(probs);
  return {QEstimate::from_q(std::move(q), policy), policy};
}

QEstimate corrupt_q(const QEstimate& estimate, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd q = estimate.q;
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 0; a < q.cols(); ++a) q(s, a) += rng.uniform(0.0, 2.0);
  return QEstimate::from_q(std::move(q), estimate.fitted_for);
}

}  // namespace vepo
