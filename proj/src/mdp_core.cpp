#include "vepo/mdp_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vepo {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_distribution(const Eigen::VectorXd& v, const char* name) {
  if (v.size() == 0) throw ConfigError(std::string(name) + ": empty distribution");
  if (v.minCoeff() < -kRowSumTol) throw ConfigError(std::string(name) + ": negative entry");
  if (std::abs(v.sum() - 1.0) > kRowSumTol)
    throw ConfigError(std::string(name) + ": does not sum to 1");
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(name) + ": expected 2-d array");
  const std::size_t cols = j.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols) throw ConfigError(std::string(name) + ": ragged rows");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

StochasticPolicy::StochasticPolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  if (probs_.rows() < 1 || probs_.cols() < 1)
    throw ConfigError("StochasticPolicy: empty probability table");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    if (probs_.row(s).minCoeff() < 0.0)
      throw ConfigError("StochasticPolicy: negative probability in state " + std::to_string(s));
    if (std::abs(probs_.row(s).sum() - 1.0) > kRowSumTol)
      throw ConfigError("StochasticPolicy: row " + std::to_string(s) + " does not sum to 1");
  }
}

StochasticPolicy StochasticPolicy::uniform(int n_states, int n_actions) {
  return StochasticPolicy(
      Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
}

StochasticPolicy StochasticPolicy::deterministic(const std::vector<int>& action_of_state,
                                                 int n_actions) {
  Eigen::MatrixXd m =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(action_of_state.size()), n_actions);
  for (std::size_t s = 0; s < action_of_state.size(); ++s) {
    const int a = action_of_state[s];
    if (a < 0 || a >= n_actions)
      throw ConfigError("deterministic policy: action out of range in state " + std::to_string(s));
    m(static_cast<Eigen::Index>(s), a) = 1.0;
  }
  return StochasticPolicy(std::move(m));
}

StochasticPolicy StochasticPolicy::mix(const StochasticPolicy& a, const StochasticPolicy& b,
                                       double eps) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions())
    throw ConfigError("StochasticPolicy::mix: shape mismatch");
  return StochasticPolicy((1.0 - eps) * a.matrix() + eps * b.matrix());
}

StochasticPolicy StochasticPolicy::load_json(const std::filesystem::path& path) {
  const nlohmann::json j = load_json_file(path);
  return StochasticPolicy(matrix_from_json(j.at("probs"), "policy.probs"));
}

void StochasticPolicy::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["probs"] = matrix_to_json(probs_);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw ConfigError("TabularMDP: empty state or action space");
  if (transition.rows() != n_states * n_actions || transition.cols() != n_states)
    throw ConfigError("TabularMDP: transition table has wrong shape");
  if (mean_reward.rows() != n_states || mean_reward.cols() != n_actions)
    throw ConfigError("TabularMDP: reward table has wrong shape");
  if (reward_noise_var < 0.0) throw ConfigError("TabularMDP: negative reward noise variance");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("TabularMDP: gamma must lie in [0,1)");
  for (Eigen::Index row = 0; row < transition.rows(); ++row) {
    if (transition.row(row).minCoeff() < 0.0)
      throw ConfigError("TabularMDP: negative transition probability in row " +
                        std::to_string(row));
    if (std::abs(transition.row(row).sum() - 1.0) > kRowSumTol)
      throw ConfigError("TabularMDP: transition row " + std::to_string(row) +
                        " does not sum to 1");
  }
  check_distribution(initial_dist, "TabularMDP.initial_dist");
  check_distribution(reference_dist, "TabularMDP.reference_dist");
  if (reference_dist.minCoeff() <= 0.0)
    throw ConfigError("TabularMDP: reference distribution must be strictly positive");
}

Eigen::MatrixXd TabularMDP::policy_state_chain(const StochasticPolicy& pi) const {
  Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n_states, n_states);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) chain.row(s) += pi.prob(a, s) * transition.row(sa(s, a));
  return chain;
}

void TabularMDP::require_compatible(const StochasticPolicy& pi, const char* where) const {
  if (pi.n_states() != n_states || pi.n_actions() != n_actions)
    throw ConfigError(std::string(where) + ": policy shape (" + std::to_string(pi.n_states()) +
                      "x" + std::to_string(pi.n_actions()) + ") does not match MDP (" +
                      std::to_string(n_states) + "x" + std::to_string(n_actions) + ")");
}

TabularMDP TabularMDP::load_json(const std::filesystem::path& path) {
  const nlohmann::json j = load_json_file(path);
  TabularMDP mdp;
  mdp.n_states = j.at("n_states").get<int>();
  mdp.n_actions = j.at("n_actions").get<int>();
  mdp.gamma = j.at("gamma").get<double>();
  mdp.reward_noise_var = j.at("noise_var").get<double>();
  const auto& trans = j.at("transition");
  if (static_cast<int>(trans.size()) != mdp.n_states)
    throw ConfigError("mdp config: transition must have n_states outer entries");
  mdp.transition.resize(mdp.n_states * mdp.n_actions, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    const auto& per_action = trans[s];
    if (static_cast<int>(per_action.size()) != mdp.n_actions)
      throw ConfigError("mdp config: transition[s] must have n_actions entries");
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int sp = 0; sp < mdp.n_states; ++sp)
        mdp.transition(mdp.sa(s, a), sp) = per_action[a][sp].get<double>();
  }
  mdp.mean_reward = matrix_from_json(j.at("reward"), "mdp.reward");
  const auto vec = [&](const char* key) {
    const auto& arr = j.at(key);
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i];
    return v;
  };
  mdp.initial_dist = vec("init_dist");
  mdp.reference_dist = vec("ref_dist");
  mdp.validate();
  return mdp;
}

void TabularMDP::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["n_states"] = n_states;
  j["n_actions"] = n_actions;
  j["gamma"] = gamma;
  j["noise_var"] = reward_noise_var;
  nlohmann::json trans = nlohmann::json::array();
  for (int s = 0; s < n_states; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    for (int a = 0; a < n_actions; ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (int sp = 0; sp < n_states; ++sp) row.push_back(transition(sa(s, a), sp));
      per_action.push_back(std::move(row));
    }
    trans.push_back(std::move(per_action));
  }
  j["transition"] = std::move(trans);
  j["reward"] = matrix_to_json(mean_reward);
  j["init_dist"] = std::vector<double>(initial_dist.begin(), initial_dist.end());
  j["ref_dist"] = std::vector<double>(reference_dist.begin(), reference_dist.end());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& traj : trajectories) n += traj.steps.size();
  return n;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& steps = trajectories[i].steps;
    for (std::size_t t = 0; t + 1 < steps.size(); ++t)
      if (steps[t].s_next != steps[t + 1].s)
        throw ConfigError("Dataset: broken state chain in trajectory " + std::to_string(i) +
                          " at step " + std::to_string(t));
  }
}

Dataset Dataset::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset file " + path.string());
  Dataset data;
  long current_traj = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    long vals_traj, vals_t, s, a, s_next;
    double r;
    try {
      std::getline(ss, field, ',');
      vals_traj = std::stol(field);
      std::getline(ss, field, ',');
      vals_t = std::stol(field);
      (void)vals_t;
      std::getline(ss, field, ',');
      s = std::stol(field);
      std::getline(ss, field, ',');
      a = std::stol(field);
      std::getline(ss, field, ',');
      r = std::stod(field);
      std::getline(ss, field, ',');
      s_next = std::stol(field);
    } catch (const std::exception&) {
      throw ConfigError("malformed row in " + path.string() + ": " + line);
    }
    if (vals_traj != current_traj) {
      data.trajectories.emplace_back();
      current_traj = vals_traj;
    }
    data.trajectories.back().steps.push_back(
        {static_cast<int>(s), static_cast<int>(a), r, static_cast<int>(s_next)});
  }
  data.validate();
  return data;
}

void Dataset::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "traj_id,t,s,a,r,s_next\n";
  char buf[64];
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& steps = trajectories[i].steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", steps[t].r);
      out << i << ',' << t << ',' << steps[t].s << ',' << steps[t].a << ',' << buf << ','
          << steps[t].s_next << '\n';
    }
  }
}

Dataset simulate_dataset(const TabularMDP& mdp, const StochasticPolicy& behavior, int n_traj,
                         int horizon, std::uint64_t seed) {
  mdp.validate();
  mdp.require_compatible(behavior, "simulate_dataset");
  if (horizon < 1) throw ConfigError("simulate_dataset: horizon must be >= 1");
  if (n_traj < 0) throw ConfigError("simulate_dataset: negative trajectory count");
  const double noise_sd = std::sqrt(mdp.reward_noise_var);
  Dataset data;
  data.trajectories.resize(static_cast<std::size_t>(n_traj));
  const std::span<const double> init(mdp.initial_dist.data(),
                                     static_cast<std::size_t>(mdp.initial_dist.size()));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    auto& steps = data.trajectories[static_cast<std::size_t>(i)].steps;
    steps.reserve(static_cast<std::size_t>(horizon));
    int s = rng.categorical(init);
    for (int t = 0; t < horizon; ++t) {
      const Eigen::VectorXd pol = behavior.matrix().row(s);
      const int a = rng.categorical({pol.data(), static_cast<std::size_t>(pol.size())});
      double reward = mdp.r(s, a);
      if (noise_sd > 0.0) reward += rng.gaussian(0.0, noise_sd);
      const Eigen::VectorXd row = mdp.transition.row(mdp.sa(s, a));
      const int s_next = rng.categorical({row.data(), static_cast<std::size_t>(row.size())});
      steps.push_back({s, a, reward, s_next});
      s = s_next;
    }
  }
  return data;
}

Eigen::MatrixXd exact_q(const TabularMDP& mdp, const StochasticPolicy& pi) {
  mdp.require_compatible(pi, "exact_q");
  const int n_sa = mdp.n_states * mdp.n_actions;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n_sa, n_sa);
  Eigen::VectorXd rhs(n_sa);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int row = mdp.sa(s, a);
      rhs(row) = mdp.r(s, a);
      for (int sp = 0; sp < mdp.n_states; ++sp) {
        const double trans = mdp.p(sp, a, s);
        if (trans == 0.0) continue;
        for (int ap = 0; ap < mdp.n_actions; ++ap)
          system(row, mdp.sa(sp, ap)) -= mdp.gamma * trans * pi.prob(ap, sp);
      }
    }
  }
  const Eigen::VectorXd flat = system.partialPivLu().solve(rhs);
  const double residual = (system * flat - rhs).cwiseAbs().maxCoeff();
  if (!flat.allFinite() || residual > 1e-10)
    throw NumericalError("exact_q: Bellman solve failed, residual " + std::to_string(residual));
  Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) q(s, a) = flat(mdp.sa(s, a));
  return q;
}

Eigen::VectorXd state_values(const Eigen::MatrixXd& q, const StochasticPolicy& pi) {
  return (q.array() * pi.matrix().array()).rowwise().sum();
}

Eigen::MatrixXd exact_advantage(const TabularMDP& mdp, const StochasticPolicy& pi) {
  const Eigen::MatrixXd q = exact_q(mdp, pi);
  const Eigen::VectorXd v = state_values(q, pi);
  return q.colwise() - v;
}

double exact_value(const TabularMDP& mdp, const StochasticPolicy& pi) {
  const Eigen::MatrixXd q = exact_q(mdp, pi);
  return mdp.reference_dist.dot(state_values(q, pi));
}

VisitationDistribution exact_visitation(const TabularMDP& mdp, const StochasticPolicy& pi) {
  mdp.require_compatible(pi, "exact_visitation");
  const int n_sa = mdp.n_states * mdp.n_actions;
  const Eigen::MatrixXd chain = mdp.policy_state_chain(pi);
  // d(.|a,s) = (1-g) e_s + (1-g) g p(.|a,s) (I - g P_pi)^{-1}; the resolvent
  // rows are obtained by solving against the transposed system.
  const Eigen::MatrixXd system =
      (Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * chain).transpose();
  const auto lu = system.partialPivLu();
  VisitationDistribution out;
  out.conditional.resize(n_sa, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Eigen::VectorXd resolvent_row = lu.solve(mdp.transition.row(mdp.sa(s, a)).transpose());
      Eigen::VectorXd d = (1.0 - mdp.gamma) * mdp.gamma * resolvent_row;
      d(s) += 1.0 - mdp.gamma;
      out.conditional.row(mdp.sa(s, a)) = d.transpose();
    }
  }
  out.integrated = Eigen::VectorXd::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      out.integrated +=
          pi.prob(a, s) * mdp.reference_dist(s) * out.conditional.row(mdp.sa(s, a)).transpose();
  return out;
}

Eigen::MatrixXd exact_stationary(const TabularMDP& mdp, const StochasticPolicy& behavior) {
  mdp.require_compatible(behavior, "exact_stationary");
  const Eigen::MatrixXd chain = mdp.policy_state_chain(behavior);
  Eigen::MatrixXd system =
      chain.transpose() - Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states);
  system.row(mdp.n_states - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mdp.n_states);
  rhs(mdp.n_states - 1) = 1.0;
  const Eigen::VectorXd mu = system.partialPivLu().solve(rhs);
  const double residual = (chain.transpose() * mu - mu).cwiseAbs().maxCoeff();
  if (!mu.allFinite() || residual > 1e-9 || mu.minCoeff() <= 0.0)
    throw NumericalError(
        "exact_stationary: behavior chain has no unique strictly positive stationary "
        "distribution (residual " +
        std::to_string(residual) + ", min mass " + std::to_string(mu.minCoeff()) + ")");
  Eigen::MatrixXd p_inf(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) p_inf(s, a) = behavior.prob(a, s) * mu(s);
  return p_inf;
}

RatioTensor exact_ratio(const TabularMDP& mdp, const StochasticPolicy& pi,
                        const StochasticPolicy& behavior) {
  mdp.require_compatible(pi, "exact_ratio");
  const int n_sa = mdp.n_states * mdp.n_actions;
  const VisitationDistribution visit = exact_visitation(mdp, pi);
  RatioTensor out;
  out.stationary = exact_stationary(mdp, behavior);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (out.stationary(s, a) <= 0.0)
        throw NumericalError("exact_ratio: stationary mass is zero at (s=" + std::to_string(s) +
                             ", a=" + std::to_string(a) + ")");
  out.conditional.resize(n_sa, n_sa);
  const double one_minus_gamma = 1.0 - mdp.gamma;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int anchor = mdp.sa(s, a);
      for (int sp = 0; sp < mdp.n_states; ++sp) {
        for (int ap = 0; ap < mdp.n_actions; ++ap) {
          double numer = pi.prob(ap, sp) *
                         (visit.conditional(anchor, sp) - (sp == s ? one_minus_gamma : 0.0));
          if (sp == s && ap == a) numer += one_minus_gamma;
          out.conditional(mdp.sa(sp, ap), anchor) = numer / out.stationary(sp, ap);
        }
      }
    }
  }
  out.integrated = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double weight = pi.prob(a, s) * mdp.reference_dist(s);
      for (int sp = 0; sp < mdp.n_states; ++sp)
        for (int ap = 0; ap < mdp.n_actions; ++ap)
          out.integrated(sp, ap) += weight * out.conditional(mdp.sa(sp, ap), mdp.sa(s, a));
    }
  return out;
}

double exact_eta1(const TabularMDP& mdp, const StochasticPolicy& pi,
                  const StochasticPolicy& pi_old) {
  const Eigen::MatrixXd adv = exact_advantage(mdp, pi_old);
  const Eigen::VectorXd d_nu = exact_visitation(mdp, pi_old).integrated;
  double eta = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) eta += pi.prob(a, s) * adv(s, a) * d_nu(s);
  return eta;
}

double exact_eta2(const TabularMDP& mdp, const StochasticPolicy& pi,
                  const StochasticPolicy& pi_old) {
  return (1.0 - mdp.gamma) * (exact_value(mdp, pi) - exact_value(mdp, pi_old)) -
         exact_eta1(mdp, pi, pi_old);
}

McValue monte_carlo_value(const TabularMDP& mdp, const StochasticPolicy& pi, int n_rollouts,
                          std::uint64_t seed, bool noisy_rewards) {
  mdp.require_compatible(pi, "monte_carlo_value");
  if (n_rollouts < 1) throw ConfigError("monte_carlo_value: n_rollouts must be >= 1");
  const double r_max = mdp.mean_reward.cwiseAbs().maxCoeff();
  int horizon = 1;
  if (mdp.gamma > 0.0 && r_max > 0.0) {
    const double target = 1e-4 * (1.0 - mdp.gamma) / r_max;
    horizon = std::max(1, static_cast<int>(std::ceil(std::log(target) / std::log(mdp.gamma))));
  }
  const double noise_sd = std::sqrt(mdp.reward_noise_var);
  // Welford accumulation keeps the spread exact for constant return streams.
  double mean = 0.0;
  double m2 = 0.0;
  const std::span<const double> ref(mdp.reference_dist.data(),
                                    static_cast<std::size_t>(mdp.reference_dist.size()));
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    int s = rng.categorical(ref);
    double ret = 0.0;
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const Eigen::VectorXd pol = pi.matrix().row(s);
      const int a = rng.categorical({pol.data(), static_cast<std::size_t>(pol.size())});
      double reward = mdp.r(s, a);
      if (noisy_rewards && noise_sd > 0.0) reward += rng.gaussian(0.0, noise_sd);
      ret += discount * reward;
      discount *= mdp.gamma;
      const Eigen::VectorXd row = mdp.transition.row(mdp.sa(s, a));
      s = rng.categorical({row.data(), static_cast<std::size_t>(row.size())});
    }
    const double delta = ret - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (ret - mean);
  }
  McValue out;
  out.mean = mean;
  if (n_rollouts > 1) out.stderr = std::sqrt(m2 / (n_rollouts - 1) / n_rollouts);
  return out;
}

double avg_kl(const StochasticPolicy& pi_old, const StochasticPolicy& pi,
              const Eigen::VectorXd& state_weights) {
  if (pi_old.n_states() != pi.n_states() || pi_old.n_actions() != pi.n_actions())
    throw ConfigError("avg_kl: policy shape mismatch");
  if (state_weights.size() != pi.n_states())
    throw ConfigError("avg_kl: weight vector has wrong length");
  double kl = 0.0;
  for (int s = 0; s < pi.n_states(); ++s) {
    if (state_weights(s) == 0.0) continue;
    double state_kl = 0.0;
    for (int a = 0; a < pi.n_actions(); ++a) {
      const double p_old = pi_old.prob(a, s);
      if (p_old == 0.0) continue;  // 0 log(0/x) = 0
      const double p_new = pi.prob(a, s);
      if (p_new == 0.0)
        throw NumericalError("avg_kl: infinite divergence, pi(a=" + std::to_string(a) +
                             "|s=" + std::to_string(s) + ") = 0 with pi_old > 0");
      state_kl += p_old * std::log(p_old / p_new);
    }
    kl += state_weights(s) * state_kl;
  }
  return kl;
}

}  // namespace vepo
