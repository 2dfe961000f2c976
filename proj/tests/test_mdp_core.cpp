#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "vepo/experiment.hpp"
#include "vepo/mdp_core.hpp"

using namespace vepo;

namespace {

StochasticPolicy a_equals_s_policy() { return StochasticPolicy::deterministic({0, 1}, 2); }

// eta2 from its defining display, independent of exact_eta2's subtraction.
double eta2_direct(const TabularMDP& mdp, const StochasticPolicy& pi,
                   const StochasticPolicy& pi_old) {
  const Eigen::MatrixXd adv = exact_advantage(mdp, pi_old);
  const Eigen::VectorXd d_new = exact_visitation(mdp, pi).integrated;
  const Eigen::VectorXd d_old = exact_visitation(mdp, pi_old).integrated;
  double total = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      total += (pi.prob(a, s) - pi_old.prob(a, s)) * adv(s, a) * (d_new(s) - d_old(s));
  return total;
}

}  // namespace

TEST_CASE("simulate_dataset produces chained trajectories of the requested shape") {
  const TabularMDP mdp = build_toy_mdp();
  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 1, 3, 0);
  REQUIRE(data.n_trajectories() == 1);
  REQUIRE(data.trajectories[0].steps.size() == 3);
  data.validate();  // throws on a broken chain
  const Dataset again = simulate_dataset(mdp, toy_behavior_policy(), 1, 3, 0);
  CHECK(again.trajectories[0].steps[2].s == data.trajectories[0].steps[2].s);
  CHECK(again.trajectories[0].steps[2].r == data.trajectories[0].steps[2].r);
}

TEST_CASE("simulate_dataset with zero reward noise emits the mean-reward table") {
  const TabularMDP mdp = build_toy_mdp(0.0);
  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 5, 20, 7);
  for (const auto& traj : data.trajectories)
    for (const auto& step : traj.steps) CHECK(step.r == mdp.r(step.s, step.a));
}

TEST_CASE("simulate_dataset matches the behavior policy frequencies") {
  const TabularMDP mdp = build_toy_mdp(0.0);
  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 10, 10000, 13);
  long visits_s0 = 0;
  long action0_given_s0 = 0;
  for (const auto& traj : data.trajectories)
    for (const auto& step : traj.steps)
      if (step.s == 0) {
        ++visits_s0;
        if (step.a == 0) ++action0_given_s0;
      }
  const double freq = static_cast<double>(action0_given_s0) / static_cast<double>(visits_s0);
  CHECK(freq == doctest::Approx(0.7).epsilon(0.015));  // b(0|0) = 0.7
}

TEST_CASE("simulate_dataset rejects mismatched policy shapes") {
  const TabularMDP mdp = build_toy_mdp();
  CHECK_THROWS_AS(simulate_dataset(mdp, StochasticPolicy::uniform(3, 2), 1, 1, 0), ConfigError);
}

TEST_CASE("exact_q at gamma=0 returns the reward table") {
  TabularMDP mdp = build_toy_mdp();
  mdp.gamma = 0.0;
  const Eigen::MatrixXd q = exact_q(mdp, kappa_policy(0.3));
  CHECK((q - mdp.mean_reward).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("exact_q for the a=s policy has the I(a=s)+9 structure") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy opt = a_equals_s_policy();
  const Eigen::MatrixXd q = exact_q(mdp, opt);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(q(s, a) == doctest::Approx((s == a ? 1.0 : 0.0) + 9.0).epsilon(1e-12));
  const Eigen::VectorXd v = state_values(q, opt);
  CHECK(v(0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(v(1) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("exact_q on the behavior policy matches the truncated-series oracle") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy b = toy_behavior_policy();
  const Eigen::MatrixXd q = exact_q(mdp, b);
  const Eigen::MatrixXd series = test::q_series_oracle(mdp, b, 400);
  CHECK((q - series).cwiseAbs().maxCoeff() < 1e-10);
  // Frozen values from the independent dense solve of the 4x4 system.
  CHECK(q(0, 0) == doctest::Approx(7.595426393520727).epsilon(1e-12));
  CHECK(q(0, 1) == doctest::Approx(6.625440686040974).epsilon(1e-12));
  CHECK(q(1, 0) == doctest::Approx(6.651167222486900).epsilon(1e-12));
  CHECK(q(1, 1) == doctest::Approx(7.586850881372083).epsilon(1e-12));
}

TEST_CASE("exact_value: a=s policy earns exactly 1/(1-gamma)") {
  const TabularMDP mdp = build_toy_mdp();
  CHECK(exact_value(mdp, a_equals_s_policy()) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("exact_value of the behavior policy agrees with Monte Carlo") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy b = toy_behavior_policy();
  const double exact = exact_value(mdp, b);
  CHECK(exact == doctest::Approx(7.361600762267749).epsilon(1e-12));
  const McValue mc = monte_carlo_value(mdp, b, 20000, 11);
  CHECK(std::abs(mc.mean - exact) < 3.0 * mc.stderr + 1e-3);
}

TEST_CASE("exact_visitation at gamma=0 is the point mass") {
  TabularMDP mdp = build_toy_mdp();
  mdp.gamma = 0.0;
  const VisitationDistribution visit = exact_visitation(mdp, kappa_policy(0.4));
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sp = 0; sp < 2; ++sp)
        CHECK(visit.conditional(mdp.sa(s, a), sp) == doctest::Approx(sp == s ? 1.0 : 0.0));
}

TEST_CASE("exact_visitation slices are probability vectors matching the series oracle") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi = kappa_policy(0.5);
  const VisitationDistribution visit = exact_visitation(mdp, pi);
  for (int row = 0; row < 4; ++row) {
    CHECK(std::abs(visit.conditional.row(row).sum() - 1.0) < 1e-10);
    CHECK(visit.conditional.row(row).minCoeff() >= 0.0);
  }
  CHECK(std::abs(visit.integrated.sum() - 1.0) < 1e-10);
  const Eigen::MatrixXd series = test::visitation_series_oracle(mdp, pi, 200);
  CHECK((visit.conditional - series).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("exact_stationary: symmetric chain gives the uniform distribution") {
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.gamma = 0.5;
  mdp.transition = Eigen::MatrixXd::Constant(4, 2, 0.5);
  mdp.mean_reward = Eigen::MatrixXd::Zero(2, 2);
  mdp.initial_dist = Eigen::VectorXd::Constant(2, 0.5);
  mdp.reference_dist = mdp.initial_dist;
  mdp.validate();
  const Eigen::MatrixXd p_inf = exact_stationary(mdp, StochasticPolicy::uniform(2, 2));
  CHECK((p_inf.array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("exact_stationary on the toy matches power iteration and empirical occupancy") {
  const TabularMDP mdp = build_toy_mdp(0.0);
  const StochasticPolicy b = toy_behavior_policy();
  const Eigen::MatrixXd p_inf = exact_stationary(mdp, b);
  CHECK(std::abs(p_inf.sum() - 1.0) < 1e-10);

  // Power-iteration oracle on the state chain.
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(2, 0.5);
  const Eigen::MatrixXd chain = mdp.policy_state_chain(b);
  for (int k = 0; k < 400; ++k) mu = mu * chain;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(p_inf(s, a) == doctest::Approx(b.prob(a, s) * mu(s)).epsilon(1e-10));

  // Empirical occupancy over 1e6 simulated steps.
  const Dataset data = simulate_dataset(mdp, b, 1, 1000000, 3);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& step : data.trajectories[0].steps) counts(step.s, step.a) += 1.0;
  counts /= counts.sum();
  CHECK((counts - p_inf).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("exact_stationary rejects a reducible chain") {
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.gamma = 0.5;
  mdp.transition.resize(2, 2);
  mdp.transition << 1.0, 0.0,  // state 0 absorbing
      0.0, 1.0;                // state 1 absorbing
  mdp.mean_reward = Eigen::MatrixXd::Zero(2, 1);
  mdp.initial_dist = Eigen::VectorXd::Constant(2, 0.5);
  mdp.reference_dist = mdp.initial_dist;
  mdp.validate();
  CHECK_THROWS_AS(exact_stationary(mdp, StochasticPolicy::uniform(2, 1)), NumericalError);
}

TEST_CASE("exact_ratio at gamma=0 reduces to the indicator over p_inf") {
  TabularMDP mdp = build_toy_mdp();
  mdp.gamma = 0.0;
  const StochasticPolicy b = toy_behavior_policy();
  const RatioTensor ratio = exact_ratio(mdp, kappa_policy(0.3), b);
  for (int anchor = 0; anchor < 4; ++anchor)
    for (int target = 0; target < 4; ++target) {
      const int s = target / 2;
      const int a = target % 2;
      const double expected = (target == anchor) ? 1.0 / ratio.stationary(s, a) : 0.0;
      CHECK(ratio.conditional(target, anchor) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("exact_ratio normalization and series-oracle agreement") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi = kappa_policy(0.2);
  const StochasticPolicy b = toy_behavior_policy();
  const RatioTensor ratio = exact_ratio(mdp, pi, b);

  // sum over targets of omega * p_inf = 1 per anchor.
  for (int anchor = 0; anchor < 4; ++anchor) {
    double total = 0.0;
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) total += ratio.conditional(mdp.sa(s, a), anchor) * ratio.stationary(s, a);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }

  // Assemble the ratio from the series-oracle visitation instead.
  const Eigen::MatrixXd series = test::visitation_series_oracle(mdp, pi, 200);
  for (int anchor_s = 0; anchor_s < 2; ++anchor_s)
    for (int anchor_a = 0; anchor_a < 2; ++anchor_a) {
      const int anchor = mdp.sa(anchor_s, anchor_a);
      for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) {
          double numer = pi.prob(a, s) *
                         (series(anchor, s) - (s == anchor_s ? 1.0 - mdp.gamma : 0.0));
          if (s == anchor_s && a == anchor_a) numer += 1.0 - mdp.gamma;
          CHECK(ratio.conditional(mdp.sa(s, a), anchor) ==
                doctest::Approx(numer / ratio.stationary(s, a)).epsilon(1e-8));
        }
    }
}

TEST_CASE("exact_eta1: zero at pi_old, frozen value and linearity in the mixture") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi_old = kappa_policy(0.5);
  CHECK(std::abs(exact_eta1(mdp, pi_old, pi_old)) < 1e-14);

  const StochasticPolicy target = a_equals_s_policy();
  const double eta = exact_eta1(mdp, target, pi_old);
  CHECK(eta == doctest::Approx(0.5).epsilon(1e-12));
  // Sign agrees with the decomposition: (1-g)(V(pi)-V(pi_old)) - eta2.
  const double decomposed = (1.0 - mdp.gamma) * (exact_value(mdp, target) - exact_value(mdp, pi_old)) -
                            eta2_direct(mdp, target, pi_old);
  CHECK(eta == doctest::Approx(decomposed).epsilon(1e-10));

  for (double eps : {0.3, 0.1}) {
    const StochasticPolicy mixed = StochasticPolicy::mix(pi_old, target, eps);
    CHECK(exact_eta1(mdp, mixed, pi_old) == doctest::Approx(eps * eta).epsilon(1e-10));
  }
}

TEST_CASE("exact_eta2: zero at pi_old and second-order in the mixture weight") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi_old = kappa_policy(0.5);
  CHECK(std::abs(exact_eta2(mdp, pi_old, pi_old)) < 1e-12);

  // kappa-family pairs have vanishing eta2 on this MDP (frozen oracle fact).
  CHECK(std::abs(exact_eta2(mdp, kappa_policy(0.8), kappa_policy(0.2))) < 1e-10);

  // An asymmetric perturbation makes the remainder genuinely second order.
  Eigen::MatrixXd asym(2, 2);
  asym << 0.9, 0.1, 0.6, 0.4;
  const StochasticPolicy target(asym);
  double prev_ratio = -1.0;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const StochasticPolicy mixed = StochasticPolicy::mix(pi_old, target, eps);
    const double e2 = exact_eta2(mdp, mixed, pi_old);
    CHECK(e2 == doctest::Approx(eta2_direct(mdp, mixed, pi_old)).epsilon(1e-9));
    const double ratio = std::abs(e2) / (eps * eps);
    if (prev_ratio > 0.0) CHECK(std::abs(ratio - prev_ratio) / prev_ratio < 0.5);
    prev_ratio = ratio;
  }
}

TEST_CASE("decomposition identity holds for random policy pairs") {
  const TabularMDP mdp = build_toy_mdp();
  Rng rng(99);
  for (int k = 0; k < 50; ++k) {
    const StochasticPolicy pi = test::random_policy(rng, 2, 2);
    const StochasticPolicy pi_old = test::random_policy(rng, 2, 2);
    const double lhs = (1.0 - mdp.gamma) * (exact_value(mdp, pi) - exact_value(mdp, pi_old));
    const double rhs = exact_eta1(mdp, pi, pi_old) + eta2_direct(mdp, pi, pi_old);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("advantage centering and value identity for random policies") {
  const TabularMDP mdp = build_toy_mdp();
  Rng rng(123);
  for (int k = 0; k < 20; ++k) {
    const StochasticPolicy pi = test::random_policy(rng, 2, 2);
    const Eigen::MatrixXd q = exact_q(mdp, pi);
    const Eigen::VectorXd v = state_values(q, pi);
    const Eigen::MatrixXd adv = exact_advantage(mdp, pi);
    for (int s = 0; s < 2; ++s) {
      double centered = 0.0;
      double v_direct = 0.0;
      for (int a = 0; a < 2; ++a) {
        centered += pi.prob(a, s) * adv(s, a);
        v_direct += pi.prob(a, s) * q(s, a);
      }
      CHECK(std::abs(centered) < 1e-10);
      CHECK(v(s) == doctest::Approx(v_direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("monte_carlo_value on the deterministic a=s policy") {
  const TabularMDP mdp = build_toy_mdp();
  const McValue mc = monte_carlo_value(mdp, a_equals_s_policy(), 200, 5);
  CHECK(std::abs(mc.mean - 10.0) < 1e-3);  // truncation bias only
  CHECK(mc.stderr < 1e-12);                // constant reward stream
}

TEST_CASE("monte_carlo_value at gamma=0 averages the immediate mean reward") {
  TabularMDP mdp = build_toy_mdp();
  mdp.gamma = 0.0;
  const StochasticPolicy pi = kappa_policy(0.3);
  double expected = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) expected += mdp.reference_dist(s) * pi.prob(a, s) * mdp.r(s, a);
  const McValue mc = monte_carlo_value(mdp, pi, 50000, 21);
  CHECK(std::abs(mc.mean - expected) < 3.0 * mc.stderr + 1e-9);
}

TEST_CASE("avg_kl scalar example, zero at equality, nonnegative in general") {
  Eigen::MatrixXd old_probs(2, 2), new_probs(2, 2);
  old_probs << 0.5, 0.5, 0.5, 0.5;
  new_probs << 0.9, 0.1, 0.5, 0.5;
  const StochasticPolicy pi_old(old_probs), pi(new_probs);
  Eigen::VectorXd w(2);
  w << 1.0, 0.0;
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(avg_kl(pi_old, pi, w) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.5108256237659907).epsilon(1e-12));

  CHECK(avg_kl(pi_old, pi_old, w) == 0.0);

  Rng rng(7);
  Eigen::VectorXd uniform_w = Eigen::VectorXd::Constant(2, 0.5);
  for (int k = 0; k < 30; ++k) {
    const StochasticPolicy p1 = test::random_policy(rng, 2, 2);
    const StochasticPolicy p2 = test::random_policy(rng, 2, 2);
    CHECK(avg_kl(p1, p2, uniform_w) >= 0.0);
  }
}

TEST_CASE("avg_kl reports infinite divergence") {
  Eigen::MatrixXd old_probs(1, 2), new_probs(1, 2);
  old_probs << 0.5, 0.5;
  new_probs << 1.0, 0.0;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(avg_kl(StochasticPolicy(old_probs), StochasticPolicy(new_probs), w),
                  NumericalError);
}

TEST_CASE("dataset and config round-trips") {
  const TabularMDP mdp = build_toy_mdp();
  const auto dir = std::filesystem::temp_directory_path();
  const auto mdp_path = dir / "vepo_test_mdp.json";
  const auto pol_path = dir / "vepo_test_policy.json";
  const auto data_path = dir / "vepo_test_data.csv";

  mdp.save_json(mdp_path);
  const TabularMDP loaded = TabularMDP::load_json(mdp_path);
  CHECK((loaded.transition - mdp.transition).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.gamma == mdp.gamma);
  CHECK(loaded.reward_noise_var == mdp.reward_noise_var);

  const StochasticPolicy pol = kappa_policy(0.2);
  pol.save_json(pol_path);
  CHECK((StochasticPolicy::load_json(pol_path).matrix() - pol.matrix()).cwiseAbs().maxCoeff() ==
        0.0);

  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 3, 5, 17);
  data.save_csv(data_path);
  const Dataset loaded_data = Dataset::load_csv(data_path);
  REQUIRE(loaded_data.n_trajectories() == data.n_trajectories());
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (std::size_t t = 0; t < data.trajectories[i].steps.size(); ++t) {
      CHECK(loaded_data.trajectories[i].steps[t].s == data.trajectories[i].steps[t].s);
      CHECK(loaded_data.trajectories[i].steps[t].r == data.trajectories[i].steps[t].r);
    }
}
