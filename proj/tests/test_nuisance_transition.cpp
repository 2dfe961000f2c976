#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vepo/experiment.hpp"
#include "vepo/nuisance_transition.hpp"

using namespace vepo;

namespace {

double tv_to_visitation(const PseudoSampleSet& samples, const Eigen::VectorXd& target,
                        int n_states) {
  const Eigen::VectorXd weights = pseudo_state_weights(samples, n_states);
  return 0.5 * (weights - target).cwiseAbs().sum();
}

ContinuousDataset make_linear_gaussian(int n_steps, double noise_sd, std::uint64_t seed) {
  ContinuousDataset data;
  data.n_actions = 2;
  data.state_dim = 2;
  Rng rng(seed);
  Eigen::VectorXd s(2);
  s << rng.gaussian(), rng.gaussian();
  for (int k = 0; k < n_steps; ++k) {
    ContinuousStep step;
    step.s = s;
    step.a = (rng.uniform01() < 0.5) ? 0 : 1;
    step.s_next = s;
    for (int j = 0; j < 2; ++j) step.s_next(j) += noise_sd * rng.gaussian();
    data.steps.push_back(step);
    // Redraw the anchor state so the design stays well conditioned.
    s << rng.gaussian(), rng.gaussian();
  }
  return data;
}

}  // namespace

TEST_CASE("tabular MLE concentrates on the observed successors") {
  // Deterministic cycle kernel: s' = (s+1) mod 2 under either action.
  TabularMDP mdp = build_toy_mdp(0.0);
  mdp.transition << 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0;
  mdp.validate();
  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 10, 50, 3);
  const TabularTransition fit = fit_transition_tabular(data, 0.5, 2, 2);
  fit.validate();
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const int observed = (s + 1) % 2;
      CHECK(fit.p(fit.sa(s, a), observed) > 0.9);
      CHECK(fit.p(fit.sa(s, a), 1 - observed) < 0.1);  // smoothing share only
    }
}

TEST_CASE("tabular MLE approaches the true kernel at 1e5 transitions") {
  const TabularMDP mdp = build_toy_mdp(0.0);
  const Dataset data = simulate_dataset(mdp, toy_behavior_policy(), 10, 10000, 17);
  const TabularTransition fit = fit_transition_tabular(data, 0.5, 2, 2);
  CHECK((fit.p - mdp.transition).cwiseAbs().maxCoeff() < 0.01);
  CHECK(fit.p(fit.sa(0, 0), 0) == doctest::Approx(0.75).epsilon(0.02));
  for (int row = 0; row < 4; ++row) CHECK(fit.p.row(row).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tabular MLE error halves when the sample quadruples") {
  const TabularMDP mdp = build_toy_mdp(0.0);
  double err_small = 0.0;
  double err_large = 0.0;
  const int reps = 30;
  for (int rep = 0; rep < reps; ++rep) {
    const Dataset small = simulate_dataset(mdp, toy_behavior_policy(), 5, 500,
                                           derive_seed(100, static_cast<std::uint64_t>(rep)));
    const Dataset large = simulate_dataset(mdp, toy_behavior_policy(), 5, 2000,
                                           derive_seed(200, static_cast<std::uint64_t>(rep)));
    err_small += (fit_transition_tabular(small, 0.5, 2, 2).p - mdp.transition).cwiseAbs().mean();
    err_large += (fit_transition_tabular(large, 0.5, 2, 2).p - mdp.transition).cwiseAbs().mean();
  }
  const double ratio = err_large / err_small;
  CHECK(ratio > 0.35);
  CHECK(ratio < 0.65);
}

TEST_CASE("gaussian model recovers identity dynamics and isotropic noise") {
  const double sd = 0.3;
  const ContinuousDataset data = make_linear_gaussian(20000, sd, 5);
  RegressorConfig cfg;
  const GaussianTransition model = fit_transition_gaussian(data, cfg);
  Eigen::VectorXd probe(2);
  probe << 0.7, -1.2;
  for (int a = 0; a < 2; ++a) {
    CHECK((model.mean(probe, a) - probe).cwiseAbs().maxCoeff() < 0.03);
    const Eigen::MatrixXd sigma = model.covariance(probe, a);
    CHECK(std::abs(sigma(0, 0) - sd * sd) < 0.02);
    CHECK(std::abs(sigma(1, 1) - sd * sd) < 0.02);
    CHECK(std::abs(sigma(0, 1)) < 0.02);
  }
}

TEST_CASE("gaussian model on noiseless dynamics hits the eigenvalue floor") {
  const ContinuousDataset data = make_linear_gaussian(2000, 0.0, 9);
  RegressorConfig cfg;
  const GaussianTransition model = fit_transition_gaussian(data, cfg);
  Eigen::VectorXd probe(2);
  probe << 0.1, 0.4;
  CHECK((model.mean(probe, 0) - probe).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd sigma = model.covariance(probe, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  CHECK(eig.eigenvalues().minCoeff() >= 1e-6 * (1.0 - 1e-9));
  CHECK(eig.eigenvalues().maxCoeff() < 1e-4);
}

TEST_CASE("gaussian covariance queries are always positive definite") {
  const ContinuousDataset data = make_linear_gaussian(300, 0.5, 21);
  RegressorConfig cfg;
  const GaussianTransition model = fit_transition_gaussian(data, cfg);
  Rng rng(33);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd s(2);
    s << rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0);
    const Eigen::MatrixXd sigma = model.covariance(s, k % 2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    CHECK(eig.eigenvalues().minCoeff() >= 1e-6 * (1.0 - 1e-9));
    CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("conditional pseudo samples: degenerate horizons and determinism") {
  const TabularMDP mdp = build_toy_mdp();
  TabularTransition kernel{2, 2, mdp.transition};
  const StochasticPolicy pi = kappa_policy(0.5);

  const PseudoSampleSet at_zero = pseudo_samples_conditional(kernel, pi, 0.9, 1, 0, 100, 0, 7);
  for (const auto& chain : at_zero.chains) {
    REQUIRE(chain.size() == 1);
    CHECK(chain[0] == 0);
  }

  // Deterministic kernel and policy give identical chains.
  TabularTransition cycle{2, 2, Eigen::MatrixXd(4, 2)};
  cycle.p << 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0;
  const StochasticPolicy fixed = StochasticPolicy::deterministic({0, 0}, 2);
  const PseudoSampleSet det = pseudo_samples_conditional(cycle, fixed, 0.9, 0, 0, 50, 10, 3);
  for (const auto& chain : det.chains) CHECK(chain == det.chains[0]);

  const PseudoSampleSet s1 = pseudo_samples_conditional(kernel, pi, 0.9, 1, 0, 20, 30, 99);
  const PseudoSampleSet s2 = pseudo_samples_conditional(kernel, pi, 0.9, 1, 0, 20, 30, 99);
  CHECK(s1.chains == s2.chains);
}

TEST_CASE("conditional pseudo samples approximate the exact visitation slice") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi = kappa_policy(0.5);
  const TabularTransition kernel{2, 2, mdp.transition};
  const VisitationDistribution visit = exact_visitation(mdp, pi);
  const int m_chains = 5000;
  const int t_prime = 80;
  const double bound = std::pow(mdp.gamma, t_prime) + 2.0 / std::sqrt(m_chains) + 0.02;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const PseudoSampleSet samples = pseudo_samples_conditional(
          kernel, pi, mdp.gamma, a, s, m_chains, t_prime, derive_seed(11, mdp.sa(s, a)));
      const Eigen::VectorXd slice = visit.conditional.row(mdp.sa(s, a)).transpose();
      CHECK(tv_to_visitation(samples, slice, 2) < bound);
    }
}

TEST_CASE("integrated pseudo samples: start law, determinism and fidelity") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi = kappa_policy(0.5);
  const TabularTransition kernel{2, 2, mdp.transition};

  const PseudoSampleSet starts =
      pseudo_samples_integrated(kernel, pi, mdp.gamma, mdp.reference_dist, 20000, 0, 5);
  double share0 = 0.0;
  for (const auto& chain : starts.chains) share0 += chain[0] == 0 ? 1.0 : 0.0;
  CHECK(share0 / 20000.0 == doctest::Approx(0.4).epsilon(0.03));

  const PseudoSampleSet a =
      pseudo_samples_integrated(kernel, pi, mdp.gamma, mdp.reference_dist, 50, 20, 77);
  const PseudoSampleSet b =
      pseudo_samples_integrated(kernel, pi, mdp.gamma, mdp.reference_dist, 50, 20, 77);
  CHECK(a.chains == b.chains);

  const int m_chains = 5000;
  const int t_prime = 80;
  const PseudoSampleSet samples =
      pseudo_samples_integrated(kernel, pi, mdp.gamma, mdp.reference_dist, m_chains, t_prime, 13);
  const Eigen::VectorXd target = exact_visitation(mdp, pi).integrated;
  const double bound = std::pow(mdp.gamma, t_prime) + 2.0 / std::sqrt(m_chains) + 0.02;
  CHECK(tv_to_visitation(samples, target, 2) < bound);
}

TEST_CASE("approx_visitation_expectation: geometric identity, indicators, linearity") {
  const TabularMDP mdp = build_toy_mdp();
  const StochasticPolicy pi = kappa_policy(0.5);
  const TabularTransition kernel{2, 2, mdp.transition};
  const int t_prime = 40;
  const PseudoSampleSet samples =
      pseudo_samples_integrated(kernel, pi, mdp.gamma, mdp.reference_dist, 4000, t_prime, 3);

  const double mass = approx_visitation_expectation(samples, [](int) { return 1.0; });
  CHECK(mass == doctest::Approx(1.0 - std::pow(mdp.gamma, t_prime + 1)).epsilon(1e-12));

  const Eigen::VectorXd d_nu = exact_visitation(mdp, pi).integrated;
  const double bound = std::pow(mdp.gamma, t_prime) + 2.0 / std::sqrt(4000.0) + 0.02;
  const double hit0 = approx_visitation_expectation(samples, [](int s) { return s == 0 ? 1.0 : 0.0; });
  CHECK(std::abs(hit0 - d_nu(0)) < bound);

  const auto f = [](int s) { return 0.7 + 1.3 * s; };
  const auto g = [](int s) { return -2.0 * s; };
  const double sum_eval = approx_visitation_expectation(samples, [&](int s) { return f(s) + g(s); });
  CHECK(sum_eval == doctest::Approx(approx_visitation_expectation(samples, f) +
                                    approx_visitation_expectation(samples, g))
                        .epsilon(1e-12));
}

TEST_CASE("corrupt_transition: determinism, valid rows, average distortion") {
  const TabularMDP mdp = build_toy_mdp();
  const TabularTransition kernel{2, 2, mdp.transition};
  const TabularTransition c1 = corrupt_transition(kernel, 4);
  const TabularTransition c2 = corrupt_transition(kernel, 4);
  CHECK((c1.p - c2.p).cwiseAbs().maxCoeff() == 0.0);
  c1.validate();

  double mean_tv = 0.0;
  const int n_seeds = 1000;
  for (int seed = 0; seed < n_seeds; ++seed) {
    const TabularTransition c = corrupt_transition(kernel, static_cast<std::uint64_t>(seed));
    double tv = 0.0;
    for (int row = 0; row < 4; ++row)
      tv += 0.5 * (c.p.row(row) - kernel.p.row(row)).cwiseAbs().sum();
    mean_tv += tv / 4.0;
  }
  mean_tv /= n_seeds;
  CHECK(mean_tv > 0.05);
}

TEST_CASE("default_pseudo_horizon") {
  CHECK(default_pseudo_horizon(0.0) == 0);
  CHECK(default_pseudo_horizon(0.9) == 66);
  CHECK(std::pow(0.9, default_pseudo_horizon(0.9)) < 1e-3);
}
