#include "vepo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "vepo/eta_estimators.hpp"
#include "vepo/nuisance_q.hpp"
#include "vepo/nuisance_ratio.hpp"
#include "vepo/nuisance_transition.hpp"

namespace vepo {

ScenarioSpec ScenarioSpec::from_name(const std::string& name) {
  ScenarioSpec spec;
  spec.name = name;
  if (name == "origin") {
  } else if (name == "mod1") {
    spec.corrupt_ratio_fn = true;
  } else if (name == "mod2") {
    spec.corrupt_q_fn = true;
  } else if (name == "mod3") {
    spec.corrupt_transition_fn = true;
  } else if (name == "mod4") {
    spec.corrupt_ratio_fn = spec.corrupt_q_fn = spec.corrupt_transition_fn = true;
  } else {
    throw ConfigError("unknown scenario '" + name + "' (expected origin|mod1|mod2|mod3|mod4)");
  }
  return spec;
}

const std::vector<std::string>& ScenarioSpec::all_names() {
  static const std::vector<std::string> names = {"origin", "mod1", "mod2", "mod3", "mod4"};
  return names;
}

void SweepSpec::validate() const {
  if (kappas.empty() || deltas.empty() || sizes.empty())
    throw ConfigError("SweepSpec: kappa, delta and size lists must be nonempty");
  if (n_replications < 1) throw ConfigError("SweepSpec: n_replications must be >= 1");
  for (double k : kappas)
    if (k < 0.0 || k > 1.0) throw ConfigError("SweepSpec: kappa out of [0,1]");
  for (auto [n, t] : sizes)
    if (n < 1 || t < 1) throw ConfigError("SweepSpec: sizes must be positive");
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void ExperimentReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "replication,iteration,eta1_hat,kl,value_mc,value_exact,scenario,kappa,delta,N,T,seed\n";
  for (const auto& row : rows) {
    out << row.replication << ',' << row.iteration << ',' << fmt(row.eta1_hat) << ','
        << fmt(row.kl) << ',' << fmt(row.value_mc) << ',' << fmt(row.value_exact) << ','
        << row.scenario << ',' << fmt(row.kappa) << ',' << fmt(row.delta) << ',' << row.n << ','
        << row.t << ',' << row.seed << '\n';
  }
}

ExperimentReport ExperimentReport::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty report file " + path.string());
  ExperimentReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    ReportRow row;
    try {
      std::getline(ss, field, ',');
      row.replication = std::stoi(field);
      std::getline(ss, field, ',');
      row.iteration = std::stoi(field);
      std::getline(ss, field, ',');
      row.eta1_hat = std::stod(field);
      std::getline(ss, field, ',');
      row.kl = std::stod(field);
      std::getline(ss, field, ',');
      row.value_mc = std::stod(field);
      std::getline(ss, field, ',');
      row.value_exact = std::stod(field);
      std::getline(ss, field, ',');
      row.scenario = field;
      std::getline(ss, field, ',');
      row.kappa = std::stod(field);
      std::getline(ss, field, ',');
      row.delta = std::stod(field);
      std::getline(ss, field, ',');
      row.n = std::stoi(field);
      std::getline(ss, field, ',');
      row.t = std::stoi(field);
      std::getline(ss, field, ',');
      row.seed = std::stoull(field);
    } catch (const std::exception&) {
      throw ConfigError("malformed row in " + path.string() + ": " + line);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void ExperimentReport::save_json_summary(const std::filesystem::path& path) const {
  // Group by iteration across replications; band half-width = 1.96 * stderr.
  std::map<int, std::vector<const ReportRow*>> by_iter;
  for (const auto& row : rows) by_iter[row.iteration].push_back(&row);
  const auto band = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / (n - 1.0) : 0.0;
    const double half = 1.96 * std::sqrt(var / n);
    return std::array<double, 3>{mean, mean - half, mean + half};
  };
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& [iteration, group] : by_iter) {
    std::vector<double> mc, exact, eta1;
    for (const ReportRow* row : group) {
      mc.push_back(row->value_mc);
      exact.push_back(row->value_exact);
      eta1.push_back(row->eta1_hat);
    }
    const auto mc_band = band(mc);
    const auto exact_band = band(exact);
    const auto eta_band = band(eta1);
    nlohmann::json entry;
    entry["iteration"] = iteration;
    entry["value_mc"] = {{"mean", mc_band[0]}, {"lower", mc_band[1]}, {"upper", mc_band[2]}};
    entry["value_exact"] = {
        {"mean", exact_band[0]}, {"lower", exact_band[1]}, {"upper", exact_band[2]}};
    entry["eta1_hat"] = {{"mean", eta_band[0]}, {"lower", eta_band[1]}, {"upper", eta_band[2]}};
    iters.push_back(std::move(entry));
  }
  nlohmann::json j;
  j["n_rows"] = rows.size();
  j["iterations"] = std::move(iters);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path) {
  report.save_csv(csv_path);
  report.save_json_summary(json_path);
}

TabularMDP build_toy_mdp(double noise_var) {
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.gamma = 0.9;
  mdp.reward_noise_var = noise_var;
  mdp.transition.resize(4, 2);
  mdp.transition.row(mdp.sa(0, 0)) << 0.75, 0.25;
  mdp.transition.row(mdp.sa(0, 1)) << 0.4, 0.6;
  mdp.transition.row(mdp.sa(1, 0)) << 0.1, 0.9;
  mdp.transition.row(mdp.sa(1, 1)) << 0.85, 0.15;
  mdp.mean_reward.resize(2, 2);
  mdp.mean_reward << 1.0, 0.0,  // r(s=0,a): I(s=a)
      0.0, 1.0;                 // r(s=1,a)
  mdp.initial_dist.resize(2);
  mdp.initial_dist << 0.4, 0.6;
  mdp.reference_dist = mdp.initial_dist;
  mdp.validate();
  return mdp;
}

StochasticPolicy toy_behavior_policy() {
  Eigen::MatrixXd probs(2, 2);
  probs << 0.7, 0.3, 0.2, 0.8;
  return StochasticPolicy(probs);
}

StochasticPolicy kappa_policy(double kappa) {
  if (kappa < 0.0 || kappa > 1.0) throw ConfigError("kappa_policy: kappa must lie in [0,1]");
  Eigen::MatrixXd probs(2, 2);
  probs << kappa, 1.0 - kappa, 1.0 - kappa, kappa;
  return StochasticPolicy(probs);
}

void EstimatorComparisonReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "estimator,scenario,N,T,mean,stderr,bias_vs_oracle\n";
  for (const auto& row : rows) {
    out << row.estimator << ',' << row.scenario << ',' << row.n << ',' << row.t << ','
        << fmt(row.mean) << ',' << fmt(row.stderr) << ',' << fmt(row.bias_vs_oracle) << '\n';
  }
}

}  // namespace vepo
