// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "microgrid/artifacts.h"
#include "microgrid/config.h"
#include "microgrid/controllers.h"
#include "microgrid/fuzzy.h"
#include "microgrid/lmi.h"
#include "microgrid/market.h"
#include "microgrid/pipeline.h"
#include "microgrid/random.h"
#include "microgrid/simulation.h"

namespace microgrid {
namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string OptNum(const std::optional<double>& v) { return v ? Num(*v) : "none"; }

ScenarioConfig LoadConfig(const std::string& name) {
  return parse_config(std::string(MICROGRID_SOURCE_DIR) + "/configs/" + name);
}

// Reference scenario shared by several criteria: the rule model identified
// from the first example's config and the synthesis result at gamma^2 = 2.
struct Reference {
  ScenarioConfig config;
  IdentifiedModel model;
  LmiProblem problem;
  FeasibilityResult synthesis;
};

const Reference& GetReference() {
  static const Reference ref = [] {
    Reference r;
    r.config = LoadConfig("example1.cfg");
    const ScenarioConfig& c = r.config;
    r.model = identify_rule_matrices(
        generate_training_data(c.market, c.box, c.identify.samples, c.identify.seed), c.box,
        c.identify.ridge);
    r.problem = LmiProblem::From(r.model.rule_matrices, assemble_system_matrices(c.market),
                                 2.0);
    SynthesisOptions options;
    options.q_upper = c.synthesize.q_upper;
    options.max_newton_steps = c.synthesize.max_newton_steps;
    r.synthesis = solve_feasibility(r.problem, 1e-6, c.synthesize.tol, options);
    return r;
  }();
  return ref;
}

// Certified fuzzy gains on the reference model, or the reason there are none.
std::variant<GainSet, std::string> ReferenceGains() {
  const Reference& ref = GetReference();
  if (const auto* bad = std::get_if<Infeasible>(&ref.synthesis)) {
    return "no certified gain set (" + bad->reason + ")";
  }
  return recover_gains(std::get<LmiSolution>(ref.synthesis));
}

Verdict Equilibrium1() {
  const Equilibrium eq = compute_equilibrium(MarketParams{});
  const bool ok = std::abs(eq.power - 8.889) <= 0.01 && std::abs(eq.price - 5.556) <= 0.01;
  return {ok, "p* = " + Num(eq.power) + ", lambda* = " + Num(eq.price)};
}

Verdict FitQuality2() {
  const ScenarioConfig c = LoadConfig("example1.cfg");
  double worst = 0.0, best = 1e300;
  int worst_seed = 0, over = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto samples = generate_training_data(c.market, c.box, 1500, seed);
    const IdentifiedModel model = identify_rule_matrices(samples, c.box, c.identify.ridge);
    const double err = approximation_error_sup(model, samples);
    if (err > worst) {
      worst = err;
      worst_seed = seed;
    }
    best = std::min(best, err);
    if (err > 0.05) ++over;
  }
  const bool ok = worst <= 0.05 && best <= 0.03;
  return {ok, "seeds 1..20: max " + Num(worst) + " (seed " + std::to_string(worst_seed) +
                  "), min " + Num(best) + ", " + std::to_string(over) + " seeds above 0.05"};
}

Verdict Feasibility3() {
  const Reference& ref = GetReference();
  if (const auto* bad = std::get_if<Infeasible>(&ref.synthesis)) {
    return {false, "solver reports infeasible: " + bad->reason};
  }
  const LmiSolution& s = std::get<LmiSolution>(ref.synthesis);
  // Independent eigenvalue certificate on freshly assembled blocks.
  double worst = -1e300;
  for (int m = 0; m < ref.problem.rule_count(); ++m) {
    worst = std::max(worst, max_eigenvalue(assemble_rule_lmi(ref.problem, m, s.Q, s.Y[m])));
  }
  const double q_min = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(s.Q).eigenvalues()(0);
  return {worst <= -1e-6 && q_min >= 1e-6,
          "max block eigenvalue " + Num(worst) + ", min eig(Q) " + Num(q_min)};
}

Verdict DualCertificate4() {
  const Reference& ref = GetReference();
  if (const auto* bad = std::get_if<Infeasible>(&ref.synthesis)) {
    const double q_min = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(bad->Q).eigenvalues()(0);
    return {false, "no certified Q to invert (best point min eig(Q) " + Num(q_min) + ")"};
  }
  const LmiSolution& s = std::get<LmiSolution>(ref.synthesis);
  const VerificationReport r =
      verify_solution(ref.problem, recover_gains(s), s.Q, 10000,
                      ref.config.synthesize.verify_seed, ref.config.box, kUnitDisturbanceBox);
  double worst = -1e300;
  for (double v : r.p_form_margins) worst = std::max(worst, v);
  return {r.feasible() && r.samples_used == 10000,
          "max P-form eigenvalue " + Num(worst) + ", max phi " + Num(r.phi_sample_max) +
              " over " + std::to_string(r.samples_used) + " samples"};
}

bool Near(const MarketState& x, double p, double e, double tol) {
  return std::abs(x.p_g - p) < tol && std::abs(x.p_d - p) < tol && std::abs(x.e - e) < tol;
}

std::string Final(const Trajectory& t) {
  const MarketState& x = t.states.back();
  return "(" + Num(x.p_g) + ", " + Num(x.p_d) + ", " + Num(x.e) + ")";
}

Verdict Example1_5() {
  const ScenarioConfig c = LoadConfig("example1.cfg");
  const double p_star = 8.889;
  PricingPolicy ace;
  ace.ace_lambda0 = c.sim.initial_lambda;
  ace.ace_tau_lambda = c.market.tau_lambda;
  const Trajectory a = simulate_closed_loop(c.market, ace, {}, c.sim);
  const Metrics ma = compute_metrics(a, 0.1);
  const bool ace_ok = Near(a.states.back(), p_star, 0.0, 0.05);
  std::string detail = "ACE end " + Final(a) + " settles " + OptNum(ma.settling_time);

  const auto gains = ReferenceGains();
  if (const auto* why = std::get_if<std::string>(&gains)) {
    return {false, detail + "; FUZZY blocked: " + *why};
  }
  PricingPolicy fuzzy;
  fuzzy.kind = PolicyKind::kFuzzy;
  fuzzy.fuzzy_gains = std::get<GainSet>(gains);
  fuzzy.fuzzy_box = c.box;
  const Trajectory f = simulate_closed_loop(c.market, fuzzy, {}, c.sim);
  const Metrics mf = compute_metrics(f, 0.1);
  const bool faster = mf.settling_time &&
                      (!ma.settling_time || *mf.settling_time < *ma.settling_time);
  detail += "; FUZZY end " + Final(f) + " settles " + OptNum(mf.settling_time);
  return {ace_ok && Near(f.states.back(), p_star, 0.0, 0.05) && faster, detail};
}

Verdict Example2_6() {
  const ScenarioConfig c = LoadConfig("example2.cfg");
  PricingPolicy ace;
  ace.ace_lambda0 = c.sim.initial_lambda;
  ace.ace_tau_lambda = c.market.tau_lambda;
  const TimeWindow last100{c.sim.t_end - 100.0, c.sim.t_end};
  std::vector<Metrics> ace_metrics;
  double ace_gap_lo = 1e300, ace_gap_hi = -1e300;
  for (int i = 0; i < 10; ++i) {
    DisturbanceSpec d = c.disturbance;
    d.seed = c.disturbance.seed + i;
    ace_metrics.push_back(
        compute_metrics(simulate_closed_loop(c.market, ace, d, c.sim), 0.1, last100));
    ace_gap_lo = std::min(ace_gap_lo, ace_metrics.back().mean_supply_demand_gap);
    ace_gap_hi = std::max(ace_gap_hi, ace_metrics.back().mean_supply_demand_gap);
  }
  std::string detail = "ACE gap range [" + Num(ace_gap_lo) + ", " + Num(ace_gap_hi) + "]";

  const auto gains = ReferenceGains();
  if (const auto* why = std::get_if<std::string>(&gains)) {
    return {false, detail + "; FUZZY blocked: " + *why};
  }
  PricingPolicy fuzzy;
  fuzzy.kind = PolicyKind::kFuzzy;
  fuzzy.fuzzy_gains = std::get<GainSet>(gains);
  fuzzy.fuzzy_box = c.box;
  int rms_wins = 0, gap_ok = 0;
  for (int i = 0; i < 10; ++i) {
    DisturbanceSpec d = c.disturbance;
    d.seed = c.disturbance.seed + i;
    const Metrics m = compute_metrics(simulate_closed_loop(c.market, fuzzy, d, c.sim), 0.1,
                                      last100);
    if (m.rms_imbalance < ace_metrics[i].rms_imbalance) ++rms_wins;
    if (m.mean_supply_demand_gap >= 0.8 && m.mean_supply_demand_gap <= 1.2) ++gap_ok;
  }
  detail += "; FUZZY rms lower on " + std::to_string(rms_wins) + "/10, gap in range on " +
            std::to_string(gap_ok) + "/10";
  return {rms_wins == 10 && gap_ok == 10, detail};
}

Verdict StorageTarget7() {
  const ScenarioConfig c = LoadConfig("example1.cfg");
  const auto gains = ReferenceGains();
  if (const auto* why = std::get_if<std::string>(&gains)) {
    return {false, "FUZZY blocked: " + *why};
  }
  PricingPolicy fuzzy;
  fuzzy.kind = PolicyKind::kFuzzy;
  fuzzy.fuzzy_gains = std::get<GainSet>(gains);
  fuzzy.fuzzy_box = c.box;
  fuzzy.storage_target_q = 5.0;
  SimConfig sim = c.sim;
  sim.t_end = 50.0;
  const Trajectory f = simulate_closed_loop(c.market, fuzzy, {}, sim);
  return {Near(f.states.back(), 8.889, 5.0, 0.05), "FUZZY end " + Final(f)};
}

// Sub-checks of the property criterion; each returns a failure message or
// nothing.
using Property = std::function<std::optional<std::string>()>;

std::optional<std::string> PartitionOfUnity() {
  const ScenarioConfig c = LoadConfig("example1.cfg");
  UniformStream rng(2024);
  double worst = 0.0;
  std::size_t most_active = 0;
  for (int i = 0; i < 100000; ++i) {
    // Draw past the box edges too, where the shoulders take over.
    MarketState x{rng.Next(0.0, 30.0), rng.Next(0.0, 30.0), rng.Next(-15.0, 15.0)};
    const Eigen::VectorXd h = rule_activation(c.box, x);
    worst = std::max(worst, std::abs(h.sum() - 1.0));
    most_active = std::max<std::size_t>(most_active, (h.array() > 0.0).count());
  }
  if (worst >= 1e-12) return "partition of unity off by " + Num(worst);
  if (most_active > 8) return std::to_string(most_active) + " active rules";
  return std::nullopt;
}

std::optional<std::string> Rk4Order() {
  const MarketParams params;
  const SystemMatrices s = assemble_system_matrices(params);
  const Eigen::Vector3d w(0.3, -0.2, 1.1);
  DisturbanceSpec dist;
  dist.enabled = true;
  dist.seed = 1;
  dist.ranges = {{{w(0), w(0)}, {w(1), w(1)}, {w(2), w(2)}}};
  Eigen::Matrix<double, 5, 5> M = Eigen::Matrix<double, 5, 5>::Zero();
  M.block<3, 3>(0, 0) = s.A;
  M.block<3, 1>(0, 3) = s.tau;
  M.block<3, 1>(0, 4) = s.b + s.B * w;
  M(3, 2) = -1.0 / params.tau_lambda;
  const double t_end = 4.0;
  Eigen::Matrix<double, 5, 1> z0;
  z0 << 10.4, 13.0, 0.0, 4.66, 1.0;
  const Eigen::Matrix<double, 5, 1> exact = (M * t_end).exp() * z0;
  const auto error = [&](double dt) {
    SimConfig cfg;
    cfg.t_end = t_end;
    cfg.dt = dt;
    const Trajectory tr = simulate_closed_loop(params, PricingPolicy{}, dist, cfg);
    const MarketState& x = tr.states.back();
    return (Eigen::Vector4d(x.p_g, x.p_d, x.e, tr.prices.back()) - exact.head<4>())
        .cwiseAbs()
        .maxCoeff();
  };
  const double ratio = error(0.1) / error(0.05);
  if (ratio < 12.0 || ratio > 20.0) return "RK4 error ratio " + Num(ratio);
  return std::nullopt;
}

std::optional<std::string> DriftAffinity() {
  const MarketParams params;
  UniformStream rng(77);
  double worst = 0.0;
  const auto draw_x = [&] {
    return MarketState{rng.Next(-20, 20), rng.Next(-20, 20), rng.Next(-20, 20)};
  };
  const auto draw_w = [&] {
    return Disturbance{rng.Next(-1, 1), rng.Next(-1, 1), rng.Next(-1, 1)};
  };
  for (int i = 0; i < 1000; ++i) {
    const MarketState x = draw_x(), y = draw_x();
    const double a = rng.Next(-2, 2);
    const double lx = rng.Next(-5, 5), ly = rng.Next(-5, 5);
    const MarketState mix{a * x.p_g + (1 - a) * y.p_g, a * x.p_d + (1 - a) * y.p_d,
                          a * x.e + (1 - a) * y.e};
    const Disturbance zero;
    const Eigen::Vector3d lhs = market_drift(params, mix, a * lx + (1 - a) * ly, zero);
    const Eigen::Vector3d rhs =
        a * market_drift(params, x, lx, zero) + (1 - a) * market_drift(params, y, ly, zero);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / (1.0 + rhs.cwiseAbs().maxCoeff()));

    const Disturbance w1 = draw_w(), w2 = draw_w();
    const Disturbance sum{w1.delta_g + w2.delta_g, w1.delta_d + w2.delta_d,
                          w1.in_dev + w2.in_dev};
    const Eigen::Vector3d d12 = market_drift(params, x, lx, sum);
    const Eigen::Vector3d split = market_drift(params, x, lx, w1) +
                                  market_drift(params, x, lx, w2) -
                                  market_drift(params, x, lx, zero);
    worst = std::max(worst, (d12 - split).cwiseAbs().maxCoeff() / (1.0 + d12.cwiseAbs().maxCoeff()));
  }
  if (worst > 1e-12) return "drift affinity/superposition residual " + Num(worst);
  return std::nullopt;
}

std::optional<std::string> GainRoundTrip() {
  const ScenarioConfig c = LoadConfig("linear_market.cfg");
  const IdentifiedModel model = identify_rule_matrices(
      generate_training_data(c.market, c.box, c.identify.samples, c.identify.seed), c.box,
      c.identify.ridge);
  const LmiProblem problem = LmiProblem::From(model.rule_matrices,
                                              assemble_system_matrices(c.market), 2.0);
  const FeasibilityResult r = solve_feasibility(problem, c.synthesize.margin, c.synthesize.tol);
  if (const auto* bad = std::get_if<Infeasible>(&r)) {
    return "linear scenario infeasible: " + bad->reason;
  }
  const LmiSolution& s = std::get<LmiSolution>(r);
  const GainSet g = recover_gains(s);
  double worst = 0.0;
  for (std::size_t m = 0; m < g.K.size(); ++m) {
    worst = std::max(worst, (g.K[m] * s.Q - s.Y[m]).norm());
  }
  if (!(worst < 1e-10)) return "gain round-trip residual " + Num(worst);
  return std::nullopt;
}

std::map<std::string, std::string> Snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), root).string()] = read_file(entry.path().string());
    }
  }
  return files;
}

std::optional<std::string> PipelineDeterminism() {
  const fs::path base = fs::temp_directory_path() / "microgrid_acceptance_determinism";
  fs::remove_all(base);
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    ScenarioConfig c = LoadConfig("linear_market.cfg");
    c.output_dir = (base / run).string();
    run_pipeline(c, all_stages(), log);
  }
  const auto a = Snapshot(base / "a");
  const auto b = Snapshot(base / "b");
  fs::remove_all(base);
  if (a.empty()) return std::string("pipeline wrote no files");
  if (a != b) return std::string("pipeline outputs differ between runs");
  return std::nullopt;
}

Verdict Properties8() {
  const std::vector<std::pair<std::string, Property>> checks{
      {"partition", PartitionOfUnity},   {"rk4", Rk4Order},
      {"affinity", DriftAffinity},       {"gains", GainRoundTrip},
      {"determinism", PipelineDeterminism}};
  std::string failures;
  for (const auto& [name, check] : checks) {
    std::optional<std::string> bad;
    try {
      bad = check();
    } catch (const std::exception& e) {
      bad = std::string(e.what());
    }
    if (bad) failures += (failures.empty() ? "" : "; ") + name + ": " + *bad;
  }
  if (failures.empty()) return {true, "partition, active rules, RK4 order, affinity, gain "
                                      "round-trip, determinism"};
  return {false, failures};
}

}  // namespace
}  // namespace microgrid

int main() {
  using namespace microgrid;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"equilibrium", Equilibrium1},
      {"fuzzy fit quality", FitQuality2},
      {"LMI feasibility at gamma^2 = 2", Feasibility3},
      {"P-form certificate", DualCertificate4},
      {"undisturbed convergence", Example1_5},
      {"disturbed ensemble", Example2_6},
      {"storage target q = 5", StorageTarget7},
      {"property suites", Properties8},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " ("
              << criteria[i].first << "): " << v.detail << std::endl;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
