#include "microgrid/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "microgrid/errors.h"
#include "microgrid/fuzzy.h"
#include "microgrid/lmi.h"
#include "microgrid/random.h"
#include "microgrid/simulation.h"

namespace microgrid {

namespace fs = std::filesystem;

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::kIdentify, Stage::kSynthesize, Stage::kVerify,
                                         Stage::kSimulate, Stage::kCompare};
  return stages;
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIdentify: return "identify";
    case Stage::kSynthesize: return "synthesize";
    case Stage::kVerify: return "verify";
    case Stage::kSimulate: return "simulate";
    case Stage::kCompare: return "compare";
  }
  return "unknown";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : all_stages()) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigurationError("unknown stage '" + name + "'");
}

namespace {

std::string PolicyName(PolicyKind kind) { return kind == PolicyKind::kAce ? "ace" : "fuzzy"; }

void RequireFile(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw DependencyError("missing " + path + " (run the " + producer + " stage first)");
  }
}

std::string Optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("none");
}

}  // namespace

std::string ArtifactPaths::trajectory(PolicyKind kind, std::uint64_t seed) const {
  return root + "/trajectories/" + PolicyName(kind) + "_seed" + std::to_string(seed) + ".csv";
}

std::string ArtifactPaths::plots(PolicyKind kind, std::uint64_t seed) const {
  return root + "/plots/" + PolicyName(kind) + "_seed" + std::to_string(seed);
}

std::vector<std::uint64_t> ensemble_seeds(const ScenarioConfig& config) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < config.ensemble.count; ++i) {
    seeds.push_back(config.disturbance.seed + static_cast<std::uint64_t>(i));
  }
  return seeds;
}

std::vector<PolicyKind> selected_policies(const ScenarioConfig& config) {
  switch (config.controller.kind) {
    case ControllerSelection::kAce: return {PolicyKind::kAce};
    case ControllerSelection::kFuzzy: return {PolicyKind::kFuzzy};
    case ControllerSelection::kBoth: break;
  }
  return {PolicyKind::kAce, PolicyKind::kFuzzy};
}

PricingPolicy make_policy(const ScenarioConfig& config, PolicyKind kind, const GainFile* gains) {
  PricingPolicy policy;
  policy.kind = kind;
  policy.ace_lambda0 = config.sim.initial_lambda;
  policy.ace_tau_lambda = config.market.tau_lambda;
  policy.storage_target_q = config.controller.storage_target;
  if (config.controller.clamp_lo && config.controller.clamp_hi) {
    policy.price_clamp = std::make_pair(*config.controller.clamp_lo, *config.controller.clamp_hi);
  }
  if (kind == PolicyKind::kFuzzy) {
    if (gains == nullptr) throw ConfigurationError("fuzzy policy needs a gain file");
    policy.fuzzy_gains = gains->gains;
    policy.fuzzy_box = gains->box;
  }
  validate_policy(policy);
  return policy;
}

namespace {

void RunIdentify(const ScenarioConfig& config, const ArtifactPaths& paths,
                 PipelineResult& result, std::ostream& log) {
  const auto samples = generate_training_data(config.market, config.box,
                                              config.identify.samples, config.identify.seed);
  IdentifiedModel model = identify_rule_matrices(samples, config.box, config.identify.ridge);
  write_model(model, paths.model());
  result.artifacts.push_back(paths.model());

  // Same-size draw from an independent stream, for an out-of-sample error.
  const std::uint64_t fresh_seed = Mix64(config.identify.seed ^ 0x5eedULL);
  const double fresh_error = approximation_error_sup(
      model, generate_training_data(config.market, config.box, config.identify.samples,
                                    fresh_seed));
  std::ostringstream report;
  report << "rules " << model.rule_matrices.size() << '\n'
         << "samples " << model.sample_count << '\n'
         << "seed " << config.identify.seed << '\n'
         << "ridge " << format_double(config.identify.ridge) << '\n'
         << "sup_error_training " << format_double(model.sup_error) << '\n'
         << "fresh_seed " << fresh_seed << '\n'
         << "sup_error_fresh " << format_double(fresh_error) << '\n';
  write_file(paths.identification(), report.str());
  result.artifacts.push_back(paths.identification());
  log << "identify: " << model.rule_matrices.size() << " rules, sup error "
      << format_double(model.sup_error) << " (fresh samples " << format_double(fresh_error)
      << ")\n";
}

void RunSynthesize(const ScenarioConfig& config, const ArtifactPaths& paths,
                   PipelineResult& result, std::ostream& log) {
  RequireFile(paths.model(), "identify");
  const IdentifiedModel model = read_model(paths.model());
  const SystemMatrices system = assemble_system_matrices(config.market);
  const auto& s = config.synthesize;
  LmiProblem problem = LmiProblem::From(model.rule_matrices, system, s.gamma_sq);
  SynthesisOptions options;
  options.q_upper = s.q_upper;
  options.max_newton_steps = s.max_newton_steps;

  // A stale gain file must never outlive a failed synthesis.
  std::error_code ec;
  fs::remove(paths.gains(), ec);

  std::ostringstream report;
  report << "rules " << problem.rule_count() << '\n'
         << "epsilon " << format_double(config.market.epsilon) << '\n'
         << "margin " << format_double(s.margin) << '\n'
         << "tol " << format_double(s.tol) << '\n';

  FeasibilityResult outcome;
  if (s.minimize) {
    try {
      GammaSearchResult search =
          minimize_gamma(problem, s.gamma_lo, s.gamma_hi, s.bisect_tol, s.margin, s.tol, options);
      problem.gamma_sq = search.gamma_best * search.gamma_best;
      report << "gamma_search_calls " << search.feasibility_calls << '\n';
      outcome = std::move(search.solution);
    } catch (const BracketError& e) {
      report << "status infeasible\nreason " << e.what() << '\n';
      write_file(paths.synthesis(), report.str());
      result.artifacts.push_back(paths.synthesis());
      throw;
    }
  } else {
    outcome = solve_feasibility(problem, s.margin, s.tol, options);
  }
  report << "gamma_sq " << format_double(problem.gamma_sq) << '\n';

  const auto write_margins = [&](const std::vector<double>& margins, double q_margin,
                                 const SolverStats& stats) {
    report << "attained_shift " << format_double(stats.objective) << '\n'
           << "shift_lower_bound " << format_double(stats.lower_bound) << '\n'
           << "newton_steps " << stats.newton_steps << '\n'
           << "q_min_eigenvalue " << format_double(q_margin) << '\n';
    for (std::size_t m = 0; m < margins.size(); ++m) {
      report << "block " << m << ' ' << format_double(margins[m]) << '\n';
    }
  };

  if (auto* bad = std::get_if<Infeasible>(&outcome)) {
    report << "status infeasible\nreason " << bad->reason << '\n';
    write_margins(bad->block_margins, bad->q_margin, bad->stats);
    write_file(paths.synthesis(), report.str());
    result.artifacts.push_back(paths.synthesis());
    throw InfeasibleError("LMI problem has no certified solution: " + bad->reason);
  }
  const LmiSolution& solution = std::get<LmiSolution>(outcome);
  GainFile file;
  file.gains = recover_gains(solution);
  file.gains.provenance.seed = config.identify.seed;
  file.Q = solution.Q;
  file.box = model.box;
  file.gamma_sq = problem.gamma_sq;
  file.epsilon = config.market.epsilon;

  double residual = 0.0;
  for (std::size_t m = 0; m < solution.Y.size(); ++m) {
    residual = std::max(residual, (file.gains.K[m] * solution.Q - solution.Y[m]).norm() /
                                      std::max(1.0, solution.Y[m].norm()));
  }
  report << "status feasible\n"
         << "gain_roundtrip_residual " << format_double(residual) << '\n';
  write_margins(solution.block_margins, solution.q_margin, solution.stats);
  write_gains(file, paths.gains());
  write_file(paths.synthesis(), report.str());
  result.artifacts.push_back(paths.gains());
  result.artifacts.push_back(paths.synthesis());
  log << "synthesize: feasible at gamma^2 = " << format_double(problem.gamma_sq) << '\n';
}

void RunVerify(const ScenarioConfig& config, const ArtifactPaths& paths, PipelineResult& result,
               std::ostream& log) {
  RequireFile(paths.model(), "identify");
  RequireFile(paths.gains(), "synthesize");
  const IdentifiedModel model = read_model(paths.model());
  const GainFile gains = read_gains(paths.gains());
  if (gains.box.rule_count() != model.box.rule_count()) {
    throw AssemblyError("gain file and model disagree on the rule count");
  }
  MarketParams params = config.market;
  params.epsilon = gains.epsilon;
  const LmiProblem problem =
      LmiProblem::From(model.rule_matrices, assemble_system_matrices(params), gains.gamma_sq);
  const VerificationReport report =
      verify_solution(problem, gains.gains, gains.Q, config.synthesize.verify_samples,
                      config.synthesize.verify_seed, gains.box);
  write_verification_report(report, gains.gamma_sq, config.synthesize.verify_seed,
                            paths.verification());
  result.artifacts.push_back(paths.verification());
  log << "verify: " << (report.feasible() ? "certificate holds" : "certificate FAILS")
      << ", phi max " << format_double(report.phi_sample_max) << '\n';
  if (!report.feasible()) throw InfeasibleError("verification found a non-negative margin");
}

void RunSimulate(const ScenarioConfig& config, const ArtifactPaths& paths,
                 PipelineResult& result, std::ostream& log) {
  const auto policies = selected_policies(config);
  std::optional<GainFile> gains;
  if (std::find(policies.begin(), policies.end(), PolicyKind::kFuzzy) != policies.end()) {
    RequireFile(paths.gains(), "synthesize");
    gains = read_gains(paths.gains());
  }
  fs::create_directories(paths.root + "/trajectories");
  for (std::uint64_t seed : ensemble_seeds(config)) {
    DisturbanceSpec dist = config.disturbance;
    dist.seed = seed;
    for (PolicyKind kind : policies) {
      const PricingPolicy policy = make_policy(config, kind, gains ? &*gains : nullptr);
      const Trajectory traj = simulate_closed_loop(config.market, policy, dist, config.sim);
      const std::string csv = paths.trajectory(kind, seed);
      write_trajectory_csv(traj, csv);
      const Metrics metrics =
          compute_metrics(traj, config.metrics.settle_band, config.metrics.window);
      emit_plot_data(traj, metrics, paths.plots(kind, seed));
      result.artifacts.push_back(csv);
      log << "simulate: " << PolicyName(kind) << " seed " << seed << ", rms imbalance "
          << format_double(metrics.rms_imbalance) << '\n';
    }
  }
}

void RunCompare(const ScenarioConfig& config, const ArtifactPaths& paths,
                PipelineResult& result, std::ostream& log) {
  const auto policies = selected_policies(config);
  std::ostringstream out;
  out << "seed,policy,settling_time,rms_imbalance,max_abs_imbalance,mean_supply_demand_gap,"
         "empirical_ratio\n";
  std::ostringstream verdicts;
  for (std::uint64_t seed : ensemble_seeds(config)) {
    std::vector<Metrics> per_policy;
    for (PolicyKind kind : policies) {
      const std::string csv = paths.trajectory(kind, seed);
      RequireFile(csv, "simulate");
      const Metrics m =
          compute_metrics(read_trajectory_csv(csv), config.metrics.settle_band,
                          config.metrics.window);
      out << seed << ',' << PolicyName(kind) << ',' << Optional(m.settling_time) << ','
          << format_double(m.rms_imbalance) << ',' << format_double(m.max_abs_imbalance) << ','
          << format_double(m.mean_supply_demand_gap) << ',' << Optional(m.empirical_ratio)
          << '\n';
      per_policy.push_back(m);
    }
    if (per_policy.size() == 2) {
      const Metrics& ace = per_policy[0];
      const Metrics& fuzzy = per_policy[1];
      const bool faster = fuzzy.settling_time &&
                          (!ace.settling_time || *fuzzy.settling_time < *ace.settling_time);
      verdicts << "# seed " << seed << ": fuzzy settles faster " << (faster ? "yes" : "no")
               << ", fuzzy rms lower "
               << (fuzzy.rms_imbalance < ace.rms_imbalance ? "yes" : "no") << '\n';
    }
  }
  write_file(paths.comparison(), out.str() + verdicts.str());
  result.artifacts.push_back(paths.comparison());
  log << "compare: wrote " << paths.comparison() << '\n';
}

}  // namespace

PipelineResult run_pipeline(const ScenarioConfig& config, std::vector<Stage> stages,
                            std::ostream& log) {
  std::sort(stages.begin(), stages.end());
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  const ArtifactPaths paths(config.output_dir);
  std::error_code ec;
  fs::create_directories(paths.root, ec);
  if (ec) throw IoError("cannot create " + paths.root + ": " + ec.message());

  PipelineResult result;
  for (Stage stage : stages) {
    try {
      switch (stage) {
        case Stage::kIdentify: RunIdentify(config, paths, result, log); break;
        case Stage::kSynthesize: RunSynthesize(config, paths, result, log); break;
        case Stage::kVerify: RunVerify(config, paths, result, log); break;
        case Stage::kSimulate: RunSimulate(config, paths, result, log); break;
        case Stage::kCompare: RunCompare(config, paths, result, log); break;
      }
    } catch (const DependencyError& e) {
      throw DependencyError(stage_name(stage) + ": " + e.what());
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }
  return result;
}

}  // namespace microgrid
