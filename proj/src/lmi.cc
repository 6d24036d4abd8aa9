#include "microgrid/lmi.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "microgrid/barrier_sdp.h"
#include "microgrid/errors.h"
#include "microgrid/random.h"

namespace microgrid {

LmiProblem LmiProblem::From(std::vector<Eigen::Matrix3d> rule_matrices,
                            const SystemMatrices& system, double gamma_sq) {
  LmiProblem p;
  p.rule_matrices = std::move(rule_matrices);
  p.tau = system.tau;
  p.B = system.B;
  p.C = system.C;
  p.D = system.D;
  p.gamma_sq = gamma_sq;
  return p;
}

double max_eigenvalue(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

namespace {

double MinEigenvalue(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void CheckRule(const LmiProblem& problem, int m) {
  if (m < 0 || m >= problem.rule_count()) {
    throw AssemblyError("rule index " + std::to_string(m) + " out of range for " +
                        std::to_string(problem.rule_count()) + " rules");
  }
}

void CheckProblem(const LmiProblem& problem) {
  if (problem.rule_count() == 0) throw AssemblyError("LMI problem has no rules");
  if (!std::isfinite(problem.gamma_sq) || !(problem.gamma_sq > 0.0)) {
    throw ParameterError("gamma^2 must be finite and > 0");
  }
}

// Upper-triangular coordinates of a symmetric 3x3 matrix.
constexpr std::array<std::pair<int, int>, 6> kSymIndex{
    {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};

Eigen::Matrix3d SymBasis(int k) {
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
  const auto [i, j] = kSymIndex[k];
  e(i, j) = 1.0;
  e(j, i) = 1.0;
  return e;
}

Eigen::Matrix3d UnpackQ(const Eigen::VectorXd& v) {
  Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
  for (int k = 0; k < 6; ++k) {
    const auto [i, j] = kSymIndex[k];
    q(i, j) = v(k);
    q(j, i) = v(k);
  }
  return q;
}

}  // namespace

Matrix8d assemble_rule_lmi(const LmiProblem& problem, int m, const Eigen::Matrix3d& Q,
                           const Eigen::RowVector3d& Y_m) {
  CheckRule(problem, m);
  const Eigen::Matrix3d top = problem.rule_matrices[m] * Q + problem.tau * Y_m;
  const Eigen::Matrix<double, 3, 2> cross =
      Q * problem.C.transpose() + Y_m.transpose() * problem.D.transpose();

  Matrix8d out = Matrix8d::Zero();
  out.block<3, 3>(0, 0) = top + top.transpose();
  out.block<3, 3>(0, 3) = problem.B;
  out.block<3, 2>(0, 6) = cross;
  out.block<3, 3>(3, 0) = problem.B.transpose();
  out.block<3, 3>(3, 3) = -problem.gamma_sq * Eigen::Matrix3d::Identity();
  out.block<2, 3>(6, 0) = cross.transpose();
  out.block<2, 2>(6, 6) = -Eigen::Matrix2d::Identity();
  return out;
}

FeasibilityResult solve_feasibility(const LmiProblem& problem, double margin, double tol,
                                    const SynthesisOptions& options) {
  CheckProblem(problem);
  if (!(margin > 0.0) || !(tol > 0.0)) {
    throw ParameterError("feasibility margin and tolerance must be > 0");
  }
  const int M = problem.rule_count();
  const int n_vars = 6 + 3 * M + 1;
  const int t_var = n_vars - 1;
  const auto y_var = [](int m, int i) { return 6 + 3 * m + i; };

  // Block m: (t - margin) I - F_m(Q, Y_m) > 0. F_m is affine, so its
  // coefficients are differences of assembled matrices at basis points.
  std::vector<sdp::LmiBlock> blocks;
  blocks.reserve(M + 2);
  const Eigen::Matrix3d zero3 = Eigen::Matrix3d::Zero();
  const Eigen::RowVector3d zero_row = Eigen::RowVector3d::Zero();
  for (int m = 0; m < M; ++m) {
    const Matrix8d base = assemble_rule_lmi(problem, m, zero3, zero_row);
    sdp::LmiBlock block;
    block.constant = -margin * Matrix8d::Identity() - base;
    for (int k = 0; k < 6; ++k) {
      block.terms.push_back({k, -(assemble_rule_lmi(problem, m, SymBasis(k), zero_row) - base)});
    }
    for (int i = 0; i < 3; ++i) {
      const Eigen::RowVector3d unit = Eigen::RowVector3d::Unit(i);
      block.terms.push_back({y_var(m, i), -(assemble_rule_lmi(problem, m, zero3, unit) - base)});
    }
    block.terms.push_back({t_var, Matrix8d::Identity()});
    blocks.push_back(std::move(block));
  }
  {
    // Q - (margin - t) I > 0.
    sdp::LmiBlock lower;
    lower.constant = -margin * Eigen::Matrix3d::Identity();
    for (int k = 0; k < 6; ++k) lower.terms.push_back({k, SymBasis(k)});
    lower.terms.push_back({t_var, Eigen::Matrix3d::Identity()});
    blocks.push_back(std::move(lower));
    // q_upper I - Q > 0.
    sdp::LmiBlock upper;
    upper.constant = options.q_upper * Eigen::Matrix3d::Identity();
    for (int k = 0; k < 6; ++k) upper.terms.push_back({k, -SymBasis(k)});
    blocks.push_back(std::move(upper));
  }

  // Start from Q = I, Y = 0 with t large enough for strict feasibility.
  Eigen::VectorXd start = Eigen::VectorXd::Zero(n_vars);
  start(0) = start(3) = start(5) = 1.0;
  double worst = 0.0;
  for (int m = 0; m < M; ++m) {
    worst = std::max(worst, max_eigenvalue(assemble_rule_lmi(
                                problem, m, Eigen::Matrix3d::Identity(), zero_row)));
  }
  start(t_var) = worst + margin + 1.0;

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_vars);
  cost(t_var) = 1.0;
  sdp::BarrierOptions barrier;
  barrier.gap_tolerance = tol;
  barrier.max_newton_steps = options.max_newton_steps;
  barrier.stop_bound_above = 0.0;
  const sdp::BarrierResult run = sdp::MinimizeLinearOverLmis(cost, blocks, start, barrier);

  SolverStats stats;
  stats.newton_steps = run.newton_steps;
  stats.outer_iterations = run.outer_iterations;
  stats.objective = run.objective;
  stats.lower_bound = run.lower_bound;
  stats.margin = margin;
  stats.tol = tol;

  Eigen::Matrix3d Q = UnpackQ(run.x);
  std::vector<Eigen::RowVector3d> Y(M);
  for (int m = 0; m < M; ++m) {
    Y[m] << run.x(y_var(m, 0)), run.x(y_var(m, 1)), run.x(y_var(m, 2));
  }

  // Certificate from freshly assembled blocks, independent of the barrier
  // solver's own bookkeeping.
  std::vector<double> block_margins(M);
  bool certified = MinEigenvalue(Q) >= margin;
  for (int m = 0; m < M; ++m) {
    block_margins[m] = max_eigenvalue(assemble_rule_lmi(problem, m, Q, Y[m]));
    certified = certified && block_margins[m] <= -margin;
  }
  const double q_margin = MinEigenvalue(Q);

  if (certified) {
    LmiSolution solution;
    solution.Q = Q;
    solution.Y = std::move(Y);
    solution.gamma = std::sqrt(problem.gamma_sq);
    solution.block_margins = std::move(block_margins);
    solution.q_margin = q_margin;
    solution.stats = stats;
    return solution;
  }

  Infeasible out;
  std::ostringstream why;
  why.precision(6);
  switch (run.status) {
    case sdp::BarrierResult::Status::kBoundExceeded:
      why << "the common eigenvalue shift is bounded below by "
          << run.lower_bound << " > 0 (attained " << run.objective << ")";
      break;
    case sdp::BarrierResult::Status::kIterationLimit:
      why << "no certified point within " << options.max_newton_steps
          << " Newton steps (attained shift " << run.objective << ")";
      break;
    default:
      why << "solver stopped at shift " << run.objective
          << " but the eigenvalue certificate rejected the point";
      break;
  }
  out.reason = why.str();
  out.Q = Q;
  out.Y = std::move(Y);
  out.block_margins = std::move(block_margins);
  out.q_margin = q_margin;
  out.stats = stats;
  return out;
}

GammaSearchResult minimize_gamma(const LmiProblem& problem, double gamma_lo,
                                 double gamma_hi, double bisect_tol, double margin,
                                 double tol, const SynthesisOptions& options) {
  if (!(gamma_lo > 0.0) || !(gamma_lo < gamma_hi) || !(bisect_tol > 0.0)) {
    throw BracketError("gamma bracket needs 0 < gamma_lo < gamma_hi and bisect_tol > 0");
  }
  GammaSearchResult result;
  LmiProblem trial = problem;
  const auto attempt = [&](double gamma) -> FeasibilityResult {
    trial.gamma_sq = gamma * gamma;
    ++result.feasibility_calls;
    return solve_feasibility(trial, margin, tol, options);
  };

  FeasibilityResult top = attempt(gamma_hi);
  if (auto* bad = std::get_if<Infeasible>(&top)) {
    throw BracketError("gamma_hi = " + std::to_string(gamma_hi) +
                       " is infeasible: " + bad->reason);
  }
  result.gamma_best = gamma_hi;
  result.solution = std::get<LmiSolution>(std::move(top));

  FeasibilityResult bottom = attempt(gamma_lo);
  if (auto* ok = std::get_if<LmiSolution>(&bottom)) {
    result.gamma_best = gamma_lo;
    result.solution = std::move(*ok);
    return result;
  }

  double lo = gamma_lo;
  double hi = gamma_hi;
  while (hi - lo > bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    FeasibilityResult r = attempt(mid);
    if (auto* ok = std::get_if<LmiSolution>(&r)) {
      hi = mid;
      result.gamma_best = mid;
      result.solution = std::move(*ok);
    } else {
      lo = mid;
    }
  }
  return result;
}

GainSet recover_gains(const LmiSolution& solution, double max_condition) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(solution.Q, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > max_condition) {
    std::ostringstream msg;
    msg << "Q is numerically singular (eigenvalues " << lo << " .. " << hi
        << ", condition limit " << max_condition << ")";
    throw ConditioningError(msg.str());
  }
  Eigen::LLT<Eigen::Matrix3d> llt(solution.Q);
  GainSet gains;
  gains.gamma = solution.gamma;
  gains.provenance.margin = solution.stats.margin;
  gains.provenance.tol = solution.stats.tol;
  gains.provenance.newton_steps = solution.stats.newton_steps;
  gains.K.reserve(solution.Y.size());
  for (const auto& y : solution.Y) {
    // K Q = Y  <=>  Q K^T = Y^T.
    gains.K.push_back(llt.solve(y.transpose()).transpose());
  }
  return gains;
}

bool VerificationReport::feasible() const {
  if (!(phi_sample_max < 0.0)) return false;
  return std::all_of(p_form_margins.begin(), p_form_margins.end(),
                     [](double v) { return v < 0.0; });
}

Matrix8d assemble_p_form_lmi(const LmiProblem& problem, int m, const Eigen::Matrix3d& P,
                             const Eigen::RowVector3d& K_m) {
  CheckRule(problem, m);
  const Eigen::Matrix3d closed = problem.rule_matrices[m] + problem.tau * K_m;
  const Eigen::Matrix<double, 2, 3> output = problem.C + problem.D * K_m;

  Matrix8d out = Matrix8d::Zero();
  out.block<3, 3>(0, 0) = closed.transpose() * P + P * closed;
  out.block<3, 3>(0, 3) = P * problem.B;
  out.block<3, 2>(0, 6) = output.transpose();
  out.block<3, 3>(3, 0) = problem.B.transpose() * P;
  out.block<3, 3>(3, 3) = -problem.gamma_sq * Eigen::Matrix3d::Identity();
  out.block<2, 3>(6, 0) = output;
  out.block<2, 2>(6, 6) = -Eigen::Matrix2d::Identity();
  return out;
}

double phi_quadratic_form(const LmiProblem& problem, const GainSet& gains,
                          const Eigen::Matrix3d& P, const MarketState& x,
                          const Disturbance& w, const FuzzyBox& box) {
  if (static_cast<int>(gains.K.size()) != problem.rule_count() ||
      box.rule_count() != problem.rule_count()) {
    throw AssemblyError("gain set, rule base and premise box disagree on the rule count");
  }
  const Eigen::Vector3d xv = x.vector();
  const Eigen::Vector3d wv = w.vector();
  const Eigen::Vector3d Px = P * xv;
  const double disturbance_terms =
      2.0 * Px.dot(problem.B * wv) - problem.gamma_sq * wv.squaredNorm();
  double value = 0.0;
  for (const auto& hit : active_rules(box, xv)) {
    const Eigen::RowVector3d& K = gains.K[hit.rule];
    const Eigen::Vector3d closed =
        problem.rule_matrices[hit.rule] * xv + problem.tau * (K * xv);
    const Eigen::Vector2d z = problem.C * xv + problem.D * (K * xv);
    value += hit.weight * (2.0 * Px.dot(closed) + z.squaredNorm() + disturbance_terms);
  }
  return value;
}

VerificationReport verify_solution(const LmiProblem& problem, const GainSet& gains,
                                   const Eigen::Matrix3d& Q, int n_samples,
                                   std::uint64_t seed, const FuzzyBox& box,
                                   const ChannelRanges& w_range) {
  CheckProblem(problem);
  if (static_cast<int>(gains.K.size()) != problem.rule_count()) {
    throw AssemblyError("gain set has " + std::to_string(gains.K.size()) +
                        " rules, problem has " + std::to_string(problem.rule_count()));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(Q, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw ConditioningError("Q must be positive definite for verification");
  }
  VerificationReport report;
  Eigen::Matrix3d P = Q.llt().solve(Eigen::Matrix3d::Identity());
  P = 0.5 * (P + P.transpose()).eval();
  report.p_matrix = P;

  const int M = problem.rule_count();
  report.p_form_margins.resize(M);
  for (int m = 0; m < M; ++m) {
    report.p_form_margins[m] = max_eigenvalue(assemble_p_form_lmi(problem, m, P, gains.K[m]));
  }

  UniformStream stream(seed);
  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_samples; ++s) {
    MarketState x;
    x.p_g = stream.Next(box.axes[0].lower(), box.axes[0].upper());
    x.p_d = stream.Next(box.axes[1].lower(), box.axes[1].upper());
    x.e = stream.Next(box.axes[2].lower(), box.axes[2].upper());
    Disturbance w;
    w.delta_g = stream.Next(w_range[0].first, w_range[0].second);
    w.delta_d = stream.Next(w_range[1].first, w_range[1].second);
    w.in_dev = stream.Next(w_range[2].first, w_range[2].second);
    worst = std::max(worst, phi_quadratic_form(problem, gains, P, x, w, box));
  }
  report.phi_sample_max = n_samples > 0 ? worst : 0.0;
  report.samples_used = n_samples;
  return report;
}

}  // namespace microgrid
