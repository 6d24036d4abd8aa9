#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "microgrid/fuzzy.h"
#include "microgrid/market.h"

namespace microgrid {

using Matrix8d = Eigen::Matrix<double, 8, 8>;

/// Data of the per-rule H-infinity synthesis inequalities.
struct LmiProblem {
  std::vector<Eigen::Matrix3d> rule_matrices;  // A_m
  Eigen::Vector3d tau;
  Eigen::Matrix3d B;
  Eigen::Matrix<double, 2, 3> C;
  Eigen::Vector2d D;
  double gamma_sq = 2.0;

  int rule_count() const { return static_cast<int>(rule_matrices.size()); }
  static LmiProblem From(std::vector<Eigen::Matrix3d> rule_matrices,
                         const SystemMatrices& system, double gamma_sq);
};

/// [[A_m Q + tau Y_m + (.)^T, B, Q C^T + Y_m^T D^T],
///  [.,                   -gamma^2 I3, 0],
///  [.,                   .,          -I2]]
Matrix8d assemble_rule_lmi(const LmiProblem& problem, int m, const Eigen::Matrix3d& Q,
                           const Eigen::RowVector3d& Y_m);

struct SolverStats {
  int newton_steps = 0;
  int outer_iterations = 0;
  double objective = 0.0;    // attained worst-block shift t
  double lower_bound = 0.0;  // barrier duality bound on t
  double margin = 0.0;
  double tol = 0.0;
};

struct LmiSolution {
  Eigen::Matrix3d Q;
  std::vector<Eigen::RowVector3d> Y;
  double gamma = 0.0;
  std::vector<double> block_margins;  // largest eigenvalue of each rule block
  double q_margin = 0.0;              // smallest eigenvalue of Q
  SolverStats stats;
};

/// Returned instead of a solution when no certified point was found. The
/// margins describe the best point the solver reached.
struct Infeasible {
  std::string reason;
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();  // best point reached
  std::vector<Eigen::RowVector3d> Y;
  std::vector<double> block_margins;
  double q_margin = 0.0;
  SolverStats stats;
};

using FeasibilityResult = std::variant<LmiSolution, Infeasible>;

struct SynthesisOptions {
  double q_upper = 1e4;  // Q <= q_upper I keeps the search set bounded
  int max_newton_steps = 2000;
};

/// Searches for Q, Y_m with every rule block <= -margin I and Q >= margin I by
/// minimizing a common eigenvalue shift t over the blocks. A point is only
/// reported feasible after an eigenvalue check on freshly assembled blocks.
FeasibilityResult solve_feasibility(const LmiProblem& problem, double margin, double tol,
                                    const SynthesisOptions& options = {});

struct GammaSearchResult {
  double gamma_best = 0.0;
  LmiSolution solution;
  int feasibility_calls = 0;
};

/// Bisection on gamma over [gamma_lo, gamma_hi]. Throws BracketError when the
/// upper end is infeasible.
GammaSearchResult minimize_gamma(const LmiProblem& problem, double gamma_lo,
                                 double gamma_hi, double bisect_tol, double margin,
                                 double tol, const SynthesisOptions& options = {});

struct GainProvenance {
  double margin = 0.0;
  double tol = 0.0;
  int newton_steps = 0;
  std::uint64_t seed = 0;
};

struct GainSet {
  std::vector<Eigen::RowVector3d> K;
  double gamma = 0.0;
  GainProvenance provenance;
};

/// K_m = Y_m Q^-1. Throws ConditioningError when cond(Q) exceeds
/// max_condition.
GainSet recover_gains(const LmiSolution& solution, double max_condition = 1e10);

struct VerificationReport {
  Eigen::Matrix3d p_matrix;
  std::vector<double> p_form_margins;
  double phi_sample_max = 0.0;
  int samples_used = 0;

  bool feasible() const;
};

using ChannelRanges = std::array<std::pair<double, double>, 3>;

inline constexpr ChannelRanges kUnitDisturbanceBox{{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}}};

/// Re-derives the certificate in the P = Q^-1 coordinates: the closed-loop
/// block of every rule, then the blended dissipation form sampled at
/// n_samples points (x uniform in the box, w uniform in w_range).
VerificationReport verify_solution(const LmiProblem& problem, const GainSet& gains,
                                   const Eigen::Matrix3d& Q, int n_samples,
                                   std::uint64_t seed, const FuzzyBox& box,
                                   const ChannelRanges& w_range = kUnitDisturbanceBox);

/// Closed-loop block of one rule in P form:
/// [[At^T P + P At, P B, Ct^T], [., -gamma^2 I3, 0], [., ., -I2]].
Matrix8d assemble_p_form_lmi(const LmiProblem& problem, int m, const Eigen::Matrix3d& P,
                             const Eigen::RowVector3d& K_m);

/// sum_m h_m(x) [x; w]^T Phi_m [x; w], i.e. V' + z^T z - gamma^2 w^T w along the
/// fuzzy closed loop (with the sum-of-outputs bound).
double phi_quadratic_form(const LmiProblem& problem, const GainSet& gains,
                          const Eigen::Matrix3d& P, const MarketState& x,
                          const Disturbance& w, const FuzzyBox& box);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Eigen::MatrixXd& symmetric);

}  // namespace microgrid
