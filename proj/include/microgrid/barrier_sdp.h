#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

namespace microgrid::sdp {

struct AffineTerm {
  int variable;
  Eigen::MatrixXd coefficient;
};

/// S(v) = constant + sum_j v_j coefficient_j, constrained to be positive
/// definite. Only the variables listed in `terms` enter the block.
struct LmiBlock {
  Eigen::MatrixXd constant;
  std::vector<AffineTerm> terms;

  Eigen::MatrixXd Evaluate(const Eigen::VectorXd& v) const;
};

struct BarrierOptions {
  double initial_weight = 1.0;
  double weight_growth = 10.0;
  double gap_tolerance = 1e-8;
  int max_newton_steps = 2000;
  // Early exits for feasibility use: stop as soon as a centered point reaches
  // an objective below this value, or the duality bound rises above the other.
  double stop_objective_below = -std::numeric_limits<double>::infinity();
  double stop_bound_above = std::numeric_limits<double>::infinity();
};

struct BarrierResult {
  enum class Status { kConverged, kObjectiveTarget, kBoundExceeded, kIterationLimit };

  Eigen::VectorXd x;
  double objective = 0.0;
  double lower_bound = -std::numeric_limits<double>::infinity();
  int newton_steps = 0;
  int outer_iterations = 0;
  Status status = Status::kIterationLimit;
};

/// Minimizes cost^T v subject to every block being positive definite, using a
/// log-det barrier path-following method with damped Newton centering.
/// `start` must be strictly feasible. The returned lower_bound is the standard
/// barrier duality bound objective - (sum of block sizes) / weight at the last
/// centered point.
BarrierResult MinimizeLinearOverLmis(const Eigen::VectorXd& cost,
                                     const std::vector<LmiBlock>& blocks,
                                     const Eigen::VectorXd& start,
                                     const BarrierOptions& options = {});

}  // namespace microgrid::sdp
