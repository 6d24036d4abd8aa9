#include "microgrid/barrier_sdp.h"

#include <cmath>
#include <optional>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace microgrid::sdp {

Eigen::MatrixXd LmiBlock::Evaluate(const Eigen::VectorXd& v) const {
  Eigen::MatrixXd s = constant;
  for (const auto& term : terms) s += v(term.variable) * term.coefficient;
  return s;
}

namespace {

// -log det S, or nullopt when S is not positive definite.
std::optional<double> NegLogDet(const Eigen::MatrixXd& s) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
  double sum = 0.0;
  for (int i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) return std::nullopt;
    sum += std::log(diag(i));
  }
  return -2.0 * sum;
}

std::optional<double> Objective(const Eigen::VectorXd& cost, double weight,
                                const std::vector<LmiBlock>& blocks,
                                const Eigen::VectorXd& v) {
  double f = weight * cost.dot(v);
  for (const auto& block : blocks) {
    const auto term = NegLogDet(block.Evaluate(v));
    if (!term) return std::nullopt;
    f += *term;
  }
  return f;
}

}  // namespace

BarrierResult MinimizeLinearOverLmis(const Eigen::VectorXd& cost,
                                     const std::vector<LmiBlock>& blocks,
                                     const Eigen::VectorXd& start,
                                     const BarrierOptions& options) {
  const int n = static_cast<int>(cost.size());
  if (start.size() != n) throw std::invalid_argument("start point has wrong dimension");
  int total_dim = 0;
  for (const auto& b : blocks) total_dim += static_cast<int>(b.constant.rows());

  BarrierResult result;
  result.x = start;
  double weight = options.initial_weight;
  if (!Objective(cost, weight, blocks, result.x)) {
    throw std::invalid_argument("barrier start point is not strictly feasible");
  }

  Eigen::VectorXd grad(n);
  Eigen::MatrixXd hess(n, n);
  std::vector<Eigen::MatrixXd> scaled;

  while (true) {
    // Centering.
    bool centered = false;
    while (result.newton_steps < options.max_newton_steps) {
      grad = weight * cost;
      hess.setZero();
      for (const auto& block : blocks) {
        Eigen::LLT<Eigen::MatrixXd> llt(block.Evaluate(result.x));
        const int k = static_cast<int>(block.terms.size());
        scaled.resize(k);
        for (int j = 0; j < k; ++j) {
          scaled[j] = llt.solve(block.terms[j].coefficient);
          grad(block.terms[j].variable) -= scaled[j].trace();
        }
        for (int j = 0; j < k; ++j) {
          for (int i = 0; i <= j; ++i) {
            // tr(W_i W_j) for W = S^-1 F.
            const double h = (scaled[i].array() * scaled[j].transpose().array()).sum();
            const int a = block.terms[i].variable;
            const int b = block.terms[j].variable;
            hess(a, b) += h;
            if (a != b) hess(b, a) += h;
          }
        }
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      Eigen::VectorXd step = -ldlt.solve(grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
        step = -hess.ldlt().solve(grad);
      }
      const double decrement_sq = -grad.dot(step);
      ++result.newton_steps;
      if (decrement_sq / 2.0 < 1e-10) {
        centered = true;
        break;
      }

      const double f0 = *Objective(cost, weight, blocks, result.x);
      double alpha = 1.0;
      bool moved = false;
      for (int tries = 0; tries < 60; ++tries, alpha *= 0.5) {
        const Eigen::VectorXd trial = result.x + alpha * step;
        const auto f = Objective(cost, weight, blocks, trial);
        if (f && *f <= f0 - 0.25 * alpha * decrement_sq) {
          result.x = trial;
          moved = true;
          break;
        }
      }
      if (!moved) {
        // No further progress at machine precision; treat as centered.
        centered = true;
        break;
      }
    }

    result.objective = cost.dot(result.x);
    if (!centered) {
      result.status = BarrierResult::Status::kIterationLimit;
      return result;
    }
    ++result.outer_iterations;
    const double gap = static_cast<double>(total_dim) / weight;
    result.lower_bound = result.objective - gap;

    if (result.objective < options.stop_objective_below) {
      result.status = BarrierResult::Status::kObjectiveTarget;
      return result;
    }
    if (result.lower_bound > options.stop_bound_above) {
      result.status = BarrierResult::Status::kBoundExceeded;
      return result;
    }
    if (gap < options.gap_tolerance) {
      result.status = BarrierResult::Status::kConverged;
      return result;
    }
    weight *= options.weight_growth;
  }
}

}  // namespace microgrid::sdp
