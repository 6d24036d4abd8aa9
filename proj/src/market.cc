#include "microgrid/market.h"

#include <cmath>
#include <initializer_list>
#include <string>

#include "microgrid/errors.h"

namespace microgrid {
namespace {

void RequireFinite(std::initializer_list<double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string(where) + ": non-finite input");
    }
  }
}

void RequirePositive(double value, const char* name) {
  if (!std::isfinite(value) || !(value > 0.0)) {
    throw ParameterError(std::string("market parameter ") + name +
                         " must be finite and > 0, got " + std::to_string(value));
  }
}

}  // namespace

void ValidateParams(const MarketParams& params) {
  RequirePositive(params.c_g, "c_g");
  RequirePositive(params.c_d, "c_d");
  RequirePositive(params.tau_g, "tau_g");
  RequirePositive(params.tau_d, "tau_d");
  RequirePositive(params.tau_lambda, "tau_lambda");
  RequirePositive(params.k, "k");
  RequirePositive(params.epsilon, "epsilon");
  if (!std::isfinite(params.b_g_hat) || !std::isfinite(params.b_d_hat)) {
    throw ParameterError("market parameters b_g_hat and b_d_hat must be finite");
  }
  if (!std::isfinite(params.in_mean) || params.in_mean < 0.0) {
    throw ParameterError("market parameter in_mean must be finite and >= 0");
  }
}

double supply_rate(const MarketParams& params, double p_g, double e,
                   double lambda, double delta_g) {
  RequireFinite({p_g, e, lambda, delta_g}, "supply_rate");
  return (-params.c_g * p_g - params.k * e - params.b_g_hat + lambda - delta_g) /
         params.tau_g;
}

double demand_rate(const MarketParams& params, double p_d, double lambda,
                   double delta_d) {
  RequireFinite({p_d, lambda, delta_d}, "demand_rate");
  // Marginal benefit is b_d - c_d p_d (downward-sloping demand).
  return (-params.c_d * p_d + params.b_d_hat - lambda + delta_d) / params.tau_d;
}

double storage_rate(double p_g, double p_d, double in) {
  RequireFinite({p_g, p_d, in}, "storage_rate");
  return p_g + in - p_d;
}

Eigen::Vector3d market_drift(const MarketParams& params, const MarketState& state,
                             double lambda, const Disturbance& w) {
  ValidateParams(params);
  return {supply_rate(params, state.p_g, state.e, lambda, w.delta_g),
          demand_rate(params, state.p_d, lambda, w.delta_d),
          storage_rate(state.p_g, state.p_d, params.in_mean + w.in_dev)};
}

SystemMatrices assemble_system_matrices(const MarketParams& params) {
  ValidateParams(params);
  SystemMatrices m;
  m.A << -params.c_g / params.tau_g, 0.0, -params.k / params.tau_g,
         0.0, -params.c_d / params.tau_d, 0.0,
         1.0, -1.0, 0.0;
  m.B = Eigen::Vector3d(-1.0 / params.tau_g, 1.0 / params.tau_d, 1.0).asDiagonal();
  m.b << -params.b_g_hat / params.tau_g, params.b_d_hat / params.tau_d, params.in_mean;
  m.tau << 1.0 / params.tau_g, -1.0 / params.tau_d, 0.0;
  m.C << 0.0, 0.0, 1.0,
         0.0, 0.0, 0.0;
  m.D << 0.0, params.epsilon;
  return m;
}

Equilibrium compute_equilibrium(const MarketParams& params) {
  const double slope = params.c_g + params.c_d;
  if (!std::isfinite(slope) || slope == 0.0) {
    throw DegenerateMarketError("c_g + c_d must be nonzero to clear the market");
  }
  const double p = (params.b_d_hat - params.b_g_hat) / slope;
  return {p, params.b_g_hat + params.c_g * p};
}

}  // namespace microgrid
