#pragma once

#include <Eigen/Core>

namespace microgrid {

/// Scalar constants of the single-supplier, single-consumer market.
///
/// Units are abstract but consistent: power, energy (power x time), price and
/// time. Defaults are the reference operating point used throughout the
/// examples and acceptance suite.
struct MarketParams {
  double c_g = 0.4;          ///< supply elasticity (price per power)
  double c_d = 0.5;          ///< demand elasticity magnitude, applied as -c_d
  double tau_g = 0.2;        ///< supply time scale
  double tau_d = 0.25;       ///< demand time scale
  double b_g_hat = 2.0;      ///< nominal initial supplier cost
  double b_d_hat = 10.0;     ///< nominal initial consumer benefit
  double k = 0.1;            ///< excess-energy cost gain
  double tau_lambda = 100.0; ///< ACE price speed constant
  double epsilon = 0.1;      ///< price weight in the performance output
  double in_mean = 0.0;      ///< forecast mean of the renewable input
};

/// Throws ParameterError unless every scale factor, elasticity, k and epsilon
/// is finite and strictly positive, and in_mean is finite and non-negative.
void ValidateParams(const MarketParams& params);

struct MarketState {
  double p_g = 0.0;
  double p_d = 0.0;
  double e = 0.0;

  Eigen::Vector3d vector() const { return {p_g, p_d, e}; }
  static MarketState FromVector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

/// w = (delta_g, delta_d, in). With a nonzero in_mean the third channel is the
/// deviation from the forecast mean.
struct Disturbance {
  double delta_g = 0.0;
  double delta_d = 0.0;
  double in_dev = 0.0;

  Eigen::Vector3d vector() const { return {delta_g, delta_d, in_dev}; }
  static Disturbance FromVector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

/// x' = A x + b + tau lambda + B w, z = C x + D lambda.
struct SystemMatrices {
  Eigen::Matrix3d A;
  Eigen::Matrix3d B;
  Eigen::Vector3d b;
  Eigen::Vector3d tau;
  Eigen::Matrix<double, 2, 3> C;
  Eigen::Vector2d D;
};

struct Equilibrium {
  double power;  ///< p_g = p_d at the clearing point
  double price;
};

double supply_rate(const MarketParams& params, double p_g, double e,
                   double lambda, double delta_g);

double demand_rate(const MarketParams& params, double p_d, double lambda,
                   double delta_d);

double storage_rate(double p_g, double p_d, double in);

/// Full state derivative. Row-for-row equal to
/// (supply_rate, demand_rate, storage_rate(p_g, p_d, in_mean + in_dev)).
Eigen::Vector3d market_drift(const MarketParams& params, const MarketState& state,
                             double lambda, const Disturbance& w);

SystemMatrices assemble_system_matrices(const MarketParams& params);

/// Clearing point of b_g + c_g p = b_d - c_d p with w = 0 and zero forecast
/// mean. Only requires c_g + c_d != 0.
Equilibrium compute_equilibrium(const MarketParams& params);

}  // namespace microgrid
