#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "microgrid/controllers.h"
#include "microgrid/errors.h"
#include "microgrid/lmi.h"
#include "microgrid/market.h"

namespace microgrid {

/// Sample-and-hold uniform disturbance on (delta_g, delta_d, in).
struct DisturbanceSpec {
  ChannelRanges ranges{{{-0.5, 0.5}, {-0.4, 0.6}, {0.0, 2.0}}};
  double hold_interval = 0.1;
  std::uint64_t seed = 0;
  bool enabled = false;
};

void validate_disturbance(const DisturbanceSpec& spec);

/// Value held on [j hold, (j + 1) hold), drawn per channel from a counter
/// keyed by (seed, channel, j). Zero when disturbances are disabled.
Disturbance generate_disturbance(const DisturbanceSpec& spec, double t);

/// One classical Runge-Kutta step. `f(t, x)` returns the state rate.
template <typename Vector, typename Rate>
Vector rk4_step(Rate&& f, const Vector& x, double t, double dt) {
  const auto checked = [](const Vector& k, double at) -> const Vector& {
    if (!k.allFinite()) throw IntegrationError("non-finite state derivative", at);
    return k;
  };
  const Vector k1 = checked(f(t, x), t);
  const Vector k2 = checked(f(t + 0.5 * dt, Vector(x + 0.5 * dt * k1)), t + 0.5 * dt);
  const Vector k3 = checked(f(t + 0.5 * dt, Vector(x + 0.5 * dt * k2)), t + 0.5 * dt);
  const Vector k4 = checked(f(t + dt, Vector(x + dt * k3)), t + dt);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct SimConfig {
  double t_end = 50.0;
  double dt = 0.01;
  MarketState initial_state{10.4, 13.0, 0.0};
  double initial_lambda = 4.66;  // ACE only
  int record_stride = 1;
  double divergence_guard = 1e6;
};

void validate_sim_config(const SimConfig& config);

struct Trajectory {
  std::vector<double> times;
  std::vector<MarketState> states;
  std::vector<double> prices;
  std::vector<Disturbance> disturbances;
  std::vector<Eigen::Vector2d> outputs;  // (e - q, epsilon lambda)

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

/// Thrown when a state component leaves the divergence guard. Carries the
/// samples recorded so far.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time, Trajectory prefix)
      : std::runtime_error(what), time_(time), prefix_(std::move(prefix)) {}
  double time() const { return time_; }
  const Trajectory& prefix() const { return prefix_; }

 private:
  double time_;
  Trajectory prefix_;
};

/// Integrates the affine market under `policy`. A storage target q shifts the
/// stored-energy coordinate to e - q everywhere it enters the dynamics.
Trajectory simulate_closed_loop(const MarketParams& params, const PricingPolicy& policy,
                                const DisturbanceSpec& dist, const SimConfig& config);

struct Metrics {
  std::optional<double> settling_time;
  double rms_imbalance = 0.0;
  double max_abs_imbalance = 0.0;
  double mean_supply_demand_gap = 0.0;
  std::optional<double> empirical_ratio;
};

/// Window over which the supply/demand gap is averaged; defaults to the whole
/// trajectory.
struct TimeWindow {
  double begin = 0.0;
  double end = std::numeric_limits<double>::infinity();
};

/// Trapezoid-rule metrics on the recorded grid. Settling time is the start of
/// the final stretch with |e - q| < band that lasts to the end.
Metrics compute_metrics(const Trajectory& traj, double band = 0.1, TimeWindow window = {});

struct DissipationSummary {
  double max_value = 0.0;
  double fraction_negative = 0.0;
  int samples_counted = 0;
};

/// Evaluates the blended dissipation form at every recorded (x~, w), with
/// x~ = (p_g, p_d, e - q). Samples with x~ = 0 and w = 0 are skipped; with
/// in_box_only, samples outside the premise box are skipped too.
DissipationSummary dissipation_check_along(const Trajectory& traj, const LmiProblem& problem,
                                           const GainSet& gains, const Eigen::Matrix3d& P,
                                           const FuzzyBox& box, double storage_target_q = 0.0,
                                           bool in_box_only = false);

/// Header `t,p_g,p_d,e,lambda,w_dg,w_dd,w_in,z1,z2`, one row per sample.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace microgrid
