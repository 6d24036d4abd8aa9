#include "microgrid/simulation.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "microgrid/artifacts.h"
#include "microgrid/random.h"

namespace microgrid {

void validate_disturbance(const DisturbanceSpec& spec) {
  if (!(spec.hold_interval > 0.0) || !std::isfinite(spec.hold_interval)) {
    throw ParameterError("disturbance hold interval must be > 0");
  }
  for (const auto& [lo, hi] : spec.ranges) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ParameterError("disturbance range needs finite lo <= hi");
    }
  }
}

Disturbance generate_disturbance(const DisturbanceSpec& spec, double t) {
  if (!spec.enabled) return {};
  const double slot = std::floor(t / spec.hold_interval);
  const auto j = static_cast<std::uint64_t>(slot < 0.0 ? 0.0 : slot);
  Eigen::Vector3d w;
  for (int c = 0; c < 3; ++c) {
    w(c) = CounterUniform(spec.seed, static_cast<std::uint64_t>(c), j, spec.ranges[c].first,
                          spec.ranges[c].second);
  }
  return Disturbance::FromVector(w);
}

void validate_sim_config(const SimConfig& config) {
  if (!(config.t_end > 0.0) || !std::isfinite(config.t_end)) {
    throw ParameterError("t_end must be > 0");
  }
  if (!(config.dt > 0.0) || !std::isfinite(config.dt)) throw ParameterError("dt must be > 0");
  if (config.record_stride < 1) throw ParameterError("record_stride must be >= 1");
  if (!(config.divergence_guard > 0.0)) throw ParameterError("divergence guard must be > 0");
  const double steps = config.t_end / config.dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
    throw ParameterError("t_end must be a whole number of steps dt");
  }
}

namespace {

bool DividesHold(double dt, double hold) {
  const double ratio = hold / dt;
  return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio) &&
         std::round(ratio) >= 1.0;
}

}  // namespace

Trajectory simulate_closed_loop(const MarketParams& params, const PricingPolicy& policy,
                                const DisturbanceSpec& dist, const SimConfig& config) {
  ValidateParams(params);
  validate_policy(policy);
  validate_sim_config(config);
  if (dist.enabled) {
    validate_disturbance(dist);
    if (!DividesHold(config.dt, dist.hold_interval)) {
      throw ParameterError("dt must divide the disturbance hold interval");
    }
  }

  const bool ace = policy.kind == PolicyKind::kAce;
  const double q = policy.storage_target_q;
  const auto n_steps = static_cast<long>(std::llround(config.t_end / config.dt));

  const auto lambda_of = [&](const Eigen::Vector4d& s) {
    return ace ? s(3) : fuzzy_price(policy, MarketState{s(0), s(1), s(2)});
  };

  Trajectory traj;
  const auto record = [&](double t, const Eigen::Vector4d& s, const Disturbance& w) {
    const double lambda = lambda_of(s);
    traj.times.push_back(t);
    traj.states.push_back({s(0), s(1), s(2)});
    traj.prices.push_back(lambda);
    traj.disturbances.push_back(w);
    traj.outputs.emplace_back(s(2) - q, params.epsilon * lambda);
  };

  Eigen::Vector4d s(config.initial_state.p_g, config.initial_state.p_d,
                    config.initial_state.e, ace ? config.initial_lambda : 0.0);
  for (long n = 0; n < n_steps; ++n) {
    const double t = static_cast<double>(n) * config.dt;
    // The hold grid aligns with steps, so the midpoint picks the held value.
    const Disturbance w = generate_disturbance(dist, t + 0.5 * config.dt);
    if (n % config.record_stride == 0) record(t, s, w);

    const auto rate = [&](double, const Eigen::Vector4d& v) -> Eigen::Vector4d {
      const double lambda = lambda_of(v);
      const Eigen::Vector3d drift =
          market_drift(params, MarketState{v(0), v(1), v(2) - q}, lambda, w);
      Eigen::Vector4d out;
      out << drift, ace ? ace_price_rate(v(2), policy.ace_tau_lambda, q) : 0.0;
      return out;
    };
    s = rk4_step(rate, s, t, config.dt);

    if (!s.allFinite() || s.cwiseAbs().maxCoeff() > config.divergence_guard) {
      throw DivergenceError("state left the divergence guard at t=" +
                                format_double(t + config.dt),
                            t + config.dt, std::move(traj));
    }
  }
  if (n_steps % config.record_stride == 0) {
    const double t = static_cast<double>(n_steps) * config.dt;
    record(t, s, generate_disturbance(dist, t + 0.5 * config.dt));
  }
  return traj;
}

namespace {

template <typename F>
double Trapezoid(const Trajectory& traj, std::size_t first, std::size_t last, F&& f) {
  double sum = 0.0;
  for (std::size_t i = first; i + 1 <= last; ++i) {
    sum += 0.5 * (traj.times[i + 1] - traj.times[i]) * (f(i) + f(i + 1));
  }
  return sum;
}

}  // namespace

Metrics compute_metrics(const Trajectory& traj, double band, TimeWindow window) {
  if (traj.empty()) throw ParameterError("metrics need a nonempty trajectory");
  const std::size_t n = traj.size();
  const auto z1 = [&](std::size_t i) { return traj.outputs[i](0); };
  Metrics m;

  std::optional<std::size_t> last_out;
  for (std::size_t i = 0; i < n; ++i) {
    m.max_abs_imbalance = std::max(m.max_abs_imbalance, std::abs(z1(i)));
    if (!(std::abs(z1(i)) < band)) last_out = i;
  }
  if (!last_out) {
    m.settling_time = traj.times.front();
  } else if (*last_out + 1 < n) {
    m.settling_time = traj.times[*last_out + 1];
  }

  const double span = traj.times.back() - traj.times.front();
  if (span > 0.0) {
    m.rms_imbalance =
        std::sqrt(Trapezoid(traj, 0, n - 1, [&](std::size_t i) { return z1(i) * z1(i); }) /
                  span);
  } else {
    m.rms_imbalance = std::abs(z1(0));
  }

  std::size_t first = n;
  std::size_t last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (traj.times[i] >= window.begin && traj.times[i] <= window.end) {
      first = std::min(first, i);
      last = i;
    }
  }
  const auto gap = [&](std::size_t i) { return traj.states[i].p_d - traj.states[i].p_g; };
  if (first == n) {
    m.mean_supply_demand_gap = std::numeric_limits<double>::quiet_NaN();
  } else if (last == first) {
    m.mean_supply_demand_gap = gap(first);
  } else {
    m.mean_supply_demand_gap =
        Trapezoid(traj, first, last, gap) / (traj.times[last] - traj.times[first]);
  }

  const double zz = Trapezoid(traj, 0, n - 1, [&](std::size_t i) {
    return traj.outputs[i].squaredNorm();
  });
  const double ww = Trapezoid(traj, 0, n - 1, [&](std::size_t i) {
    return traj.disturbances[i].vector().squaredNorm();
  });
  if (ww > 0.0) m.empirical_ratio = std::sqrt(zz) / std::sqrt(ww);
  return m;
}

DissipationSummary dissipation_check_along(const Trajectory& traj, const LmiProblem& problem,
                                           const GainSet& gains, const Eigen::Matrix3d& P,
                                           const FuzzyBox& box, double storage_target_q,
                                           bool in_box_only) {
  DissipationSummary out;
  out.max_value = -std::numeric_limits<double>::infinity();
  int negative = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const MarketState x{traj.states[i].p_g, traj.states[i].p_d,
                        traj.states[i].e - storage_target_q};
    const Disturbance& w = traj.disturbances[i];
    if (x.vector().isZero(0.0) && w.vector().isZero(0.0)) continue;
    if (in_box_only && !box.Contains(x.vector())) continue;
    const double v = phi_quadratic_form(problem, gains, P, x, w, box);
    out.max_value = std::max(out.max_value, v);
    if (v < 0.0) ++negative;
    ++out.samples_counted;
  }
  if (out.samples_counted == 0) {
    out.max_value = 0.0;
    out.fraction_negative = 0.0;
  } else {
    out.fraction_negative = static_cast<double>(negative) / out.samples_counted;
  }
  return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path + " for writing");
  file << "t,p_g,p_d,e,lambda,w_dg,w_dd,w_in,z1,z2\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& x = traj.states[i];
    const auto& w = traj.disturbances[i];
    file << format_double(traj.times[i]) << ',' << format_double(x.p_g) << ','
         << format_double(x.p_d) << ',' << format_double(x.e) << ','
         << format_double(traj.prices[i]) << ',' << format_double(w.delta_g) << ','
         << format_double(w.delta_d) << ',' << format_double(w.in_dev) << ','
         << format_double(traj.outputs[i](0)) << ',' << format_double(traj.outputs[i](1))
         << '\n';
  }
  if (!file) throw IoError("write failed for " + path);
}

}  // namespace microgrid
