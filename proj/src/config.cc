#include "microgrid/config.h"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "microgrid/artifacts.h"
#include "microgrid/errors.h"

namespace microgrid {

namespace {

std::string Trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

using Setter = std::function<void(ScenarioConfig&, const std::string&)>;

void RequirePositive(double v) {
  if (!(v > 0.0)) throw std::invalid_argument("must be > 0");
}

void RequireFinite(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("must be finite");
}

template <typename Get>
Setter RealField(Get get, bool positive) {
  return [get, positive](ScenarioConfig& c, const std::string& text) {
    const double v = parse_double(text);
    RequireFinite(v);
    if (positive) RequirePositive(v);
    get(c) = v;
  };
}

template <typename Get>
Setter IntField(Get get, std::int64_t min_value) {
  return [get, min_value](ScenarioConfig& c, const std::string& text) {
    const auto v = parse_integer(text);
    if (v < min_value) throw std::invalid_argument("must be >= " + std::to_string(min_value));
    if (v > std::numeric_limits<int>::max()) throw std::invalid_argument("too large");
    get(c) = static_cast<int>(v);
  };
}

template <typename Get>
Setter SeedField(Get get) {
  return [get](ScenarioConfig& c, const std::string& text) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("seed must be a non-negative integer");
    }
    try {
      get(c) = std::stoull(text);
    } catch (const std::exception&) {
      throw std::invalid_argument("seed out of range");
    }
  };
}

template <typename Get>
Setter BoolField(Get get) {
  return [get](ScenarioConfig& c, const std::string& text) {
    if (text == "true") {
      get(c) = true;
    } else if (text == "false") {
      get(c) = false;
    } else {
      throw std::invalid_argument("expected true or false");
    }
  };
}

// Axis bounds and counts are collected first and turned into partitions once
// the whole file is read.
struct AxisDraft {
  double lo;
  double hi;
  int count;
};

struct Draft {
  std::array<AxisDraft, 3> axes{{{5.0, 25.0, 4}, {5.0, 25.0, 4}, {-10.0, 10.0, 4}}};
  std::array<int, 3> axis_line{};
};

struct Schema {
  std::map<std::string, Setter> setters;
  std::map<std::string, std::function<void(Draft&, const std::string&)>> box_setters;
};

#define CFG(expr) [](ScenarioConfig& c) -> auto& { return c.expr; }

const Schema& GetSchema() {
  static const Schema schema = [] {
    Schema s;
    auto& f = s.setters;
    f["market.c_g"] = RealField(CFG(market.c_g), true);
    f["market.c_d"] = RealField(CFG(market.c_d), true);
    f["market.tau_g"] = RealField(CFG(market.tau_g), true);
    f["market.tau_d"] = RealField(CFG(market.tau_d), true);
    f["market.b_g_hat"] = RealField(CFG(market.b_g_hat), false);
    f["market.b_d_hat"] = RealField(CFG(market.b_d_hat), false);
    f["market.k"] = RealField(CFG(market.k), true);
    f["market.tau_lambda"] = RealField(CFG(market.tau_lambda), true);
    f["market.in_mean"] = [](ScenarioConfig& c, const std::string& t) {
      const double v = parse_double(t);
      if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("must be finite and >= 0");
      c.market.in_mean = v;
    };

    f["identify.samples"] = IntField(CFG(identify.samples), 1);
    f["identify.seed"] = SeedField(CFG(identify.seed));
    f["identify.ridge"] = [](ScenarioConfig& c, const std::string& t) {
      const double v = parse_double(t);
      if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("must be finite and >= 0");
      c.identify.ridge = v;
    };

    f["synthesize.gamma_sq"] = RealField(CFG(synthesize.gamma_sq), true);
    f["synthesize.minimize"] = BoolField(CFG(synthesize.minimize));
    f["synthesize.gamma_lo"] = RealField(CFG(synthesize.gamma_lo), true);
    f["synthesize.gamma_hi"] = RealField(CFG(synthesize.gamma_hi), true);
    f["synthesize.bisect_tol"] = RealField(CFG(synthesize.bisect_tol), true);
    f["synthesize.epsilon"] = RealField(CFG(market.epsilon), true);
    f["synthesize.margin"] = RealField(CFG(synthesize.margin), true);
    f["synthesize.tol"] = RealField(CFG(synthesize.tol), true);
    f["synthesize.q_upper"] = RealField(CFG(synthesize.q_upper), true);
    f["synthesize.max_newton_steps"] = IntField(CFG(synthesize.max_newton_steps), 1);
    f["synthesize.verify_samples"] = IntField(CFG(synthesize.verify_samples), 0);
    f["synthesize.verify_seed"] = SeedField(CFG(synthesize.verify_seed));

    f["controller.kind"] = [](ScenarioConfig& c, const std::string& t) {
      if (t == "ace") {
        c.controller.kind = ControllerSelection::kAce;
      } else if (t == "fuzzy") {
        c.controller.kind = ControllerSelection::kFuzzy;
      } else if (t == "both") {
        c.controller.kind = ControllerSelection::kBoth;
      } else {
        throw std::invalid_argument("expected ace, fuzzy or both");
      }
    };
    f["controller.storage_target"] = RealField(CFG(controller.storage_target), false);
    f["controller.clamp_lo"] = [](ScenarioConfig& c, const std::string& t) {
      const double v = parse_double(t);
      RequireFinite(v);
      c.controller.clamp_lo = v;
    };
    f["controller.clamp_hi"] = [](ScenarioConfig& c, const std::string& t) {
      const double v = parse_double(t);
      RequireFinite(v);
      c.controller.clamp_hi = v;
    };

    f["disturbance.enabled"] = BoolField(CFG(disturbance.enabled));
    f["disturbance.delta_g_lo"] = RealField(CFG(disturbance.ranges[0].first), false);
    f["disturbance.delta_g_hi"] = RealField(CFG(disturbance.ranges[0].second), false);
    f["disturbance.delta_d_lo"] = RealField(CFG(disturbance.ranges[1].first), false);
    f["disturbance.delta_d_hi"] = RealField(CFG(disturbance.ranges[1].second), false);
    f["disturbance.input_lo"] = RealField(CFG(disturbance.ranges[2].first), false);
    f["disturbance.input_hi"] = RealField(CFG(disturbance.ranges[2].second), false);
    f["disturbance.hold"] = RealField(CFG(disturbance.hold_interval), true);
    f["disturbance.seed"] = SeedField(CFG(disturbance.seed));
    f["disturbance.ensemble"] = IntField(CFG(ensemble.count), 1);

    f["sim.t_end"] = RealField(CFG(sim.t_end), true);
    f["sim.dt"] = RealField(CFG(sim.dt), true);
    f["sim.p_g0"] = RealField(CFG(sim.initial_state.p_g), false);
    f["sim.p_d0"] = RealField(CFG(sim.initial_state.p_d), false);
    f["sim.e0"] = RealField(CFG(sim.initial_state.e), false);
    f["sim.initial_lambda"] = RealField(CFG(sim.initial_lambda), false);
    f["sim.record_stride"] = IntField(CFG(sim.record_stride), 1);
    f["sim.divergence_guard"] = RealField(CFG(sim.divergence_guard), true);
    f["sim.settle_band"] = RealField(CFG(metrics.settle_band), true);
    f["sim.window_begin"] = RealField(CFG(metrics.window.begin), false);
    f["sim.window_end"] = [](ScenarioConfig& c, const std::string& t) {
      const double v = parse_double(t);
      if (std::isnan(v)) throw std::invalid_argument("must be a number");
      c.metrics.window.end = v;
    };

    f["output.dir"] = [](ScenarioConfig& c, const std::string& t) {
      if (t.empty()) throw std::invalid_argument("must not be empty");
      c.output_dir = t;
    };

    const std::array<std::string, 3> names{"pg", "pd", "e"};
    for (int a = 0; a < 3; ++a) {
      s.box_setters["box." + names[a] + "_lo"] = [a](Draft& d, const std::string& t) {
        const double v = parse_double(t);
        RequireFinite(v);
        d.axes[a].lo = v;
      };
      s.box_setters["box." + names[a] + "_hi"] = [a](Draft& d, const std::string& t) {
        const double v = parse_double(t);
        RequireFinite(v);
        d.axes[a].hi = v;
      };
      s.box_setters["box." + names[a] + "_mfs"] = [a](Draft& d, const std::string& t) {
        const auto v = parse_integer(t);
        if (v < 1 || v > 64) throw std::invalid_argument("must be in [1, 64]");
        d.axes[a].count = static_cast<int>(v);
      };
    }
    return s;
  }();
  return schema;
}

#undef CFG

}  // namespace

ScenarioConfig parse_config_text(const std::string& text) {
  const Schema& schema = GetSchema();
  ScenarioConfig config;
  Draft draft;
  std::map<std::string, int> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = Trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError(body, line, "malformed section header");
      section = Trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(body, line, "expected key = value");
    const std::string key = section + "." + Trim(body.substr(0, eq));
    const std::string value = Trim(body.substr(eq + 1));
    if (section.empty()) throw ParseError(key, line, "key outside of a section");
    if (!seen.emplace(key, line).second) {
      throw ParseError(key, line, "duplicate key (first set on line " +
                                      std::to_string(seen[key]) + ")");
    }
    try {
      if (auto it = schema.setters.find(key); it != schema.setters.end()) {
        it->second(config, value);
      } else if (auto bt = schema.box_setters.find(key); bt != schema.box_setters.end()) {
        bt->second(draft, value);
      } else {
        throw ParseError(key, line, "unknown key");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(key, line, e.what());
    }
  }

  const auto line_of = [&](const std::string& key) {
    auto it = seen.find(key);
    return it == seen.end() ? 0 : it->second;
  };
  const auto require = [&](const std::string& key) {
    if (!seen.count(key)) throw ParseError(key, 0, "required key is missing");
  };
  require("identify.seed");
  require("synthesize.verify_seed");
  if (config.disturbance.enabled) require("disturbance.seed");

  const std::array<std::string, 3> names{"pg", "pd", "e"};
  for (int a = 0; a < 3; ++a) {
    const auto& d = draft.axes[a];
    try {
      config.box.axes[a] = AxisPartition(d.lo, d.hi, d.count);
    } catch (const std::exception& e) {
      const std::string key = "box." + names[a] + "_hi";
      throw ParseError(key, line_of(key), e.what());
    }
  }

  const auto check = [&](bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ParseError(key, line_of(key), why);
  };
  check(config.synthesize.gamma_lo < config.synthesize.gamma_hi, "synthesize.gamma_hi",
        "gamma_hi must exceed gamma_lo");
  for (int c = 0; c < 3; ++c) {
    static const std::array<std::string, 3> ch{"delta_g", "delta_d", "input"};
    check(config.disturbance.ranges[c].first <= config.disturbance.ranges[c].second,
          "disturbance." + ch[c] + "_hi", "range needs lo <= hi");
  }
  check(config.metrics.window.begin <= config.metrics.window.end, "sim.window_end",
        "window end must not precede its begin");
  check(config.controller.clamp_lo.has_value() == config.controller.clamp_hi.has_value(),
        "controller.clamp_hi", "clamp_lo and clamp_hi must be given together");
  if (config.controller.clamp_lo) {
    check(*config.controller.clamp_lo <= *config.controller.clamp_hi, "controller.clamp_hi",
          "clamp needs lo <= hi");
  }
  try {
    validate_sim_config(config.sim);
  } catch (const std::exception& e) {
    throw ParseError("sim.dt", line_of("sim.dt"), e.what());
  }
  if (config.disturbance.enabled) {
    const double ratio = config.disturbance.hold_interval / config.sim.dt;
    check(std::round(ratio) >= 1.0 &&
              std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
          "disturbance.hold", "hold interval must be a multiple of sim.dt");
  }
  return config;
}

ScenarioConfig parse_config(const std::string& path) {
  return parse_config_text(read_file(path));
}

std::string emit_config(const ScenarioConfig& c) {
  std::ostringstream out;
  const auto num = [](double v) { return format_double(v); };
  const auto flag = [](bool v) { return v ? "true" : "false"; };
  out << "[market]\n"
      << "c_g = " << num(c.market.c_g) << '\n'
      << "c_d = " << num(c.market.c_d) << '\n'
      << "tau_g = " << num(c.market.tau_g) << '\n'
      << "tau_d = " << num(c.market.tau_d) << '\n'
      << "b_g_hat = " << num(c.market.b_g_hat) << '\n'
      << "b_d_hat = " << num(c.market.b_d_hat) << '\n'
      << "k = " << num(c.market.k) << '\n'
      << "tau_lambda = " << num(c.market.tau_lambda) << '\n'
      << "in_mean = " << num(c.market.in_mean) << "\n\n";
  const std::array<std::string, 3> names{"pg", "pd", "e"};
  out << "[box]\n";
  for (int a = 0; a < 3; ++a) {
    out << names[a] << "_lo = " << num(c.box.axes[a].lower()) << '\n'
        << names[a] << "_hi = " << num(c.box.axes[a].upper()) << '\n'
        << names[a] << "_mfs = " << c.box.axes[a].size() << '\n';
  }
  out << "\n[identify]\n"
      << "samples = " << c.identify.samples << '\n'
      << "seed = " << c.identify.seed << '\n'
      << "ridge = " << num(c.identify.ridge) << "\n\n";
  out << "[synthesize]\n"
      << "gamma_sq = " << num(c.synthesize.gamma_sq) << '\n'
      << "minimize = " << flag(c.synthesize.minimize) << '\n'
      << "gamma_lo = " << num(c.synthesize.gamma_lo) << '\n'
      << "gamma_hi = " << num(c.synthesize.gamma_hi) << '\n'
      << "bisect_tol = " << num(c.synthesize.bisect_tol) << '\n'
      << "epsilon = " << num(c.market.epsilon) << '\n'
      << "margin = " << num(c.synthesize.margin) << '\n'
      << "tol = " << num(c.synthesize.tol) << '\n'
      << "q_upper = " << num(c.synthesize.q_upper) << '\n'
      << "max_newton_steps = " << c.synthesize.max_newton_steps << '\n'
      << "verify_samples = " << c.synthesize.verify_samples << '\n'
      << "verify_seed = " << c.synthesize.verify_seed << "\n\n";
  static const char* kinds[] = {"ace", "fuzzy", "both"};
  out << "[controller]\n"
      << "kind = " << kinds[static_cast<int>(c.controller.kind)] << '\n'
      << "storage_target = " << num(c.controller.storage_target) << '\n';
  if (c.controller.clamp_lo) out << "clamp_lo = " << num(*c.controller.clamp_lo) << '\n';
  if (c.controller.clamp_hi) out << "clamp_hi = " << num(*c.controller.clamp_hi) << '\n';
  out << "\n[disturbance]\n"
      << "enabled = " << flag(c.disturbance.enabled) << '\n'
      << "delta_g_lo = " << num(c.disturbance.ranges[0].first) << '\n'
      << "delta_g_hi = " << num(c.disturbance.ranges[0].second) << '\n'
      << "delta_d_lo = " << num(c.disturbance.ranges[1].first) << '\n'
      << "delta_d_hi = " << num(c.disturbance.ranges[1].second) << '\n'
      << "input_lo = " << num(c.disturbance.ranges[2].first) << '\n'
      << "input_hi = " << num(c.disturbance.ranges[2].second) << '\n'
      << "hold = " << num(c.disturbance.hold_interval) << '\n'
      << "seed = " << c.disturbance.seed << '\n'
      << "ensemble = " << c.ensemble.count << "\n\n";
  out << "[sim]\n"
      << "t_end = " << num(c.sim.t_end) << '\n'
      << "dt = " << num(c.sim.dt) << '\n'
      << "p_g0 = " << num(c.sim.initial_state.p_g) << '\n'
      << "p_d0 = " << num(c.sim.initial_state.p_d) << '\n'
      << "e0 = " << num(c.sim.initial_state.e) << '\n'
      << "initial_lambda = " << num(c.sim.initial_lambda) << '\n'
      << "record_stride = " << c.sim.record_stride << '\n'
      << "divergence_guard = " << num(c.sim.divergence_guard) << '\n'
      << "settle_band = " << num(c.metrics.settle_band) << '\n'
      << "window_begin = " << num(c.metrics.window.begin) << '\n'
      << "window_end = " << num(c.metrics.window.end) << "\n\n";
  out << "[output]\n"
      << "dir = " << c.output_dir << '\n';
  return out.str();
}

}  // namespace microgrid
