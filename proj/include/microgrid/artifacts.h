#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "microgrid/fuzzy.h"
#include "microgrid/lmi.h"
#include "microgrid/simulation.h"

namespace microgrid {

/// Shortest text that parses back to the same double (%.17g).
std::string format_double(double value);

/// Strict full-string parse; throws std::invalid_argument on junk.
double parse_double(const std::string& text);
std::int64_t parse_integer(const std::string& text);

/// Synthesized controller as stored on disk: the gains plus the Lyapunov
/// matrix Q and the premise box they were designed for.
struct GainFile {
  GainSet gains;
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();
  FuzzyBox box;
  double gamma_sq = 0.0;
  double epsilon = 0.0;
};

void write_model(const IdentifiedModel& model, const std::string& path);
IdentifiedModel read_model(const std::string& path);

void write_gains(const GainFile& gains, const std::string& path);
GainFile read_gains(const std::string& path);

void write_verification_report(const VerificationReport& report, double gamma_sq,
                               std::uint64_t seed, const std::string& path);

Trajectory read_trajectory_csv(const std::string& path);

/// Per-variable series p_g.csv, p_d.csv, e.csv, lambda.csv (columns t,value)
/// and summary.txt with the metrics. Throws on an empty trajectory.
void emit_plot_data(const Trajectory& traj, const Metrics& metrics, const std::string& dir);

/// Whole file as a string; throws IoError when unreadable.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace microgrid
