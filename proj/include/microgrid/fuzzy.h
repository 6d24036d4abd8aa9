#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "microgrid/market.h"

namespace microgrid {

/// Piecewise-linear membership functions on one premise axis.
///
/// Function j peaks at peaks()[j] and falls linearly to zero at the adjacent
/// peaks. The first and last functions are shoulders that stay at 1 beyond
/// the boundary peak. Inputs are clamped to [lower, upper] first, so the
/// degrees on an axis always sum to 1.
class AxisPartition {
 public:
  /// `count` uniformly spaced peaks from lower to upper. count == 1 gives a
  /// single function that is identically 1.
  AxisPartition(double lower, double upper, int count = 4);

  /// Explicit breakpoints; must be strictly increasing with at least two
  /// entries. lower/upper are the first/last peak.
  static AxisPartition FromPeaks(std::vector<double> peaks);

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  int size() const { return static_cast<int>(peaks_.size()); }
  const std::vector<double>& peaks() const { return peaks_; }

  double Clamp(double value) const;

 private:
  AxisPartition() = default;
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::vector<double> peaks_;
};

/// Degree of `value` in membership function `mf_index`; throws IndexError for
/// an out-of-range index.
double membership_value(const AxisPartition& axis, int mf_index, double value);

/// Premise grid over (p_g, p_d, e). Rule m enumerates membership indices
/// lexicographically: m = (i_pg * n_pd + i_pd) * n_e + i_e.
struct FuzzyBox {
  // Defaults to [5,25] x [5,25] x [-10,10] with four functions per axis.
  std::array<AxisPartition, 3> axes{AxisPartition(5.0, 25.0), AxisPartition(5.0, 25.0),
                                    AxisPartition(-10.0, 10.0)};

  int rule_count() const { return axes[0].size() * axes[1].size() * axes[2].size(); }
  std::array<int, 3> RuleIndices(int rule) const;
  bool Contains(const Eigen::Vector3d& x) const;
};

/// At most two functions per axis are nonzero, so at most 8 rules fire.
struct ActiveRules {
  struct Entry {
    int rule;
    double weight;
  };
  std::array<Entry, 8> entries{};
  int count = 0;

  const Entry* begin() const { return entries.data(); }
  const Entry* end() const { return entries.data() + count; }
};

/// Normalized rule activations h_m(x), computed only over the firing rules.
ActiveRules active_rules(const FuzzyBox& box, const Eigen::Vector3d& x);

/// Dense h vector of length rule_count(): the product of axis memberships of
/// each rule, divided by the sum over all rules.
Eigen::VectorXd rule_activation(const FuzzyBox& box, const MarketState& x);

struct TrainingSample {
  Eigen::Vector3d x;
  Eigen::Vector3d y;  // A x + b
};

/// L independent uniform draws from the box with y = A x + b.
/// Throws ParameterError when L < rule_count() unless allow_underdetermined is
/// set, in which case a warning is printed.
std::vector<TrainingSample> generate_training_data(const MarketParams& params,
                                                   const FuzzyBox& box, int L,
                                                   std::uint64_t seed,
                                                   bool allow_underdetermined = false);

struct IdentifiedModel {
  FuzzyBox box;
  std::vector<Eigen::Matrix3d> rule_matrices;
  double sup_error = 0.0;
  int sample_count = 0;
};

/// Least squares over all rules jointly:
///   min sum_l |y_l - sum_m h_m(x_l) A_m x_l|^2 + ridge sum_m |A_m|_F^2.
/// With ridge == 0 a rank-deficient design throws RankDeficiencyError.
IdentifiedModel identify_rule_matrices(const std::vector<TrainingSample>& samples,
                                       const FuzzyBox& box, double ridge);

/// sum_m h_m(x) A_m x.
Eigen::Vector3d blend_dynamics(const IdentifiedModel& model, const MarketState& x);

/// max over samples of |y - blend(x)|^2 / |x|^2. Samples with x = 0 are
/// skipped (with a warning on stderr).
double approximation_error_sup(const IdentifiedModel& model,
                               const std::vector<TrainingSample>& samples);

}  // namespace microgrid
