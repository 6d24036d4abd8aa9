#include "microgrid/fuzzy.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include <Eigen/QR>

#include "microgrid/errors.h"
#include "microgrid/random.h"

namespace microgrid {

AxisPartition::AxisPartition(double lower, double upper, int count)
    : lower_(lower), upper_(upper) {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
    throw ParameterError("axis partition requires finite lower < upper");
  }
  if (count < 1) throw ParameterError("axis partition needs at least one function");
  if (count == 1) {
    peaks_ = {lower};
    return;
  }
  peaks_.resize(count);
  for (int j = 0; j < count; ++j) {
    peaks_[j] = lower + (upper - lower) * static_cast<double>(j) / (count - 1);
  }
  peaks_.back() = upper;
}

AxisPartition AxisPartition::FromPeaks(std::vector<double> peaks) {
  if (peaks.size() < 2) throw ParameterError("explicit partition needs >= 2 peaks");
  for (std::size_t j = 0; j < peaks.size(); ++j) {
    if (!std::isfinite(peaks[j]) || (j > 0 && !(peaks[j] > peaks[j - 1]))) {
      throw ParameterError("partition peaks must be finite and strictly increasing");
    }
  }
  AxisPartition axis;
  axis.lower_ = peaks.front();
  axis.upper_ = peaks.back();
  axis.peaks_ = std::move(peaks);
  return axis;
}

double AxisPartition::Clamp(double value) const {
  return std::clamp(value, lower_, upper_);
}

double membership_value(const AxisPartition& axis, int mf_index, double value) {
  const int n = axis.size();
  if (mf_index < 0 || mf_index >= n) {
    throw IndexError("membership index " + std::to_string(mf_index) +
                     " out of range [0, " + std::to_string(n) + ")");
  }
  if (n == 1) return 1.0;
  const auto& p = axis.peaks();
  const double v = axis.Clamp(value);
  const int j = mf_index;
  if (v < p[j]) {
    if (j == 0) return 1.0;
    return std::max(0.0, (v - p[j - 1]) / (p[j] - p[j - 1]));
  }
  if (v > p[j]) {
    if (j == n - 1) return 1.0;
    return std::max(0.0, (p[j + 1] - v) / (p[j + 1] - p[j]));
  }
  return 1.0;
}

std::array<int, 3> FuzzyBox::RuleIndices(int rule) const {
  const int n1 = axes[1].size();
  const int n2 = axes[2].size();
  return {rule / (n1 * n2), (rule / n2) % n1, rule % n2};
}

bool FuzzyBox::Contains(const Eigen::Vector3d& x) const {
  for (int a = 0; a < 3; ++a) {
    if (x(a) < axes[a].lower() || x(a) > axes[a].upper()) return false;
  }
  return true;
}

namespace {

// Indices and degrees of the (at most two) nonzero functions on one axis.
struct AxisHits {
  std::array<int, 2> index{};
  std::array<double, 2> degree{};
  int count = 0;
};

AxisHits AxisDegrees(const AxisPartition& axis, double value) {
  AxisHits hits;
  const int n = axis.size();
  if (n == 1) {
    hits.index[0] = 0;
    hits.degree[0] = 1.0;
    hits.count = 1;
    return hits;
  }
  const auto& p = axis.peaks();
  const double v = axis.Clamp(value);
  // Interval [p[k], p[k+1]] containing v.
  const auto it = std::upper_bound(p.begin(), p.end(), v);
  int k = static_cast<int>(it - p.begin()) - 1;
  k = std::clamp(k, 0, n - 2);
  for (int j : {k, k + 1}) {
    const double d = membership_value(axis, j, v);
    if (d > 0.0) {
      hits.index[hits.count] = j;
      hits.degree[hits.count] = d;
      ++hits.count;
    }
  }
  return hits;
}

}  // namespace

ActiveRules active_rules(const FuzzyBox& box, const Eigen::Vector3d& x) {
  const AxisHits h0 = AxisDegrees(box.axes[0], x(0));
  const AxisHits h1 = AxisDegrees(box.axes[1], x(1));
  const AxisHits h2 = AxisDegrees(box.axes[2], x(2));
  const int n1 = box.axes[1].size();
  const int n2 = box.axes[2].size();

  ActiveRules out;
  double total = 0.0;
  for (int a = 0; a < h0.count; ++a) {
    for (int b = 0; b < h1.count; ++b) {
      for (int c = 0; c < h2.count; ++c) {
        const double w = h0.degree[a] * h1.degree[b] * h2.degree[c];
        if (w == 0.0) continue;
        out.entries[out.count++] = {(h0.index[a] * n1 + h1.index[b]) * n2 + h2.index[c], w};
        total += w;
      }
    }
  }
  for (int i = 0; i < out.count; ++i) out.entries[i].weight /= total;
  return out;
}

Eigen::VectorXd rule_activation(const FuzzyBox& box, const MarketState& x) {
  const int M = box.rule_count();
  const Eigen::Vector3d v = x.vector();
  Eigen::VectorXd h(M);
  for (int m = 0; m < M; ++m) {
    const auto idx = box.RuleIndices(m);
    double prod = 1.0;
    for (int a = 0; a < 3; ++a) prod *= membership_value(box.axes[a], idx[a], v(a));
    h(m) = prod;
  }
  // Clamping keeps at least one function per axis at a positive degree.
  return h / h.sum();
}

std::vector<TrainingSample> generate_training_data(const MarketParams& params,
                                                   const FuzzyBox& box, int L,
                                                   std::uint64_t seed,
                                                   bool allow_underdetermined) {
  ValidateParams(params);
  if (L < 1) throw ParameterError("training set size must be positive");
  if (L < box.rule_count()) {
    const std::string msg = "training set size " + std::to_string(L) +
                            " is below the rule count " +
                            std::to_string(box.rule_count());
    if (!allow_underdetermined) throw ParameterError(msg);
    std::cerr << "warning: " << msg << "; the regression is under-determined\n";
  }
  UniformStream stream(seed);
  std::vector<TrainingSample> samples;
  samples.reserve(L);
  for (int l = 0; l < L; ++l) {
    MarketState x;
    x.p_g = stream.Next(box.axes[0].lower(), box.axes[0].upper());
    x.p_d = stream.Next(box.axes[1].lower(), box.axes[1].upper());
    x.e = stream.Next(box.axes[2].lower(), box.axes[2].upper());
    samples.push_back({x.vector(), market_drift(params, x, 0.0, Disturbance{})});
  }
  return samples;
}

IdentifiedModel identify_rule_matrices(const std::vector<TrainingSample>& samples,
                                       const FuzzyBox& box, double ridge) {
  if (samples.empty()) throw ParameterError("identification needs at least one sample");
  if (!std::isfinite(ridge) || ridge < 0.0) throw ParameterError("ridge must be >= 0");

  const int M = box.rule_count();
  const int n_params = 3 * M;
  const int L = static_cast<int>(samples.size());
  const int rows = L + (ridge > 0.0 ? n_params : 0);

  // Feature row l: the block for rule m holds h_m(x_l) x_l^T. All three output
  // rows share the design, so they are solved as one multi-RHS problem.
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, n_params);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(rows, 3);
  for (int l = 0; l < L; ++l) {
    const auto& s = samples[l];
    for (const auto& hit : active_rules(box, s.x)) {
      design.block<1, 3>(l, 3 * hit.rule) = hit.weight * s.x.transpose();
    }
    rhs.row(l) = s.y.transpose();
  }
  if (ridge > 0.0) {
    design.bottomRows(n_params).diagonal().setConstant(std::sqrt(ridge));
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (ridge == 0.0 && qr.rank() < n_params) {
    throw RankDeficiencyError(
        "rule regression is rank deficient (rank " + std::to_string(qr.rank()) +
        " of " + std::to_string(n_params) +
        "); some rules are never activated. Use a positive ridge.");
  }
  const Eigen::MatrixXd theta = qr.solve(rhs);

  IdentifiedModel model;
  model.box = box;
  model.sample_count = L;
  model.rule_matrices.resize(M);
  for (int m = 0; m < M; ++m) {
    model.rule_matrices[m] = theta.block<3, 3>(3 * m, 0).transpose();
  }
  model.sup_error = approximation_error_sup(model, samples);
  return model;
}

Eigen::Vector3d blend_dynamics(const IdentifiedModel& model, const MarketState& x) {
  const Eigen::Vector3d v = x.vector();
  Eigen::Vector3d y = Eigen::Vector3d::Zero();
  for (const auto& hit : active_rules(model.box, v)) {
    y += hit.weight * (model.rule_matrices[hit.rule] * v);
  }
  return y;
}

double approximation_error_sup(const IdentifiedModel& model,
                               const std::vector<TrainingSample>& samples) {
  double worst = 0.0;
  int skipped = 0;
  for (const auto& s : samples) {
    const double norm_sq = s.x.squaredNorm();
    if (norm_sq == 0.0) {
      ++skipped;
      continue;
    }
    const Eigen::Vector3d delta = s.y - blend_dynamics(model, MarketState::FromVector(s.x));
    worst = std::max(worst, delta.squaredNorm() / norm_sq);
  }
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped
              << " zero sample(s) in the approximation-error supremum\n";
  }
  return worst;
}

}  // namespace microgrid
