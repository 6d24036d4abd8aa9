#pragma once

#include <optional>
#include <utility>

#include "microgrid/fuzzy.h"
#include "microgrid/lmi.h"
#include "microgrid/market.h"

namespace microgrid {

enum class PolicyKind { kAce, kFuzzy };

/// Stateless pricing rule. The ACE price state is integrated by the
/// simulator; the policy only supplies its rate and initial value.
struct PricingPolicy {
  PolicyKind kind = PolicyKind::kAce;
  double ace_lambda0 = 4.66;
  double ace_tau_lambda = 100.0;
  std::optional<GainSet> fuzzy_gains;
  FuzzyBox fuzzy_box;
  double storage_target_q = 0.0;
  // Optional [lo, hi] saturation of the fuzzy price. Off by default.
  std::optional<std::pair<double, double>> price_clamp;
};

/// Throws ConfigurationError for a non-positive ACE time constant, a fuzzy
/// policy without gains, or a gain count that does not match the box.
void validate_policy(const PricingPolicy& policy);

/// -(e - q) / tau_lambda.
double ace_price_rate(double e, double tau_lambda, double q = 0.0);

/// sum_m h_m(x~) K_m x~ with x~ = (p_g, p_d, e - q). Premises are clamped to
/// the box before the memberships are evaluated; the gain product uses the
/// unclamped x~.
double fuzzy_price(const PricingPolicy& policy, const MarketState& x);

/// Fuzzy price for FUZZY, internal_lambda for ACE.
double price(const PricingPolicy& policy, const MarketState& x, double internal_lambda);

}  // namespace microgrid
