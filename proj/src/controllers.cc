#include "microgrid/controllers.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "microgrid/errors.h"

namespace microgrid {

void validate_policy(const PricingPolicy& policy) {
  if (policy.kind == PolicyKind::kAce) {
    if (!(policy.ace_tau_lambda > 0.0) || !std::isfinite(policy.ace_tau_lambda)) {
      throw ConfigurationError("ACE pricing needs tau_lambda > 0");
    }
    if (!std::isfinite(policy.ace_lambda0)) {
      throw ConfigurationError("ACE initial price must be finite");
    }
  } else {
    if (!policy.fuzzy_gains) throw ConfigurationError("fuzzy pricing needs a gain set");
    const int have = static_cast<int>(policy.fuzzy_gains->K.size());
    if (have != policy.fuzzy_box.rule_count()) {
      throw ConfigurationError("gain set has " + std::to_string(have) + " rules, box has " +
                               std::to_string(policy.fuzzy_box.rule_count()));
    }
  }
  if (!std::isfinite(policy.storage_target_q)) {
    throw ConfigurationError("storage target must be finite");
  }
  if (policy.price_clamp && !(policy.price_clamp->first <= policy.price_clamp->second)) {
    throw ConfigurationError("price clamp needs lo <= hi");
  }
}

double ace_price_rate(double e, double tau_lambda, double q) {
  return -(e - q) / tau_lambda;
}

double fuzzy_price(const PricingPolicy& policy, const MarketState& x) {
  if (!policy.fuzzy_gains) throw ConfigurationError("fuzzy pricing needs a gain set");
  const auto& K = policy.fuzzy_gains->K;
  const Eigen::Vector3d shifted(x.p_g, x.p_d, x.e - policy.storage_target_q);
  double lambda = 0.0;
  for (const auto& hit : active_rules(policy.fuzzy_box, shifted)) {
    if (hit.rule >= static_cast<int>(K.size())) {
      throw ConfigurationError("gain set is smaller than the rule base");
    }
    lambda += hit.weight * K[hit.rule].dot(shifted);
  }
  if (policy.price_clamp) {
    lambda = std::clamp(lambda, policy.price_clamp->first, policy.price_clamp->second);
  }
  return lambda;
}

double price(const PricingPolicy& policy, const MarketState& x, double internal_lambda) {
  return policy.kind == PolicyKind::kFuzzy ? fuzzy_price(policy, x) : internal_lambda;
}

}  // namespace microgrid
