#pragma once

#include "microgrid/fuzzy.h"
#include "microgrid/lmi.h"
#include "microgrid/market.h"

namespace microgrid::testing {

// Market without cost/benefit offsets: its drift is linear, so the rule model
// is exact and the gain LMIs are solvable.
inline MarketParams LinearMarket() {
  MarketParams p;
  p.b_g_hat = 0.0;
  p.b_d_hat = 0.0;
  return p;
}

inline FuzzyBox SymmetricBox() {
  FuzzyBox box;
  for (auto& axis : box.axes) axis = AxisPartition(-10.0, 10.0);
  return box;
}

inline IdentifiedModel IdentifyFor(const MarketParams& params, const FuzzyBox& box,
                                   std::uint64_t seed) {
  return identify_rule_matrices(generate_training_data(params, box, 1500, seed), box, 1e-8);
}

inline LmiProblem ProblemFor(const IdentifiedModel& model, const MarketParams& params,
                             double gamma_sq) {
  return LmiProblem::From(model.rule_matrices, assemble_system_matrices(params), gamma_sq);
}

}  // namespace microgrid::testing
