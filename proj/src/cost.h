#pragma once

#include "plan.h"

namespace tra {

// Per-node inference result. Costing runs the operator semantics over keys
// and sites only (no payloads), so every count is exact and matches the
// runtime's metering bit for bit.
struct NodeAnnotation {
  size_t key_arity = 0;
  ArrayType type{IndexVector{1}};
  IndexVector front;               // frontier of the projected relation
  uint64_t physical_tuples = 0;    // resident (key, site) entries
  uint64_t floats = 0;             // physical_tuples * floats per array
  uint64_t transfer_floats = 0;    // 0 for local operators
  PlacementFact placement;
  bool replicated = false;
};

struct CostReport {
  std::vector<NodeAnnotation> nodes;
  uint64_t total_transfer = 0;

  std::string csv(const IaPlan& plan) const;
};

// Validates and annotates the plan against catalog shapes (data not
// required), computing exact frontiers, tuple counts and transfer costs at
// the given site count. Type or structure problems raise ValidationError /
// KernelTypeError tagged with the node path.
CostReport cost_plan(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                     uint32_t sites);

// The frontier inference rules, usable on frontiers alone. cost_plan
// derives frontiers from the simulated key sets; these agree with it on
// constraint-satisfying inputs and are exposed for symbolic reasoning.
IndexVector frontier_join_rule(const IndexVector& fl, const IndexVector& fr,
                               const std::vector<size_t>& keys_l,
                               const std::vector<size_t>& keys_r);
IndexVector frontier_agg_rule(const IndexVector& f, const std::vector<size_t>& group_by);
// Brute force: feed every key below the input frontier through the
// predicate / key map.
IndexVector frontier_filter_rule(const BoolFunc& pred, const IndexVector& f);
IndexVector frontier_map_rule(const KeyFunc& func, const IndexVector& f);

}  // namespace tra
