#pragma once

#include <optional>

#include "cost.h"
#include "plan.h"

namespace tra {

enum class Rule {
  R1_1,  // merge filters
  R1_2,  // merge maps
  R1_3,  // commute map and filter (identity key map)
  R1_4,  // fuse map into aggregation (plain / distributive)
  R1_5,  // push filter below aggregation (on the projected key)
  R1_6,  // push filter below join (predicate over joined keys)
  R1_7,  // fuse map into join (plain / distributive)
  R2_1,  // only the final movement in a movement sequence is needed
  R2_2,  // movement commutes with filter
  R2_3,  // movement commutes with map
  R2_4,  // drop a shuffle already satisfied under an aggregation
  R2_5,  // split an aggregation into two phases
  R2_6,  // join implementation alternatives (bcast left/right, co-shuffle, bare)
  R2_7,  // drop a re-shuffle of a co-shuffled join
  R3_BMM,
  R3_CMM,
  R3_RMM,
};

const std::vector<Rule>& all_rules();
std::string rule_name(Rule r);

struct RewriterOptions {
  // R2-5's applicability condition as printed never yields a well-formed
  // plan; this switches to the complementary reading (see the optimizer
  // notes in the README).
  bool r25_complement = false;
};

struct RuleApplication {
  IaPlan plan;          // normalized
  std::string variant;  // which alternative of a multi-form rule fired
};

// All sound applications of `rule` rooted at node `path`; empty when the
// pattern or its side conditions do not hold. Side conditions are decided
// symbolically (ASTs, declared kernel flags, placement facts); a context
// guard rejects rewrites whose placement change could alter what an
// enclosing join or aggregation observes.
std::vector<RuleApplication> apply_rule_variants(const KernelRegistry& reg, Rule rule,
                                                 const IaPlan& plan, size_t path,
                                                 const Catalog& catalog,
                                                 const RewriterOptions& opts = {});

// First sound application, if any.
std::optional<IaPlan> apply_rule_at(const KernelRegistry& reg, Rule rule, const IaPlan& plan,
                                    size_t path, const Catalog& catalog,
                                    const RewriterOptions& opts = {});

struct EnumBudget {
  size_t max_plans = 10000;
  size_t max_depth = 16;
};

struct PlanSpaceEntry {
  IaPlan plan;
  std::string canon;
  uint64_t canon_hash = 0;
  uint64_t cost = 0;
  size_t node_count = 0;
  std::vector<std::string> trace;  // rule applications that reached this plan
};

struct PlanSpace {
  std::vector<PlanSpaceEntry> entries;  // insertion order; entry 0 is the input plan

  const PlanSpaceEntry& best() const;  // min cost; ties: fewer nodes, then canon
  std::string table_csv() const;
  std::string table_text() const;
};

// Breadth-first closure under the rule set with canonical-form
// deduplication. Plans are costed at `sites`; adjacent same-kind movement
// chains are collapsed on insertion, so no stored plan contains them.
PlanSpace enumerate_plans(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                          uint32_t sites, const std::vector<Rule>& rules,
                          const EnumBudget& budget, const RewriterOptions& opts = {});

}  // namespace tra
