#pragma once

#include "cost.h"
#include "plan.h"

namespace tra {

struct ExecOptions {
  uint32_t sites = 2;
  bool processes = false;         // threads by default
  bool check_constraints = false  /* validate mode */;
  size_t batch_tuples = 256;      // tuples per message
  size_t channel_capacity = 64;   // messages per channel
};

struct TraceRow {
  std::string label;
  size_t key_arity = 0;
  IndexVector front;
  uint64_t physical_tuples = 0;
  uint64_t transfer_floats = 0;
  double wall_seconds = 0;
};

struct ExecutionTrace {
  std::vector<TraceRow> rows;
  uint64_t total_transfer = 0;

  // Deterministic serialization: wall times are reported separately and
  // kept out of the CSV so repeated runs are byte-identical.
  std::string csv() const;
};

struct ExecResult {
  std::vector<std::pair<std::string, PhysRelation>> roots;
  ExecutionTrace trace;

  const PhysRelation& root(const std::string& name) const;
};

// Sequential reference: the ia-physical operator semantics applied node by
// node on whole relations. The parallel executor must match it bit for bit.
ExecResult execute_reference(const KernelRegistry& reg, const IaPlan& plan,
                             const Catalog& catalog, uint32_t sites,
                             bool check_constraints = false);

// Parallel executor: one worker per site. Thread mode runs long-lived
// workers with barrier-separated stages and bounded channels; process mode
// forks one worker per site and moves tuples over unix sockets using the
// relation wire encoding.
ExecResult execute_plan(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                        const ExecOptions& opts);

}  // namespace tra
