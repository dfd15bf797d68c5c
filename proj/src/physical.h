#pragma once

#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "kernels.h"
#include "keyfunc.h"
#include "types.h"

namespace tra {

// Declared placement of a relation across sites.
struct PartitionSpec {
  enum class Kind { None, AllSites, ByDims } kind = Kind::None;
  std::vector<size_t> dims;  // ascending, for ByDims

  static PartitionSpec none() { return {}; }
  static PartitionSpec all() { return {Kind::AllSites, {}}; }
  static PartitionSpec by_dims(std::vector<size_t> d) {
    std::sort(d.begin(), d.end());
    return {Kind::ByDims, std::move(d)};
  }
  std::string to_string() const;
};

// A physical tuple. Arrays are shared and may be absent: the cost analyzer
// runs the same operator semantics with keys and sites only.
struct PhysTuple {
  IndexVector key;
  uint32_t site = 0;
  std::shared_ptr<const DenseArray> array;  // null in symbolic mode
};

// Multiset of (key, array, site) triples over s sites, kept in canonical
// (site, key, payload) order. `replicated` records that per-site stores are
// identical copies of one logical relation; it is maintained structurally
// (set by Bcast, cleared by Shuf) and drives broadcast metering.
struct PhysRelation {
  size_t key_arity = 0;
  ArrayType type{IndexVector{1}};
  uint32_t sites = 1;
  bool replicated = false;
  std::vector<PhysTuple> tuples;

  void sort_canonical();
  uint64_t physical_floats() const { return tuples.size() * type.float_count(); }
  // Floats in one logical copy: per-site count when replicated, total
  // otherwise.
  uint64_t logical_floats() const {
    return replicated ? physical_floats() / std::max<uint64_t>(sites, 1) : physical_floats();
  }
  TensorRelation project() const;  // distinct (key, array), site dropped
  IndexVector frontier() const;
  bool symbolic() const { return !tuples.empty() && tuples.front().array == nullptr; }
};

int compare_phys(const PhysTuple& a, const PhysTuple& b);

// Predicates over placements, decided by inspection.
bool all_sites(const PhysRelation& rel);
bool partitioned_by(const PhysRelation& rel, const std::vector<size_t>& dims);

// ---- the six IA operators (sequential reference semantics) ----
// The runtime executes the same per-site/per-destination logic in parallel;
// results are bit-identical by construction.

struct MoveStats {
  uint64_t floats_sent = 0;  // per the metering contract
};

PhysRelation bcast(const PhysRelation& rel, MoveStats* stats = nullptr);
PhysRelation shuf(const std::vector<size_t>& part_dims, const PhysRelation& rel,
                  MoveStats* stats = nullptr);

// Kernel chains: unary kernels applied in sequence. The first may be
// multi-output; the rest must have multiplicity one.
struct KernelChain {
  std::vector<KernelRef> kernels;

  bool empty() const { return kernels.empty(); }
  std::string to_string() const;
  bool operator==(const KernelChain& o) const { return kernels == o.kernels; }
};

size_t chain_multiplicity(const KernelRegistry& reg, const KernelChain& chain,
                          const ArrayType& in);
ArrayType chain_type(const KernelRegistry& reg, const KernelChain& chain, const ArrayType& in);
std::vector<DenseArray> chain_apply(const KernelRegistry& reg, const KernelChain& chain,
                                    const DenseArray& a);

struct JoinSpec {
  std::vector<size_t> keys_l, keys_r;
  KernelRef proj;
  KernelChain pre;                  // applied to both inputs before proj
  KernelChain post;                 // applied to the projected array
  std::optional<KeyFunc> post_key;  // applied to the structural output key

  size_t group_size() const { return keys_l.size(); }
};

struct AggSpec {
  std::vector<size_t> group_by;  // output key order = listed order
  KernelRef agg;
  KernelChain pre;   // applied per tuple before reduction
  KernelChain post;  // applied to the reduced array
};

PhysRelation join_local(const KernelRegistry& reg, const JoinSpec& spec, const PhysRelation& l,
                        const PhysRelation& r);
PhysRelation agg_local(const KernelRegistry& reg, const AggSpec& spec, const PhysRelation& rel);
PhysRelation filter_local(const BoolFunc& pred, const PhysRelation& rel);
PhysRelation map_local(const KernelRegistry& reg, const KeyFunc& key_func,
                       const KernelChain& arr_func, const PhysRelation& rel);

// Type inference shared by validation, the oracle and the engines.
ArrayType join_output_type(const KernelRegistry& reg, const JoinSpec& spec, const ArrayType& l,
                           const ArrayType& r);
ArrayType agg_output_type(const KernelRegistry& reg, const AggSpec& spec, const ArrayType& in);
size_t join_output_arity(size_t kl, size_t kr, size_t g);
// Position of each right input dim in the join output key (SIZE_MAX for
// dropped join dims: those equal left positions keys_l[i]).
std::vector<size_t> join_right_positions(size_t kl, size_t kr, const std::vector<size_t>& keys_r);

// Distribute a logical relation over sites according to a declared layout.
PhysRelation scatter(const TensorRelation& rel, uint32_t sites, const PartitionSpec& layout);
// Symbolic variant: all keys below `front` with no payloads.
PhysRelation scatter_symbolic(size_t key_arity, const ArrayType& type, const IndexVector& front,
                              uint32_t sites, const PartitionSpec& layout);

std::vector<IndexVector> keys_below(const IndexVector& front);

}  // namespace tra
