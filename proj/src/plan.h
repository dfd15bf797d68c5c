#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expr.h"
#include "kernels.h"
#include "keyfunc.h"
#include "physical.h"

namespace tra {

// Key map specification on a MapLocal node. Identity and tiling need the
// child's inferred arity/type before they can be materialized into an AST.
struct KeySpec {
  enum class Kind { Identity, Ast, Tile, InsertDim } kind = Kind::Identity;
  KeyFunc func;                 // Ast
  size_t dim = 0;               // Tile / InsertDim
  uint64_t size_or_count = 0;   // Tile size / InsertDim count

  static KeySpec identity() { return {}; }
  static KeySpec ast(KeyFunc f) { return KeySpec{Kind::Ast, std::move(f), 0, 0}; }
  static KeySpec tile(size_t dim, uint64_t size) { return KeySpec{Kind::Tile, {}, dim, size}; }
  static KeySpec insert_dim(size_t dim, uint64_t count) {
    return KeySpec{Kind::InsertDim, {}, dim, count};
  }
  // Materialize against the child's key arity and array type.
  KeyFunc resolve(size_t child_arity, const ArrayType& child_type) const;
  std::string to_string() const;
  bool operator==(const KeySpec& o) const;
};

// Array map specification: a kernel chain or an array tile.
struct ArrSpec {
  enum class Kind { Chain, Tile } kind = Kind::Chain;
  KernelChain chain;           // Chain (empty = identity)
  size_t dim = 0;              // Tile
  uint64_t size = 0;           // Tile

  static ArrSpec identity() { return {}; }
  static ArrSpec of_chain(KernelChain c) { return ArrSpec{Kind::Chain, std::move(c), 0, 0}; }
  static ArrSpec of_kernel(KernelRef k) { return of_chain(KernelChain{{std::move(k)}}); }
  static ArrSpec tile(size_t dim, uint64_t size) { return ArrSpec{Kind::Tile, {}, dim, size}; }
  KernelChain resolve() const;
  std::string to_string() const;
  bool operator==(const ArrSpec& o) const;
};

struct IaNode {
  enum class Kind { Source, Bcast, Shuf, Join, Agg, Filter, Map };
  Kind kind = Kind::Source;

  std::string source;            // Source
  std::vector<size_t> dims;      // Shuf partDims
  JoinSpec join;                 // Join
  AggSpec agg;                   // Agg
  BoolFunc pred;                 // Filter
  KeySpec map_key;               // Map
  ArrSpec map_arr;               // Map
  std::vector<size_t> children;  // node ids; 0, 1, or 2

  std::string label() const;
};

// IA plan DAG. Nodes are stored in a topologically valid order (children
// before parents); roots name the plan outputs.
struct IaPlan {
  std::vector<IaNode> nodes;
  struct Root {
    size_t id;
    std::string name;
  };
  std::vector<Root> roots;

  size_t add(IaNode n);
  void check_structure() const;

  // Canonical serialization: node-id independent, used for plan-space
  // deduplication and deterministic tie-breaks.
  std::string canonical_string() const;
  uint64_t canonical_hash() const { return fnv1a64_str(canonical_string()); }

  // Drop unreachable nodes, renumber, preserve root order.
  IaPlan pruned() const;
};

nlohmann::json plan_to_json(const IaPlan& plan);
IaPlan plan_from_json(const nlohmann::json& j);

// Placement facts provable structurally; used by the rewriter's side
// conditions and printed in explain output.
struct PlacementFact {
  enum class Kind { None, All, Fnv } kind = Kind::None;
  std::vector<size_t> dims;  // ascending, for Fnv

  static PlacementFact none() { return {}; }
  static PlacementFact all() { return {Kind::All, {}}; }
  static PlacementFact fnv(std::vector<size_t> d) {
    std::sort(d.begin(), d.end());
    return {Kind::Fnv, std::move(d)};
  }
  bool operator==(const PlacementFact& o) const { return kind == o.kind && dims == o.dims; }
  bool determinate() const { return kind != Kind::None; }
  // Does this fact guarantee co-location on `dims` (same projection -> same
  // site)?
  bool colocates(const std::vector<size_t>& on) const;
  std::string to_string() const;
};

struct StaticInfo {
  size_t key_arity = 0;
  PlacementFact placement;
  bool replicated = false;
};

// Structural annotation: arities and placement facts, no data or shapes
// needed. Source facts come from the catalog layouts.
std::vector<StaticInfo> annotate_static(const IaPlan& plan, const Catalog& catalog);
StaticInfo annotate_one(const IaPlan& plan, const std::vector<StaticInfo>& info, size_t i,
                        const Catalog& catalog);

std::string explain(const IaPlan& plan, const std::vector<StaticInfo>* info = nullptr);

}  // namespace tra
