#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kernels.h"
#include "keyfunc.h"
#include "physical.h"
#include "types.h"

namespace tra {

// Named sources with their data (optional: shape-only entries drive
// symbolic costing) and declared initial layout for the physical layer.
struct CatalogEntry {
  size_t key_arity = 0;
  ArrayType type{IndexVector{1}};
  IndexVector front;  // frontier; equals frontier(data) when data is present
  PartitionSpec layout = PartitionSpec::none();
  std::optional<TensorRelation> data;
};

class Catalog {
 public:
  void add(const std::string& name, TensorRelation rel,
           PartitionSpec layout = PartitionSpec::none());
  void add_symbolic(const std::string& name, size_t key_arity, ArrayType type, IndexVector front,
                    PartitionSpec layout);
  const CatalogEntry& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  const std::map<std::string, CatalogEntry>& entries() const { return entries_; }

 private:
  std::map<std::string, CatalogEntry> entries_;
};

// TRA expression tree: the seven logical operators over named sources.
struct TraExpr;
using TraExprPtr = std::shared_ptr<const TraExpr>;

struct TraExpr {
  enum class Kind { Source, Aggregate, Join, ReKey, Filter, Transform, Tile, Concat };
  Kind kind = Kind::Source;

  std::string source;                  // Source
  std::vector<size_t> group_by;        // Aggregate
  KernelRef kernel;                    // Aggregate (aggOp), Join (projOp), Transform
  std::vector<size_t> keys_l, keys_r;  // Join
  KeyFunc key_func;                    // ReKey
  BoolFunc pred;                       // Filter
  size_t tile_dim = 0;                 // Tile
  uint64_t tile_size = 0;              // Tile
  size_t key_dim = 0, array_dim = 0;   // Concat
  TraExprPtr left, right;              // children (left used for unary ops)

  static TraExprPtr source_of(std::string name);
  static TraExprPtr aggregate(std::vector<size_t> group_by, KernelRef agg, TraExprPtr child);
  static TraExprPtr join(std::vector<size_t> keys_l, std::vector<size_t> keys_r, KernelRef proj,
                         TraExprPtr l, TraExprPtr r);
  static TraExprPtr rekey(KeyFunc f, TraExprPtr child);
  static TraExprPtr filter(BoolFunc f, TraExprPtr child);
  static TraExprPtr transform(KernelRef k, TraExprPtr child);
  static TraExprPtr tile(size_t dim, uint64_t size, TraExprPtr child);
  static TraExprPtr concat(size_t key_dim, size_t array_dim, TraExprPtr child);
};

// ---- logical operator evaluation (the single-site oracle) ----

TensorRelation eval_aggregate(const KernelRegistry& reg, const std::vector<size_t>& group_by,
                              const KernelRef& agg, const TensorRelation& rel);
TensorRelation eval_join(const KernelRegistry& reg, const std::vector<size_t>& keys_l,
                         const std::vector<size_t>& keys_r, const KernelRef& proj,
                         const TensorRelation& l, const TensorRelation& r);
TensorRelation eval_rekey(const KeyFunc& f, const TensorRelation& rel);
TensorRelation eval_filter(const BoolFunc& f, const TensorRelation& rel);
TensorRelation eval_transform(const KernelRegistry& reg, const KernelRef& k,
                              const TensorRelation& rel);
TensorRelation eval_tile(const KernelRegistry& reg, size_t dim, uint64_t size,
                         const TensorRelation& rel);
TensorRelation eval_concat(const KernelRegistry& reg, size_t key_dim, size_t array_dim,
                           const TensorRelation& rel);

struct EvalOptions {
  bool check_constraints = false;  // validate mode: check after every operator
};

TensorRelation eval_expr(const KernelRegistry& reg, const TraExpr& expr, const Catalog& catalog,
                         const EvalOptions& opts = {});

// Static typing: (key arity, array type) per subexpression, bottom-up.
struct ExprType {
  size_t key_arity = 0;
  ArrayType type{IndexVector{1}};
};
ExprType infer_expr_type(const KernelRegistry& reg, const TraExpr& expr, const Catalog& catalog);

// JSON plan-file encoding of expressions.
nlohmann::json expr_to_json(const TraExpr& expr);
TraExprPtr expr_from_json(const nlohmann::json& j);

}  // namespace tra
