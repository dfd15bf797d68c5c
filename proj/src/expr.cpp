#include "expr.h"

#include <algorithm>
#include <set>

namespace tra {

void Catalog::add(const std::string& name, TensorRelation rel, PartitionSpec layout) {
  if (entries_.count(name)) throw ValidationError("catalog name already used: " + name);
  ConstraintReport r = check_constraints(rel);
  if (!r.ok) throw ConstraintError("catalog relation " + name + ": " + r.to_string());
  CatalogEntry e;
  e.key_arity = rel.key_arity();
  e.type = rel.array_type();
  e.front = frontier(rel);
  e.layout = std::move(layout);
  e.data = std::move(rel);
  entries_[name] = std::move(e);
}

void Catalog::add_symbolic(const std::string& name, size_t key_arity, ArrayType type,
                           IndexVector front, PartitionSpec layout) {
  if (entries_.count(name)) throw ValidationError("catalog name already used: " + name);
  if (front.size() != key_arity) throw ValidationError("frontier arity mismatch for " + name);
  CatalogEntry e;
  e.key_arity = key_arity;
  e.type = std::move(type);
  e.front = std::move(front);
  e.layout = std::move(layout);
  entries_[name] = std::move(e);
}

const CatalogEntry& Catalog::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown source: " + name);
  return it->second;
}

TraExprPtr TraExpr::source_of(std::string name) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Source;
  e->source = std::move(name);
  return e;
}
TraExprPtr TraExpr::aggregate(std::vector<size_t> group_by, KernelRef agg, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Aggregate;
  e->group_by = std::move(group_by);
  e->kernel = std::move(agg);
  e->left = std::move(child);
  return e;
}
TraExprPtr TraExpr::join(std::vector<size_t> keys_l, std::vector<size_t> keys_r, KernelRef proj,
                         TraExprPtr l, TraExprPtr r) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Join;
  e->keys_l = std::move(keys_l);
  e->keys_r = std::move(keys_r);
  e->kernel = std::move(proj);
  e->left = std::move(l);
  e->right = std::move(r);
  return e;
}
TraExprPtr TraExpr::rekey(KeyFunc f, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::ReKey;
  e->key_func = std::move(f);
  e->left = std::move(child);
  return e;
}
TraExprPtr TraExpr::filter(BoolFunc f, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Filter;
  e->pred = std::move(f);
  e->left = std::move(child);
  return e;
}
TraExprPtr TraExpr::transform(KernelRef k, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Transform;
  e->kernel = std::move(k);
  e->left = std::move(child);
  return e;
}
TraExprPtr TraExpr::tile(size_t dim, uint64_t size, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Tile;
  e->tile_dim = dim;
  e->tile_size = size;
  e->left = std::move(child);
  return e;
}
TraExprPtr TraExpr::concat(size_t key_dim, size_t array_dim, TraExprPtr child) {
  auto e = std::make_shared<TraExpr>();
  e->kind = Kind::Concat;
  e->key_dim = key_dim;
  e->array_dim = array_dim;
  e->left = std::move(child);
  return e;
}

TensorRelation eval_aggregate(const KernelRegistry& reg, const std::vector<size_t>& group_by,
                              const KernelRef& agg, const TensorRelation& rel) {
  // Single-site aggregation is local aggregation at one site.
  PhysRelation phys = scatter(rel, 1, PartitionSpec::none());
  AggSpec spec{group_by, agg, {}, {}};
  return agg_local(reg, spec, phys).project();
}

TensorRelation eval_join(const KernelRegistry& reg, const std::vector<size_t>& keys_l,
                         const std::vector<size_t>& keys_r, const KernelRef& proj,
                         const TensorRelation& l, const TensorRelation& r) {
  PhysRelation pl = scatter(l, 1, PartitionSpec::none());
  PhysRelation pr = scatter(r, 1, PartitionSpec::none());
  JoinSpec spec{keys_l, keys_r, proj, {}, {}, std::nullopt};
  return join_local(reg, spec, pl, pr).project();
}

TensorRelation eval_rekey(const KeyFunc& f, const TensorRelation& rel) {
  if (f.input_arity != rel.key_arity()) throw ValidationError("rekey arity mismatch");
  if (f.multiplicity() != 1) throw ValidationError("rekey key function must have multiplicity one");
  TensorRelation out(f.output_arity, rel.array_type());
  for (const auto& t : rel.tuples()) out.insert(f.apply(t.key)[0], t.array);
  return out;
}

TensorRelation eval_filter(const BoolFunc& f, const TensorRelation& rel) {
  if (f.input_arity != rel.key_arity()) throw ValidationError("filter arity mismatch");
  TensorRelation out(rel.key_arity(), rel.array_type());
  for (const auto& t : rel.tuples())
    if (f.eval(t.key)) out.insert(t.key, t.array);
  return out;
}

TensorRelation eval_transform(const KernelRegistry& reg, const KernelRef& k,
                              const TensorRelation& rel) {
  auto kernel = reg.resolve(k);
  if (kernel->kind() != KernelKind::Unary)
    throw KernelTypeError("transform requires a unary kernel");
  if (kernel->multiplicity(rel.array_type()) != 1)
    throw KernelTypeError("transform kernel must have multiplicity one");
  TensorRelation out(rel.key_arity(), kernel->unary_type(rel.array_type()));
  for (const auto& t : rel.tuples()) out.insert(t.key, kernel->apply_unary(t.array)[0]);
  return out;
}

TensorRelation eval_tile(const KernelRegistry& reg, size_t dim, uint64_t size,
                         const TensorRelation& rel) {
  KernelRef tile_ref{"arrayTileOp", {static_cast<double>(dim), static_cast<double>(size)}};
  auto kernel = reg.resolve(tile_ref);
  size_t m = kernel->multiplicity(rel.array_type());
  TensorRelation out(rel.key_arity() + 1, kernel->unary_type(rel.array_type()));
  for (const auto& t : rel.tuples()) {
    auto chunks = kernel->apply_unary(t.array);
    for (size_t i = 0; i < m; ++i) {
      IndexVector k = t.key;
      k.push_back(i);
      out.insert(std::move(k), std::move(chunks[i]));
    }
  }
  return out;
}

TensorRelation eval_concat(const KernelRegistry& reg, size_t key_dim, size_t array_dim,
                           const TensorRelation& rel) {
  if (key_dim >= rel.key_arity()) throw ValidationError("concat keyDim out of range");
  if (array_dim >= rel.array_type().rank()) throw ValidationError("concat arrayDim out of range");
  ConstraintReport cr = check_constraints(rel);
  if (!cr.ok) throw ConstraintError("concat requires constraints: " + cr.to_string());
  KernelRef cat{"arrayConcatOp", {static_cast<double>(array_dim)}};
  auto kernel = reg.resolve(cat);

  // group by all dims other than key_dim, concat ordered by key_dim
  std::map<IndexVector, std::map<uint64_t, const DenseArray*>> groups;
  for (const auto& t : rel.tuples()) {
    IndexVector g;
    for (size_t d = 0; d < t.key.size(); ++d)
      if (d != key_dim) g.push_back(t.key[d]);
    groups[std::move(g)][t.key[key_dim]] = &t.array;
  }
  uint64_t expected = frontier(rel).at(key_dim);
  std::optional<ArrayType> out_type;
  TensorRelation out;
  bool first = true;
  for (auto& [g, members] : groups) {
    if (members.size() != expected || members.begin()->first != 0 ||
        members.rbegin()->first != expected - 1)
      throw ConstraintError("concat group " + index_vector_to_string(g) + " is incomplete");
    std::optional<DenseArray> acc;
    for (auto& [ord, arr] : members)
      acc = acc ? kernel->apply_binary(*acc, *arr) : *arr;
    if (first) {
      out = TensorRelation(rel.key_arity() - 1, acc->type);
      first = false;
    }
    out.insert(g, std::move(*acc));
  }
  if (first) out = TensorRelation(rel.key_arity() - 1, rel.array_type());
  return out;
}

static TensorRelation eval_node(const KernelRegistry& reg, const TraExpr& e,
                                const Catalog& catalog, const EvalOptions& opts) {
  auto check = [&](TensorRelation rel, const char* what, bool expect_closed) {
    if (opts.check_constraints && expect_closed) {
      ConstraintReport r = check_constraints(rel);
      if (!r.ok)
        throw ConstraintError(std::string(what) + " output violates constraints: " +
                              r.to_string());
    }
    return rel;
  };
  switch (e.kind) {
    case TraExpr::Kind::Source: {
      const CatalogEntry& entry = catalog.at(e.source);
      if (!entry.data) throw ValidationError("source " + e.source + " has no data");
      return *entry.data;
    }
    case TraExpr::Kind::Aggregate:
      return check(eval_aggregate(reg, e.group_by, e.kernel,
                                  eval_node(reg, *e.left, catalog, opts)),
                   "aggregate", true);
    case TraExpr::Kind::Join:
      return check(eval_join(reg, e.keys_l, e.keys_r, e.kernel,
                             eval_node(reg, *e.left, catalog, opts),
                             eval_node(reg, *e.right, catalog, opts)),
                   "join", true);
    case TraExpr::Kind::ReKey:
      // rekey may legitimately break the constraints
      return eval_rekey(e.key_func, eval_node(reg, *e.left, catalog, opts));
    case TraExpr::Kind::Filter:
      return eval_filter(e.pred, eval_node(reg, *e.left, catalog, opts));
    case TraExpr::Kind::Transform:
      return check(eval_transform(reg, e.kernel, eval_node(reg, *e.left, catalog, opts)),
                   "transform", true);
    case TraExpr::Kind::Tile:
      return check(eval_tile(reg, e.tile_dim, e.tile_size,
                             eval_node(reg, *e.left, catalog, opts)),
                   "tile", true);
    case TraExpr::Kind::Concat:
      return check(eval_concat(reg, e.key_dim, e.array_dim,
                               eval_node(reg, *e.left, catalog, opts)),
                   "concat", true);
  }
  throw ValidationError("bad expression node");
}

TensorRelation eval_expr(const KernelRegistry& reg, const TraExpr& expr, const Catalog& catalog,
                         const EvalOptions& opts) {
  return eval_node(reg, expr, catalog, opts);
}

ExprType infer_expr_type(const KernelRegistry& reg, const TraExpr& e, const Catalog& catalog) {
  switch (e.kind) {
    case TraExpr::Kind::Source: {
      const CatalogEntry& entry = catalog.at(e.source);
      return ExprType{entry.key_arity, entry.type};
    }
    case TraExpr::Kind::Aggregate: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      for (size_t d : e.group_by)
        if (d >= c.key_arity) throw ValidationError("groupByKeys dim out of range");
      AggSpec spec{e.group_by, e.kernel, {}, {}};
      return ExprType{e.group_by.size(), agg_output_type(reg, spec, c.type)};
    }
    case TraExpr::Kind::Join: {
      ExprType l = infer_expr_type(reg, *e.left, catalog);
      ExprType r = infer_expr_type(reg, *e.right, catalog);
      if (e.keys_l.size() != e.keys_r.size())
        throw ValidationError("joinKeysL and joinKeysR must have equal length");
      for (size_t d : e.keys_l)
        if (d >= l.key_arity) throw ValidationError("joinKeysL dim out of range");
      for (size_t d : e.keys_r)
        if (d >= r.key_arity) throw ValidationError("joinKeysR dim out of range");
      JoinSpec spec{e.keys_l, e.keys_r, e.kernel, {}, {}, std::nullopt};
      return ExprType{join_output_arity(l.key_arity, r.key_arity, e.keys_l.size()),
                      join_output_type(reg, spec, l.type, r.type)};
    }
    case TraExpr::Kind::ReKey: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      if (e.key_func.input_arity != c.key_arity) throw ValidationError("rekey arity mismatch");
      return ExprType{e.key_func.output_arity, c.type};
    }
    case TraExpr::Kind::Filter: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      if (e.pred.input_arity != c.key_arity) throw ValidationError("filter arity mismatch");
      return c;
    }
    case TraExpr::Kind::Transform: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      return ExprType{c.key_arity, reg.resolve(e.kernel)->unary_type(c.type)};
    }
    case TraExpr::Kind::Tile: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      KernelRef tile_ref{"arrayTileOp",
                         {static_cast<double>(e.tile_dim), static_cast<double>(e.tile_size)}};
      return ExprType{c.key_arity + 1, reg.resolve(tile_ref)->unary_type(c.type)};
    }
    case TraExpr::Kind::Concat: {
      ExprType c = infer_expr_type(reg, *e.left, catalog);
      if (e.key_dim >= c.key_arity) throw ValidationError("concat keyDim out of range");
      if (e.array_dim >= c.type.rank()) throw ValidationError("concat arrayDim out of range");
      // concat bound depends on the frontier, not just the type; leave the
      // bound of the concat dimension unresolved as the child's (callers
      // that need exact bounds use the annotated physical plan)
      return ExprType{c.key_arity - 1, c.type};
    }
  }
  throw ValidationError("bad expression node");
}

// ---- JSON ----

nlohmann::json expr_to_json(const TraExpr& e) {
  using nlohmann::json;
  switch (e.kind) {
    case TraExpr::Kind::Source:
      return json{{"op", "source"}, {"name", e.source}};
    case TraExpr::Kind::Aggregate:
      return json{{"op", "aggregate"},
                  {"group_by", e.group_by},
                  {"agg", kernel_ref_to_json(e.kernel)},
                  {"child", expr_to_json(*e.left)}};
    case TraExpr::Kind::Join:
      return json{{"op", "join"},          {"keys_l", e.keys_l},
                  {"keys_r", e.keys_r},    {"proj", kernel_ref_to_json(e.kernel)},
                  {"left", expr_to_json(*e.left)}, {"right", expr_to_json(*e.right)}};
    case TraExpr::Kind::ReKey:
      return json{{"op", "rekey"},
                  {"key_func", key_func_to_json(e.key_func)},
                  {"child", expr_to_json(*e.left)}};
    case TraExpr::Kind::Filter:
      return json{{"op", "filter"},
                  {"pred", bool_func_to_json(e.pred)},
                  {"child", expr_to_json(*e.left)}};
    case TraExpr::Kind::Transform:
      return json{{"op", "transform"},
                  {"kernel", kernel_ref_to_json(e.kernel)},
                  {"child", expr_to_json(*e.left)}};
    case TraExpr::Kind::Tile:
      return json{{"op", "tile"},
                  {"dim", e.tile_dim},
                  {"size", e.tile_size},
                  {"child", expr_to_json(*e.left)}};
    case TraExpr::Kind::Concat:
      return json{{"op", "concat"},
                  {"key_dim", e.key_dim},
                  {"array_dim", e.array_dim},
                  {"child", expr_to_json(*e.left)}};
  }
  throw ValidationError("bad expression node");
}

TraExprPtr expr_from_json(const nlohmann::json& j) {
  std::string op = j.at("op").get<std::string>();
  if (op == "source") return TraExpr::source_of(j.at("name").get<std::string>());
  if (op == "aggregate")
    return TraExpr::aggregate(j.at("group_by").get<std::vector<size_t>>(),
                              kernel_ref_from_json(j.at("agg")), expr_from_json(j.at("child")));
  if (op == "join")
    return TraExpr::join(j.at("keys_l").get<std::vector<size_t>>(),
                         j.at("keys_r").get<std::vector<size_t>>(),
                         kernel_ref_from_json(j.at("proj")), expr_from_json(j.at("left")),
                         expr_from_json(j.at("right")));
  if (op == "rekey")
    return TraExpr::rekey(key_func_from_json(j.at("key_func")), expr_from_json(j.at("child")));
  if (op == "filter")
    return TraExpr::filter(bool_func_from_json(j.at("pred")), expr_from_json(j.at("child")));
  if (op == "transform")
    return TraExpr::transform(kernel_ref_from_json(j.at("kernel")),
                              expr_from_json(j.at("child")));
  if (op == "tile")
    return TraExpr::tile(j.at("dim").get<size_t>(), j.at("size").get<uint64_t>(),
                         expr_from_json(j.at("child")));
  if (op == "concat")
    return TraExpr::concat(j.at("key_dim").get<size_t>(), j.at("array_dim").get<size_t>(),
                           expr_from_json(j.at("child")));
  throw IoError("unknown expression op: " + op);
}

}  // namespace tra
