#include "compile.h"

namespace tra {

namespace {

struct Compiler {
  const KernelRegistry& reg;
  const Catalog& catalog;
  IaPlan plan;

  // returns (node id, key arity of the produced relation)
  std::pair<size_t, size_t> build(const TraExpr& e) {
    switch (e.kind) {
      case TraExpr::Kind::Source: {
        const CatalogEntry& entry = catalog.at(e.source);
        IaNode n;
        n.kind = IaNode::Kind::Source;
        n.source = e.source;
        return {plan.add(std::move(n)), entry.key_arity};
      }
      case TraExpr::Kind::Aggregate: {
        auto [c, arity] = build(*e.left);
        for (size_t d : e.group_by)
          if (d >= arity) throw ValidationError("groupByKeys dim out of range");
        IaNode shuf;
        shuf.kind = IaNode::Kind::Shuf;
        shuf.dims = e.group_by;
        std::sort(shuf.dims.begin(), shuf.dims.end());
        shuf.children = {c};
        size_t s = plan.add(std::move(shuf));
        IaNode agg;
        agg.kind = IaNode::Kind::Agg;
        agg.agg = AggSpec{e.group_by, e.kernel, {}, {}};
        agg.children = {s};
        return {plan.add(std::move(agg)), e.group_by.size()};
      }
      case TraExpr::Kind::Join: {
        auto [l, la] = build(*e.left);
        auto [r, ra] = build(*e.right);
        if (e.keys_l.size() != e.keys_r.size())
          throw ValidationError("joinKeysL and joinKeysR must have equal length");
        for (size_t d : e.keys_l)
          if (d >= la) throw ValidationError("joinKeysL dim out of range");
        for (size_t d : e.keys_r)
          if (d >= ra) throw ValidationError("joinKeysR dim out of range");
        IaNode bc;
        bc.kind = IaNode::Kind::Bcast;
        bc.children = {l};
        size_t b = plan.add(std::move(bc));
        IaNode jn;
        jn.kind = IaNode::Kind::Join;
        jn.join = JoinSpec{e.keys_l, e.keys_r, e.kernel, {}, {}, std::nullopt};
        jn.children = {b, r};
        return {plan.add(std::move(jn)), join_output_arity(la, ra, e.keys_l.size())};
      }
      case TraExpr::Kind::ReKey: {
        auto [c, arity] = build(*e.left);
        if (e.key_func.input_arity != arity) throw ValidationError("rekey arity mismatch");
        if (e.key_func.multiplicity() != 1)
          throw ValidationError("rekey key function must have multiplicity one");
        IaNode m;
        m.kind = IaNode::Kind::Map;
        m.map_key = KeySpec::ast(e.key_func);
        m.map_arr = ArrSpec::identity();
        m.children = {c};
        return {plan.add(std::move(m)), e.key_func.output_arity};
      }
      case TraExpr::Kind::Filter: {
        auto [c, arity] = build(*e.left);
        if (e.pred.input_arity != arity) throw ValidationError("filter arity mismatch");
        IaNode f;
        f.kind = IaNode::Kind::Filter;
        f.pred = e.pred;
        f.children = {c};
        return {plan.add(std::move(f)), arity};
      }
      case TraExpr::Kind::Transform: {
        auto [c, arity] = build(*e.left);
        IaNode m;
        m.kind = IaNode::Kind::Map;
        m.map_key = KeySpec::identity();
        m.map_arr = ArrSpec::of_kernel(e.kernel);
        m.children = {c};
        return {plan.add(std::move(m)), arity};
      }
      case TraExpr::Kind::Tile: {
        auto [c, arity] = build(*e.left);
        IaNode m;
        m.kind = IaNode::Kind::Map;
        m.map_key = KeySpec::tile(e.tile_dim, e.tile_size);
        m.map_arr = ArrSpec::tile(e.tile_dim, e.tile_size);
        m.children = {c};
        return {plan.add(std::move(m)), arity + 1};
      }
      case TraExpr::Kind::Concat: {
        auto [c, arity] = build(*e.left);
        if (e.key_dim >= arity) throw ValidationError("concat keyDim out of range");
        std::vector<size_t> complement;
        for (size_t d = 0; d < arity; ++d)
          if (d != e.key_dim) complement.push_back(d);
        IaNode shuf;
        shuf.kind = IaNode::Kind::Shuf;
        shuf.dims = complement;
        shuf.children = {c};
        size_t s = plan.add(std::move(shuf));
        IaNode agg;
        agg.kind = IaNode::Kind::Agg;
        agg.agg = AggSpec{complement,
                          KernelRef{"arrayConcatOp", {static_cast<double>(e.array_dim)}},
                          {},
                          {}};
        agg.children = {s};
        return {plan.add(std::move(agg)), complement.size()};
      }
    }
    throw ValidationError("bad expression node");
  }
};

}  // namespace

IaPlan compile_expr(const KernelRegistry& reg, const TraExpr& expr, const Catalog& catalog,
                    const std::string& root_name) {
  // typing pass first: surfaces kernel/shape errors before plan construction
  infer_expr_type(reg, expr, catalog);
  Compiler c{reg, catalog, {}};
  auto [root, arity] = c.build(expr);
  (void)arity;
  c.plan.roots.push_back({root, root_name});
  c.plan.check_structure();
  return std::move(c.plan);
}

}  // namespace tra
