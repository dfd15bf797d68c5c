#include "cost.h"

#include <algorithm>
#include <sstream>

namespace tra {

namespace {

PhysRelation eval_symbolic_node(const KernelRegistry& reg, const IaNode& n,
                                const std::vector<const PhysRelation*>& kids,
                                const Catalog& catalog, uint32_t sites, MoveStats* stats) {
  switch (n.kind) {
    case IaNode::Kind::Source: {
      const CatalogEntry& e = catalog.at(n.source);
      return scatter_symbolic(e.key_arity, e.type, e.front, sites, e.layout);
    }
    case IaNode::Kind::Bcast:
      return bcast(*kids[0], stats);
    case IaNode::Kind::Shuf:
      return shuf(n.dims, *kids[0], stats);
    case IaNode::Kind::Join:
      return join_local(reg, n.join, *kids[0], *kids[1]);
    case IaNode::Kind::Agg:
      return agg_local(reg, n.agg, *kids[0]);
    case IaNode::Kind::Filter:
      return filter_local(n.pred, *kids[0]);
    case IaNode::Kind::Map: {
      KeyFunc kf = n.map_key.resolve(kids[0]->key_arity, kids[0]->type);
      return map_local(reg, kf, n.map_arr.resolve(), *kids[0]);
    }
  }
  throw ValidationError("bad plan node");
}

}  // namespace

CostReport cost_plan(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                     uint32_t sites) {
  plan.check_structure();
  if (sites < 1) throw ValidationError("site count must be >= 1");
  std::vector<StaticInfo> facts = annotate_static(plan, catalog);
  std::vector<PhysRelation> rels(plan.nodes.size());
  CostReport report;
  report.nodes.resize(plan.nodes.size());
  for (size_t i = 0; i < plan.nodes.size(); ++i) {
    const IaNode& n = plan.nodes[i];
    std::vector<const PhysRelation*> kids;
    for (size_t c : n.children) kids.push_back(&rels[c]);
    MoveStats stats;
    try {
      rels[i] = eval_symbolic_node(reg, n, kids, catalog, sites, &stats);
    } catch (const Error& e) {
      throw ValidationError("node #" + std::to_string(i) + " (" + n.label() +
                            "): " + e.what());
    }
    NodeAnnotation& a = report.nodes[i];
    a.key_arity = rels[i].key_arity;
    a.type = rels[i].type;
    a.front = rels[i].frontier();
    a.physical_tuples = rels[i].tuples.size();
    a.floats = rels[i].physical_floats();
    a.transfer_floats = stats.floats_sent;
    a.placement = facts[i].placement;
    a.replicated = facts[i].replicated;
    report.total_transfer += stats.floats_sent;
  }
  return report;
}

std::string CostReport::csv(const IaPlan& plan) const {
  std::ostringstream os;
  os << "node,op,key_arity,bound,frontier,physical_tuples,floats,transfer\n";
  for (size_t i = 0; i < nodes.size(); ++i) {
    const NodeAnnotation& a = nodes[i];
    os << i << ",\"" << plan.nodes[i].label() << "\"," << a.key_arity << ","
       << a.type.to_string() << "," << index_vector_to_string(a.front) << ","
       << a.physical_tuples << "," << a.floats << "," << a.transfer_floats << "\n";
  }
  os << "total,,,,,,," << total_transfer << "\n";
  return os.str();
}

IndexVector frontier_join_rule(const IndexVector& fl, const IndexVector& fr,
                               const std::vector<size_t>& keys_l,
                               const std::vector<size_t>& keys_r) {
  IndexVector out;
  out.reserve(join_output_arity(fl.size(), fr.size(), keys_l.size()));
  for (size_t d = 0; d < fl.size(); ++d) {
    auto it = std::find(keys_l.begin(), keys_l.end(), d);
    if (it == keys_l.end()) {
      out.push_back(fl[d]);
    } else {
      size_t i = static_cast<size_t>(it - keys_l.begin());
      out.push_back(std::min(fl[d], fr[keys_r[i]]));
    }
  }
  for (size_t d = 0; d < fr.size(); ++d)
    if (std::find(keys_r.begin(), keys_r.end(), d) == keys_r.end()) out.push_back(fr[d]);
  return out;
}

IndexVector frontier_agg_rule(const IndexVector& f, const std::vector<size_t>& group_by) {
  IndexVector out;
  out.reserve(group_by.size());
  for (size_t d : group_by) out.push_back(f[d]);
  return out;
}

IndexVector frontier_filter_rule(const BoolFunc& pred, const IndexVector& f) {
  IndexVector out(f.size(), 0);
  for (const auto& k : keys_below(f))
    if (pred.eval(k))
      for (size_t d = 0; d < f.size(); ++d) out[d] = std::max(out[d], k[d] + 1);
  return out;
}

IndexVector frontier_map_rule(const KeyFunc& func, const IndexVector& f) {
  IndexVector out(func.output_arity, 0);
  for (const auto& k : keys_below(f))
    for (const auto& mapped : func.apply(k))
      for (size_t d = 0; d < out.size(); ++d) out[d] = std::max(out[d], mapped[d] + 1);
  return out;
}

}  // namespace tra
