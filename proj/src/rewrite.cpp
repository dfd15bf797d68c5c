#include "rewrite.h"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

namespace tra {

const std::vector<Rule>& all_rules() {
  static const std::vector<Rule> rules = {
      Rule::R1_1, Rule::R1_2, Rule::R1_3, Rule::R1_4, Rule::R1_5, Rule::R1_6,
      Rule::R1_7, Rule::R2_1, Rule::R2_2, Rule::R2_3, Rule::R2_4, Rule::R2_5,
      Rule::R2_6, Rule::R2_7, Rule::R3_BMM, Rule::R3_CMM, Rule::R3_RMM,
  };
  return rules;
}

std::string rule_name(Rule r) {
  switch (r) {
    case Rule::R1_1: return "R1-1";
    case Rule::R1_2: return "R1-2";
    case Rule::R1_3: return "R1-3";
    case Rule::R1_4: return "R1-4";
    case Rule::R1_5: return "R1-5";
    case Rule::R1_6: return "R1-6";
    case Rule::R1_7: return "R1-7";
    case Rule::R2_1: return "R2-1";
    case Rule::R2_2: return "R2-2";
    case Rule::R2_3: return "R2-3";
    case Rule::R2_4: return "R2-4";
    case Rule::R2_5: return "R2-5";
    case Rule::R2_6: return "R2-6";
    case Rule::R2_7: return "R2-7";
    case Rule::R3_BMM: return "R3-BMM";
    case Rule::R3_CMM: return "R3-CMM";
    case Rule::R3_RMM: return "R3-RMM";
  }
  return "?";
}

namespace {

using Kind = IaNode::Kind;

bool is_movement(const IaNode& n) { return n.kind == Kind::Bcast || n.kind == Kind::Shuf; }

std::vector<size_t> sorted(std::vector<size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

bool subset(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  // set(a) subseteq set(b)
  for (size_t x : a)
    if (std::find(b.begin(), b.end(), x) == b.end()) return false;
  return true;
}

// A map whose key spec is provably the identity.
bool identity_key(const KeySpec& k) {
  if (k.kind == KeySpec::Kind::Identity) return true;
  if (k.kind == KeySpec::Kind::Ast) return k.func.is_identity();
  return false;
}

// Multiplicity-one array chains decidable without type information.
bool chain_is_single(const KernelChain& c) {
  for (const auto& k : c.kernels)
    if (k.name == "duplicate" || k.name == "arrayTileOp") return false;
  return true;
}

bool map_is_single(const IaNode& n) {
  if (n.map_key.kind == KeySpec::Kind::Tile || n.map_key.kind == KeySpec::Kind::InsertDim)
    return false;
  if (n.map_key.kind == KeySpec::Kind::Ast && n.map_key.func.multiplicity() != 1) return false;
  if (n.map_arr.kind != ArrSpec::Kind::Chain) return false;
  return chain_is_single(n.map_arr.chain);
}

KeyFunc resolve_key_nom(const KeySpec& k, size_t arity) {
  // resolve without type information; valid for Identity/Ast/InsertDim
  switch (k.kind) {
    case KeySpec::Kind::Identity: return KeyFunc::identity(arity);
    case KeySpec::Kind::Ast: return k.func;
    case KeySpec::Kind::InsertDim: return KeyFunc::insert_dim(arity, k.dim, k.size_or_count);
    case KeySpec::Kind::Tile: break;
  }
  throw ValidationError("key spec needs type information");
}

bool chain_distributes_over(const KernelRegistry& reg, const KernelChain& c,
                            const std::string& agg) {
  for (const auto& k : c.kernels)
    if (!reg.resolve(k)->distributes_over(agg)) return false;
  return !c.kernels.empty();
}

KernelChain concat_chains(const KernelChain& first, const KernelChain& then) {
  KernelChain out = first;
  out.kernels.insert(out.kernels.end(), then.kernels.begin(), then.kernels.end());
  return out;
}

// ---------------------------------------------------------------------------
// context guard: a rewrite that changes the placement fact (or replication)
// of the rewritten subtree must not be observable by any enclosing local
// join or aggregation before a movement neutralizes placement again.
// ---------------------------------------------------------------------------

bool facts_equal(const StaticInfo& a, const StaticInfo& b) {
  return a.placement == b.placement && a.replicated == b.replicated;
}

bool context_ok(const IaPlan& before, const IaPlan& after, size_t anchor_before,
                size_t anchor_after, const Catalog& catalog) {
  std::vector<StaticInfo> fb, fa;
  try {
    fb = annotate_static(before, catalog);
    fa = annotate_static(after, catalog);
  } catch (const Error&) {
    return false;
  }
  const StaticInfo& ib = fb[anchor_before];
  const StaticInfo& ia = fa[anchor_after];
  if (facts_equal(ib, ia) && ib.placement.determinate()) return true;

  // Parents are unchanged by construction: nodes above the anchor keep their
  // ids in both plans (the anchor is replaced in place or re-pointed).
  std::vector<std::vector<size_t>> parents(before.nodes.size());
  for (size_t i = 0; i < before.nodes.size(); ++i)
    for (size_t c : before.nodes[i].children) parents[c].push_back(i);

  // Walk upward from the anchor. A branch is safe once it hits a Shuf, a
  // Bcast over equal replication, or a sensitive node whose incoming facts
  // agree and are determinate.
  std::set<size_t> visited;
  std::function<bool(size_t)> safe_above = [&](size_t node) -> bool {
    if (visited.count(node)) return true;
    visited.insert(node);
    for (size_t p : parents[node]) {
      const IaNode& pn = before.nodes[p];
      switch (pn.kind) {
        case Kind::Shuf:
          continue;  // placement re-established
        case Kind::Bcast: {
          if (fb[node].replicated != fa[node].replicated) return false;
          continue;  // gather is canonical; downstream sees identical copies
        }
        case Kind::Join:
        case Kind::Agg: {
          if (!(facts_equal(fb[node], fa[node]) && fb[node].placement.determinate()))
            return false;
          // facts agree and pin the placement; nothing above can differ
          continue;
        }
        case Kind::Filter:
        case Kind::Map:
          if (!safe_above(p)) return false;
          continue;
        case Kind::Source:
          continue;
      }
    }
    return true;
  };
  return safe_above(anchor_before);
}

// ---------------------------------------------------------------------------
// mutation helpers
// ---------------------------------------------------------------------------

struct Candidate {
  IaPlan plan;
  size_t anchor_after = 0;
  std::string variant;
};

void repoint(IaPlan& plan, size_t from, size_t to) {
  for (auto& n : plan.nodes)
    for (size_t& c : n.children)
      if (c == from) c = to;
  for (auto& r : plan.roots)
    if (r.id == from) r.id = to;
}

IaNode make_filter(BoolFunc pred, size_t child) {
  IaNode n;
  n.kind = Kind::Filter;
  n.pred = std::move(pred);
  n.children = {child};
  return n;
}

IaNode make_map(KeySpec key, ArrSpec arr, size_t child) {
  IaNode n;
  n.kind = Kind::Map;
  n.map_key = std::move(key);
  n.map_arr = std::move(arr);
  n.children = {child};
  return n;
}

IaNode make_shuf(std::vector<size_t> dims, size_t child) {
  IaNode n;
  n.kind = Kind::Shuf;
  n.dims = std::move(dims);
  n.children = {child};
  return n;
}

IaNode make_bcast(size_t child) {
  IaNode n;
  n.kind = Kind::Bcast;
  n.children = {child};
  return n;
}

IaNode make_agg(AggSpec spec, size_t child) {
  IaNode n;
  n.kind = Kind::Agg;
  n.agg = std::move(spec);
  n.children = {child};
  return n;
}

IaNode make_join(JoinSpec spec, size_t l, size_t r) {
  IaNode n;
  n.kind = Kind::Join;
  n.join = std::move(spec);
  n.children = {l, r};
  return n;
}

// ---------------------------------------------------------------------------
// the rules
// ---------------------------------------------------------------------------

struct RuleContext {
  const KernelRegistry& reg;
  const IaPlan& plan;
  const Catalog& catalog;
  const std::vector<StaticInfo>& info;
  const RewriterOptions& opts;

  const IaNode& node(size_t i) const { return plan.nodes[i]; }
  size_t arity(size_t i) const { return info[i].key_arity; }
};

void rule_r1_1(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Filter) return;
  size_t c = top.children[0];
  if (cx.node(c).kind != Kind::Filter) return;
  IaPlan next = cx.plan;
  next.nodes[p] =
      make_filter(BoolFunc::conjunction(top.pred, cx.node(c).pred), cx.node(c).children[0]);
  out.push_back({std::move(next), p, "merge"});
}

void rule_r1_2(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Map) return;
  size_t c = top.children[0];
  const IaNode& inner = cx.node(c);
  if (inner.kind != Kind::Map) return;
  if (!map_is_single(top) || !map_is_single(inner)) return;
  size_t in_arity = cx.arity(inner.children[0]);
  KeyFunc kf_inner = resolve_key_nom(inner.map_key, in_arity);
  KeyFunc kf_outer = resolve_key_nom(top.map_key, kf_inner.output_arity);
  KeyFunc composed = KeyFunc::compose_single(kf_outer, kf_inner);
  KeySpec key = composed.is_identity() ? KeySpec::identity() : KeySpec::ast(composed);
  ArrSpec arr = ArrSpec::of_chain(concat_chains(inner.map_arr.chain, top.map_arr.chain));
  IaPlan next = cx.plan;
  next.nodes[p] = make_map(std::move(key), std::move(arr), inner.children[0]);
  out.push_back({std::move(next), p, "merge"});
}

void rule_r1_3(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  size_t c = top.children.empty() ? 0 : top.children[0];
  if (top.kind == Kind::Map && cx.node(c).kind == Kind::Filter) {
    if (!identity_key(top.map_key)) return;
    const IaNode& filt = cx.node(c);
    IaPlan next = cx.plan;
    size_t new_map = next.nodes.size();
    next.nodes.push_back(make_map(top.map_key, top.map_arr, filt.children[0]));
    next.nodes[p] = make_filter(filt.pred, new_map);
    out.push_back({std::move(next), p, "filter-first"});
  } else if (top.kind == Kind::Filter && cx.node(c).kind == Kind::Map) {
    const IaNode& mp = cx.node(c);
    if (!identity_key(mp.map_key)) return;
    IaPlan next = cx.plan;
    size_t new_filter = next.nodes.size();
    next.nodes.push_back(make_filter(top.pred, mp.children[0]));
    next.nodes[p] = make_map(mp.map_key, mp.map_arr, new_filter);
    out.push_back({std::move(next), p, "map-first"});
  }
}

void rule_r1_4(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Map) return;
  size_t c = top.children[0];
  const IaNode& agg = cx.node(c);
  if (agg.kind != Kind::Agg) return;
  if (!identity_key(top.map_key) || !map_is_single(top)) return;
  if (top.map_arr.chain.empty()) return;
  // plain composition: apply the map after each reduction
  {
    IaPlan next = cx.plan;
    AggSpec spec = agg.agg;
    spec.post = concat_chains(spec.post, top.map_arr.chain);
    next.nodes[p] = make_agg(std::move(spec), agg.children[0]);
    out.push_back({std::move(next), p, "compose"});
  }
  // distributive: apply the map to every tuple before reduction
  auto k = cx.reg.resolve(agg.agg.agg);
  if (k->kind() == KernelKind::Binary && agg.agg.post.empty() &&
      chain_distributes_over(cx.reg, top.map_arr.chain, agg.agg.agg.name)) {
    IaPlan next = cx.plan;
    AggSpec spec = agg.agg;
    spec.pre = concat_chains(spec.pre, top.map_arr.chain);
    next.nodes[p] = make_agg(std::move(spec), agg.children[0]);
    out.push_back({std::move(next), p, "distribute"});
  }
}

void rule_r1_5(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Filter) return;
  size_t c = top.children[0];
  const IaNode& agg = cx.node(c);
  if (agg.kind != Kind::Agg) return;
  size_t child_arity = cx.arity(agg.children[0]);
  std::vector<size_t> map(top.pred.input_arity, 0);
  for (size_t i = 0; i < agg.agg.group_by.size(); ++i) map[i] = agg.agg.group_by[i];
  BoolFunc pushed = BoolFunc::remap(top.pred, child_arity, map);
  IaPlan next = cx.plan;
  size_t nf = next.nodes.size();
  next.nodes.push_back(make_filter(std::move(pushed), agg.children[0]));
  next.nodes[p] = make_agg(agg.agg, nf);
  out.push_back({std::move(next), p, "pushdown"});
}

void rule_r1_6(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Filter) return;
  size_t c = top.children[0];
  const IaNode& jn = cx.node(c);
  if (jn.kind != Kind::Join || jn.join.post_key) return;
  std::set<size_t> refs = top.pred.referenced();
  for (size_t r : refs)
    if (std::find(jn.join.keys_l.begin(), jn.join.keys_l.end(), r) == jn.join.keys_l.end())
      return;  // predicate must only read joined key positions
  size_t kl = cx.arity(jn.children[0]);
  size_t kr = cx.arity(jn.children[1]);
  BoolFunc left{kl, top.pred.pred};
  std::vector<size_t> map(top.pred.input_arity, 0);
  for (size_t i = 0; i < jn.join.keys_l.size(); ++i) map[jn.join.keys_l[i]] = jn.join.keys_r[i];
  BoolFunc right = BoolFunc::remap(top.pred, kr, map);
  IaPlan next = cx.plan;
  size_t fl = next.nodes.size();
  next.nodes.push_back(make_filter(std::move(left), jn.children[0]));
  size_t fr = next.nodes.size();
  next.nodes.push_back(make_filter(std::move(right), jn.children[1]));
  next.nodes[p] = make_join(jn.join, fl, fr);
  out.push_back({std::move(next), p, "pushdown"});
}

void rule_r1_7(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Map) return;
  size_t c = top.children[0];
  const IaNode& jn = cx.node(c);
  if (jn.kind != Kind::Join) return;
  if (!map_is_single(top)) return;
  size_t join_arity = cx.arity(c);
  KeyFunc kf = resolve_key_nom(top.map_key, join_arity);
  std::optional<KeyFunc> post_key;
  if (jn.join.post_key) {
    post_key = KeyFunc::compose_single(kf, *jn.join.post_key);
  } else if (!kf.is_identity()) {
    post_key = kf;
  }
  if (!top.map_arr.chain.empty()) {
    // plain: map the projected arrays
    IaPlan next = cx.plan;
    JoinSpec spec = jn.join;
    spec.post = concat_chains(spec.post, top.map_arr.chain);
    spec.post_key = post_key;
    next.nodes[p] = make_join(std::move(spec), jn.children[0], jn.children[1]);
    out.push_back({std::move(next), p, "compose"});
    // distributive: map both inputs before the projection kernel
    if (jn.join.post.empty() &&
        chain_distributes_over(cx.reg, top.map_arr.chain, jn.join.proj.name)) {
      IaPlan next2 = cx.plan;
      JoinSpec spec2 = jn.join;
      spec2.pre = concat_chains(spec2.pre, top.map_arr.chain);
      spec2.post_key = post_key;
      next2.nodes[p] = make_join(std::move(spec2), jn.children[0], jn.children[1]);
      out.push_back({std::move(next2), p, "distribute"});
    }
  } else if (post_key) {
    // pure rekey folded into the join's output key
    IaPlan next = cx.plan;
    JoinSpec spec = jn.join;
    spec.post_key = post_key;
    next.nodes[p] = make_join(std::move(spec), jn.children[0], jn.children[1]);
    out.push_back({std::move(next), p, "compose"});
  }
}

void rule_r2_1(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (!is_movement(top)) return;
  size_t c = top.children[0];
  const IaNode& inner = cx.node(c);
  if (top.kind == Kind::Bcast && inner.kind == Kind::Bcast) {
    IaPlan next = cx.plan;
    next.nodes[p] = make_bcast(inner.children[0]);
    out.push_back({std::move(next), p, "collapse"});
  } else if (top.kind == Kind::Shuf && (inner.kind == Kind::Shuf || inner.kind == Kind::Bcast)) {
    // only the final movement in the sequence matters
    IaPlan next = cx.plan;
    next.nodes[p] = make_shuf(top.dims, inner.children[0]);
    out.push_back({std::move(next), p, "collapse"});
  } else if (top.kind == Kind::Bcast && cx.info[c].replicated) {
    // broadcasting an already replicated relation is a no-op
    IaPlan next = cx.plan;
    repoint(next, p, c);
    out.push_back({std::move(next), c, "drop-bcast"});
  } else if (top.kind == Kind::Shuf &&
             cx.info[c].placement == PlacementFact::fnv(top.dims) && !cx.info[c].replicated) {
    // the child is already placed exactly as this shuffle would place it
    IaPlan next = cx.plan;
    repoint(next, p, c);
    out.push_back({std::move(next), c, "drop-shuf"});
  }
}

void rule_r2_2(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  size_t c = top.children.empty() ? 0 : top.children[0];
  if (is_movement(top) && cx.node(c).kind == Kind::Filter) {
    const IaNode& filt = cx.node(c);
    IaPlan next = cx.plan;
    size_t mv = next.nodes.size();
    next.nodes.push_back(top.kind == Kind::Bcast ? make_bcast(filt.children[0])
                                                 : make_shuf(top.dims, filt.children[0]));
    next.nodes[p] = make_filter(filt.pred, mv);
    out.push_back({std::move(next), p, "filter-above"});
  } else if (top.kind == Kind::Filter && is_movement(cx.node(c))) {
    const IaNode& mv = cx.node(c);
    IaPlan next = cx.plan;
    size_t nf = next.nodes.size();
    next.nodes.push_back(make_filter(top.pred, mv.children[0]));
    next.nodes[p] = mv.kind == Kind::Bcast ? make_bcast(nf) : make_shuf(mv.dims, nf);
    out.push_back({std::move(next), p, "filter-below"});
  }
}

void rule_r2_3(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  size_t c = top.children.empty() ? 0 : top.children[0];
  if (is_movement(top) && cx.node(c).kind == Kind::Map) {
    const IaNode& mp = cx.node(c);
    if (top.kind == Kind::Shuf && !(identity_key(mp.map_key) && map_is_single(mp))) return;
    IaPlan next = cx.plan;
    size_t mv = next.nodes.size();
    next.nodes.push_back(top.kind == Kind::Bcast ? make_bcast(mp.children[0])
                                                 : make_shuf(top.dims, mp.children[0]));
    next.nodes[p] = make_map(mp.map_key, mp.map_arr, mv);
    out.push_back({std::move(next), p, "map-above"});
  } else if (top.kind == Kind::Map && is_movement(cx.node(c))) {
    const IaNode& mv = cx.node(c);
    if (mv.kind == Kind::Shuf && !(identity_key(top.map_key) && map_is_single(top))) return;
    IaPlan next = cx.plan;
    size_t nm = next.nodes.size();
    next.nodes.push_back(make_map(top.map_key, top.map_arr, mv.children[0]));
    next.nodes[p] = mv.kind == Kind::Bcast ? make_bcast(nm) : make_shuf(mv.dims, nm);
    out.push_back({std::move(next), p, "map-below"});
  }
}

// complete per-site groups provable for an aggregation input
bool groups_complete(const StaticInfo& child, const std::vector<size_t>& group_by) {
  if (child.replicated) return true;
  if (child.placement.kind == PlacementFact::Kind::All) return true;
  return child.placement.kind == PlacementFact::Kind::Fnv &&
         subset(child.placement.dims, group_by);
}

void rule_r2_4(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Agg) return;
  size_t c = top.children[0];
  const IaNode& sh = cx.node(c);
  if (sh.kind != Kind::Shuf) return;
  if (!subset(sh.dims, top.agg.group_by)) return;  // partDims within groupByKeys
  size_t gc = sh.children[0];
  if (!groups_complete(cx.info[gc], top.agg.group_by)) return;
  IaPlan next = cx.plan;
  next.nodes[p] = make_agg(top.agg, gc);
  out.push_back({std::move(next), p, "drop-shuf"});
}

void rule_r2_5(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Agg) return;
  size_t c = top.children[0];
  const IaNode& sh = cx.node(c);
  if (sh.kind != Kind::Shuf) return;
  const auto& gb = top.agg.group_by;
  const auto& pd = sh.dims;
  if (!cx.opts.r25_complement) {
    // Condition as printed: groupByKeys strictly inside partDims. The
    // re-shuffle after the inner phase would then need dimensions the
    // grouped output no longer has, so no well-formed plan exists and the
    // rule never fires.
    bool strict_subset = subset(gb, pd) && gb.size() < pd.size();
    (void)strict_subset;
    return;
  }
  // complementary reading: partDims within groupByKeys, remapped onto the
  // grouped output
  if (!subset(pd, gb)) return;
  auto k = cx.reg.resolve(top.agg.agg);
  if (k->kind() != KernelKind::Binary || !k->associative() || !k->commutative()) return;
  size_t gc = sh.children[0];
  // the inner phase must produce one tuple per group key, or the shuffle
  // would reject conflicting partials
  if (!groups_complete(cx.info[gc], gb)) return;
  std::vector<size_t> remapped;
  for (size_t d : pd) {
    auto it = std::find(gb.begin(), gb.end(), d);
    remapped.push_back(static_cast<size_t>(it - gb.begin()));
  }
  std::vector<size_t> outer_gb(gb.size());
  for (size_t i = 0; i < gb.size(); ++i) outer_gb[i] = i;
  IaPlan next = cx.plan;
  AggSpec inner = top.agg;
  inner.post = {};
  size_t ni = next.nodes.size();
  next.nodes.push_back(make_agg(std::move(inner), gc));
  size_t ns = next.nodes.size();
  next.nodes.push_back(make_shuf(remapped, ni));
  AggSpec outer{outer_gb, top.agg.agg, {}, top.agg.post};
  next.nodes[p] = make_agg(std::move(outer), ns);
  out.push_back({std::move(next), p, "two-phase"});
}

std::vector<size_t> aligned_right_dims(const JoinSpec& join) {
  // right shuffle dims ordered to match the ascending order of keys_l, so
  // the projected vectors coincide on joining pairs
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < join.keys_l.size(); ++i) pairs.push_back({join.keys_l[i], join.keys_r[i]});
  std::sort(pairs.begin(), pairs.end());
  std::vector<size_t> dims;
  for (auto& [a, b] : pairs) dims.push_back(b);
  return dims;
}

// Is the pairing of a local join provably complete (every logically
// matching pair meets at some site)?
bool join_complete(const RuleContext& cx, const IaNode& jn) {
  const StaticInfo& l = cx.info[jn.children[0]];
  const StaticInfo& r = cx.info[jn.children[1]];
  if (l.replicated || r.replicated) return true;
  if (l.placement.kind == PlacementFact::Kind::All ||
      r.placement.kind == PlacementFact::Kind::All)
    return true;
  if (l.placement.kind != PlacementFact::Kind::Fnv ||
      r.placement.kind != PlacementFact::Kind::Fnv)
    return false;
  // both sides hashed on corresponding join dims, ascending-aligned, so the
  // projected component vectors (hence the hashes) coincide
  if (!subset(l.placement.dims, jn.join.keys_l)) return false;
  std::vector<size_t> expect_r;
  for (size_t d : l.placement.dims) {
    auto it = std::find(jn.join.keys_l.begin(), jn.join.keys_l.end(), d);
    expect_r.push_back(jn.join.keys_r[it - jn.join.keys_l.begin()]);
  }
  return expect_r == r.placement.dims;  // both ascending: order must agree
}

void rule_r2_6(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Join) return;
  if (!join_complete(cx, top)) return;
  size_t l = top.children[0], r = top.children[1];
  auto emit = [&](const std::string& variant, int form) {
    IaPlan next = cx.plan;
    size_t nl = l, nr = r;
    switch (form) {
      case 0:  // broadcast left
        nl = next.nodes.size();
        next.nodes.push_back(make_bcast(l));
        break;
      case 1:  // broadcast right
        nr = next.nodes.size();
        next.nodes.push_back(make_bcast(r));
        break;
      case 2:  // co-shuffle on the join dims
        nl = next.nodes.size();
        next.nodes.push_back(make_shuf(sorted(top.join.keys_l), l));
        nr = next.nodes.size();
        next.nodes.push_back(make_shuf(aligned_right_dims(top.join), r));
        break;
      case 3:  // bare: keep both inputs in place
        break;
    }
    next.nodes[p] = make_join(top.join, nl, nr);
    out.push_back({std::move(next), p, variant});
  };
  emit("bcast-left", 0);
  emit("bcast-right", 1);
  if (!top.join.keys_l.empty()) emit("co-shuffle", 2);
  {
    // bare form only when completeness still holds without movement
    IaNode bare = make_join(top.join, l, r);
    if (join_complete(cx, bare)) emit("bare", 3);
  }
}

void rule_r2_7(const RuleContext& cx, size_t p, std::vector<Candidate>& out) {
  const IaNode& top = cx.node(p);
  if (top.kind != Kind::Shuf) return;
  size_t c = top.children[0];
  const IaNode& jn = cx.node(c);
  if (jn.kind != Kind::Join) return;
  if (!subset(top.dims, jn.join.keys_l)) return;  // partDims within joinKeysL
  const IaNode& sl = cx.node(jn.children[0]);
  const IaNode& sr = cx.node(jn.children[1]);
  if (sl.kind != Kind::Shuf || sr.kind != Kind::Shuf) return;
  if (sorted(sl.dims) != sorted(jn.join.keys_l)) return;
  if (sorted(sr.dims) != sorted(jn.join.keys_r)) return;
  IaPlan next = cx.plan;
  repoint(next, p, c);
  out.push_back({std::move(next), c, "drop-reshuffle"});
}

// ---------------------------------------------------------------------------
// domain rules: distributed matrix multiply alternatives
// ---------------------------------------------------------------------------

struct MatmulMatch {
  size_t agg_node;       // aggregation over <0,2>
  size_t x_base, y_base; // operand subtrees
  KernelRef agg_op, mul_op;
};

// Matches the matmul shape: agg[<0,2>] over (optional shuf[<0,2>]) over a
// join contracting the shared dimension, in broadcast, co-shuffled, bare or
// replication form.
std::optional<MatmulMatch> match_matmul(const RuleContext& cx, size_t p) {
  const IaNode& agg = cx.node(p);
  if (agg.kind != Kind::Agg) return std::nullopt;
  if (agg.agg.group_by != std::vector<size_t>{0, 2}) return std::nullopt;
  if (!agg.agg.pre.empty() || !agg.agg.post.empty()) return std::nullopt;
  auto aggk = cx.reg.resolve(agg.agg.agg);
  if (aggk->kind() != KernelKind::Binary || !aggk->associative() || !aggk->commutative())
    return std::nullopt;

  size_t jid = agg.children[0];
  bool had_shuf = false;
  if (cx.node(jid).kind == Kind::Shuf) {
    if (sorted(cx.node(jid).dims) != std::vector<size_t>{0, 2}) return std::nullopt;
    had_shuf = true;
    jid = cx.node(jid).children[0];
  }
  const IaNode& jn = cx.node(jid);
  if (jn.kind != Kind::Join || jn.join.post_key) return std::nullopt;
  if (!jn.join.pre.empty() || !jn.join.post.empty()) return std::nullopt;
  auto mul = cx.reg.resolve(jn.join.proj);
  if (!mul->bilinear_over(agg.agg.agg.name)) return std::nullopt;
  if (!had_shuf) {
    // without the re-shuffle the aggregation groups must already be
    // co-located
    const StaticInfo& ji = cx.info[jid];
    bool ok = ji.replicated || ji.placement.kind == PlacementFact::Kind::All ||
              (ji.placement.kind == PlacementFact::Kind::Fnv &&
               subset(ji.placement.dims, {0, 2}));
    if (!ok) return std::nullopt;
  }

  MatmulMatch m;
  m.agg_node = p;
  m.agg_op = agg.agg.agg;
  m.mul_op = jn.join.proj;

  if (jn.join.keys_l == std::vector<size_t>{1} && jn.join.keys_r == std::vector<size_t>{0}) {
    // broadcast, co-shuffled or bare form; arity-2 operands
    size_t l = jn.children[0], r = jn.children[1];
    if (cx.arity(l) != 2 || cx.arity(r) != 2) return std::nullopt;
    if (!join_complete(cx, jn)) return std::nullopt;
    m.x_base = l;
    m.y_base = r;
    if (cx.node(l).kind == Kind::Bcast) m.x_base = cx.node(l).children[0];
    if (cx.node(r).kind == Kind::Bcast) m.y_base = cx.node(r).children[0];
    if (cx.node(l).kind == Kind::Shuf && cx.node(l).dims == std::vector<size_t>{1})
      m.x_base = cx.node(l).children[0];
    if (cx.node(r).kind == Kind::Shuf && cx.node(r).dims == std::vector<size_t>{0})
      m.y_base = cx.node(r).children[0];
    if (cx.arity(m.x_base) != 2 || cx.arity(m.y_base) != 2) return std::nullopt;
    return m;
  }

  if (jn.join.keys_l == std::vector<size_t>{0, 1, 2} &&
      jn.join.keys_r == std::vector<size_t>{0, 1, 2}) {
    // replication form: shuf[<0,2>] over map[insertDim, duplicate] per side
    auto strip = [&](size_t side, size_t insert_pos) -> std::optional<size_t> {
      const IaNode& sh = cx.node(side);
      if (sh.kind != Kind::Shuf || sorted(sh.dims) != std::vector<size_t>{0, 2})
        return std::nullopt;
      const IaNode& mp = cx.node(sh.children[0]);
      if (mp.kind != Kind::Map || mp.map_key.kind != KeySpec::Kind::InsertDim ||
          mp.map_key.dim != insert_pos)
        return std::nullopt;
      if (mp.map_arr.kind != ArrSpec::Kind::Chain || mp.map_arr.chain.kernels.size() != 1 ||
          mp.map_arr.chain.kernels[0].name != "duplicate")
        return std::nullopt;
      return mp.children[0];
    };
    auto x = strip(jn.children[0], 2);
    auto y = strip(jn.children[1], 0);
    if (!x || !y) return std::nullopt;
    if (cx.arity(*x) != 2 || cx.arity(*y) != 2) return std::nullopt;
    m.x_base = *x;
    m.y_base = *y;
    return m;
  }
  return std::nullopt;
}

void rule_r3(const RuleContext& cx, Rule which, size_t p, std::vector<Candidate>& out) {
  auto m = match_matmul(cx, p);
  if (!m) return;
  IaPlan next = cx.plan;
  auto add = [&](IaNode n) {
    next.nodes.push_back(std::move(n));
    return next.nodes.size() - 1;
  };
  JoinSpec contracted{{1}, {0}, m->mul_op, {}, {}, std::nullopt};
  switch (which) {
    case Rule::R3_BMM: {
      size_t b = add(make_bcast(m->x_base));
      size_t j = add(make_join(contracted, b, m->y_base));
      size_t s = add(make_shuf({0, 2}, j));
      next.nodes[p] = make_agg(AggSpec{{0, 2}, m->agg_op, {}, {}}, s);
      out.push_back({std::move(next), p, "bmm"});
      return;
    }
    case Rule::R3_CMM: {
      size_t sx = add(make_shuf({1}, m->x_base));
      size_t sy = add(make_shuf({0}, m->y_base));
      size_t j = add(make_join(contracted, sx, sy));
      size_t s = add(make_shuf({0, 2}, j));
      next.nodes[p] = make_agg(AggSpec{{0, 2}, m->agg_op, {}, {}}, s);
      out.push_back({std::move(next), p, "cmm"});
      return;
    }
    case Rule::R3_RMM: {
      // replication counts come from the partner operand's frontier
      CostReport cost;
      try {
        cost = cost_plan(cx.reg, cx.plan, cx.catalog, 1);
      } catch (const Error&) {
        return;
      }
      IndexVector fx = cost.nodes[m->x_base].front;
      IndexVector fy = cost.nodes[m->y_base].front;
      if (fx.size() != 2 || fy.size() != 2) return;
      uint64_t x_dups = fy[1];  // one copy of X per column block of Y
      uint64_t y_dups = fx[0];  // one copy of Y per row block of X
      if (x_dups == 0 || y_dups == 0) return;
      size_t mx = add(make_map(KeySpec::insert_dim(2, x_dups),
                               ArrSpec::of_kernel({"duplicate", {double(x_dups)}}), m->x_base));
      size_t sx = add(make_shuf({0, 2}, mx));
      size_t my = add(make_map(KeySpec::insert_dim(0, y_dups),
                               ArrSpec::of_kernel({"duplicate", {double(y_dups)}}), m->y_base));
      size_t sy = add(make_shuf({0, 2}, my));
      JoinSpec all3{{0, 1, 2}, {0, 1, 2}, m->mul_op, {}, {}, std::nullopt};
      size_t j = add(make_join(std::move(all3), sx, sy));
      next.nodes[p] = make_agg(AggSpec{{0, 2}, m->agg_op, {}, {}}, j);
      out.push_back({std::move(next), p, "rmm"});
      return;
    }
    default:
      return;
  }
}

// collapse adjacent same-kind movement chains plus shuffles over broadcasts
IaPlan collapse_movements(IaPlan plan) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < plan.nodes.size(); ++i) {
      IaNode& n = plan.nodes[i];
      if (!is_movement(n)) continue;
      size_t c = n.children[0];
      const IaNode& inner = plan.nodes[c];
      if (n.kind == Kind::Bcast && inner.kind == Kind::Bcast) {
        n.children[0] = inner.children[0];
        changed = true;
      } else if (n.kind == Kind::Shuf && is_movement(inner)) {
        n.children[0] = inner.children[0];
        changed = true;
      }
    }
  }
  return plan.pruned();
}

}  // namespace

std::vector<RuleApplication> apply_rule_variants(const KernelRegistry& reg, Rule rule,
                                                 const IaPlan& plan, size_t path,
                                                 const Catalog& catalog,
                                                 const RewriterOptions& opts) {
  if (path >= plan.nodes.size()) return {};
  std::vector<StaticInfo> info;
  try {
    info = annotate_static(plan, catalog);
  } catch (const Error&) {
    return {};
  }
  RuleContext cx{reg, plan, catalog, info, opts};
  std::vector<Candidate> candidates;
  switch (rule) {
    case Rule::R1_1: rule_r1_1(cx, path, candidates); break;
    case Rule::R1_2: rule_r1_2(cx, path, candidates); break;
    case Rule::R1_3: rule_r1_3(cx, path, candidates); break;
    case Rule::R1_4: rule_r1_4(cx, path, candidates); break;
    case Rule::R1_5: rule_r1_5(cx, path, candidates); break;
    case Rule::R1_6: rule_r1_6(cx, path, candidates); break;
    case Rule::R1_7: rule_r1_7(cx, path, candidates); break;
    case Rule::R2_1: rule_r2_1(cx, path, candidates); break;
    case Rule::R2_2: rule_r2_2(cx, path, candidates); break;
    case Rule::R2_3: rule_r2_3(cx, path, candidates); break;
    case Rule::R2_4: rule_r2_4(cx, path, candidates); break;
    case Rule::R2_5: rule_r2_5(cx, path, candidates); break;
    case Rule::R2_6: rule_r2_6(cx, path, candidates); break;
    case Rule::R2_7: rule_r2_7(cx, path, candidates); break;
    case Rule::R3_BMM:
    case Rule::R3_CMM:
    case Rule::R3_RMM: rule_r3(cx, rule, path, candidates); break;
  }
  std::vector<RuleApplication> out;
  for (auto& cand : candidates) {
    try {
      if (!context_ok(plan, cand.plan, path, cand.anchor_after, catalog)) continue;
      IaPlan normalized = cand.plan.pruned();
      normalized.check_structure();
      annotate_static(normalized, catalog);  // structural sanity
      out.push_back({std::move(normalized), cand.variant});
    } catch (const Error&) {
      continue;  // malformed candidate: treat as non-match
    }
  }
  return out;
}

std::optional<IaPlan> apply_rule_at(const KernelRegistry& reg, Rule rule, const IaPlan& plan,
                                    size_t path, const Catalog& catalog,
                                    const RewriterOptions& opts) {
  auto v = apply_rule_variants(reg, rule, plan, path, catalog, opts);
  if (v.empty()) return std::nullopt;
  return v.front().plan;
}

const PlanSpaceEntry& PlanSpace::best() const {
  if (entries.empty()) throw ValidationError("empty plan space");
  const PlanSpaceEntry* best = &entries[0];
  for (const auto& e : entries) {
    if (e.cost != best->cost) {
      if (e.cost < best->cost) best = &e;
    } else if (e.node_count != best->node_count) {
      if (e.node_count < best->node_count) best = &e;
    } else if (e.canon < best->canon) {
      best = &e;
    }
  }
  return *best;
}

std::string PlanSpace::table_csv() const {
  std::vector<const PlanSpaceEntry*> order;
  for (const auto& e : entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const PlanSpaceEntry* a, const PlanSpaceEntry* b) {
    if (a->cost != b->cost) return a->cost < b->cost;
    if (a->node_count != b->node_count) return a->node_count < b->node_count;
    return a->canon < b->canon;
  });
  std::ostringstream os;
  os << "canonical_hash,nodes,cost,trace\n";
  for (const auto* e : order) {
    os << std::hex << e->canon_hash << std::dec << "," << e->node_count << "," << e->cost << ",\"";
    for (size_t i = 0; i < e->trace.size(); ++i) {
      if (i) os << " ";
      os << e->trace[i];
    }
    os << "\"\n";
  }
  return os.str();
}

std::string PlanSpace::table_text() const {
  std::vector<const PlanSpaceEntry*> order;
  for (const auto& e : entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const PlanSpaceEntry* a, const PlanSpaceEntry* b) {
    if (a->cost != b->cost) return a->cost < b->cost;
    if (a->node_count != b->node_count) return a->node_count < b->node_count;
    return a->canon < b->canon;
  });
  std::ostringstream os;
  os << "  plan              nodes  cost           rule trace\n";
  for (const auto* e : order) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(e->canon_hash));
    os << "  " << buf << "  " << e->node_count << "      " << e->cost << "  ";
    for (size_t i = 0; i < e->trace.size(); ++i) {
      if (i) os << " ";
      os << e->trace[i];
    }
    os << "\n";
  }
  return os.str();
}

PlanSpace enumerate_plans(const KernelRegistry& reg, const IaPlan& plan, const Catalog& catalog,
                          uint32_t sites, const std::vector<Rule>& rules,
                          const EnumBudget& budget, const RewriterOptions& opts) {
  if (budget.max_plans == 0 || budget.max_depth == 0)
    throw ValidationError("enumeration budget must be positive");
  PlanSpace space;
  std::set<std::string> seen;

  auto insert = [&](IaPlan p, std::vector<std::string> trace) -> bool {
    IaPlan canon_plan = collapse_movements(std::move(p));
    std::string canon = canon_plan.canonical_string();
    if (seen.count(canon)) return false;
    uint64_t c;
    try {
      CostReport rep = cost_plan(reg, canon_plan, catalog, sites);
      c = rep.total_transfer;
    } catch (const Error&) {
      return false;  // refuse to admit plans that fail validation
    }
    seen.insert(canon);
    PlanSpaceEntry e;
    e.node_count = canon_plan.nodes.size();
    e.plan = std::move(canon_plan);
    e.canon_hash = fnv1a64_str(canon);
    e.canon = std::move(canon);
    e.cost = c;
    e.trace = std::move(trace);
    space.entries.push_back(std::move(e));
    return true;
  };

  if (!insert(plan, {}))
    throw ValidationError("initial plan failed validation during enumeration");

  size_t frontier_begin = 0;
  for (size_t depth = 0; depth < budget.max_depth; ++depth) {
    size_t frontier_end = space.entries.size();
    if (frontier_begin == frontier_end) break;
    for (size_t ei = frontier_begin; ei < frontier_end; ++ei) {
      if (space.entries.size() >= budget.max_plans) break;
      // copy: entries may reallocate while we append
      IaPlan current = space.entries[ei].plan;
      std::vector<std::string> trace = space.entries[ei].trace;
      for (Rule rule : rules) {
        for (size_t node = 0; node < current.nodes.size(); ++node) {
          auto apps = apply_rule_variants(reg, rule, current, node, catalog, opts);
          for (auto& app : apps) {
            if (space.entries.size() >= budget.max_plans) break;
            std::vector<std::string> t = trace;
            t.push_back(rule_name(rule) + "@" + std::to_string(node) +
                        (app.variant.empty() ? "" : ":" + app.variant));
            insert(std::move(app.plan), std::move(t));
          }
        }
      }
    }
    frontier_begin = frontier_end;
    if (space.entries.size() >= budget.max_plans) break;
  }
  return space;
}

}  // namespace tra
