#include "physical.h"

#include <algorithm>
#include <map>

namespace tra {

std::string PartitionSpec::to_string() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::AllSites: return "all";
    case Kind::ByDims: {
      std::string s = "dims";
      IndexVector v(dims.begin(), dims.end());
      return s + index_vector_to_string(v);
    }
  }
  return "?";
}

int compare_phys(const PhysTuple& a, const PhysTuple& b) {
  if (a.site != b.site) return a.site < b.site ? -1 : 1;
  if (a.key != b.key) return a.key < b.key ? -1 : 1;
  if (a.array && b.array) return compare_arrays(*a.array, *b.array);
  return 0;
}

void PhysRelation::sort_canonical() {
  std::stable_sort(tuples.begin(), tuples.end(),
                   [](const PhysTuple& a, const PhysTuple& b) { return compare_phys(a, b) < 0; });
}

TensorRelation PhysRelation::project() const {
  TensorRelation out(key_arity, type);
  std::vector<const PhysTuple*> sorted;
  sorted.reserve(tuples.size());
  for (const auto& t : tuples) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](const PhysTuple* a, const PhysTuple* b) {
    if (a->key != b->key) return a->key < b->key;
    if (a->array && b->array) return compare_arrays(*a->array, *b->array) < 0;
    return false;
  });
  const PhysTuple* prev = nullptr;
  for (const PhysTuple* t : sorted) {
    if (prev && prev->key == t->key) {
      bool same = !t->array || !prev->array || prev->array->bit_equal(*t->array);
      if (same) continue;
    }
    if (!t->array) {
      // symbolic: distinct keys only
      if (prev && prev->key == t->key) continue;
      out.insert(t->key, DenseArray::zeros(type));
    } else {
      out.insert(t->key, *t->array);
    }
    prev = t;
  }
  return out;
}

IndexVector PhysRelation::frontier() const {
  IndexVector f(key_arity, 0);
  for (const auto& t : tuples)
    for (size_t d = 0; d < key_arity; ++d) f[d] = std::max(f[d], t.key[d] + 1);
  return f;
}

bool all_sites(const PhysRelation& rel) {
  // Every distinct (key, array) pair must appear at every site.
  std::map<IndexVector, std::vector<const PhysTuple*>> by_key;
  for (const auto& t : rel.tuples) by_key[t.key].push_back(&t);
  for (auto& [k, ts] : by_key) {
    // group distinct payloads
    std::vector<std::pair<const PhysTuple*, std::set<uint32_t>>> groups;
    for (const PhysTuple* t : ts) {
      bool found = false;
      for (auto& [rep, sites] : groups) {
        bool same = !t->array || !rep->array || rep->array->bit_equal(*t->array);
        if (same) {
          sites.insert(t->site);
          found = true;
          break;
        }
      }
      if (!found) groups.push_back({t, {t->site}});
    }
    for (auto& [rep, sites] : groups)
      if (sites.size() != rel.sites) return false;
  }
  return true;
}

bool partitioned_by(const PhysRelation& rel, const std::vector<size_t>& dims) {
  std::map<IndexVector, uint32_t> key_site;   // uniqueness per key
  std::map<IndexVector, uint32_t> proj_site;  // co-location on dims
  for (const auto& t : rel.tuples) {
    auto [it, fresh] = key_site.try_emplace(t.key, t.site);
    if (!fresh) return false;
    IndexVector p;
    p.reserve(dims.size());
    for (size_t d : dims) {
      if (d >= t.key.size()) throw ValidationError("partitionedBy dim out of range");
      p.push_back(t.key[d]);
    }
    auto [pit, pfresh] = proj_site.try_emplace(p, t.site);
    if (!pfresh && pit->second != t.site) return false;
  }
  return true;
}

PhysRelation bcast(const PhysRelation& rel, MoveStats* stats) {
  PhysRelation out;
  out.key_arity = rel.key_arity;
  out.type = rel.type;
  out.sites = rel.sites;
  out.replicated = true;
  // One logical copy: site 0's store when the input is replicated,
  // otherwise everything resident anywhere.
  std::vector<const PhysTuple*> copy;
  for (const auto& t : rel.tuples)
    if (!rel.replicated || t.site == 0) copy.push_back(&t);
  if (stats) stats->floats_sent += copy.size() * rel.type.float_count() * rel.sites;
  out.tuples.reserve(copy.size() * rel.sites);
  for (uint32_t s = 0; s < rel.sites; ++s)
    for (const PhysTuple* t : copy) out.tuples.push_back(PhysTuple{t->key, s, t->array});
  out.sort_canonical();
  return out;
}

PhysRelation shuf(const std::vector<size_t>& part_dims, const PhysRelation& rel,
                  MoveStats* stats) {
  for (size_t d : part_dims)
    if (d >= rel.key_arity) throw ValidationError("shuf dim out of range");
  std::vector<size_t> dims = part_dims;
  std::sort(dims.begin(), dims.end());
  if (stats) stats->floats_sent += rel.physical_floats();
  PhysRelation out;
  out.key_arity = rel.key_arity;
  out.type = rel.type;
  out.sites = rel.sites;
  out.replicated = false;
  out.tuples.reserve(rel.tuples.size());
  for (const auto& t : rel.tuples)
    out.tuples.push_back(PhysTuple{t.key, placement_site(t.key, dims, rel.sites), t.array});
  out.sort_canonical();
  // Collapse duplicate pairs; equal keys with different payloads are an
  // ambiguity error.
  std::vector<PhysTuple> dedup;
  for (auto& t : out.tuples) {
    if (!dedup.empty() && dedup.back().key == t.key) {
      bool same = !t.array || !dedup.back().array || dedup.back().array->bit_equal(*t.array);
      if (same) continue;
      throw ExecutionError("shuf: two tuples with key " + index_vector_to_string(t.key) +
                           " carry different arrays");
    }
    dedup.push_back(std::move(t));
  }
  out.tuples = std::move(dedup);
  return out;
}

std::string KernelChain::to_string() const {
  std::string s;
  for (size_t i = 0; i < kernels.size(); ++i) {
    if (i) s += "*";
    s += kernels[i].to_string();
  }
  return s;
}

size_t chain_multiplicity(const KernelRegistry& reg, const KernelChain& chain,
                          const ArrayType& in) {
  if (chain.empty()) return 1;
  size_t m = reg.resolve(chain.kernels[0])->multiplicity(in);
  ArrayType t = reg.resolve(chain.kernels[0])->unary_type(in);
  for (size_t i = 1; i < chain.kernels.size(); ++i) {
    auto k = reg.resolve(chain.kernels[i]);
    if (k->multiplicity(t) != 1)
      throw ValidationError("only the first kernel of a chain may be multi-output");
    t = k->unary_type(t);
  }
  return m;
}

ArrayType chain_type(const KernelRegistry& reg, const KernelChain& chain, const ArrayType& in) {
  ArrayType t = in;
  for (const auto& kr : chain.kernels) t = reg.resolve(kr)->unary_type(t);
  return t;
}

std::vector<DenseArray> chain_apply(const KernelRegistry& reg, const KernelChain& chain,
                                    const DenseArray& a) {
  std::vector<DenseArray> cur{a};
  bool first = true;
  for (const auto& kr : chain.kernels) {
    auto k = reg.resolve(kr);
    std::vector<DenseArray> next;
    for (const auto& x : cur) {
      auto out = k->apply_unary(x);
      if (!first && out.size() != 1)
        throw ValidationError("only the first kernel of a chain may be multi-output");
      for (auto& o : out) next.push_back(std::move(o));
    }
    cur = std::move(next);
    first = false;
  }
  return cur;
}

size_t join_output_arity(size_t kl, size_t kr, size_t g) { return kl + kr - g; }

std::vector<size_t> join_right_positions(size_t kl, size_t kr, const std::vector<size_t>& keys_r) {
  std::vector<size_t> pos(kr, SIZE_MAX);
  size_t next = kl;
  for (size_t j = 0; j < kr; ++j) {
    if (std::find(keys_r.begin(), keys_r.end(), j) != keys_r.end()) continue;
    pos[j] = next++;
  }
  return pos;
}

ArrayType join_output_type(const KernelRegistry& reg, const JoinSpec& spec, const ArrayType& l,
                           const ArrayType& r) {
  ArrayType lt = l, rt = r;
  if (!spec.pre.empty()) {
    if (chain_multiplicity(reg, spec.pre, l) != 1 || chain_multiplicity(reg, spec.pre, r) != 1)
      throw ValidationError("join pre-chain must have multiplicity one");
    lt = chain_type(reg, spec.pre, l);
    rt = chain_type(reg, spec.pre, r);
  }
  ArrayType t = reg.resolve(spec.proj)->binary_type(lt, rt);
  if (!spec.post.empty()) {
    if (chain_multiplicity(reg, spec.post, t) != 1)
      throw ValidationError("join post-chain must have multiplicity one");
    t = chain_type(reg, spec.post, t);
  }
  return t;
}

ArrayType agg_output_type(const KernelRegistry& reg, const AggSpec& spec, const ArrayType& in) {
  ArrayType t = in;
  if (!spec.pre.empty()) {
    if (chain_multiplicity(reg, spec.pre, in) != 1)
      throw ValidationError("aggregation pre-chain must have multiplicity one");
    t = chain_type(reg, spec.pre, in);
  }
  auto k = reg.resolve(spec.agg);
  if (k->kind() == KernelKind::Aggregator) {
    t = k->unary_type(t);
  } else if (k->kind() == KernelKind::Binary) {
    if (!k->associative())
      throw ValidationError("aggregation kernel " + spec.agg.name + " must be associative");
    t = k->binary_type(t, t);
  } else {
    throw ValidationError("aggregation kernel " + spec.agg.name + " must be binary");
  }
  if (!spec.post.empty()) {
    if (chain_multiplicity(reg, spec.post, t) != 1)
      throw ValidationError("aggregation post-chain must have multiplicity one");
    t = chain_type(reg, spec.post, t);
  }
  return t;
}

PhysRelation join_local(const KernelRegistry& reg, const JoinSpec& spec, const PhysRelation& l,
                        const PhysRelation& r) {
  if (spec.keys_l.size() != spec.keys_r.size())
    throw ValidationError("joinKeysL and joinKeysR must have equal length");
  for (size_t d : spec.keys_l)
    if (d >= l.key_arity) throw ValidationError("joinKeysL dim out of range");
  for (size_t d : spec.keys_r)
    if (d >= r.key_arity) throw ValidationError("joinKeysR dim out of range");
  if (l.sites != r.sites) throw ValidationError("join inputs live on different site counts");

  const bool symbolic = (!l.tuples.empty() && !l.tuples.front().array) ||
                        (!r.tuples.empty() && !r.tuples.front().array);
  KernelPtr proj = reg.resolve(spec.proj);
  auto rpos = join_right_positions(l.key_arity, r.key_arity, spec.keys_r);
  size_t out_arity = join_output_arity(l.key_arity, r.key_arity, spec.group_size());

  PhysRelation out;
  out.key_arity = spec.post_key ? spec.post_key->output_arity : out_arity;
  out.sites = l.sites;
  out.replicated = l.replicated && r.replicated;
  bool type_set = false;

  // per site: hash right tuples by projected key
  std::map<std::pair<uint32_t, IndexVector>, std::vector<const PhysTuple*>> right_index;
  for (const auto& t : r.tuples) {
    IndexVector p;
    p.reserve(spec.keys_r.size());
    for (size_t d : spec.keys_r) p.push_back(t.key[d]);
    right_index[{t.site, std::move(p)}].push_back(&t);
  }

  if (spec.post_key) {
    if (spec.post_key->input_arity != out_arity)
      throw ValidationError("join post key function arity mismatch");
    if (spec.post_key->multiplicity() != 1)
      throw ValidationError("join post key function must have multiplicity one");
  }

  for (const auto& lt : l.tuples) {
    IndexVector p;
    p.reserve(spec.keys_l.size());
    for (size_t d : spec.keys_l) p.push_back(lt.key[d]);
    auto it = right_index.find({lt.site, p});
    if (it == right_index.end()) continue;
    for (const PhysTuple* rt : it->second) {
      IndexVector key;
      key.reserve(out_arity);
      key.insert(key.end(), lt.key.begin(), lt.key.end());
      for (size_t j = 0; j < r.key_arity; ++j)
        if (rpos[j] != SIZE_MAX) key.push_back(rt->key[j]);
      if (spec.post_key) key = spec.post_key->apply(key)[0];

      std::shared_ptr<const DenseArray> payload;
      if (!symbolic) {
        DenseArray la = *lt.array, ra = *rt->array;
        if (!spec.pre.empty()) {
          la = chain_apply(reg, spec.pre, la)[0];
          ra = chain_apply(reg, spec.pre, ra)[0];
        }
        DenseArray v = proj->apply_binary(la, ra);
        if (!spec.post.empty()) v = chain_apply(reg, spec.post, v)[0];
        if (!type_set) {
          out.type = v.type;
          type_set = true;
        } else if (out.type != v.type) {
          throw KernelTypeError("join produced arrays of differing types");
        }
        payload = std::make_shared<const DenseArray>(std::move(v));
      }
      out.tuples.push_back(PhysTuple{std::move(key), lt.site, std::move(payload)});
    }
  }
  if (!type_set) out.type = join_output_type(reg, spec, l.type, r.type);
  out.sort_canonical();
  return out;
}

PhysRelation agg_local(const KernelRegistry& reg, const AggSpec& spec, const PhysRelation& rel) {
  for (size_t d : spec.group_by)
    if (d >= rel.key_arity) throw ValidationError("groupByKeys dim out of range");
  {
    std::set<size_t> uniq(spec.group_by.begin(), spec.group_by.end());
    if (uniq.size() != spec.group_by.size())
      throw ValidationError("groupByKeys must not repeat dimensions");
  }
  KernelPtr agg = reg.resolve(spec.agg);
  const bool min_idx = agg->kind() == KernelKind::Aggregator;
  if (!min_idx && !(agg->kind() == KernelKind::Binary && agg->associative()))
    throw ValidationError("aggregation kernel " + spec.agg.name +
                          " must be an associative binary kernel or a key-aware aggregator");

  std::vector<size_t> grouped_out;
  for (size_t d = 0; d < rel.key_arity; ++d)
    if (std::find(spec.group_by.begin(), spec.group_by.end(), d) == spec.group_by.end())
      grouped_out.push_back(d);
  if (min_idx && grouped_out.size() != 1)
    throw ValidationError("minIndex requires exactly one grouped-out key dimension");

  const bool symbolic = !rel.tuples.empty() && !rel.tuples.front().array;

  // groups keyed by (site, projected key); members reduced in store order,
  // which is canonical (site, key) order.
  std::map<std::pair<uint32_t, IndexVector>, std::vector<const PhysTuple*>> groups;
  for (const auto& t : rel.tuples) {
    IndexVector p;
    p.reserve(spec.group_by.size());
    for (size_t d : spec.group_by) p.push_back(t.key[d]);
    groups[{t.site, std::move(p)}].push_back(&t);
  }

  PhysRelation out;
  out.key_arity = spec.group_by.size();
  out.sites = rel.sites;
  out.replicated = rel.replicated;
  // The reduced type can depend on group size (arrayConcatOp grows its
  // concat dimension), so fold the type per group and require agreement.
  ArrayType elem = spec.pre.empty() ? rel.type : chain_type(reg, spec.pre, rel.type);
  auto fold_type = [&](size_t count) {
    ArrayType t = min_idx ? agg->unary_type(elem) : elem;
    if (!min_idx)
      for (size_t i = 1; i < count; ++i) t = agg->binary_type(t, elem);
    return spec.post.empty() ? t : chain_type(reg, spec.post, t);
  };
  bool type_set = false;
  for (auto& [sk, members] : groups) {
    ArrayType gt = fold_type(members.size());
    if (!type_set) {
      out.type = gt;
      type_set = true;
    } else if (out.type != gt) {
      throw KernelTypeError("aggregation groups reduce to differing array types");
    }
    std::shared_ptr<const DenseArray> payload;
    if (!symbolic) {
      std::optional<DenseArray> acc;
      for (const PhysTuple* m : members) {
        DenseArray v = *m->array;
        if (!spec.pre.empty()) v = chain_apply(reg, spec.pre, v)[0];
        if (min_idx) {
          IndexVector go;
          for (size_t d : grouped_out) go.push_back(m->key[d]);
          v = min_index_state(go, v);
        }
        if (!acc)
          acc = std::move(v);
        else
          acc = min_idx ? min_index_combine(*acc, v) : agg->apply_binary(*acc, v);
      }
      DenseArray v = std::move(*acc);
      if (!spec.post.empty()) v = chain_apply(reg, spec.post, v)[0];
      if (v.type != out.type) throw KernelTypeError("aggregation produced unexpected array type");
      payload = std::make_shared<const DenseArray>(std::move(v));
    }
    out.tuples.push_back(PhysTuple{sk.second, sk.first, std::move(payload)});
  }
  if (!type_set) out.type = agg_output_type(reg, spec, rel.type);
  out.sort_canonical();
  return out;
}

PhysRelation filter_local(const BoolFunc& pred, const PhysRelation& rel) {
  if (pred.input_arity != rel.key_arity)
    throw ValidationError("filter predicate arity mismatch");
  PhysRelation out;
  out.key_arity = rel.key_arity;
  out.type = rel.type;
  out.sites = rel.sites;
  out.replicated = rel.replicated;
  for (const auto& t : rel.tuples)
    if (pred.eval(t.key)) out.tuples.push_back(t);
  return out;
}

PhysRelation map_local(const KernelRegistry& reg, const KeyFunc& key_func,
                       const KernelChain& arr_func, const PhysRelation& rel) {
  if (key_func.input_arity != rel.key_arity)
    throw ValidationError("map key function arity mismatch");
  size_t m = key_func.multiplicity();
  size_t am = chain_multiplicity(reg, arr_func, rel.type);
  if (m != am)
    throw ValidationError("map key multiplicity " + std::to_string(m) +
                          " != array multiplicity " + std::to_string(am));
  const bool symbolic = !rel.tuples.empty() && !rel.tuples.front().array;
  PhysRelation out;
  out.key_arity = key_func.output_arity;
  out.type = chain_type(reg, arr_func, rel.type);
  out.sites = rel.sites;
  out.replicated = rel.replicated;
  for (const auto& t : rel.tuples) {
    auto keys = key_func.apply(t.key);
    if (symbolic) {
      for (auto& k : keys) out.tuples.push_back(PhysTuple{std::move(k), t.site, nullptr});
    } else {
      auto arrays = chain_apply(reg, arr_func, *t.array);
      if (arrays.size() != keys.size())
        throw ValidationError("map produced mismatched key/array multiplicities");
      for (size_t i = 0; i < keys.size(); ++i)
        out.tuples.push_back(PhysTuple{std::move(keys[i]), t.site,
                                       std::make_shared<const DenseArray>(std::move(arrays[i]))});
    }
  }
  out.sort_canonical();
  return out;
}

std::vector<IndexVector> keys_below(const IndexVector& front) {
  std::vector<IndexVector> out;
  uint64_t n = 1;
  for (uint64_t f : front) {
    n *= f;
    if (n == 0) return out;
  }
  IndexVector k(front.size(), 0);
  for (uint64_t i = 0; i < n; ++i) {
    out.push_back(k);
    size_t d = k.size();
    while (d > 0) {
      --d;
      if (++k[d] < front[d]) break;
      k[d] = 0;
    }
  }
  return out;
}

static uint32_t layout_site(const IndexVector& key, const PartitionSpec& layout, uint32_t sites) {
  if (layout.kind == PartitionSpec::Kind::ByDims)
    return placement_site(key, layout.dims, sites);
  return placement_site(key, {}, sites);  // single gather point for "none"
}

PhysRelation scatter(const TensorRelation& rel, uint32_t sites, const PartitionSpec& layout) {
  PhysRelation out;
  out.key_arity = rel.key_arity();
  out.type = rel.array_type();
  out.sites = sites;
  out.replicated = layout.kind == PartitionSpec::Kind::AllSites;
  for (const auto& t : rel.tuples()) {
    auto payload = std::make_shared<const DenseArray>(t.array);
    if (layout.kind == PartitionSpec::Kind::AllSites) {
      for (uint32_t s = 0; s < sites; ++s) out.tuples.push_back(PhysTuple{t.key, s, payload});
    } else {
      out.tuples.push_back(PhysTuple{t.key, layout_site(t.key, layout, sites), payload});
    }
  }
  out.sort_canonical();
  return out;
}

PhysRelation scatter_symbolic(size_t key_arity, const ArrayType& type, const IndexVector& front,
                              uint32_t sites, const PartitionSpec& layout) {
  PhysRelation out;
  out.key_arity = key_arity;
  out.type = type;
  out.sites = sites;
  out.replicated = layout.kind == PartitionSpec::Kind::AllSites;
  for (auto& k : keys_below(front)) {
    if (layout.kind == PartitionSpec::Kind::AllSites) {
      for (uint32_t s = 0; s < sites; ++s) out.tuples.push_back(PhysTuple{k, s, nullptr});
    } else {
      out.tuples.push_back(PhysTuple{k, layout_site(k, layout, sites), nullptr});
    }
  }
  out.sort_canonical();
  return out;
}

}  // namespace tra
