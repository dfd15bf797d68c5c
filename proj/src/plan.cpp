#include "plan.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace tra {

KeyFunc KeySpec::resolve(size_t child_arity, const ArrayType& child_type) const {
  switch (kind) {
    case Kind::Identity:
      return KeyFunc::identity(child_arity);
    case Kind::Ast:
      if (func.input_arity != child_arity)
        throw ValidationError("map key function arity " + std::to_string(func.input_arity) +
                              " does not match child arity " + std::to_string(child_arity));
      return func;
    case Kind::Tile: {
      // appends the tile counter as a trailing key dimension
      if (dim >= child_type.rank()) throw ValidationError("keyTileOp dim out of range");
      if (size_or_count == 0 || child_type.bound[dim] % size_or_count)
        throw ShapeError("keyTileOp size does not divide the array bound");
      size_t m = child_type.bound[dim] / size_or_count;
      return KeyFunc::insert_dim(child_arity, child_arity, m);
    }
    case Kind::InsertDim:
      return KeyFunc::insert_dim(child_arity, dim, size_or_count);
  }
  throw ValidationError("bad key spec");
}

std::string KeySpec::to_string() const {
  switch (kind) {
    case Kind::Identity: return "idOp";
    case Kind::Ast: return key_func_to_string(func);
    case Kind::Tile:
      return "keyTileOp(" + std::to_string(dim) + "," + std::to_string(size_or_count) + ")";
    case Kind::InsertDim:
      return "insertDim(" + std::to_string(dim) + "," + std::to_string(size_or_count) + ")";
  }
  return "?";
}

bool KeySpec::operator==(const KeySpec& o) const {
  if (kind != o.kind || dim != o.dim || size_or_count != o.size_or_count) return false;
  if (kind != Kind::Ast) return true;
  return key_func_to_json(func) == key_func_to_json(o.func);
}

KernelChain ArrSpec::resolve() const {
  switch (kind) {
    case Kind::Chain:
      return chain;
    case Kind::Tile:
      return KernelChain{{KernelRef{
          "arrayTileOp", {static_cast<double>(dim), static_cast<double>(size)}}}};
  }
  throw ValidationError("bad array spec");
}

std::string ArrSpec::to_string() const {
  if (kind == Kind::Tile)
    return "arrayTileOp(" + std::to_string(dim) + "," + std::to_string(size) + ")";
  return chain.empty() ? "idOp" : chain.to_string();
}

bool ArrSpec::operator==(const ArrSpec& o) const {
  return kind == o.kind && chain == o.chain && dim == o.dim && size == o.size;
}

static std::string dims_str(const std::vector<size_t>& dims) {
  IndexVector v(dims.begin(), dims.end());
  return index_vector_to_string(v);
}

std::string IaNode::label() const {
  switch (kind) {
    case Kind::Source:
      return "source[" + source + "]";
    case Kind::Bcast:
      return "bcast";
    case Kind::Shuf:
      return "shuf" + dims_str(dims);
    case Kind::Join: {
      std::string s = "join[" + dims_str(join.keys_l) + ";" + dims_str(join.keys_r) + ", ";
      if (!join.pre.empty()) s += join.pre.to_string() + ">";
      s += join.proj.to_string();
      if (!join.post.empty()) s += ">" + join.post.to_string();
      if (join.post_key) s += ", key>" + key_func_to_string(*join.post_key);
      return s + "]";
    }
    case Kind::Agg: {
      std::string s = "agg[" + dims_str(agg.group_by) + ", ";
      if (!agg.pre.empty()) s += agg.pre.to_string() + ">";
      s += agg.agg.to_string();
      if (!agg.post.empty()) s += ">" + agg.post.to_string();
      return s + "]";
    }
    case Kind::Filter:
      return "filter[" + bool_func_to_string(pred) + "]";
    case Kind::Map:
      return "map[" + map_key.to_string() + ", " + map_arr.to_string() + "]";
  }
  return "?";
}

size_t IaPlan::add(IaNode n) {
  for (size_t c : n.children)
    if (c >= nodes.size()) throw ValidationError("plan child id out of range");
  nodes.push_back(std::move(n));
  return nodes.size() - 1;
}

void IaPlan::check_structure() const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    const IaNode& n = nodes[i];
    size_t want = n.kind == IaNode::Kind::Source ? 0 : n.kind == IaNode::Kind::Join ? 2 : 1;
    if (n.children.size() != want)
      throw ValidationError("node " + std::to_string(i) + " has wrong arity");
    for (size_t c : n.children)
      if (c >= i) throw ValidationError("plan is not topologically ordered");
  }
  if (roots.empty()) throw ValidationError("plan has no roots");
  for (const auto& r : roots)
    if (r.id >= nodes.size()) throw ValidationError("root id out of range");
}

static nlohmann::json node_to_json(const IaNode& n) {
  using nlohmann::json;
  json j;
  switch (n.kind) {
    case IaNode::Kind::Source:
      j = json{{"op", "source"}, {"name", n.source}};
      break;
    case IaNode::Kind::Bcast:
      j = json{{"op", "bcast"}};
      break;
    case IaNode::Kind::Shuf:
      j = json{{"op", "shuf"}, {"dims", n.dims}};
      break;
    case IaNode::Kind::Join: {
      j = json{{"op", "join"},
               {"keys_l", n.join.keys_l},
               {"keys_r", n.join.keys_r},
               {"proj", kernel_ref_to_json(n.join.proj)}};
      if (!n.join.pre.empty()) {
        json a = json::array();
        for (const auto& k : n.join.pre.kernels) a.push_back(kernel_ref_to_json(k));
        j["pre"] = a;
      }
      if (!n.join.post.empty()) {
        json a = json::array();
        for (const auto& k : n.join.post.kernels) a.push_back(kernel_ref_to_json(k));
        j["post"] = a;
      }
      if (n.join.post_key) j["post_key"] = key_func_to_json(*n.join.post_key);
      break;
    }
    case IaNode::Kind::Agg: {
      j = json{{"op", "agg"}, {"group_by", n.agg.group_by}, {"agg", kernel_ref_to_json(n.agg.agg)}};
      if (!n.agg.pre.empty()) {
        json a = json::array();
        for (const auto& k : n.agg.pre.kernels) a.push_back(kernel_ref_to_json(k));
        j["pre"] = a;
      }
      if (!n.agg.post.empty()) {
        json a = json::array();
        for (const auto& k : n.agg.post.kernels) a.push_back(kernel_ref_to_json(k));
        j["post"] = a;
      }
      break;
    }
    case IaNode::Kind::Filter:
      j = json{{"op", "filter"}, {"pred", bool_func_to_json(n.pred)}};
      break;
    case IaNode::Kind::Map: {
      j = json{{"op", "map"}};
      switch (n.map_key.kind) {
        case KeySpec::Kind::Identity:
          j["key"] = json{{"kind", "identity"}};
          break;
        case KeySpec::Kind::Ast:
          j["key"] = json{{"kind", "ast"}, {"func", key_func_to_json(n.map_key.func)}};
          break;
        case KeySpec::Kind::Tile:
          j["key"] = json{{"kind", "tile"}, {"dim", n.map_key.dim}, {"size", n.map_key.size_or_count}};
          break;
        case KeySpec::Kind::InsertDim:
          j["key"] =
              json{{"kind", "insert_dim"}, {"dim", n.map_key.dim}, {"count", n.map_key.size_or_count}};
          break;
      }
      if (n.map_arr.kind == ArrSpec::Kind::Tile) {
        j["arr"] = json{{"kind", "tile"}, {"dim", n.map_arr.dim}, {"size", n.map_arr.size}};
      } else {
        json a = json::array();
        for (const auto& k : n.map_arr.chain.kernels) a.push_back(kernel_ref_to_json(k));
        j["arr"] = json{{"kind", "chain"}, {"kernels", a}};
      }
      break;
    }
  }
  if (!n.children.empty()) j["children"] = n.children;
  return j;
}

static KernelChain chain_from_json(const nlohmann::json& a) {
  KernelChain c;
  for (const auto& k : a) c.kernels.push_back(kernel_ref_from_json(k));
  return c;
}

static IaNode node_from_json(const nlohmann::json& j) {
  IaNode n;
  std::string op = j.at("op").get<std::string>();
  if (j.contains("children")) n.children = j.at("children").get<std::vector<size_t>>();
  if (op == "source") {
    n.kind = IaNode::Kind::Source;
    n.source = j.at("name").get<std::string>();
  } else if (op == "bcast") {
    n.kind = IaNode::Kind::Bcast;
  } else if (op == "shuf") {
    n.kind = IaNode::Kind::Shuf;
    n.dims = j.at("dims").get<std::vector<size_t>>();
  } else if (op == "join") {
    n.kind = IaNode::Kind::Join;
    n.join.keys_l = j.at("keys_l").get<std::vector<size_t>>();
    n.join.keys_r = j.at("keys_r").get<std::vector<size_t>>();
    n.join.proj = kernel_ref_from_json(j.at("proj"));
    if (j.contains("pre")) n.join.pre = chain_from_json(j.at("pre"));
    if (j.contains("post")) n.join.post = chain_from_json(j.at("post"));
    if (j.contains("post_key")) n.join.post_key = key_func_from_json(j.at("post_key"));
  } else if (op == "agg") {
    n.kind = IaNode::Kind::Agg;
    n.agg.group_by = j.at("group_by").get<std::vector<size_t>>();
    n.agg.agg = kernel_ref_from_json(j.at("agg"));
    if (j.contains("pre")) n.agg.pre = chain_from_json(j.at("pre"));
    if (j.contains("post")) n.agg.post = chain_from_json(j.at("post"));
  } else if (op == "filter") {
    n.kind = IaNode::Kind::Filter;
    n.pred = bool_func_from_json(j.at("pred"));
  } else if (op == "map") {
    n.kind = IaNode::Kind::Map;
    const auto& k = j.at("key");
    std::string kk = k.at("kind").get<std::string>();
    if (kk == "identity") n.map_key = KeySpec::identity();
    else if (kk == "ast") n.map_key = KeySpec::ast(key_func_from_json(k.at("func")));
    else if (kk == "tile")
      n.map_key = KeySpec::tile(k.at("dim").get<size_t>(), k.at("size").get<uint64_t>());
    else if (kk == "insert_dim")
      n.map_key = KeySpec::insert_dim(k.at("dim").get<size_t>(), k.at("count").get<uint64_t>());
    else throw IoError("unknown key spec kind: " + kk);
    const auto& a = j.at("arr");
    std::string ak = a.at("kind").get<std::string>();
    if (ak == "chain") n.map_arr = ArrSpec::of_chain(chain_from_json(a.at("kernels")));
    else if (ak == "tile")
      n.map_arr = ArrSpec::tile(a.at("dim").get<size_t>(), a.at("size").get<uint64_t>());
    else throw IoError("unknown array spec kind: " + ak);
  } else {
    throw IoError("unknown plan op: " + op);
  }
  return n;
}

nlohmann::json plan_to_json(const IaPlan& plan) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : plan.nodes) nodes.push_back(node_to_json(n));
  nlohmann::json roots = nlohmann::json::array();
  for (const auto& r : plan.roots) roots.push_back({{"id", r.id}, {"name", r.name}});
  return nlohmann::json{{"format", "tra-ia-plan"}, {"nodes", nodes}, {"roots", roots}};
}

IaPlan plan_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tra-ia-plan") throw IoError("not an IA plan file");
  IaPlan plan;
  for (const auto& n : j.at("nodes")) plan.nodes.push_back(node_from_json(n));
  for (const auto& r : j.at("roots"))
    plan.roots.push_back({r.at("id").get<size_t>(), r.at("name").get<std::string>()});
  plan.check_structure();
  return plan;
}

std::string IaPlan::canonical_string() const {
  std::vector<std::string> memo(nodes.size());
  std::function<const std::string&(size_t)> canon = [&](size_t id) -> const std::string& {
    if (!memo[id].empty()) return memo[id];
    const IaNode& n = nodes[id];
    nlohmann::json j = node_to_json(n);
    j.erase("children");
    std::string s = "(" + j.dump();
    for (size_t c : n.children) s += " " + canon(c);
    s += ")";
    memo[id] = std::move(s);
    return memo[id];
  };
  std::string out;
  for (const auto& r : roots) out += r.name + "=" + canon(r.id) + ";";
  return out;
}

IaPlan IaPlan::pruned() const {
  // Post-order DFS renumbering: drops unreachable nodes and restores the
  // children-before-parents ordering rewrites may have disturbed.
  std::vector<size_t> remap(nodes.size(), SIZE_MAX);
  IaPlan out;
  std::function<size_t(size_t)> visit = [&](size_t id) -> size_t {
    if (remap[id] != SIZE_MAX) return remap[id];
    remap[id] = SIZE_MAX - 1;  // in progress
    IaNode n = nodes[id];
    for (size_t& c : n.children) {
      if (remap[c] == SIZE_MAX - 1) throw ValidationError("plan contains a cycle");
      c = visit(c);
    }
    remap[id] = out.nodes.size();
    out.nodes.push_back(std::move(n));
    return remap[id];
  };
  for (const auto& r : roots) out.roots.push_back({visit(r.id), r.name});
  return out;
}

bool PlacementFact::colocates(const std::vector<size_t>& on) const {
  if (kind != Kind::Fnv) return false;
  // Fnv(D) co-locates on any superset of D.
  return std::includes(on.begin(), on.end(), dims.begin(), dims.end());
}

std::string PlacementFact::to_string() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::All: return "all";
    case Kind::Fnv: return "fnv" + dims_str(dims);
  }
  return "?";
}

namespace {

// Map a placement fact through a key function: the output is Fnv(D') when
// the claimed output dims are refs onto D preserving ascending order, so
// the projected component vectors coincide.
PlacementFact map_fact_through_keyfunc(const PlacementFact& in, const KeySpec& spec,
                                       size_t child_arity) {
  if (in.kind == PlacementFact::Kind::All) return PlacementFact::all();
  if (in.kind != PlacementFact::Kind::Fnv) return PlacementFact::none();
  if (spec.kind == KeySpec::Kind::Identity) return in;
  if (spec.kind == KeySpec::Kind::Tile) return in;  // appends a trailing dim, refs preserved
  if (spec.kind == KeySpec::Kind::InsertDim) {
    std::vector<size_t> d;
    for (size_t x : in.dims) d.push_back(x < spec.dim ? x : x + 1);
    return PlacementFact::fnv(std::move(d));
  }
  // AST: every row must expose refs to exactly in.dims, in ascending order,
  // at a common set of output positions.
  const KeyFunc& f = spec.func;
  (void)child_arity;
  std::vector<size_t> out_positions;
  for (size_t row = 0; row < f.rows.size(); ++row) {
    std::vector<std::pair<size_t, size_t>> pairs;  // (out pos, referenced dim)
    for (size_t o = 0; o < f.rows[row].size(); ++o) {
      const KeyExpr& e = f.rows[row][o];
      if (e.op == KeyExpr::Op::Ref &&
          std::find(in.dims.begin(), in.dims.end(), static_cast<size_t>(e.value)) != in.dims.end())
        pairs.push_back({o, static_cast<size_t>(e.value)});
    }
    // keep the first occurrence of each referenced dim
    std::vector<size_t> pos;
    std::set<size_t> seen;
    for (auto& [o, dref] : pairs)
      if (seen.insert(dref).second) pos.push_back(o);
    if (seen.size() != in.dims.size()) return PlacementFact::none();
    // ascending-order compatibility: out positions sorted must visit dims ascending
    std::vector<std::pair<size_t, size_t>> chosen;
    seen.clear();
    for (auto& [o, dref] : pairs)
      if (seen.insert(dref).second) chosen.push_back({o, dref});
    std::sort(chosen.begin(), chosen.end());
    for (size_t i = 1; i < chosen.size(); ++i)
      if (chosen[i].second < chosen[i - 1].second) return PlacementFact::none();
    std::vector<size_t> this_pos;
    for (auto& [o, dref] : chosen) this_pos.push_back(o);
    if (row == 0)
      out_positions = this_pos;
    else if (out_positions != this_pos)
      return PlacementFact::none();
  }
  return PlacementFact::fnv(out_positions);
}

}  // namespace

std::vector<StaticInfo> annotate_static(const IaPlan& plan, const Catalog& catalog) {
  // DFS so rewriter intermediates (not yet renumbered) work too.
  std::vector<StaticInfo> info(plan.nodes.size());
  std::vector<char> color(plan.nodes.size(), 0);  // 0 white, 1 in progress, 2 done
  std::function<void(size_t)> visit = [&](size_t i) {
    if (color[i] == 2) return;
    if (color[i] == 1) throw ValidationError("plan contains a cycle");
    color[i] = 1;
    for (size_t c : plan.nodes[i].children) {
      if (c >= plan.nodes.size()) throw ValidationError("plan child id out of range");
      visit(c);
    }
    info[i] = annotate_one(plan, info, i, catalog);
    color[i] = 2;
  };
  for (const auto& r : plan.roots) {
    if (r.id >= plan.nodes.size()) throw ValidationError("root id out of range");
    visit(r.id);
  }
  for (size_t i = 0; i < plan.nodes.size(); ++i)
    if (color[i] != 2) visit(i);
  return info;
}

StaticInfo annotate_one(const IaPlan& plan, const std::vector<StaticInfo>& info, size_t i,
                        const Catalog& catalog) {
  {
    const IaNode& n = plan.nodes[i];
    StaticInfo out;
    switch (n.kind) {
      case IaNode::Kind::Source: {
        const CatalogEntry& e = catalog.at(n.source);
        out.key_arity = e.key_arity;
        switch (e.layout.kind) {
          case PartitionSpec::Kind::AllSites:
            out.placement = PlacementFact::all();
            out.replicated = true;
            break;
          case PartitionSpec::Kind::ByDims:
            out.placement = PlacementFact::fnv(e.layout.dims);
            break;
          case PartitionSpec::Kind::None:
            out.placement = PlacementFact::fnv({});  // single site 0
            break;
        }
        break;
      }
      case IaNode::Kind::Bcast: {
        out.key_arity = info[n.children[0]].key_arity;
        out.placement = PlacementFact::all();
        out.replicated = true;
        break;
      }
      case IaNode::Kind::Shuf: {
        out.key_arity = info[n.children[0]].key_arity;
        out.placement = PlacementFact::fnv(n.dims);
        out.replicated = false;
        break;
      }
      case IaNode::Kind::Filter: {
        out = info[n.children[0]];
        break;
      }
      case IaNode::Kind::Map: {
        const StaticInfo& c = info[n.children[0]];
        size_t out_arity;
        switch (n.map_key.kind) {
          case KeySpec::Kind::Identity: out_arity = c.key_arity; break;
          case KeySpec::Kind::Ast: out_arity = n.map_key.func.output_arity; break;
          case KeySpec::Kind::Tile:
          case KeySpec::Kind::InsertDim: out_arity = c.key_arity + 1; break;
        }
        out.key_arity = out_arity;
        out.replicated = c.replicated;
        out.placement = map_fact_through_keyfunc(c.placement, n.map_key, c.key_arity);
        break;
      }
      case IaNode::Kind::Agg: {
        const StaticInfo& c = info[n.children[0]];
        out.key_arity = n.agg.group_by.size();
        out.replicated = c.replicated;
        if (c.placement.kind == PlacementFact::Kind::All) {
          out.placement = PlacementFact::all();
        } else if (c.placement.kind == PlacementFact::Kind::Fnv) {
          // output carries component gb[p]; claim Fnv over the positions of
          // the placement dims when they all survive, ascending-compatible
          std::vector<std::pair<size_t, size_t>> chosen;  // (out pos, dim)
          for (size_t d : c.placement.dims) {
            auto it = std::find(n.agg.group_by.begin(), n.agg.group_by.end(), d);
            if (it == n.agg.group_by.end()) {
              chosen.clear();
              break;
            }
            chosen.push_back({static_cast<size_t>(it - n.agg.group_by.begin()), d});
          }
          if (chosen.empty() && !c.placement.dims.empty()) {
            out.placement = PlacementFact::none();
          } else {
            std::sort(chosen.begin(), chosen.end());
            bool asc = true;
            for (size_t k = 1; k < chosen.size(); ++k)
              if (chosen[k].second < chosen[k - 1].second) asc = false;
            if (!asc) {
              out.placement = PlacementFact::none();
            } else {
              std::vector<size_t> pos;
              for (auto& [p, d] : chosen) pos.push_back(p);
              out.placement = PlacementFact::fnv(pos);
            }
          }
        } else {
          out.placement = PlacementFact::none();
        }
        break;
      }
      case IaNode::Kind::Join: {
        const StaticInfo& l = info[n.children[0]];
        const StaticInfo& r = info[n.children[1]];
        size_t out_arity = join_output_arity(l.key_arity, r.key_arity, n.join.keys_l.size());
        out.key_arity = n.join.post_key ? n.join.post_key->output_arity : out_arity;
        out.replicated = l.replicated && r.replicated;
        // The pair site: at the left's placement when the right is ALL, and
        // vice versa; co-shuffled joins land on the shared projection.
        PlacementFact structural = PlacementFact::none();
        auto left_fact_to_out = [&](const PlacementFact& f) { return f; };
        auto right_fact_to_out = [&](const PlacementFact& f) -> PlacementFact {
          if (f.kind != PlacementFact::Kind::Fnv) return f;
          auto rpos = join_right_positions(l.key_arity, r.key_arity, n.join.keys_r);
          std::vector<std::pair<size_t, size_t>> mapped;
          for (size_t d : f.dims) {
            size_t p;
            if (rpos[d] != SIZE_MAX) {
              p = rpos[d];
            } else {
              auto it = std::find(n.join.keys_r.begin(), n.join.keys_r.end(), d);
              p = n.join.keys_l[it - n.join.keys_r.begin()];
            }
            mapped.push_back({p, d});
          }
          std::sort(mapped.begin(), mapped.end());
          for (size_t k = 1; k < mapped.size(); ++k)
            if (mapped[k].second < mapped[k - 1].second) return PlacementFact::none();
          std::vector<size_t> pos;
          for (auto& [p, d] : mapped) pos.push_back(p);
          return PlacementFact::fnv(pos);
        };
        if (l.placement.kind == PlacementFact::Kind::All &&
            r.placement.kind == PlacementFact::Kind::All) {
          structural = PlacementFact::all();
        } else if (l.placement.kind == PlacementFact::Kind::All) {
          structural = right_fact_to_out(r.placement);
        } else if (r.placement.kind == PlacementFact::Kind::All) {
          structural = left_fact_to_out(l.placement);
        } else if (l.placement.kind == PlacementFact::Kind::Fnv) {
          structural = left_fact_to_out(l.placement);
        }
        if (n.join.post_key && structural.kind == PlacementFact::Kind::Fnv) {
          KeySpec spec = KeySpec::ast(*n.join.post_key);
          structural = map_fact_through_keyfunc(structural, spec, out_arity);
        }
        out.placement = structural;
        break;
      }
    }
    return out;
  }
}

std::string explain(const IaPlan& plan, const std::vector<StaticInfo>* info) {
  std::ostringstream os;
  std::set<size_t> printed;
  std::function<void(size_t, int)> walk = [&](size_t id, int depth) {
    for (int i = 0; i < depth; ++i) os << "  ";
    os << "#" << id << " " << plan.nodes[id].label();
    if (info) {
      const StaticInfo& in = (*info)[id];
      os << "  {arity=" << in.key_arity << ", place=" << in.placement.to_string()
         << (in.replicated ? ", replicated" : "") << "}";
    }
    if (printed.count(id)) {
      os << "  (shared, shown above)\n";
      return;
    }
    printed.insert(id);
    os << "\n";
    for (size_t c : plan.nodes[id].children) walk(c, depth + 1);
  };
  for (const auto& r : plan.roots) {
    os << r.name << ":\n";
    walk(r.id, 1);
  }
  return os.str();
}

}  // namespace tra
