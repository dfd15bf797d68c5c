#include "relation_io.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tra {

void put_u64(std::string& buf, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  buf.append(b, 8);
}

void put_f64(std::string& buf, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(buf, u);
}

uint64_t get_u64(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

double get_f64(const char* p) {
  uint64_t u = get_u64(p);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

static void write_header(std::ostream& os, const char* format, size_t key_arity,
                         const ArrayType& type, size_t count, uint32_t sites) {
  os << "format " << format << "\n";
  os << "key_arity " << key_arity << "\n";
  os << "rank " << type.rank() << "\n";
  os << "bound";
  for (uint64_t b : type.bound) os << " " << b;
  os << "\n";
  os << "tuples " << count << "\n";
  if (sites) os << "sites " << sites << "\n";
  os << "end\n";
}

struct Header {
  std::string format;
  size_t key_arity = 0;
  size_t rank = 0;
  IndexVector bound;
  size_t tuples = 0;
  uint32_t sites = 0;
};

static Header read_header(std::istream& is) {
  Header h;
  std::string line;
  while (std::getline(is, line)) {
    if (line == "end") return h;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") ls >> h.format;
    else if (key == "key_arity") ls >> h.key_arity;
    else if (key == "rank") ls >> h.rank;
    else if (key == "bound") {
      uint64_t b;
      while (ls >> b) h.bound.push_back(b);
    } else if (key == "tuples") ls >> h.tuples;
    else if (key == "sites") ls >> h.sites;
    else throw IoError("unknown relation header field: " + key);
  }
  throw IoError("relation header not terminated");
}

void write_relation(std::ostream& os, const TensorRelation& rel) {
  write_header(os, "tensor-relation", rel.key_arity(), rel.array_type(), rel.size(), 0);
  std::string buf;
  for (const auto& t : rel.tuples()) {
    buf.clear();
    for (uint64_t k : t.key) put_u64(buf, k);
    for (double v : t.array.values) put_f64(buf, v);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

TensorRelation read_relation(std::istream& is) {
  Header h = read_header(is);
  if (h.format != "tensor-relation") throw IoError("not a tensor relation file");
  if (h.bound.size() != h.rank) throw IoError("relation header rank/bound mismatch");
  ArrayType type{h.bound};
  TensorRelation rel(h.key_arity, type);
  size_t rec = 8 * (h.key_arity + type.float_count());
  std::string buf(rec, '\0');
  for (size_t i = 0; i < h.tuples; ++i) {
    if (!is.read(buf.data(), static_cast<std::streamsize>(rec)))
      throw IoError("relation file truncated");
    IndexVector key(h.key_arity);
    for (size_t k = 0; k < h.key_arity; ++k) key[k] = get_u64(buf.data() + 8 * k);
    DenseArray arr = DenseArray::zeros(type);
    for (size_t v = 0; v < arr.values.size(); ++v)
      arr.values[v] = get_f64(buf.data() + 8 * (h.key_arity + v));
    rel.insert(std::move(key), std::move(arr));
  }
  return rel;
}

void save_relation(const std::string& path, const TensorRelation& rel) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_relation(os, rel);
}

TensorRelation load_relation(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_relation(is);
}

void write_physical(std::ostream& os, const PhysRelation& rel) {
  write_header(os, "physical-tensor-relation", rel.key_arity, rel.type, rel.tuples.size(),
               rel.sites);
  std::string buf;
  for (const auto& t : rel.tuples) {
    buf.clear();
    put_u64(buf, t.site);
    for (uint64_t k : t.key) put_u64(buf, k);
    if (!t.array) throw IoError("cannot serialize a symbolic relation");
    for (double v : t.array->values) put_f64(buf, v);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

PhysRelation read_physical(std::istream& is) {
  Header h = read_header(is);
  if (h.format != "physical-tensor-relation") throw IoError("not a physical relation file");
  ArrayType type{h.bound};
  PhysRelation rel;
  rel.key_arity = h.key_arity;
  rel.type = type;
  rel.sites = h.sites;
  size_t rec = 8 * (1 + h.key_arity + type.float_count());
  std::string buf(rec, '\0');
  for (size_t i = 0; i < h.tuples; ++i) {
    if (!is.read(buf.data(), static_cast<std::streamsize>(rec)))
      throw IoError("relation file truncated");
    PhysTuple t;
    t.site = static_cast<uint32_t>(get_u64(buf.data()));
    t.key.resize(h.key_arity);
    for (size_t k = 0; k < h.key_arity; ++k) t.key[k] = get_u64(buf.data() + 8 * (1 + k));
    DenseArray arr = DenseArray::zeros(type);
    for (size_t v = 0; v < arr.values.size(); ++v)
      arr.values[v] = get_f64(buf.data() + 8 * (1 + h.key_arity + v));
    t.array = std::make_shared<const DenseArray>(std::move(arr));
    rel.tuples.push_back(std::move(t));
  }
  rel.sort_canonical();
  return rel;
}

void save_physical(const std::string& path, const PhysRelation& rel) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_physical(os, rel);
}

PartitionSpec layout_from_string(const std::string& s) {
  if (s == "all") return PartitionSpec::all();
  if (s == "none" || s.empty()) return PartitionSpec::none();
  if (s.rfind("dims:", 0) == 0) {
    std::vector<size_t> dims;
    std::istringstream ls(s.substr(5));
    std::string part;
    while (std::getline(ls, part, ','))
      if (!part.empty()) dims.push_back(static_cast<size_t>(std::stoull(part)));
    return PartitionSpec::by_dims(std::move(dims));
  }
  throw IoError("bad layout: " + s + " (expected all | none | dims:0,1,...)");
}

std::string layout_to_string(const PartitionSpec& p) {
  switch (p.kind) {
    case PartitionSpec::Kind::AllSites: return "all";
    case PartitionSpec::Kind::None: return "none";
    case PartitionSpec::Kind::ByDims: {
      std::string s = "dims:";
      for (size_t i = 0; i < p.dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(p.dims[i]);
      }
      return s;
    }
  }
  return "none";
}

Catalog load_catalog(const std::string& path, const KernelRegistry&) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  nlohmann::json j;
  is >> j;
  Catalog cat;
  std::string dir;
  auto slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash + 1);
  for (auto& [name, spec] : j.at("sources").items()) {
    PartitionSpec layout = layout_from_string(spec.value("layout", "none"));
    if (spec.contains("file")) {
      std::string rel_path = spec.at("file").get<std::string>();
      if (!rel_path.empty() && rel_path[0] != '/') rel_path = dir + rel_path;
      cat.add(name, load_relation(rel_path), layout);
    } else if (spec.contains("random")) {
      const auto& r = spec.at("random");
      uint64_t rows = r.at("rows").get<uint64_t>(), cols = r.at("cols").get<uint64_t>();
      uint64_t br = r.at("block_rows").get<uint64_t>(), bc = r.at("block_cols").get<uint64_t>();
      uint64_t seed = r.value("seed", 1u);
      bool integers = r.value("integers", false);
      DenseArray m = DenseArray::zeros(ArrayType{IndexVector{rows, cols}});
      for (size_t i = 0; i < m.values.size(); ++i)
        m.values[i] = integers ? seeded_small_int(seed, i, -4, 4) : seeded_uniform(seed, i);
      cat.add(name, blockify(m, br, bc), layout);
    } else if (spec.contains("shape")) {
      const auto& s = spec.at("shape");
      IndexVector front = s.at("frontier").get<IndexVector>();
      IndexVector bound = s.at("bound").get<IndexVector>();
      cat.add_symbolic(name, front.size(), ArrayType{bound}, front, layout);
    } else {
      throw IoError("catalog source " + name + " needs file, random, or shape");
    }
  }
  return cat;
}

}  // namespace tra
