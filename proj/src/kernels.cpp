#include "kernels.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tra {

std::string KernelRef::to_string() const {
  if (params.empty()) return name;
  std::ostringstream os;
  os << name << "(";
  for (size_t i = 0; i < params.size(); ++i) {
    if (i) os << ",";
    double p = params[i];
    if (p == static_cast<double>(static_cast<int64_t>(p)))
      os << static_cast<int64_t>(p);
    else
      os << p;
  }
  os << ")";
  return os.str();
}

nlohmann::json kernel_ref_to_json(const KernelRef& r) {
  if (r.params.empty()) return nlohmann::json{{"name", r.name}};
  return nlohmann::json{{"name", r.name}, {"params", r.params}};
}

KernelRef kernel_ref_from_json(const nlohmann::json& j) {
  KernelRef r;
  r.name = j.at("name").get<std::string>();
  if (j.contains("params")) r.params = j.at("params").get<std::vector<double>>();
  return r;
}

ArrayType Kernel::unary_type(const ArrayType&) const {
  throw KernelTypeError(name_ + " is not a unary kernel");
}
ArrayType Kernel::binary_type(const ArrayType&, const ArrayType&) const {
  throw KernelTypeError(name_ + " is not a binary kernel");
}
std::vector<DenseArray> Kernel::apply_unary(const DenseArray&) const {
  throw KernelTypeError(name_ + " is not a unary kernel");
}
DenseArray Kernel::apply_binary(const DenseArray&, const DenseArray&) const {
  throw KernelTypeError(name_ + " is not a binary kernel");
}

namespace {

// ---- elementwise binary kernels over equal types ----

class ElementwiseBinary : public Kernel {
 public:
  ElementwiseBinary(std::string name, double (*fn)(double, double), bool assoc, bool comm)
      : fn_(fn) {
    name_ = std::move(name);
    kind_ = KernelKind::Binary;
    associative_ = assoc;
    commutative_ = comm;
  }
  ArrayType binary_type(const ArrayType& l, const ArrayType& r) const override {
    if (l != r)
      throw KernelTypeError(name_ + " requires equal array types, got " + l.to_string() + " and " +
                            r.to_string());
    return l;
  }
  DenseArray apply_binary(const DenseArray& l, const DenseArray& r) const override {
    binary_type(l.type, r.type);
    DenseArray out = l;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = fn_(l.values[i], r.values[i]);
    return out;
  }

 private:
  double (*fn_)(double, double);
};

class MatMulKernel : public Kernel {
 public:
  MatMulKernel() {
    name_ = "matMul";
    kind_ = KernelKind::Binary;
    bilinear_over_ = {"matAdd"};
  }
  ArrayType binary_type(const ArrayType& l, const ArrayType& r) const override {
    if (l.rank() != 2 || r.rank() != 2 || l.bound[1] != r.bound[0])
      throw KernelTypeError("matMul shape mismatch: " + l.to_string() + " x " + r.to_string());
    return ArrayType{IndexVector{l.bound[0], r.bound[1]}};
  }
  DenseArray apply_binary(const DenseArray& l, const DenseArray& r) const override {
    ArrayType ot = binary_type(l.type, r.type);
    uint64_t m = l.type.bound[0], k = l.type.bound[1], n = r.type.bound[1];
    DenseArray out = DenseArray::zeros(ot);
    for (uint64_t i = 0; i < m; ++i)
      for (uint64_t kk = 0; kk < k; ++kk) {
        double x = l.values[i * k + kk];
        if (x == 0.0) continue;
        for (uint64_t j = 0; j < n; ++j) out.values[i * n + j] += x * r.values[kk * n + j];
      }
    return out;
  }
};

// left (m x n) minus the right (1 x n) row vector, applied per row
class MatVecSubKernel : public Kernel {
 public:
  MatVecSubKernel() {
    name_ = "matVecSub";
    kind_ = KernelKind::Binary;
  }
  ArrayType binary_type(const ArrayType& l, const ArrayType& r) const override {
    if (l.rank() != 2 || r.rank() != 2 || r.bound[0] != 1 || l.bound[1] != r.bound[1])
      throw KernelTypeError("matVecSub expects (m,n) and (1,n), got " + l.to_string() + " and " +
                            r.to_string());
    return l;
  }
  DenseArray apply_binary(const DenseArray& l, const DenseArray& r) const override {
    binary_type(l.type, r.type);
    uint64_t m = l.type.bound[0], n = l.type.bound[1];
    DenseArray out = l;
    for (uint64_t i = 0; i < m; ++i)
      for (uint64_t j = 0; j < n; ++j) out.values[i * n + j] = l.values[i * n + j] - r.values[j];
    return out;
  }
};

class ConcatKernel : public Kernel {
 public:
  explicit ConcatKernel(size_t dim) : dim_(dim) {
    name_ = "arrayConcatOp";
    params_ = {static_cast<double>(dim)};
    kind_ = KernelKind::Binary;
    associative_ = true;
  }
  ArrayType binary_type(const ArrayType& l, const ArrayType& r) const override {
    if (l.rank() != r.rank() || dim_ >= l.rank())
      throw KernelTypeError("arrayConcatOp rank mismatch");
    IndexVector b = l.bound;
    for (size_t d = 0; d < b.size(); ++d) {
      if (d == dim_) continue;
      if (l.bound[d] != r.bound[d])
        throw KernelTypeError("arrayConcatOp bounds differ off the concat dimension");
    }
    b[dim_] = l.bound[dim_] + r.bound[dim_];
    return ArrayType{b};
  }
  DenseArray apply_binary(const DenseArray& l, const DenseArray& r) const override {
    ArrayType ot = binary_type(l.type, r.type);
    DenseArray out = DenseArray::zeros(ot);
    // outer = product of dims before dim_, inner = product after
    uint64_t outer = 1, inner = 1;
    for (size_t d = 0; d < dim_; ++d) outer *= ot.bound[d];
    for (size_t d = dim_ + 1; d < ot.bound.size(); ++d) inner *= ot.bound[d];
    uint64_t ls = l.type.bound[dim_], rs = r.type.bound[dim_];
    for (uint64_t o = 0; o < outer; ++o) {
      std::copy_n(l.values.begin() + o * ls * inner, ls * inner,
                  out.values.begin() + o * (ls + rs) * inner);
      std::copy_n(r.values.begin() + o * rs * inner, rs * inner,
                  out.values.begin() + o * (ls + rs) * inner + ls * inner);
    }
    return out;
  }

 private:
  size_t dim_;
};

class ElementwiseUnary : public Kernel {
 public:
  ElementwiseUnary(std::string name, std::function<double(double)> fn,
                   std::set<std::string> dist = {})
      : fn_(std::move(fn)) {
    name_ = std::move(name);
    kind_ = KernelKind::Unary;
    distributes_over_ = std::move(dist);
  }
  ArrayType unary_type(const ArrayType& in) const override { return in; }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    DenseArray out = a;
    for (double& v : out.values) v = fn_(v);
    return {std::move(out)};
  }

 private:
  std::function<double(double)> fn_;
};

class IdentityKernel : public Kernel {
 public:
  IdentityKernel() {
    name_ = "idOp";
    kind_ = KernelKind::Unary;
    distributes_over_ = {"matAdd", "matSub", "elemMul", "matMul"};
  }
  ArrayType unary_type(const ArrayType& in) const override { return in; }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override { return {a}; }
};

class DiagKernel : public Kernel {
 public:
  DiagKernel() {
    name_ = "diag";
    kind_ = KernelKind::Unary;
    distributes_over_ = {"matAdd", "matSub"};
  }
  ArrayType unary_type(const ArrayType& in) const override {
    if (in.rank() != 2 || in.bound[0] != in.bound[1])
      throw KernelTypeError("diag expects a square rank-2 array, got " + in.to_string());
    return ArrayType{IndexVector{in.bound[0]}};
  }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    ArrayType ot = unary_type(a.type);
    uint64_t n = a.type.bound[0];
    DenseArray out = DenseArray::zeros(ot);
    for (uint64_t i = 0; i < n; ++i) out.values[i] = a.values[i * n + i];
    return {std::move(out)};
  }
};

class RowSumKernel : public Kernel {
 public:
  RowSumKernel() {
    name_ = "rowSum";
    kind_ = KernelKind::Unary;
    distributes_over_ = {"matAdd"};
  }
  ArrayType unary_type(const ArrayType& in) const override {
    if (in.rank() != 2) throw KernelTypeError("rowSum expects a rank-2 array");
    return ArrayType{IndexVector{in.bound[0]}};
  }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    uint64_t m = a.type.bound[0], n = a.type.bound[1];
    DenseArray out = DenseArray::zeros(unary_type(a.type));
    for (uint64_t i = 0; i < m; ++i) {
      double s = 0;
      for (uint64_t j = 0; j < n; ++j) s += a.values[i * n + j];
      out.values[i] = s;
    }
    return {std::move(out)};
  }
};

class TransposeKernel : public Kernel {
 public:
  TransposeKernel() {
    name_ = "transpose";
    kind_ = KernelKind::Unary;
    distributes_over_ = {"matAdd", "matSub", "elemMul"};
  }
  ArrayType unary_type(const ArrayType& in) const override {
    if (in.rank() != 2) throw KernelTypeError("transpose expects a rank-2 array");
    return ArrayType{IndexVector{in.bound[1], in.bound[0]}};
  }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    uint64_t m = a.type.bound[0], n = a.type.bound[1];
    DenseArray out = DenseArray::zeros(unary_type(a.type));
    for (uint64_t i = 0; i < m; ++i)
      for (uint64_t j = 0; j < n; ++j) out.values[j * m + i] = a.values[i * n + j];
    return {std::move(out)};
  }
};

class ScalarScaleKernel : public Kernel {
 public:
  explicit ScalarScaleKernel(double factor) : factor_(factor) {
    name_ = "scalarScale";
    params_ = {factor};
    kind_ = KernelKind::Unary;
    distributes_over_ = {"matAdd", "matSub"};
  }
  ArrayType unary_type(const ArrayType& in) const override { return in; }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    DenseArray out = a;
    for (double& v : out.values) v *= factor_;
    return {std::move(out)};
  }

 private:
  double factor_;
};

class ArrayTileKernel : public Kernel {
 public:
  ArrayTileKernel(size_t dim, uint64_t size) : dim_(dim), size_(size) {
    name_ = "arrayTileOp";
    params_ = {static_cast<double>(dim), static_cast<double>(size)};
    kind_ = KernelKind::Unary;
  }
  size_t multiplicity(const ArrayType& in) const override {
    check(in);
    return in.bound[dim_] / size_;
  }
  ArrayType unary_type(const ArrayType& in) const override {
    check(in);
    IndexVector b = in.bound;
    b[dim_] = size_;
    return ArrayType{b};
  }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    size_t m = multiplicity(a.type);
    ArrayType ot = unary_type(a.type);
    uint64_t outer = 1, inner = 1;
    for (size_t d = 0; d < dim_; ++d) outer *= a.type.bound[d];
    for (size_t d = dim_ + 1; d < a.type.bound.size(); ++d) inner *= a.type.bound[d];
    uint64_t full = a.type.bound[dim_];
    std::vector<DenseArray> out;
    out.reserve(m);
    for (size_t t = 0; t < m; ++t) {
      DenseArray chunk = DenseArray::zeros(ot);
      for (uint64_t o = 0; o < outer; ++o)
        std::copy_n(a.values.begin() + (o * full + t * size_) * inner, size_ * inner,
                    chunk.values.begin() + o * size_ * inner);
      out.push_back(std::move(chunk));
    }
    return out;
  }

 private:
  void check(const ArrayType& in) const {
    if (dim_ >= in.rank() || size_ == 0 || in.bound[dim_] % size_)
      throw ShapeError("arrayTileOp(" + std::to_string(dim_) + "," + std::to_string(size_) +
                       ") does not divide " + in.to_string());
  }
  size_t dim_;
  uint64_t size_;
};

class DuplicateKernel : public Kernel {
 public:
  explicit DuplicateKernel(size_t count) : count_(count) {
    name_ = "duplicate";
    params_ = {static_cast<double>(count)};
    kind_ = KernelKind::Unary;
  }
  size_t multiplicity(const ArrayType&) const override { return count_; }
  ArrayType unary_type(const ArrayType& in) const override { return in; }
  std::vector<DenseArray> apply_unary(const DenseArray& a) const override {
    return std::vector<DenseArray>(count_, a);
  }

 private:
  size_t count_;
};

class MinIndexKernel : public Kernel {
 public:
  MinIndexKernel() {
    name_ = "minIndex";
    kind_ = KernelKind::Aggregator;
    associative_ = true;
    commutative_ = true;
  }
  // For the aggregator kind this maps element type -> reduced state type.
  ArrayType unary_type(const ArrayType& in) const override {
    if (in.rank() != 1) throw KernelTypeError("minIndex aggregates rank-1 arrays");
    return ArrayType{IndexVector{2}};
  }
};

double add_fn(double a, double b) { return a + b; }
double sub_fn(double a, double b) { return a - b; }
double mul_fn(double a, double b) { return a * b; }

}  // namespace

DenseArray min_index_state(const IndexVector& grouped_out_key, const DenseArray& values) {
  if (values.type.rank() != 1)
    throw KernelTypeError("minIndex expects rank-1 value arrays, got " + values.type.to_string());
  if (grouped_out_key.size() != 1)
    throw ValidationError("minIndex requires exactly one grouped-out key dimension");
  uint64_t base = grouped_out_key[0] * values.type.bound[0];
  double best = values.values[0];
  uint64_t best_idx = base;
  for (size_t i = 1; i < values.values.size(); ++i) {
    if (values.values[i] < best) {
      best = values.values[i];
      best_idx = base + i;
    }
  }
  return DenseArray(ArrayType{IndexVector{2}}, {best, static_cast<double>(best_idx)});
}

DenseArray min_index_combine(const DenseArray& a, const DenseArray& b) {
  // ties broken by smallest global index
  if (b.values[0] < a.values[0] || (b.values[0] == a.values[0] && b.values[1] < a.values[1]))
    return b;
  return a;
}

bool is_min_index(const KernelRef& r) { return r.name == "minIndex"; }

std::vector<DenseArray> apply_unary(const Kernel& k, const DenseArray& a) {
  return k.apply_unary(a);
}
DenseArray apply_binary(const Kernel& k, const DenseArray& l, const DenseArray& r) {
  return k.apply_binary(l, r);
}

KernelRegistry::KernelRegistry(bool verify_flags) : verify_flags_(verify_flags) {
  register_kernel(std::make_shared<ElementwiseBinary>("matAdd", add_fn, true, true));
  register_kernel(std::make_shared<ElementwiseBinary>("matSub", sub_fn, false, false));
  register_kernel(std::make_shared<ElementwiseBinary>("elemMul", mul_fn, true, true));
  register_kernel(std::make_shared<MatMulKernel>());
  register_kernel(std::make_shared<MatVecSubKernel>());
  register_kernel(std::make_shared<IdentityKernel>());
  register_kernel(std::make_shared<DiagKernel>());
  register_kernel(std::make_shared<RowSumKernel>());
  register_kernel(std::make_shared<TransposeKernel>());
  register_kernel(std::make_shared<ElementwiseUnary>(
      "relu", [](double x) { return x > 0 ? x : 0.0; }));
  register_kernel(std::make_shared<ElementwiseUnary>(
      "reluGrad", [](double x) { return x > 0 ? 1.0 : 0.0; }));
  register_kernel(std::make_shared<ElementwiseUnary>(
      "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); }));
  register_kernel(std::make_shared<MinIndexKernel>());

  families_["scalarScale"] = [](const std::vector<double>& p) -> KernelPtr {
    if (p.size() != 1) throw ValidationError("scalarScale takes one parameter");
    return std::make_shared<ScalarScaleKernel>(p[0]);
  };
  families_["arrayTileOp"] = [](const std::vector<double>& p) -> KernelPtr {
    if (p.size() != 2) throw ValidationError("arrayTileOp takes (dim, size)");
    return std::make_shared<ArrayTileKernel>(static_cast<size_t>(p[0]),
                                             static_cast<uint64_t>(p[1]));
  };
  families_["arrayConcatOp"] = [](const std::vector<double>& p) -> KernelPtr {
    if (p.size() != 1) throw ValidationError("arrayConcatOp takes (dim)");
    return std::make_shared<ConcatKernel>(static_cast<size_t>(p[0]));
  };
  families_["duplicate"] = [](const std::vector<double>& p) -> KernelPtr {
    if (p.size() != 1) throw ValidationError("duplicate takes (count)");
    return std::make_shared<DuplicateKernel>(static_cast<size_t>(p[0]));
  };
}

void KernelRegistry::register_kernel(KernelPtr k) {
  if (fixed_.count(k->name()) || families_.count(k->name()))
    throw ValidationError("kernel already registered: " + k->name());
  if (verify_flags_) verify(*k);
  fixed_[k->name()] = std::move(k);
}

bool KernelRegistry::has(const std::string& name) const {
  return fixed_.count(name) > 0 || families_.count(name) > 0;
}

KernelPtr KernelRegistry::resolve(const KernelRef& ref) const {
  auto f = fixed_.find(ref.name);
  if (f != fixed_.end()) {
    if (!ref.params.empty()) throw ValidationError(ref.name + " takes no parameters");
    return f->second;
  }
  auto fam = families_.find(ref.name);
  if (fam == families_.end()) throw ValidationError("unknown kernel: " + ref.name);
  std::string key = ref.to_string();
  auto c = cache_.find(key);
  if (c != cache_.end()) return c->second;
  KernelPtr k = fam->second(ref.params);
  if (verify_flags_) verify(*k);
  cache_[key] = k;
  return k;
}

namespace {

DenseArray random_array(const ArrayType& t, uint64_t seed, bool integers) {
  DenseArray a = DenseArray::zeros(t);
  for (size_t i = 0; i < a.values.size(); ++i)
    a.values[i] = integers ? seeded_small_int(seed, i, -4, 4) : seeded_uniform(seed, i);
  return a;
}

bool arrays_within(const DenseArray& a, const DenseArray& b, double tol) {
  if (a.type != b.type) return false;
  for (size_t i = 0; i < a.values.size(); ++i)
    if (std::abs(a.values[i] - b.values[i]) > tol) return false;
  return true;
}

// A type both unary and binary builtin kernels accept; square keeps diag
// and matMul applicable.
ArrayType probe_type() { return ArrayType{IndexVector{3, 3}}; }

}  // namespace

void KernelRegistry::verify(const Kernel& k) const {
  ArrayType t = probe_type();
  auto accepts_binary = [&](const Kernel& b) {
    try {
      b.binary_type(t, t);
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  for (int round = 0; round < 8; ++round) {
    bool ints = round % 2 == 0;
    double tol = ints ? 0.0 : 1e-12;
    uint64_t s = 7321 + 131 * round;
    if (k.kind() == KernelKind::Binary && accepts_binary(k)) {
      DenseArray x = random_array(t, s, ints), y = random_array(t, s + 1, ints),
                 z = random_array(t, s + 2, ints);
      if (k.commutative() && !arrays_within(k.apply_binary(x, y), k.apply_binary(y, x), tol))
        throw ValidationError(k.name() + " declared commutative but law check failed");
      if (k.associative() &&
          !arrays_within(k.apply_binary(k.apply_binary(x, y), z),
                         k.apply_binary(x, k.apply_binary(y, z)), ints ? 0.0 : 1e-9))
        throw ValidationError(k.name() + " declared associative but law check failed");
    }
    if (k.kind() == KernelKind::Unary) {
      for (const auto& agg_name : {std::string("matAdd"), std::string("matSub"),
                                   std::string("elemMul"), std::string("matMul")}) {
        if (!k.distributes_over(agg_name)) continue;
        auto agg = fixed_.find(agg_name);
        if (agg == fixed_.end()) continue;
        bool applicable = true;
        try {
          k.unary_type(t);
          agg->second->binary_type(t, t);
        } catch (const Error&) {
          applicable = false;
        }
        if (!applicable) continue;
        if (k.multiplicity(t) != 1) continue;
        DenseArray x = random_array(t, s + 3, ints), y = random_array(t, s + 4, ints);
        DenseArray lhs = k.apply_unary(agg->second->apply_binary(x, y))[0];
        DenseArray rhs =
            agg->second->apply_binary(k.apply_unary(x)[0], k.apply_unary(y)[0]);
        if (!arrays_within(lhs, rhs, tol))
          throw ValidationError(k.name() + " declared distributive over " + agg_name +
                                " but law check failed");
      }
    }
  }
}

}  // namespace tra
