#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "types.h"

namespace tra {

// Reference to a kernel as it appears in plans: a name from the inventory
// plus numeric parameters for the parameterized families.
struct KernelRef {
  std::string name;
  std::vector<double> params;

  std::string to_string() const;
  bool operator==(const KernelRef& o) const { return name == o.name && params == o.params; }
};

nlohmann::json kernel_ref_to_json(const KernelRef& r);
KernelRef kernel_ref_from_json(const nlohmann::json& j);

enum class KernelKind { Unary, Binary, Aggregator };

// A resolved kernel instance. Unary kernels may be multi-output (tiling,
// replication); their multiplicity can depend on the input array type.
class Kernel {
 public:
  virtual ~Kernel() = default;

  const std::string& name() const { return name_; }
  const std::vector<double>& params() const { return params_; }
  KernelKind kind() const { return kind_; }
  bool associative() const { return associative_; }
  bool commutative() const { return commutative_; }
  // d distributes over a iff d(a(x,y)) == a(d(x), d(y)); declared on the
  // unary side.
  bool distributes_over(const std::string& agg) const { return distributes_over_.count(agg) > 0; }
  // For binary m: m(a(.,.),.) bilinearity declarations used by the
  // domain-specific matrix multiply rules.
  bool bilinear_over(const std::string& agg) const { return bilinear_over_.count(agg) > 0; }

  virtual size_t multiplicity(const ArrayType&) const { return 1; }
  virtual ArrayType unary_type(const ArrayType& in) const;
  virtual ArrayType binary_type(const ArrayType& l, const ArrayType& r) const;
  virtual std::vector<DenseArray> apply_unary(const DenseArray& a) const;
  virtual DenseArray apply_binary(const DenseArray& l, const DenseArray& r) const;

  KernelRef ref() const { return KernelRef{name_, params_}; }

 protected:
  std::string name_;
  std::vector<double> params_;
  KernelKind kind_ = KernelKind::Unary;
  bool associative_ = false;
  bool commutative_ = false;
  std::set<std::string> distributes_over_;
  std::set<std::string> bilinear_over_;
};

using KernelPtr = std::shared_ptr<const Kernel>;

// Immutable once built. resolve() instantiates parameterized families on
// demand and caches them; registration law checks run randomized algebra
// tests against the declared flags.
class KernelRegistry {
 public:
  explicit KernelRegistry(bool verify_flags = true);

  void register_kernel(KernelPtr k);
  KernelPtr resolve(const KernelRef& ref) const;
  bool has(const std::string& name) const;

 private:
  void verify(const Kernel& k) const;

  bool verify_flags_;
  std::map<std::string, KernelPtr> fixed_;
  // Parameterized families: name -> factory.
  std::map<std::string, std::function<KernelPtr(const std::vector<double>&)>> families_;
  mutable std::map<std::string, KernelPtr> cache_;
};

// Convenience entry points matching the module contract.
std::vector<DenseArray> apply_unary(const Kernel& k, const DenseArray& a);
DenseArray apply_binary(const Kernel& k, const DenseArray& l, const DenseArray& r);

// minIndex folds (value, globalIndex) states; arrays of bound <2>. The
// global index of an element is key[d] * bound[0] + offset where d is the
// single grouped-out dimension.
DenseArray min_index_state(const IndexVector& grouped_out_key, const DenseArray& values);
DenseArray min_index_combine(const DenseArray& a, const DenseArray& b);
bool is_min_index(const KernelRef& r);

}  // namespace tra
