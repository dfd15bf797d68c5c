#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.h"

namespace tra {

// Array type: rank r plus a bound vector of length r. All arrays are dense,
// row-major, 64-bit floats.
struct ArrayType {
  IndexVector bound;

  ArrayType() = default;
  explicit ArrayType(IndexVector b) : bound(std::move(b)) {
    for (uint64_t x : bound)
      if (x < 1) throw ShapeError("array bound entries must be >= 1");
  }

  size_t rank() const { return bound.size(); }
  uint64_t float_count() const {
    uint64_t n = 1;
    for (uint64_t b : bound) n *= b;
    return n;
  }
  bool operator==(const ArrayType& o) const { return bound == o.bound; }
  bool operator!=(const ArrayType& o) const { return !(*this == o); }
  std::string to_string() const { return index_vector_to_string(bound); }
};

struct DenseArray {
  ArrayType type;
  std::vector<double> values;  // row-major

  DenseArray() = default;
  DenseArray(ArrayType t, std::vector<double> v) : type(std::move(t)), values(std::move(v)) {
    if (values.size() != type.float_count())
      throw ShapeError("array payload size does not match bound");
  }
  static DenseArray zeros(const ArrayType& t) {
    return DenseArray(t, std::vector<double>(t.float_count(), 0.0));
  }

  // Row-major offset; any index outside [0, bound) is a hard error.
  size_t offset(const IndexVector& idx) const {
    if (idx.size() != type.rank()) throw ShapeError("index rank mismatch");
    size_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      if (idx[d] >= type.bound[d])
        throw ShapeError("index " + index_vector_to_string(idx) + " outside bound " +
                         type.to_string());
      off = off * type.bound[d] + idx[d];
    }
    return off;
  }
  double at(const IndexVector& idx) const { return values[offset(idx)]; }
  double& at(const IndexVector& idx) { return values[offset(idx)]; }

  bool bit_equal(const DenseArray& o) const {
    if (type != o.type) return false;
    for (size_t i = 0; i < values.size(); ++i)
      if (double_bits(values[i]) != double_bits(o.values[i])) return false;
    return true;
  }
};

// Canonical ordering of tuples: by key, ties broken by the bit pattern of
// the payload so duplicate keys still sort deterministically.
int compare_arrays(const DenseArray& a, const DenseArray& b);

struct Tuple {
  IndexVector key;
  DenseArray array;
};

// A tensor relation: a collection of (key, array) tuples with fixed key
// arity and array type, kept in canonical order. Duplicate keys are
// representable (ReKey can create them); checkConstraints reports them.
class TensorRelation {
 public:
  TensorRelation() = default;
  TensorRelation(size_t key_arity, ArrayType type)
      : key_arity_(key_arity), type_(std::move(type)) {}

  size_t key_arity() const { return key_arity_; }
  const ArrayType& array_type() const { return type_; }
  const std::vector<Tuple>& tuples() const { return tuples_; }
  size_t size() const { return tuples_.size(); }

  void insert(IndexVector key, DenseArray array);
  const DenseArray* find(const IndexVector& key) const;

  bool operator==(const TensorRelation& o) const;

 private:
  size_t key_arity_ = 0;
  ArrayType type_{IndexVector{1}};
  std::vector<Tuple> tuples_;
};

// Smallest vector strictly bounding every key; zero vector for an empty
// relation.
IndexVector frontier(const TensorRelation& rel);
IndexVector frontier_of_keys(const std::vector<IndexVector>& keys, size_t arity);

struct ConstraintReport {
  bool ok = true;
  std::string violated;   // "uniqueness" | "continuity"
  IndexVector witness;

  std::string to_string() const {
    if (ok) return "ok";
    return violated + " violation at " + index_vector_to_string(witness);
  }
};

ConstraintReport check_constraints(const TensorRelation& rel);

// (prod frontier) x (prod bound); requires continuity so the product is the
// exact tuple count.
uint64_t float_count(const TensorRelation& rel);

// Chop a rank-2 array into a key-arity-2 relation of blocks and back.
TensorRelation blockify(const DenseArray& matrix, uint64_t block_rows, uint64_t block_cols);
DenseArray unblockify(const TensorRelation& rel);

// Elementwise comparison of the distinct (key, array) content of two
// relations; max |delta| must be <= tol (0 means bit-equal values).
bool relations_close(const TensorRelation& a, const TensorRelation& b, double tol,
                     std::string* why = nullptr);

}  // namespace tra
