#include "types.h"

#include <algorithm>
#include <cmath>

namespace tra {

int compare_arrays(const DenseArray& a, const DenseArray& b) {
  if (a.type.bound != b.type.bound) return a.type.bound < b.type.bound ? -1 : 1;
  for (size_t i = 0; i < a.values.size(); ++i) {
    uint64_t x = double_bits(a.values[i]), y = double_bits(b.values[i]);
    if (x != y) return x < y ? -1 : 1;
  }
  return 0;
}

static bool tuple_less(const Tuple& a, const Tuple& b) {
  if (a.key != b.key) return a.key < b.key;
  return compare_arrays(a.array, b.array) < 0;
}

void TensorRelation::insert(IndexVector key, DenseArray array) {
  if (key.size() != key_arity_)
    throw ShapeError("key arity mismatch: got " + std::to_string(key.size()) + ", relation has " +
                     std::to_string(key_arity_));
  if (array.type != type_)
    throw ShapeError("tuple array type " + array.type.to_string() + " does not match relation " +
                     type_.to_string());
  Tuple t{std::move(key), std::move(array)};
  auto it = std::upper_bound(tuples_.begin(), tuples_.end(), t, tuple_less);
  tuples_.insert(it, std::move(t));
}

const DenseArray* TensorRelation::find(const IndexVector& key) const {
  auto it = std::lower_bound(tuples_.begin(), tuples_.end(), key,
                             [](const Tuple& t, const IndexVector& k) { return t.key < k; });
  if (it == tuples_.end() || it->key != key) return nullptr;
  return &it->array;
}

bool TensorRelation::operator==(const TensorRelation& o) const {
  if (key_arity_ != o.key_arity_ || type_ != o.type_ || tuples_.size() != o.tuples_.size())
    return false;
  for (size_t i = 0; i < tuples_.size(); ++i) {
    if (tuples_[i].key != o.tuples_[i].key) return false;
    if (!tuples_[i].array.bit_equal(o.tuples_[i].array)) return false;
  }
  return true;
}

IndexVector frontier_of_keys(const std::vector<IndexVector>& keys, size_t arity) {
  IndexVector f(arity, 0);
  for (const auto& k : keys)
    for (size_t d = 0; d < arity; ++d) f[d] = std::max(f[d], k[d] + 1);
  return f;
}

IndexVector frontier(const TensorRelation& rel) {
  IndexVector f(rel.key_arity(), 0);
  for (const auto& t : rel.tuples())
    for (size_t d = 0; d < f.size(); ++d) f[d] = std::max(f[d], t.key[d] + 1);
  return f;
}

ConstraintReport check_constraints(const TensorRelation& rel) {
  const auto& ts = rel.tuples();
  if (ts.empty()) return ConstraintReport{};
  for (size_t i = 1; i < ts.size(); ++i)
    if (ts[i].key == ts[i - 1].key) return ConstraintReport{false, "uniqueness", ts[i].key};
  IndexVector f = frontier(rel);
  uint64_t expect = 1;
  for (uint64_t x : f) expect *= x;
  if (expect == ts.size()) return ConstraintReport{};  // keys unique and dense below frontier
  // Walk the grid lexicographically to name a witness hole.
  IndexVector k(rel.key_arity(), 0);
  for (size_t ti = 0;; ++ti) {
    if (ti >= ts.size() || ts[ti].key != k) return ConstraintReport{false, "continuity", k};
    size_t d = k.size();
    bool carried = true;
    while (d > 0) {
      --d;
      if (++k[d] < f[d]) {
        carried = false;
        break;
      }
      k[d] = 0;
    }
    if (carried) return ConstraintReport{};
  }
}

uint64_t float_count(const TensorRelation& rel) {
  ConstraintReport r = check_constraints(rel);
  if (!r.ok) throw ConstraintError("floatCount requires constraints: " + r.to_string());
  uint64_t n = 1;
  for (uint64_t x : frontier(rel)) n *= x;
  return n * rel.array_type().float_count();
}

TensorRelation blockify(const DenseArray& matrix, uint64_t block_rows, uint64_t block_cols) {
  if (matrix.type.rank() != 2) throw ShapeError("blockify expects a rank-2 array");
  uint64_t rows = matrix.type.bound[0], cols = matrix.type.bound[1];
  if (block_rows == 0 || block_cols == 0 || rows % block_rows || cols % block_cols)
    throw ShapeError("matrix " + matrix.type.to_string() + " not divisible into " +
                     std::to_string(block_rows) + "x" + std::to_string(block_cols) + " blocks");
  ArrayType bt{IndexVector{block_rows, block_cols}};
  TensorRelation out(2, bt);
  for (uint64_t bi = 0; bi < rows / block_rows; ++bi)
    for (uint64_t bj = 0; bj < cols / block_cols; ++bj) {
      DenseArray block = DenseArray::zeros(bt);
      for (uint64_t r = 0; r < block_rows; ++r)
        for (uint64_t c = 0; c < block_cols; ++c)
          block.values[r * block_cols + c] =
              matrix.values[(bi * block_rows + r) * cols + bj * block_cols + c];
      out.insert(IndexVector{bi, bj}, std::move(block));
    }
  return out;
}

DenseArray unblockify(const TensorRelation& rel) {
  if (rel.key_arity() != 2) throw ShapeError("unblockify expects key arity 2");
  ConstraintReport r = check_constraints(rel);
  if (!r.ok) throw ConstraintError("unblockify requires constraints: " + r.to_string());
  if (rel.array_type().rank() != 2) throw ShapeError("unblockify expects rank-2 blocks");
  IndexVector f = frontier(rel);
  uint64_t br = rel.array_type().bound[0], bc = rel.array_type().bound[1];
  if (f[0] == 0 || f[1] == 0) throw ShapeError("unblockify of an empty relation");
  DenseArray out = DenseArray::zeros(ArrayType{IndexVector{f[0] * br, f[1] * bc}});
  uint64_t cols = f[1] * bc;
  for (const auto& t : rel.tuples())
    for (uint64_t r = 0; r < br; ++r)
      for (uint64_t c = 0; c < bc; ++c)
        out.values[(t.key[0] * br + r) * cols + t.key[1] * bc + c] =
            t.array.values[r * bc + c];
  return out;
}

bool relations_close(const TensorRelation& a, const TensorRelation& b, double tol,
                     std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (a.key_arity() != b.key_arity()) return fail("key arity differs");
  if (a.array_type() != b.array_type()) return fail("array type differs");
  // Compare distinct (key, array) content.
  auto dedup = [](const TensorRelation& r) {
    std::vector<const Tuple*> v;
    for (const auto& t : r.tuples()) {
      if (!v.empty() && v.back()->key == t.key && v.back()->array.bit_equal(t.array)) continue;
      v.push_back(&t);
    }
    return v;
  };
  auto va = dedup(a), vb = dedup(b);
  if (va.size() != vb.size())
    return fail("tuple count differs: " + std::to_string(va.size()) + " vs " +
                std::to_string(vb.size()));
  for (size_t i = 0; i < va.size(); ++i) {
    if (va[i]->key != vb[i]->key)
      return fail("key mismatch at position " + std::to_string(i) + ": " +
                  index_vector_to_string(va[i]->key) + " vs " +
                  index_vector_to_string(vb[i]->key));
    const auto& x = va[i]->array.values;
    const auto& y = vb[i]->array.values;
    for (size_t j = 0; j < x.size(); ++j) {
      bool okv = tol == 0.0 ? double_bits(x[j]) == double_bits(y[j])
                            : std::abs(x[j] - y[j]) <= tol;
      if (!okv)
        return fail("value mismatch at key " + index_vector_to_string(va[i]->key) + " offset " +
                    std::to_string(j) + ": " + std::to_string(x[j]) + " vs " +
                    std::to_string(y[j]));
    }
  }
  return true;
}

}  // namespace tra
