#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "common.h"
#include "json.hpp"

namespace tra {

// Small expression language over key components. Filter predicates and key
// maps are plain ASTs so the rewriter can decide side conditions (identity,
// referenced components) symbolically and the cost model can enumerate them.

struct KeyExpr {
  enum class Op { Const, Ref, Add, Sub, Mul, Div, Mod };
  Op op = Op::Const;
  int64_t value = 0;  // Const payload or Ref component index
  std::vector<KeyExpr> kids;

  static KeyExpr constant(int64_t v) { return KeyExpr{Op::Const, v, {}}; }
  static KeyExpr ref(int64_t component) { return KeyExpr{Op::Ref, component, {}}; }
  static KeyExpr binary(Op op, KeyExpr a, KeyExpr b) { return KeyExpr{op, 0, {std::move(a), std::move(b)}}; }

  int64_t eval(const IndexVector& key) const;
  void referenced(std::set<size_t>& out) const;
  // Replace every Ref(i) by args[i].
  KeyExpr substitute(const std::vector<KeyExpr>& args) const;
  bool operator==(const KeyExpr& o) const;
};

struct BoolExpr {
  enum class Op { True, False, Eq, Ne, Lt, Le, Gt, Ge, And, Or, Not };
  Op op = Op::True;
  std::vector<KeyExpr> args;   // comparison operands
  std::vector<BoolExpr> kids;  // logical operands

  static BoolExpr constant(bool b) { return BoolExpr{b ? Op::True : Op::False, {}, {}}; }
  static BoolExpr compare(Op op, KeyExpr a, KeyExpr b) {
    return BoolExpr{op, {std::move(a), std::move(b)}, {}};
  }
  static BoolExpr logic(Op op, std::vector<BoolExpr> kids) { return BoolExpr{op, {}, std::move(kids)}; }

  bool eval(const IndexVector& key) const;
  void referenced(std::set<size_t>& out) const;
  BoolExpr substitute(const std::vector<KeyExpr>& args) const;
};

// Key map with multiplicity m: each input key yields m output keys. Most
// maps have m == 1; tiling and replication use m > 1.
struct KeyFunc {
  size_t input_arity = 0;
  size_t output_arity = 0;
  std::vector<std::vector<KeyExpr>> rows;  // m rows of output_arity expressions

  size_t multiplicity() const { return rows.size(); }
  std::vector<IndexVector> apply(const IndexVector& key) const;
  bool is_identity() const;
  void validate() const;

  static KeyFunc identity(size_t arity);
  // <k0..kn> -> m keys with constant j inserted at position dim (j in 0..m-1).
  static KeyFunc insert_dim(size_t arity, size_t dim, size_t count);
  // Compose: apply inner first, then outer; both must have m == 1.
  static KeyFunc compose_single(const KeyFunc& outer, const KeyFunc& inner);
};

struct BoolFunc {
  size_t input_arity = 0;
  BoolExpr pred;

  bool eval(const IndexVector& key) const { return pred.eval(key); }
  void validate() const;
  std::set<size_t> referenced() const;

  static BoolFunc always(size_t arity, bool value);
  static BoolFunc conjunction(const BoolFunc& a, const BoolFunc& b);
  // Rewire component references through a dim substitution: ref(i) -> ref(map[i]).
  static BoolFunc remap(const BoolFunc& f, size_t new_arity, const std::vector<size_t>& map);
};

// JSON (nested prefix) forms, the plan-file encoding.
nlohmann::json key_expr_to_json(const KeyExpr& e);
KeyExpr key_expr_from_json(const nlohmann::json& j);
nlohmann::json bool_expr_to_json(const BoolExpr& e);
BoolExpr bool_expr_from_json(const nlohmann::json& j);
nlohmann::json key_func_to_json(const KeyFunc& f);
KeyFunc key_func_from_json(const nlohmann::json& j);
nlohmann::json bool_func_to_json(const BoolFunc& f);
BoolFunc bool_func_from_json(const nlohmann::json& j);

std::string key_func_to_string(const KeyFunc& f);
std::string bool_func_to_string(const BoolFunc& f);

}  // namespace tra
