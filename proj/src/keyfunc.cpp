#include "keyfunc.h"

namespace tra {

int64_t KeyExpr::eval(const IndexVector& key) const {
  switch (op) {
    case Op::Const:
      return value;
    case Op::Ref:
      if (value < 0 || static_cast<size_t>(value) >= key.size())
        throw ValidationError("key expression references component " + std::to_string(value) +
                              " of an arity-" + std::to_string(key.size()) + " key");
      return static_cast<int64_t>(key[value]);
    default: {
      int64_t a = kids[0].eval(key), b = kids[1].eval(key);
      switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div:
          if (b == 0) throw ExecutionError("key expression divides by zero");
          return a / b;
        case Op::Mod:
          if (b == 0) throw ExecutionError("key expression mod by zero");
          return a % b;
        default: throw ValidationError("bad key expression");
      }
    }
  }
}

void KeyExpr::referenced(std::set<size_t>& out) const {
  if (op == Op::Ref) out.insert(static_cast<size_t>(value));
  for (const auto& k : kids) k.referenced(out);
}

KeyExpr KeyExpr::substitute(const std::vector<KeyExpr>& args) const {
  if (op == Op::Ref) {
    if (value < 0 || static_cast<size_t>(value) >= args.size())
      throw ValidationError("substitute: ref out of range");
    return args[value];
  }
  KeyExpr out{op, value, {}};
  out.kids.reserve(kids.size());
  for (const auto& k : kids) out.kids.push_back(k.substitute(args));
  return out;
}

bool KeyExpr::operator==(const KeyExpr& o) const {
  return op == o.op && value == o.value && kids == o.kids;
}

bool BoolExpr::eval(const IndexVector& key) const {
  switch (op) {
    case Op::True: return true;
    case Op::False: return false;
    case Op::And: {
      for (const auto& k : kids)
        if (!k.eval(key)) return false;
      return true;
    }
    case Op::Or: {
      for (const auto& k : kids)
        if (k.eval(key)) return true;
      return false;
    }
    case Op::Not: return !kids[0].eval(key);
    default: {
      int64_t a = args[0].eval(key), b = args[1].eval(key);
      switch (op) {
        case Op::Eq: return a == b;
        case Op::Ne: return a != b;
        case Op::Lt: return a < b;
        case Op::Le: return a <= b;
        case Op::Gt: return a > b;
        case Op::Ge: return a >= b;
        default: throw ValidationError("bad bool expression");
      }
    }
  }
}

void BoolExpr::referenced(std::set<size_t>& out) const {
  for (const auto& a : args) a.referenced(out);
  for (const auto& k : kids) k.referenced(out);
}

BoolExpr BoolExpr::substitute(const std::vector<KeyExpr>& subst) const {
  BoolExpr out{op, {}, {}};
  for (const auto& a : args) out.args.push_back(a.substitute(subst));
  for (const auto& k : kids) out.kids.push_back(k.substitute(subst));
  return out;
}

std::vector<IndexVector> KeyFunc::apply(const IndexVector& key) const {
  std::vector<IndexVector> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    IndexVector k;
    k.reserve(row.size());
    for (const auto& e : row) {
      int64_t v = e.eval(key);
      if (v < 0)
        throw ExecutionError("key function produced negative component " + std::to_string(v) +
                             " for key " + index_vector_to_string(key));
      k.push_back(static_cast<uint64_t>(v));
    }
    out.push_back(std::move(k));
  }
  return out;
}

bool KeyFunc::is_identity() const {
  if (rows.size() != 1 || output_arity != input_arity) return false;
  for (size_t i = 0; i < output_arity; ++i)
    if (!(rows[0][i] == KeyExpr::ref(static_cast<int64_t>(i)))) return false;
  return true;
}

void KeyFunc::validate() const {
  if (rows.empty()) throw ValidationError("key function must have at least one output row");
  std::set<size_t> refs;
  for (const auto& row : rows) {
    if (row.size() != output_arity)
      throw ValidationError("key function row arity mismatch");
    for (const auto& e : row) e.referenced(refs);
  }
  for (size_t r : refs)
    if (r >= input_arity)
      throw ValidationError("key function references component " + std::to_string(r) +
                            " beyond input arity " + std::to_string(input_arity));
}

KeyFunc KeyFunc::identity(size_t arity) {
  KeyFunc f;
  f.input_arity = f.output_arity = arity;
  f.rows.emplace_back();
  for (size_t i = 0; i < arity; ++i) f.rows[0].push_back(KeyExpr::ref(static_cast<int64_t>(i)));
  return f;
}

KeyFunc KeyFunc::insert_dim(size_t arity, size_t dim, size_t count) {
  if (dim > arity) throw ValidationError("insertDim position out of range");
  if (count == 0) throw ValidationError("insertDim count must be positive");
  KeyFunc f;
  f.input_arity = arity;
  f.output_arity = arity + 1;
  for (size_t j = 0; j < count; ++j) {
    std::vector<KeyExpr> row;
    for (size_t i = 0; i < dim; ++i) row.push_back(KeyExpr::ref(static_cast<int64_t>(i)));
    row.push_back(KeyExpr::constant(static_cast<int64_t>(j)));
    for (size_t i = dim; i < arity; ++i) row.push_back(KeyExpr::ref(static_cast<int64_t>(i)));
    f.rows.push_back(std::move(row));
  }
  return f;
}

KeyFunc KeyFunc::compose_single(const KeyFunc& outer, const KeyFunc& inner) {
  if (outer.multiplicity() != 1 || inner.multiplicity() != 1)
    throw ValidationError("key function composition requires multiplicity one");
  if (outer.input_arity != inner.output_arity)
    throw ValidationError("key function composition arity mismatch");
  KeyFunc f;
  f.input_arity = inner.input_arity;
  f.output_arity = outer.output_arity;
  f.rows.emplace_back();
  for (const auto& e : outer.rows[0]) f.rows[0].push_back(e.substitute(inner.rows[0]));
  return f;
}

void BoolFunc::validate() const {
  for (size_t r : referenced())
    if (r >= input_arity)
      throw ValidationError("predicate references component " + std::to_string(r) +
                            " beyond input arity " + std::to_string(input_arity));
}

std::set<size_t> BoolFunc::referenced() const {
  std::set<size_t> out;
  pred.referenced(out);
  return out;
}

BoolFunc BoolFunc::always(size_t arity, bool value) {
  return BoolFunc{arity, BoolExpr::constant(value)};
}

BoolFunc BoolFunc::conjunction(const BoolFunc& a, const BoolFunc& b) {
  if (a.input_arity != b.input_arity) throw ValidationError("predicate conjunction arity mismatch");
  return BoolFunc{a.input_arity, BoolExpr::logic(BoolExpr::Op::And, {a.pred, b.pred})};
}

BoolFunc BoolFunc::remap(const BoolFunc& f, size_t new_arity, const std::vector<size_t>& map) {
  std::vector<KeyExpr> subst;
  subst.reserve(map.size());
  for (size_t m : map) subst.push_back(KeyExpr::ref(static_cast<int64_t>(m)));
  BoolFunc out{new_arity, f.pred.substitute(subst)};
  out.validate();
  return out;
}

// ---- JSON ----

static const char* key_op_name(KeyExpr::Op op) {
  switch (op) {
    case KeyExpr::Op::Const: return "const";
    case KeyExpr::Op::Ref: return "ref";
    case KeyExpr::Op::Add: return "add";
    case KeyExpr::Op::Sub: return "sub";
    case KeyExpr::Op::Mul: return "mul";
    case KeyExpr::Op::Div: return "div";
    case KeyExpr::Op::Mod: return "mod";
  }
  return "?";
}

nlohmann::json key_expr_to_json(const KeyExpr& e) {
  nlohmann::json j = nlohmann::json::array();
  j.push_back(key_op_name(e.op));
  if (e.op == KeyExpr::Op::Const || e.op == KeyExpr::Op::Ref) {
    j.push_back(e.value);
  } else {
    for (const auto& k : e.kids) j.push_back(key_expr_to_json(k));
  }
  return j;
}

KeyExpr key_expr_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_string()) throw IoError("bad key expression json");
  std::string op = j[0].get<std::string>();
  if (op == "const") return KeyExpr::constant(j.at(1).get<int64_t>());
  if (op == "ref") return KeyExpr::ref(j.at(1).get<int64_t>());
  KeyExpr::Op o;
  if (op == "add") o = KeyExpr::Op::Add;
  else if (op == "sub") o = KeyExpr::Op::Sub;
  else if (op == "mul") o = KeyExpr::Op::Mul;
  else if (op == "div") o = KeyExpr::Op::Div;
  else if (op == "mod") o = KeyExpr::Op::Mod;
  else throw IoError("unknown key expression op: " + op);
  if (j.size() != 3) throw IoError("binary key expression needs two operands");
  return KeyExpr::binary(o, key_expr_from_json(j[1]), key_expr_from_json(j[2]));
}

static const char* bool_op_name(BoolExpr::Op op) {
  switch (op) {
    case BoolExpr::Op::True: return "true";
    case BoolExpr::Op::False: return "false";
    case BoolExpr::Op::Eq: return "eq";
    case BoolExpr::Op::Ne: return "ne";
    case BoolExpr::Op::Lt: return "lt";
    case BoolExpr::Op::Le: return "le";
    case BoolExpr::Op::Gt: return "gt";
    case BoolExpr::Op::Ge: return "ge";
    case BoolExpr::Op::And: return "and";
    case BoolExpr::Op::Or: return "or";
    case BoolExpr::Op::Not: return "not";
  }
  return "?";
}

nlohmann::json bool_expr_to_json(const BoolExpr& e) {
  nlohmann::json j = nlohmann::json::array();
  j.push_back(bool_op_name(e.op));
  for (const auto& a : e.args) j.push_back(key_expr_to_json(a));
  for (const auto& k : e.kids) j.push_back(bool_expr_to_json(k));
  return j;
}

BoolExpr bool_expr_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_string()) throw IoError("bad bool expression json");
  std::string op = j[0].get<std::string>();
  if (op == "true") return BoolExpr::constant(true);
  if (op == "false") return BoolExpr::constant(false);
  if (op == "and" || op == "or" || op == "not") {
    std::vector<BoolExpr> kids;
    for (size_t i = 1; i < j.size(); ++i) kids.push_back(bool_expr_from_json(j[i]));
    BoolExpr::Op o = op == "and" ? BoolExpr::Op::And
                   : op == "or"  ? BoolExpr::Op::Or
                                 : BoolExpr::Op::Not;
    if (o == BoolExpr::Op::Not && kids.size() != 1) throw IoError("not takes one operand");
    return BoolExpr::logic(o, std::move(kids));
  }
  BoolExpr::Op o;
  if (op == "eq") o = BoolExpr::Op::Eq;
  else if (op == "ne") o = BoolExpr::Op::Ne;
  else if (op == "lt") o = BoolExpr::Op::Lt;
  else if (op == "le") o = BoolExpr::Op::Le;
  else if (op == "gt") o = BoolExpr::Op::Gt;
  else if (op == "ge") o = BoolExpr::Op::Ge;
  else throw IoError("unknown bool expression op: " + op);
  if (j.size() != 3) throw IoError("comparison needs two operands");
  return BoolExpr::compare(o, key_expr_from_json(j[1]), key_expr_from_json(j[2]));
}

nlohmann::json key_func_to_json(const KeyFunc& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : f.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& e : row) r.push_back(key_expr_to_json(e));
    rows.push_back(r);
  }
  return nlohmann::json{{"arity", f.input_arity}, {"out_arity", f.output_arity}, {"rows", rows}};
}

KeyFunc key_func_from_json(const nlohmann::json& j) {
  KeyFunc f;
  f.input_arity = j.at("arity").get<size_t>();
  f.output_arity = j.at("out_arity").get<size_t>();
  for (const auto& row : j.at("rows")) {
    std::vector<KeyExpr> r;
    for (const auto& e : row) r.push_back(key_expr_from_json(e));
    f.rows.push_back(std::move(r));
  }
  f.validate();
  return f;
}

nlohmann::json bool_func_to_json(const BoolFunc& f) {
  return nlohmann::json{{"arity", f.input_arity}, {"pred", bool_expr_to_json(f.pred)}};
}

BoolFunc bool_func_from_json(const nlohmann::json& j) {
  BoolFunc f{j.at("arity").get<size_t>(), bool_expr_from_json(j.at("pred"))};
  f.validate();
  return f;
}

static std::string key_expr_str(const KeyExpr& e) {
  switch (e.op) {
    case KeyExpr::Op::Const: return std::to_string(e.value);
    case KeyExpr::Op::Ref: return "k" + std::to_string(e.value);
    default: {
      const char* sym = e.op == KeyExpr::Op::Add ? "+"
                      : e.op == KeyExpr::Op::Sub ? "-"
                      : e.op == KeyExpr::Op::Mul ? "*"
                      : e.op == KeyExpr::Op::Div ? "/"
                                                 : "%";
      return "(" + key_expr_str(e.kids[0]) + sym + key_expr_str(e.kids[1]) + ")";
    }
  }
}

std::string key_func_to_string(const KeyFunc& f) {
  if (f.is_identity()) return "id";
  std::string s;
  for (size_t r = 0; r < f.rows.size(); ++r) {
    if (r) s += "|";
    s += "<";
    for (size_t i = 0; i < f.rows[r].size(); ++i) {
      if (i) s += ",";
      s += key_expr_str(f.rows[r][i]);
    }
    s += ">";
  }
  return s;
}

static std::string bool_expr_str(const BoolExpr& e) {
  switch (e.op) {
    case BoolExpr::Op::True: return "true";
    case BoolExpr::Op::False: return "false";
    case BoolExpr::Op::And:
    case BoolExpr::Op::Or: {
      std::string s = "(";
      for (size_t i = 0; i < e.kids.size(); ++i) {
        if (i) s += e.op == BoolExpr::Op::And ? " & " : " | ";
        s += bool_expr_str(e.kids[i]);
      }
      return s + ")";
    }
    case BoolExpr::Op::Not: return "!" + bool_expr_str(e.kids[0]);
    default: {
      const char* sym = e.op == BoolExpr::Op::Eq ? "==" : e.op == BoolExpr::Op::Ne ? "!="
                      : e.op == BoolExpr::Op::Lt ? "<"  : e.op == BoolExpr::Op::Le ? "<="
                      : e.op == BoolExpr::Op::Gt ? ">"                             : ">=";
      return key_expr_str(e.args[0]) + sym + key_expr_str(e.args[1]);
    }
  }
}

std::string bool_func_to_string(const BoolFunc& f) { return bool_expr_str(f.pred); }

}  // namespace tra
