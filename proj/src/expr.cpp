#include "mrh/expr.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace mrh::jobs {

OpClass op_class(BinOp op) {
  switch (op) {
    case BinOp::add: case BinOp::sub: case BinOp::mul: case BinOp::div:
      return OpClass::arithmetic;
    case BinOp::lt: case BinOp::le: case BinOp::gt:
    case BinOp::ge: case BinOp::eq: case BinOp::ne:
      return OpClass::relational;
    case BinOp::land: case BinOp::lor:
      return OpClass::logical;
  }
  return OpClass::logical;  // unreachable
}

std::string op_name(BinOp op) {
  switch (op) {
    case BinOp::add: return "add";
    case BinOp::sub: return "sub";
    case BinOp::mul: return "mul";
    case BinOp::div: return "div";
    case BinOp::lt: return "lt";
    case BinOp::le: return "le";
    case BinOp::gt: return "gt";
    case BinOp::ge: return "ge";
    case BinOp::eq: return "eq";
    case BinOp::ne: return "ne";
    case BinOp::land: return "and";
    case BinOp::lor: return "or";
  }
  return "?";
}

std::optional<BinOp> op_from_name(const std::string& name) {
  static const std::map<std::string, BinOp> table = {
      {"add", BinOp::add}, {"sub", BinOp::sub}, {"mul", BinOp::mul},
      {"div", BinOp::div}, {"lt", BinOp::lt},   {"le", BinOp::le},
      {"gt", BinOp::gt},   {"ge", BinOp::ge},   {"eq", BinOp::eq},
      {"ne", BinOp::ne},   {"and", BinOp::land}, {"or", BinOp::lor},
  };
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::vector<BinOp> class_peers(BinOp op) {
  static const std::vector<BinOp> arith = {BinOp::add, BinOp::sub, BinOp::mul,
                                           BinOp::div};
  static const std::vector<BinOp> rel = {BinOp::lt, BinOp::le, BinOp::gt,
                                         BinOp::ge, BinOp::eq, BinOp::ne};
  static const std::vector<BinOp> logic = {BinOp::land, BinOp::lor};
  const std::vector<BinOp>* family = &logic;
  switch (op_class(op)) {
    case OpClass::arithmetic: family = &arith; break;
    case OpClass::relational: family = &rel; break;
    case OpClass::logical: family = &logic; break;
  }
  std::vector<BinOp> out;
  for (BinOp o : *family)
    if (o != op) out.push_back(o);
  return out;
}

// ---- builders -----------------------------------------------------------

static ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

ExprPtr constant(json v) {
  Expr e;
  e.kind = Expr::Kind::constant;
  e.value = std::move(v);
  return make(std::move(e));
}

ExprPtr var(std::string name) {
  Expr e;
  e.kind = Expr::Kind::variable;
  e.name = std::move(name);
  return make(std::move(e));
}

ExprPtr lnot(ExprPtr c) {
  Expr e;
  e.kind = Expr::Kind::lnot;
  e.kids = {std::move(c)};
  return make(std::move(e));
}

ExprPtr bin(BinOp op, ExprPtr l, ExprPtr r) {
  Expr e;
  e.kind = Expr::Kind::binary;
  e.op = op;
  e.kids = {std::move(l), std::move(r)};
  return make(std::move(e));
}

ExprPtr cond(ExprPtr c, ExprPtr t, ExprPtr f) {
  Expr e;
  e.kind = Expr::Kind::cond;
  e.kids = {std::move(c), std::move(t), std::move(f)};
  return make(std::move(e));
}

ExprPtr emit(ExprPtr key, ExprPtr val) {
  Expr e;
  e.kind = Expr::Kind::emit;
  e.kids = {std::move(key), std::move(val)};
  return make(std::move(e));
}

ExprPtr seq(std::vector<ExprPtr> kids) {
  Expr e;
  e.kind = Expr::Kind::seq;
  e.kids = std::move(kids);
  return make(std::move(e));
}

ExprPtr let(std::string name, ExprPtr value, ExprPtr body) {
  Expr e;
  e.kind = Expr::Kind::let;
  e.name = std::move(name);
  e.kids = {std::move(value), std::move(body)};
  return make(std::move(e));
}

ExprPtr foreach(std::string name, ExprPtr list, ExprPtr body) {
  Expr e;
  e.kind = Expr::Kind::foreach;
  e.name = std::move(name);
  e.kids = {std::move(list), std::move(body)};
  return make(std::move(e));
}

ExprPtr call(std::string fn, std::vector<ExprPtr> args) {
  Expr e;
  e.kind = Expr::Kind::call;
  e.name = std::move(fn);
  e.kids = std::move(args);
  return make(std::move(e));
}

// ---- typecheck ----------------------------------------------------------

std::string type_name(const Type& t) {
  switch (t.kind) {
    case Type::Kind::num: return "num";
    case Type::Kind::boolean: return "bool";
    case Type::Kind::str: return "str";
    case Type::Kind::unit: return "unit";
    case Type::Kind::arr:
      return "arr<" + type_name(Type{t.elem, Type::Kind::unit}) + ">";
  }
  return "?";
}

namespace {

struct TypeError {
  std::string msg;
};

[[noreturn]] void tfail(std::string msg) { throw TypeError{std::move(msg)}; }

Type check(const ExprPtr& e, const TypeEnv& env);

Type scalar_of(const json& v) {
  if (v.is_number()) return Type::num();
  if (v.is_boolean()) return Type::boolean();
  if (v.is_string()) return Type::str();
  if (v.is_null()) return Type::unit();
  tfail("unsupported constant kind");
}

Type check_const(const json& v) {
  if (v.is_array()) {
    if (v.empty()) return Type::arr(Type::Kind::unit);
    Type first = scalar_of(v[0]);
    if (first.kind == Type::Kind::unit || first.kind == Type::Kind::arr)
      tfail("array constants must hold scalars");
    for (const auto& el : v)
      if (!(scalar_of(el) == first)) tfail("mixed-type array constant");
    return Type::arr(first.kind);
  }
  return scalar_of(v);
}

void want(const Type& got, const Type& expect, const char* where) {
  if (!(got == expect))
    tfail(std::string(where) + ": expected " + type_name(expect) + ", got " +
          type_name(got));
}

Type check_binary(const Expr& e, const TypeEnv& env) {
  Type l = check(e.kids[0], env);
  Type r = check(e.kids[1], env);
  switch (op_class(e.op)) {
    case OpClass::arithmetic:
      want(l, Type::num(), "arithmetic lhs");
      want(r, Type::num(), "arithmetic rhs");
      return Type::num();
    case OpClass::relational:
      if (e.op == BinOp::eq || e.op == BinOp::ne) {
        if (!(l == r)) tfail("eq/ne operands must share a type");
        if (l.kind == Type::Kind::arr || l.kind == Type::Kind::unit)
          tfail("eq/ne compares scalars only");
        return Type::boolean();
      }
      if (l == Type::num() && r == Type::num()) return Type::boolean();
      if (l == Type::str() && r == Type::str()) return Type::boolean();
      tfail("ordering compares two nums or two strs, got " + type_name(l) +
            " and " + type_name(r));
    case OpClass::logical:
      want(l, Type::boolean(), "logical lhs");
      want(r, Type::boolean(), "logical rhs");
      return Type::boolean();
  }
  tfail("bad operator");
}

Type check_call(const Expr& e, const TypeEnv& env) {
  auto arity = [&](size_t n) {
    if (e.kids.size() != n)
      tfail(e.name + ": expected " + std::to_string(n) + " argument(s)");
  };
  if (e.name == "tokenize") {
    arity(1);
    want(check(e.kids[0], env), Type::str(), "tokenize");
    return Type::arr(Type::Kind::str);
  }
  if (e.name == "rand_point_x" || e.name == "rand_point_y") {
    arity(3);
    for (const auto& k : e.kids) want(check(k, env), Type::num(), e.name.c_str());
    return Type::num();
  }
  if (e.name == "sum") {
    arity(1);
    Type t = check(e.kids[0], env);
    if (t.kind != Type::Kind::arr ||
        (t.elem != Type::Kind::num && t.elem != Type::Kind::unit))
      tfail("sum wants arr<num>, got " + type_name(t));
    return Type::num();
  }
  if (e.name == "sum_range") {
    arity(2);
    want(check(e.kids[0], env), Type::num(), "sum_range count");
    TypeEnv inner = env;
    inner["i"] = Type::num();
    want(check(e.kids[1], inner), Type::num(), "sum_range body");
    return Type::num();
  }
  if (e.name == "round4") {
    arity(1);
    want(check(e.kids[0], env), Type::num(), "round4");
    return Type::num();
  }
  tfail("unknown builtin '" + e.name + "'");
}

Type check(const ExprPtr& e, const TypeEnv& env) {
  switch (e->kind) {
    case Expr::Kind::constant:
      return check_const(e->value);
    case Expr::Kind::variable: {
      auto it = env.find(e->name);
      if (it == env.end()) tfail("unbound variable '" + e->name + "'");
      return it->second;
    }
    case Expr::Kind::lnot:
      want(check(e->kids[0], env), Type::boolean(), "not");
      return Type::boolean();
    case Expr::Kind::binary:
      return check_binary(*e, env);
    case Expr::Kind::cond: {
      want(check(e->kids[0], env), Type::boolean(), "cond condition");
      Type t = check(e->kids[1], env);
      Type f = check(e->kids[2], env);
      if (!(t == f))
        tfail("cond branches differ: " + type_name(t) + " vs " + type_name(f));
      return t;
    }
    case Expr::Kind::emit: {
      Type k = check(e->kids[0], env);
      if (k.kind != Type::Kind::num && k.kind != Type::Kind::str)
        tfail("emit key must be num or str");
      Type v = check(e->kids[1], env);
      if (v.kind == Type::Kind::unit || v.kind == Type::Kind::arr)
        tfail("emit value must be a scalar");
      return Type::unit();
    }
    case Expr::Kind::seq: {
      Type last = Type::unit();
      for (const auto& k : e->kids) last = check(k, env);
      return last;
    }
    case Expr::Kind::let: {
      Type v = check(e->kids[0], env);
      TypeEnv inner = env;
      inner[e->name] = v;
      return check(e->kids[1], inner);
    }
    case Expr::Kind::foreach: {
      Type list = check(e->kids[0], env);
      if (list.kind != Type::Kind::arr) tfail("foreach wants an arr");
      TypeEnv inner = env;
      inner[e->name] = Type{list.elem, Type::Kind::unit};
      check(e->kids[1], inner);
      return Type::unit();
    }
    case Expr::Kind::call:
      return check_call(*e, env);
  }
  tfail("bad node");
}

}  // namespace

std::optional<std::string> typecheck(const ExprPtr& e, const TypeEnv& env) {
  try {
    check(e, env);
    return std::nullopt;
  } catch (const TypeError& te) {
    return te.msg;
  }
}

// ---- evaluation ---------------------------------------------------------

namespace {

struct Scope {
  const Bindings* base;
  std::vector<std::pair<std::string, json>> locals;

  const json& lookup(const std::string& name) const {
    for (auto it = locals.rbegin(); it != locals.rend(); ++it)
      if (it->first == name) return it->second;
    auto found = base->find(name);
    if (found == base->end())
      throw EvalFault("unbound variable '" + name + "'");
    return found->second;
  }
};

bool is_num(const json& v) { return v.is_number(); }
bool is_int(const json& v) {
  return v.is_number_integer() || v.is_number_unsigned();
}

std::int64_t as_int(const json& v) {
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw EvalFault("integer out of range");
    return static_cast<std::int64_t>(u);
  }
  return v.get<std::int64_t>();
}

double as_double(const json& v) {
  if (is_int(v)) return static_cast<double>(as_int(v));
  return v.get<double>();
}

json checked_double(double d, const char* what) {
  if (!std::isfinite(d)) throw EvalFault(std::string("non-finite ") + what);
  return json(d);
}

json int_arith(BinOp op, std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  bool ovf = false;
  switch (op) {
    case BinOp::add: ovf = __builtin_add_overflow(a, b, &r); break;
    case BinOp::sub: ovf = __builtin_sub_overflow(a, b, &r); break;
    case BinOp::mul: ovf = __builtin_mul_overflow(a, b, &r); break;
    default: throw EvalFault("bad int op");
  }
  if (ovf) throw EvalFault("integer overflow");
  return json(r);
}

json eval_in(const ExprPtr& e, Scope& sc, EmitSink& out);

json eval_binary(const Expr& e, Scope& sc, EmitSink& out) {
  json l = eval_in(e.kids[0], sc, out);
  json r = eval_in(e.kids[1], sc, out);
  switch (e.op) {
    case BinOp::add: case BinOp::sub: case BinOp::mul: {
      if (!is_num(l) || !is_num(r)) throw EvalFault("arithmetic on non-number");
      if (is_int(l) && is_int(r)) return int_arith(e.op, as_int(l), as_int(r));
      double a = as_double(l), b = as_double(r);
      double d = e.op == BinOp::add ? a + b : e.op == BinOp::sub ? a - b : a * b;
      return checked_double(d, "arithmetic result");
    }
    case BinOp::div: {
      if (!is_num(l) || !is_num(r)) throw EvalFault("arithmetic on non-number");
      double b = as_double(r);
      if (b == 0.0) throw EvalFault("division by zero");
      return checked_double(as_double(l) / b, "quotient");
    }
    case BinOp::lt: case BinOp::le: case BinOp::gt: case BinOp::ge: {
      int c;
      if (is_num(l) && is_num(r)) {
        if (is_int(l) && is_int(r)) {
          auto a = as_int(l), b = as_int(r);
          c = a < b ? -1 : a > b ? 1 : 0;
        } else {
          double a = as_double(l), b = as_double(r);
          c = a < b ? -1 : a > b ? 1 : 0;
        }
      } else if (l.is_string() && r.is_string()) {
        const auto& a = l.get_ref<const std::string&>();
        const auto& b = r.get_ref<const std::string&>();
        c = a < b ? -1 : a > b ? 1 : 0;
      } else {
        throw EvalFault("ordering on mismatched types");
      }
      switch (e.op) {
        case BinOp::lt: return json(c < 0);
        case BinOp::le: return json(c <= 0);
        case BinOp::gt: return json(c > 0);
        default: return json(c >= 0);
      }
    }
    case BinOp::eq: case BinOp::ne: {
      bool eq;
      if (is_num(l) && is_num(r)) {
        if (is_int(l) && is_int(r)) eq = as_int(l) == as_int(r);
        else eq = as_double(l) == as_double(r);
      } else if (l.is_string() && r.is_string()) {
        eq = l.get_ref<const std::string&>() == r.get_ref<const std::string&>();
      } else if (l.is_boolean() && r.is_boolean()) {
        eq = l.get<bool>() == r.get<bool>();
      } else {
        throw EvalFault("equality on mismatched types");
      }
      return json(e.op == BinOp::eq ? eq : !eq);
    }
    case BinOp::land: case BinOp::lor: {
      if (!l.is_boolean() || !r.is_boolean())
        throw EvalFault("logical op on non-bool");
      bool a = l.get<bool>(), b = r.get<bool>();
      return json(e.op == BinOp::land ? (a && b) : (a || b));
    }
  }
  throw EvalFault("bad operator");
}

std::uint64_t rand_counter(const json& task, const json& i, bool y_component) {
  if (!is_int(task) || !is_int(i))
    throw EvalFault("random stream wants integer task/index");
  std::int64_t t = as_int(task), n = as_int(i);
  if (t < 0 || n < 0) throw EvalFault("random stream wants non-negative ids");
  return (static_cast<std::uint64_t>(t) << 33) |
         (static_cast<std::uint64_t>(n) << 1) | (y_component ? 1u : 0u);
}

json eval_plain_call(const Expr& e, Scope& sc, EmitSink& out) {
  std::vector<json> a;
  a.reserve(e.kids.size());
  for (const auto& k : e.kids) a.push_back(eval_in(k, sc, out));

  if (e.name == "tokenize") {
    if (!a[0].is_string()) throw EvalFault("tokenize wants a string");
    const auto& s = a[0].get_ref<const std::string&>();
    json words = json::array();
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    };
    for (char ch : s) {
      if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' ||
          ch == '\v')
        flush();
      else
        cur.push_back(ch);
    }
    flush();
    return words;
  }
  if (e.name == "rand_point_x" || e.name == "rand_point_y") {
    if (!is_int(a[0])) throw EvalFault("random stream wants an integer seed");
    std::uint64_t seed = static_cast<std::uint64_t>(as_int(a[0]));
    std::uint64_t ctr = rand_counter(a[1], a[2], e.name == "rand_point_y");
    return json(unit_double(stream_u64(seed, ctr)));
  }
  if (e.name == "sum") {
    if (!a[0].is_array()) throw EvalFault("sum wants an array");
    bool any_float = false;
    std::int64_t isum = 0;
    double dsum = 0.0;
    for (const auto& el : a[0]) {
      if (!is_num(el)) throw EvalFault("sum over non-numbers");
      if (!any_float && is_int(el)) {
        std::int64_t r;
        if (__builtin_add_overflow(isum, as_int(el), &r)) {
          throw EvalFault("integer overflow");
        }
        isum = r;
      } else {
        if (!any_float) {
          dsum = static_cast<double>(isum);
          any_float = true;
        }
        dsum += as_double(el);
      }
    }
    if (any_float) return checked_double(dsum, "sum");
    return json(isum);
  }
  if (e.name == "round4") {
    if (!is_num(a[0])) throw EvalFault("round4 wants a number");
    return json(round_half_up4(as_double(a[0])));
  }
  throw EvalFault("unknown builtin '" + e.name + "'");
}

json eval_call(const Expr& e, Scope& sc, EmitSink& out) {
  // sum_range binds "i" afresh for every iteration of its body, so the body
  // must stay unevaluated here — it is a binder, not a plain function.
  if (e.name == "sum_range") {
    json cnt = eval_in(e.kids[0], sc, out);
    if (!is_int(cnt)) throw EvalFault("sum_range wants an integer count");
    std::int64_t n = as_int(cnt);
    if (n < 0) throw EvalFault("negative range");
    sc.locals.emplace_back("i", json(0));
    // Index, not a reference: the body's own let-bindings grow sc.locals and
    // would invalidate any reference held across iterations.
    const std::size_t slot_idx = sc.locals.size() - 1;
    bool any_float = false;
    std::int64_t isum = 0;
    double dsum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      sc.locals[slot_idx].second = json(i);
      json v = eval_in(e.kids[1], sc, out);
      if (!is_num(v)) {
        sc.locals.pop_back();
        throw EvalFault("sum_range body yielded a non-number");
      }
      if (!any_float && is_int(v)) {
        std::int64_t r;
        if (__builtin_add_overflow(isum, as_int(v), &r)) {
          sc.locals.pop_back();
          throw EvalFault("integer overflow");
        }
        isum = r;
      } else {
        if (!any_float) {
          dsum = static_cast<double>(isum);
          any_float = true;
        }
        dsum += as_double(v);
      }
    }
    sc.locals.pop_back();
    if (any_float) return checked_double(dsum, "sum");
    return json(isum);
  }
  return eval_plain_call(e, sc, out);
}

json eval_in(const ExprPtr& e, Scope& sc, EmitSink& out) {
  switch (e->kind) {
    case Expr::Kind::constant:
      return e->value;
    case Expr::Kind::variable:
      return sc.lookup(e->name);
    case Expr::Kind::lnot: {
      json v = eval_in(e->kids[0], sc, out);
      if (!v.is_boolean()) throw EvalFault("not on non-bool");
      return json(!v.get<bool>());
    }
    case Expr::Kind::binary:
      return eval_binary(*e, sc, out);
    case Expr::Kind::cond: {
      json c = eval_in(e->kids[0], sc, out);
      if (!c.is_boolean()) throw EvalFault("condition is not a bool");
      return eval_in(e->kids[c.get<bool>() ? 1 : 2], sc, out);
    }
    case Expr::Kind::emit: {
      json k = eval_in(e->kids[0], sc, out);
      json v = eval_in(e->kids[1], sc, out);
      out.emplace_back(std::move(k), std::move(v));
      return json(nullptr);
    }
    case Expr::Kind::seq: {
      json last(nullptr);
      for (const auto& k : e->kids) last = eval_in(k, sc, out);
      return last;
    }
    case Expr::Kind::let: {
      json v = eval_in(e->kids[0], sc, out);
      sc.locals.emplace_back(e->name, std::move(v));
      json r = eval_in(e->kids[1], sc, out);
      sc.locals.pop_back();
      return r;
    }
    case Expr::Kind::foreach: {
      json list = eval_in(e->kids[0], sc, out);
      if (!list.is_array()) throw EvalFault("foreach over non-array");
      sc.locals.emplace_back(e->name, json(nullptr));
      // Index, not a reference: the body's lets can reallocate sc.locals.
      const std::size_t slot_idx = sc.locals.size() - 1;
      for (auto& el : list) {
        sc.locals[slot_idx].second = el;
        eval_in(e->kids[1], sc, out);
      }
      sc.locals.pop_back();
      return json(nullptr);
    }
    case Expr::Kind::call:
      return eval_call(*e, sc, out);
  }
  throw EvalFault("bad node");
}

}  // namespace

json eval(const ExprPtr& e, const Bindings& env, EmitSink& out) {
  Scope sc{&env, {}};
  return eval_in(e, sc, out);
}

// ---- serialization & surgery --------------------------------------------

json expr_to_json(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::constant:
      return {{"k", "const"}, {"v", e->value}};
    case Expr::Kind::variable:
      return {{"k", "var"}, {"name", e->name}};
    case Expr::Kind::lnot:
      return {{"k", "not"}, {"a", expr_to_json(e->kids[0])}};
    case Expr::Kind::binary:
      return {{"k", "bin"},
              {"op", op_name(e->op)},
              {"l", expr_to_json(e->kids[0])},
              {"r", expr_to_json(e->kids[1])}};
    case Expr::Kind::cond:
      return {{"k", "cond"},
              {"c", expr_to_json(e->kids[0])},
              {"t", expr_to_json(e->kids[1])},
              {"f", expr_to_json(e->kids[2])}};
    case Expr::Kind::emit:
      return {{"k", "emit"},
              {"key", expr_to_json(e->kids[0])},
              {"val", expr_to_json(e->kids[1])}};
    case Expr::Kind::seq: {
      json body = json::array();
      for (const auto& k : e->kids) body.push_back(expr_to_json(k));
      return {{"k", "seq"}, {"body", std::move(body)}};
    }
    case Expr::Kind::let:
      return {{"k", "let"},
              {"name", e->name},
              {"v", expr_to_json(e->kids[0])},
              {"in", expr_to_json(e->kids[1])}};
    case Expr::Kind::foreach:
      return {{"k", "foreach"},
              {"name", e->name},
              {"list", expr_to_json(e->kids[0])},
              {"body", expr_to_json(e->kids[1])}};
    case Expr::Kind::call: {
      json args = json::array();
      for (const auto& k : e->kids) args.push_back(expr_to_json(k));
      return {{"k", "call"}, {"fn", e->name}, {"args", std::move(args)}};
    }
  }
  return json(nullptr);
}

bool same_tree(const ExprPtr& a, const ExprPtr& b) {
  return expr_to_json(a) == expr_to_json(b);
}

int diff_count(const ExprPtr& a, const ExprPtr& b) {
  if (a->kind != b->kind || a->name != b->name || a->value != b->value ||
      a->kids.size() != b->kids.size())
    return 1;
  if (a->kind == Expr::Kind::binary && a->op != b->op) return 1;
  int n = 0;
  for (size_t i = 0; i < a->kids.size(); ++i)
    n += diff_count(a->kids[i], b->kids[i]);
  return n;
}

ExprPtr node_at(const ExprPtr& root, const Path& path) {
  ExprPtr cur = root;
  for (int idx : path) {
    if (idx < 0 || static_cast<size_t>(idx) >= cur->kids.size())
      throw std::out_of_range("path leaves the tree");
    cur = cur->kids[idx];
  }
  return cur;
}

static ExprPtr replace_at(const ExprPtr& node, const Path& path, size_t depth,
                          BinOp op) {
  if (depth == path.size()) {
    if (node->kind != Expr::Kind::binary)
      throw std::out_of_range("path does not name a binary node");
    Expr copy = *node;
    copy.op = op;
    return std::make_shared<const Expr>(std::move(copy));
  }
  int idx = path[depth];
  if (idx < 0 || static_cast<size_t>(idx) >= node->kids.size())
    throw std::out_of_range("path leaves the tree");
  Expr copy = *node;
  copy.kids[idx] = replace_at(node->kids[idx], path, depth + 1, op);
  return std::make_shared<const Expr>(std::move(copy));
}

ExprPtr replace_op(const ExprPtr& root, const Path& path, BinOp op) {
  return replace_at(root, path, 0, op);
}

static void collect_sites(const ExprPtr& e, Path& path,
                          std::vector<OpSite>& out) {
  if (e->kind == Expr::Kind::binary) out.push_back({path, e->op});
  for (size_t i = 0; i < e->kids.size(); ++i) {
    path.push_back(static_cast<int>(i));
    collect_sites(e->kids[i], path, out);
    path.pop_back();
  }
}

std::vector<OpSite> op_sites(const ExprPtr& root) {
  std::vector<OpSite> out;
  Path path;
  collect_sites(root, path, out);
  return out;
}

}  // namespace mrh::jobs
