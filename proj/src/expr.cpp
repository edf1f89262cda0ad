#include "fq/expr.hpp"

#include <cmath>

#include "json.hpp"

namespace fq {

using nlohmann::json;

// --- registry ------------------------------------------------------------

const std::map<std::string, std::vector<BuiltinSig>>& builtin_registry() {
  static const std::map<std::string, std::vector<BuiltinSig>> reg = {
      // safe
      {"len", {{{Type::Str}, Type::Int}}},
      {"abs", {{{Type::Int}, Type::Int}, {{Type::Float}, Type::Float}}},
      {"floor", {{{Type::Float}, Type::Float}}},
      {"ceil", {{{Type::Float}, Type::Float}}},
      {"upper", {{{Type::Str}, Type::Str}}},
      {"lower", {{{Type::Str}, Type::Str}}},
      // restricted: read guarded device state, require a per-user grant
      {"device_id", {{{}, Type::Str}}},
      {"geo_lat", {{{}, Type::Float}}},
      {"geo_lon", {{{}, Type::Float}}},
      {"clipboard", {{{}, Type::Str}}},
  };
  return reg;
}

bool is_known_builtin(const std::string& name) {
  return name == "dyncall" || builtin_registry().count(name) > 0;
}

bool is_restricted_builtin(const std::string& name) {
  return name == "device_id" || name == "geo_lat" || name == "geo_lon" ||
         name == "clipboard";
}

// --- tree ------------------------------------------------------------------

ExprPtr Expr::clone() const {
  auto e = std::make_unique<Expr>();
  e->kind = kind;
  e->path = path;
  e->lit = lit;
  e->name = name;
  e->as_type = as_type;
  for (auto& a : args) e->args.push_back(a->clone());
  return e;
}

void walk_expr(const Expr& e, const std::function<void(const Expr&)>& fn) {
  fn(e);
  for (auto& a : e.args) walk_expr(*a, fn);
}

// --- parse / serialize -------------------------------------------------

static Value value_from_json(const json& j, const std::string& path) {
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number_float()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_boolean()) return Value(j.get<bool>());
  throw Error("BadExpr", "unsupported literal at " + path);
}

static json value_to_json(const Value& v) {
  switch (v.type()) {
    case Type::Int: return v.as_int();
    case Type::Float: return v.as_float();
    case Type::Str: return v.as_str();
    case Type::Bool: return v.as_bool();
  }
  return nullptr;
}

static const char* kArith[] = {"+", "-", "*", "/"};
static const char* kCmp[] = {"==", "!=", "<", "<=", ">", ">="};

static bool in_list(const std::string& s, const char* const* list, size_t n) {
  for (size_t i = 0; i < n; i++)
    if (s == list[i]) return true;
  return false;
}

static ExprPtr parse_expr_json(const json& j, const std::string& path);

static void parse_args(const json& j, Expr& e, const std::string& path,
                       size_t min_n, size_t max_n) {
  if (!j.contains("args") || !j["args"].is_array())
    throw Error("BadExpr", "missing args array at " + path);
  const auto& arr = j["args"];
  if (arr.size() < min_n || arr.size() > max_n)
    throw Error("BadArity", "wrong argument count at " + path);
  for (size_t i = 0; i < arr.size(); i++)
    e.args.push_back(parse_expr_json(arr[i], path + "/args/" + std::to_string(i)));
}

static ExprPtr parse_expr_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw Error("BadExpr", "expression must be an object at " + path);
  auto e = std::make_unique<Expr>();
  e->path = path;
  if (j.contains("lit")) {
    e->kind = ExprKind::Lit;
    e->lit = value_from_json(j["lit"], path);
  } else if (j.contains("col")) {
    e->kind = ExprKind::Col;
    e->name = j["col"].get<std::string>();
  } else if (j.contains("param")) {
    e->kind = ExprKind::Param;
    e->name = j["param"].get<std::string>();
  } else if (j.contains("arith")) {
    e->kind = ExprKind::Arith;
    e->name = j["arith"].get<std::string>();
    if (!in_list(e->name, kArith, 4))
      throw Error("BadExpr", "unknown arithmetic op '" + e->name + "' at " + path);
    parse_args(j, *e, path, 2, 2);
  } else if (j.contains("cmp")) {
    e->kind = ExprKind::Cmp;
    e->name = j["cmp"].get<std::string>();
    if (!in_list(e->name, kCmp, 6))
      throw Error("BadExpr", "unknown comparison op '" + e->name + "' at " + path);
    parse_args(j, *e, path, 2, 2);
  } else if (j.contains("bool")) {
    e->kind = ExprKind::Bool;
    e->name = j["bool"].get<std::string>();
    if (e->name == "not") parse_args(j, *e, path, 1, 1);
    else if (e->name == "and" || e->name == "or") parse_args(j, *e, path, 2, 2);
    else throw Error("BadExpr", "unknown bool op '" + e->name + "' at " + path);
  } else if (j.contains("call")) {
    e->kind = ExprKind::Call;
    e->name = j["call"].get<std::string>();
    if (e->name == "dyncall") {
      if (!j.contains("as"))
        throw Error("BadExpr", "dyncall needs a declared result type at " + path);
      e->as_type = type_from_name(j["as"].get<std::string>());
      parse_args(j, *e, path, 1, 8);
    } else {
      if (!is_known_builtin(e->name))
        throw Error("UnknownBuiltin", "no builtin '" + e->name + "' at " + path);
      parse_args(j, *e, path, 0, 8);
    }
  } else if (j.contains("check")) {
    if (j["check"].get<std::string>() != "dyncall" || !j.contains("inner"))
      throw Error("BadExpr", "malformed check node at " + path);
    e->kind = ExprKind::DynCheck;
    e->args.push_back(parse_expr_json(j["inner"], path + "/inner"));
    if (e->args[0]->kind != ExprKind::Call || e->args[0]->name != "dyncall")
      throw Error("BadExpr", "check node must wrap a dyncall at " + path);
  } else {
    throw Error("BadExpr", "unrecognized expression node at " + path);
  }
  return e;
}

ExprPtr parse_expr_text(const std::string& json_text, const std::string& path) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& ex) {
    throw Error("BadExpr", std::string("parse failure: ") + ex.what());
  }
  return parse_expr_json(j, path);
}

static json expr_to_json(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Lit: return json{{"lit", value_to_json(e.lit)}};
    case ExprKind::Col: return json{{"col", e.name}};
    case ExprKind::Param: return json{{"param", e.name}};
    case ExprKind::Arith:
    case ExprKind::Cmp:
    case ExprKind::Bool:
    case ExprKind::Call: {
      json a = json::array();
      for (auto& x : e.args) a.push_back(expr_to_json(*x));
      const char* key = e.kind == ExprKind::Arith ? "arith"
                        : e.kind == ExprKind::Cmp ? "cmp"
                        : e.kind == ExprKind::Bool ? "bool"
                                                   : "call";
      json out{{key, e.name}, {"args", a}};
      if (e.kind == ExprKind::Call && e.name == "dyncall")
        out["as"] = type_name(e.as_type);
      return out;
    }
    case ExprKind::DynCheck:
      return json{{"check", "dyncall"}, {"inner", expr_to_json(*e.args[0])}};
  }
  return nullptr;
}

std::string expr_to_text(const Expr& e) { return expr_to_json(e).dump(); }

// --- type check ------------------------------------------------------------

static bool numeric(Type t) { return t == Type::Int || t == Type::Float; }

static Type check_call(const Expr& e, const Schema& schema, const ParamMap& params);

Type type_check(const Expr& e, const Schema& schema, const ParamMap& params) {
  switch (e.kind) {
    case ExprKind::Lit:
      return e.lit.type();
    case ExprKind::Col: {
      int i = schema.index_of(e.name);
      if (i < 0) throw Error("UnknownColumn", "no column '" + e.name + "' at " + e.path);
      return schema.columns[static_cast<size_t>(i)].type;
    }
    case ExprKind::Param: {
      auto it = params.find(e.name);
      if (it == params.end())
        throw Error("UnknownParam", "no parameter '" + e.name + "' at " + e.path);
      return it->second.type();
    }
    case ExprKind::Arith: {
      Type a = type_check(*e.args[0], schema, params);
      Type b = type_check(*e.args[1], schema, params);
      if (!numeric(a) || !numeric(b))
        throw Error("TypeMismatch", "arith '" + e.name + "' needs numeric operands at " + e.path);
      if (e.name == "/") return Type::Float;  // division always widens
      return (a == Type::Int && b == Type::Int) ? Type::Int : Type::Float;
    }
    case ExprKind::Cmp: {
      Type a = type_check(*e.args[0], schema, params);
      Type b = type_check(*e.args[1], schema, params);
      bool ok = (numeric(a) && numeric(b)) ||
                (a == Type::Str && b == Type::Str) ||
                (a == Type::Bool && b == Type::Bool &&
                 (e.name == "==" || e.name == "!="));
      if (!ok)
        throw Error("TypeMismatch", "cannot compare " + std::string(type_name(a)) +
                                        " with " + type_name(b) + " at " + e.path);
      return Type::Bool;
    }
    case ExprKind::Bool: {
      for (auto& a : e.args)
        if (type_check(*a, schema, params) != Type::Bool)
          throw Error("TypeMismatch", "bool op needs bool operands at " + e.path);
      return Type::Bool;
    }
    case ExprKind::Call:
      return check_call(e, schema, params);
    case ExprKind::DynCheck:
      return type_check(*e.args[0], schema, params);
  }
  throw Error("BadExpr", "unreachable");
}

static Type check_call(const Expr& e, const Schema& schema, const ParamMap& params) {
  if (e.name == "dyncall") {
    if (e.args.empty() || type_check(*e.args[0], schema, params) != Type::Str)
      throw Error("TypeMismatch", "dyncall needs a string name operand at " + e.path);
    for (size_t i = 1; i < e.args.size(); i++) type_check(*e.args[i], schema, params);
    return e.as_type;  // declared; verified against the resolved target at runtime
  }
  auto it = builtin_registry().find(e.name);
  if (it == builtin_registry().end())
    throw Error("UnknownBuiltin", "no builtin '" + e.name + "' at " + e.path);
  std::vector<Type> at;
  for (auto& a : e.args) at.push_back(type_check(*a, schema, params));
  for (auto& sig : it->second) {
    if (sig.params == at) return sig.result;
  }
  throw Error("TypeMismatch", "no overload of '" + e.name + "' matches at " + e.path);
}

// --- evaluation ------------------------------------------------------------

static std::int64_t checked_int_arith(const std::string& op, std::int64_t a,
                                      std::int64_t b, const std::string& path) {
  std::int64_t r = 0;
  bool ovf = false;
  if (op == "+") ovf = __builtin_add_overflow(a, b, &r);
  else if (op == "-") ovf = __builtin_sub_overflow(a, b, &r);
  else if (op == "*") ovf = __builtin_mul_overflow(a, b, &r);
  if (ovf) throw Error("Overflow", "integer overflow at " + path);
  return r;
}

static Value apply_builtin(const std::string& name, const std::vector<Value>& av,
                           const EvalContext& ctx, const std::string& path);

Value eval_expr(const Expr& e, const std::vector<Value>& row, const Schema& schema,
                const EvalContext& ctx) {
  switch (e.kind) {
    case ExprKind::Lit:
      return e.lit;
    case ExprKind::Col: {
      int i = schema.index_of(e.name);
      if (i < 0) throw Error("UnknownColumn", "no column '" + e.name + "' at " + e.path);
      return row[static_cast<size_t>(i)];
    }
    case ExprKind::Param: {
      auto it = ctx.params ? ctx.params->find(e.name) : ParamMap::const_iterator{};
      if (!ctx.params || it == ctx.params->end())
        throw Error("UnknownParam", "no parameter '" + e.name + "' at " + e.path);
      return it->second;
    }
    case ExprKind::Arith: {
      Value a = eval_expr(*e.args[0], row, schema, ctx);
      Value b = eval_expr(*e.args[1], row, schema, ctx);
      if (e.name == "/") {
        double d = b.num();
        if (d == 0.0) throw Error("DivisionByZero", "division by zero at " + e.path);
        return Value(a.num() / d);
      }
      if (a.type() == Type::Int && b.type() == Type::Int)
        return Value(checked_int_arith(e.name, a.as_int(), b.as_int(), e.path));
      double x = a.num(), y = b.num();
      if (e.name == "+") return Value(x + y);
      if (e.name == "-") return Value(x - y);
      return Value(x * y);
    }
    case ExprKind::Cmp: {
      Value a = eval_expr(*e.args[0], row, schema, ctx);
      Value b = eval_expr(*e.args[1], row, schema, ctx);
      int c;  // -1/0/+1, or equality only for bools
      if (a.type() == Type::Str && b.type() == Type::Str)
        c = a.as_str().compare(b.as_str()) < 0 ? -1 : (a.as_str() == b.as_str() ? 0 : 1);
      else if (a.type() == Type::Bool || b.type() == Type::Bool)
        c = (a.as_bool() == b.as_bool()) ? 0 : 1;
      else {
        double x = a.num(), y = b.num();
        c = x < y ? -1 : (x == y ? 0 : 1);
      }
      if (e.name == "==") return Value(c == 0);
      if (e.name == "!=") return Value(c != 0);
      if (e.name == "<") return Value(c < 0);
      if (e.name == "<=") return Value(c <= 0);
      if (e.name == ">") return Value(c > 0);
      return Value(c >= 0);
    }
    case ExprKind::Bool: {
      if (e.name == "not")
        return Value(!eval_expr(*e.args[0], row, schema, ctx).as_bool());
      bool a = eval_expr(*e.args[0], row, schema, ctx).as_bool();
      if (e.name == "and") return Value(a && eval_expr(*e.args[1], row, schema, ctx).as_bool());
      return Value(a || eval_expr(*e.args[1], row, schema, ctx).as_bool());
    }
    case ExprKind::Call: {
      if (e.name == "dyncall") {
        // Direct (unguarded) evaluation: used only before instrumentation.
        std::string target = eval_expr(*e.args[0], row, schema, ctx).as_str();
        std::vector<Value> av;
        for (size_t i = 1; i < e.args.size(); i++)
          av.push_back(eval_expr(*e.args[i], row, schema, ctx));
        Value r = apply_builtin(target, av, ctx, e.path);
        if (r.type() != e.as_type)
          throw Error("TypeMismatch", "dyncall target '" + target + "' returned " +
                                          type_name(r.type()) + ", declared " +
                                          type_name(e.as_type) + " at " + e.path);
        return r;
      }
      std::vector<Value> av;
      for (auto& a : e.args) av.push_back(eval_expr(*a, row, schema, ctx));
      return apply_builtin(e.name, av, ctx, e.path);
    }
    case ExprKind::DynCheck: {
      const Expr& inner = *e.args[0];
      std::string target = eval_expr(*inner.args[0], row, schema, ctx).as_str();
      if (ctx.inspector) ctx.inspector->check_dyncall(target);
      std::vector<Value> av;
      for (size_t i = 1; i < inner.args.size(); i++)
        av.push_back(eval_expr(*inner.args[i], row, schema, ctx));
      Value r = apply_builtin(target, av, ctx, inner.path);
      if (r.type() != inner.as_type)
        throw Error("TypeMismatch", "dyncall target '" + target + "' returned " +
                                        type_name(r.type()) + ", declared " +
                                        type_name(inner.as_type) + " at " + inner.path);
      return r;
    }
  }
  throw Error("BadExpr", "unreachable");
}

static Value apply_builtin(const std::string& name, const std::vector<Value>& av,
                           const EvalContext& ctx, const std::string& path) {
  auto it = builtin_registry().find(name);
  if (it == builtin_registry().end())
    throw Error("UnknownBuiltin", "no builtin '" + name + "' at " + path);
  std::vector<Type> at;
  for (auto& v : av) at.push_back(v.type());
  const BuiltinSig* sig = nullptr;
  for (auto& s : it->second)
    if (s.params == at) { sig = &s; break; }
  if (!sig)
    throw Error("TypeMismatch", "no overload of '" + name + "' matches at " + path);

  if (name == "len") return Value(static_cast<std::int64_t>(av[0].as_str().size()));
  if (name == "abs")
    return at[0] == Type::Int ? Value(av[0].as_int() < 0 ? -av[0].as_int() : av[0].as_int())
                              : Value(std::fabs(av[0].as_float()));
  if (name == "floor") return Value(std::floor(av[0].as_float()));
  if (name == "ceil") return Value(std::ceil(av[0].as_float()));
  if (name == "upper" || name == "lower") {
    std::string s = av[0].as_str();
    for (char& c : s)
      c = name == "upper" ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                          : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return Value(s);
  }
  // restricted: guarded device state
  const DeviceEnv env_default{};
  const DeviceEnv& env = ctx.env ? *ctx.env : env_default;
  if (name == "device_id") return Value(env.device_id);
  if (name == "geo_lat") return Value(env.geo_lat);
  if (name == "geo_lon") return Value(env.geo_lon);
  if (name == "clipboard") return Value(env.clipboard);
  throw Error("UnknownBuiltin", "no builtin '" + name + "' at " + path);
}

}  // namespace fq
