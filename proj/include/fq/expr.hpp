#pragma once
// Expression tree for the declarative query IR.
//
// Expressions are shipped as structured text, type-checked against a dataset
// schema before admission, and evaluated row-by-row on device. There is no
// user-supplied executable code anywhere: the only call targets are builtins
// from a fixed registry, plus `dyncall`, which resolves a builtin by a
// runtime-computed name and is therefore guarded by an injected check node.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fq/table.hpp"
#include "fq/value.hpp"

namespace fq {

// Scalar query parameters, bound at dispatch time (not baked into artifacts).
using ParamMap = std::map<std::string, Value>;

// Thrown when a runtime privacy check fails; carries the wire-stable code.
struct ViolationAbort {
  int code;
  std::string detail;
};

// Hooks the privacy layer installs around execution. `check_*` either returns
// (allowed, access recorded) or throws ViolationAbort. The default inspector
// permits everything and records nothing; devices never use the default.
class RuntimeInspector {
 public:
  virtual ~RuntimeInspector() = default;
  virtual void check_dataset(const std::string& /*name*/) {}
  virtual void check_dyncall(const std::string& /*name*/) {}
};

// Synthetic stand-ins for permission-guarded platform state, readable only
// through restricted builtins.
struct DeviceEnv {
  std::string device_id;
  double geo_lat = 0.0;
  double geo_lon = 0.0;
  std::string clipboard;
};

enum class ExprKind {
  Lit,       // constant
  Col,       // column reference
  Param,     // dispatch-time parameter reference
  Arith,     // + - * /
  Cmp,       // == != < <= > >=
  Bool,      // and or not
  Call,      // builtin invocation, including dyncall
  DynCheck,  // injected guard around a dyncall (instrumented artifacts only)
};

struct Expr {
  ExprKind kind;
  std::string path;  // location in the pipeline document, for diagnostics
  Value lit;
  std::string name;            // column/param name, operator, builtin name
  Type as_type = Type::Int;    // declared result type (dyncall only)
  std::vector<std::unique_ptr<Expr>> args;

  std::unique_ptr<Expr> clone() const;
};

using ExprPtr = std::unique_ptr<Expr>;

// Builtin registry. Overloads are allowed (abs works on int and float);
// restricted builtins touch guarded device state and need a per-user grant.
struct BuiltinSig {
  std::vector<Type> params;
  Type result;
};
const std::map<std::string, std::vector<BuiltinSig>>& builtin_registry();
bool is_known_builtin(const std::string& name);
bool is_restricted_builtin(const std::string& name);

// Structured-text round trip. Serialization is canonical (sorted keys, stable
// number rendering), so identical trees produce identical bytes.
ExprPtr parse_expr_text(const std::string& json_text, const std::string& path);
std::string expr_to_text(const Expr& e);

// Static type check. Throws Error{TypeMismatch|UnknownColumn|UnknownParam|
// UnknownBuiltin|BadArity} with the node path in the message.
Type type_check(const Expr& e, const Schema& schema, const ParamMap& params);

struct EvalContext {
  const ParamMap* params = nullptr;
  const DeviceEnv* env = nullptr;
  RuntimeInspector* inspector = nullptr;
};

// Row evaluation. Throws Error{Overflow|DivisionByZero|...} on execution
// errors and ViolationAbort out of injected check nodes.
Value eval_expr(const Expr& e, const std::vector<Value>& row, const Schema& schema,
                const EvalContext& ctx);

// Collects pointers matching a predicate in document order (used by the
// privacy layer to locate dyncall sites and by tests to count guards).
void walk_expr(const Expr& e, const std::function<void(const Expr&)>& fn);

}  // namespace fq
