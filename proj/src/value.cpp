#include "fq/value.hpp"

namespace fq {

const char* type_name(Type t) {
  switch (t) {
    case Type::Int: return "int";
    case Type::Float: return "float";
    case Type::Str: return "string";
    case Type::Bool: return "bool";
  }
  return "?";
}

Type type_from_name(const std::string& s) {
  if (s == "int") return Type::Int;
  if (s == "float") return Type::Float;
  if (s == "string") return Type::Str;
  if (s == "bool") return Type::Bool;
  throw Error("BadSchema", "unknown type name '" + s + "'");
}

Type Value::type() const {
  switch (v.index()) {
    case 0: return Type::Int;
    case 1: return Type::Float;
    case 2: return Type::Str;
    default: return Type::Bool;
  }
}

double Value::num() const {
  if (type() == Type::Int) return static_cast<double>(as_int());
  if (type() == Type::Float) return as_float();
  throw Error("TypeMismatch", "value is not numeric");
}

}  // namespace fq
