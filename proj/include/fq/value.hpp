#pragma once
// Scalar values and static types for the query IR.

#include <cstdint>
#include <string>
#include <variant>

#include "fq/common.hpp"

namespace fq {

enum class Type { Int, Float, Str, Bool };

const char* type_name(Type t);
Type type_from_name(const std::string& s);

struct Value {
  std::variant<std::int64_t, double, std::string, bool> v;

  Value() : v(std::int64_t{0}) {}
  Value(std::int64_t i) : v(i) {}
  Value(double d) : v(d) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(bool b) : v(b) {}

  Type type() const;
  std::int64_t as_int() const { return std::get<std::int64_t>(v); }
  double as_float() const { return std::get<double>(v); }
  const std::string& as_str() const { return std::get<std::string>(v); }
  bool as_bool() const { return std::get<bool>(v); }

  // Numeric widening for mixed int/float arithmetic and comparisons.
  double num() const;

  bool operator==(const Value& o) const { return v == o.v; }
};

}  // namespace fq
