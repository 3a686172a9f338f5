#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "procqa/temporal.hpp"

namespace procqa {

// Reference to an earlier step's output.
struct Ref {
  std::string name;
  bool operator==(const Ref&) const = default;
};

struct ArgValue;
using ArgList = std::vector<ArgValue>;

// Argument of a tool call: a literal (string, integer, real, boolean, span,
// list) or a reference. Spans are written in seconds as a two-number list,
// so a list holding exactly two numbers always denotes a span.
struct ArgValue {
  using Storage = std::variant<std::string, std::int64_t, double, bool, TimeSpan, Ref, ArgList>;
  Storage data;

  ArgValue() = default;
  ArgValue(std::string s) : data(std::move(s)) {}
  ArgValue(const char* s) : data(std::string(s)) {}
  ArgValue(std::int64_t i) : data(i) {}
  ArgValue(int i) : data(static_cast<std::int64_t>(i)) {}
  ArgValue(double d) : data(d) {}
  ArgValue(bool b) : data(b) {}
  ArgValue(TimeSpan s) : data(s) {}
  ArgValue(Ref r) : data(std::move(r)) {}
  ArgValue(ArgList l) : data(std::move(l)) {}

  template <typename T>
  bool is() const { return std::holds_alternative<T>(data); }
  template <typename T>
  const T& as() const { return std::get<T>(data); }

  bool operator==(const ArgValue& o) const { return data == o.data; }
};

}  // namespace procqa
