#include "procqa/plan.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "procqa/error.hpp"

namespace procqa {

const ArgValue* ToolCall::find_arg(std::string_view name) const {
  for (const auto& [k, v] : args) {
    if (k == name) return &v;
  }
  return nullptr;
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  for (char c : s) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return s != "true" && s != "false";
}

bool is_tool_name(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

namespace {

[[noreturn]] void error_at(Errc code, int line, int column, const std::string& msg) {
  Error err(code, "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                      msg);
  err.line = line;
  err.column = column;
  throw err;
}

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class LineParser {
 public:
  LineParser(std::string_view text, int line, const std::set<std::string>& defined)
      : s_(text), line_(line), defined_(defined) {}

  int line() const { return line_; }
  int column() const { return static_cast<int>(pos_) + 1; }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  [[noreturn]] void fail_here(const std::string& msg, Errc code = Errc::ParseError) const {
    error_at(code, line_, column(), msg);
  }

  void skip_ws() {
    while (!at_end() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  // True when only whitespace or a comment remains.
  bool rest_is_blank() {
    skip_ws();
    return at_end() || peek() == '#';
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) {
      fail_here(std::string("expected '") + c + "'" +
                (at_end() ? " before end of line" : std::string(", found '") + peek() + "'"));
    }
    ++pos_;
  }

  std::string word() {
    skip_ws();
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      ++pos_;
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string string_literal() {
    skip_ws();
    const int start_col = column();
    if (peek() != '"') fail_here("expected a quoted string");
    ++pos_;
    std::string out;
    while (true) {
      if (at_end()) error_at(Errc::ParseError, line_, start_col, "unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) error_at(Errc::ParseError, line_, start_col, "unterminated string");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) fail_here("truncated \\u escape");
          unsigned cp = 0;
          auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 4, cp, 16);
          if (ec != std::errc() || p != s_.data() + pos_ + 4) fail_here("malformed \\u escape");
          pos_ += 4;
          append_utf8(out, cp);
          break;
        }
        default:
          error_at(Errc::ParseError, line_, column() - 1,
                   std::string("unknown escape '\\") + e + "'");
      }
    }
    return out;
  }

  ArgValue value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return string_literal();
    if (c == '[') return list();
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const int col = column();
      std::string w = word();
      if (w == "true") return true;
      if (w == "false") return false;
      if (!is_identifier(w)) error_at(Errc::ParseError, line_, col, "invalid reference '" + w + "'");
      if (!defined_.contains(w)) {
        error_at(Errc::UndefinedReference, line_, col,
                 "reference to undefined output '" + w + "'");
      }
      return Ref{w};
    }
    if (at_end()) fail_here("expected a value before end of line");
    fail_here(std::string("unexpected character '") + c + "'");
  }

 private:
  ArgValue number() {
    const int col = column();
    const std::size_t start = pos_;
    if (peek() == '-') ++pos_;
    bool is_real = false;
    auto digits = [&] {
      const std::size_t d0 = pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      return pos_ > d0;
    };
    if (!digits()) error_at(Errc::ParseError, line_, col, "malformed number");
    if (peek() == '.') {
      ++pos_;
      is_real = true;
      if (!digits()) error_at(Errc::ParseError, line_, col, "malformed number");
    }
    if (peek() == 'e' || peek() == 'E') {
      ++pos_;
      is_real = true;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (!digits()) error_at(Errc::ParseError, line_, col, "malformed exponent");
    }
    const char* b = s_.data() + start;
    const char* e = s_.data() + pos_;
    if (is_real) {
      double d = 0;
      auto [p, ec] = std::from_chars(b, e, d);
      if (ec != std::errc() || p != e || !std::isfinite(d)) {
        error_at(Errc::ParseError, line_, col, "real literal out of range");
      }
      return d;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(b, e, i);
    if (ec != std::errc() || p != e) error_at(Errc::ParseError, line_, col, "integer out of range");
    return i;
  }

  ArgValue list() {
    const int col = column();
    ++pos_;
    ArgList items;
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return items;
    }
    while (true) {
      items.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      fail_here("expected ',' or ']' in list");
    }
    auto numeric = [](const ArgValue& v) { return v.is<std::int64_t>() || v.is<double>(); };
    if (items.size() == 2 && numeric(items[0]) && numeric(items[1])) {
      auto to_ms = [&](const ArgValue& v) -> Millis {
        if (v.is<std::int64_t>()) {
          const auto s = v.as<std::int64_t>();
          if (s > 9'000'000'000'000LL || s < -9'000'000'000'000LL) {
            error_at(Errc::ParseError, line_, col, "span endpoint out of range");
          }
          return s * 1000;
        }
        const double d = v.as<double>();
        if (std::fabs(d) > 9e12) error_at(Errc::ParseError, line_, col, "span endpoint out of range");
        return seconds_to_ms(d);
      };
      const Millis s = to_ms(items[0]);
      const Millis e = to_ms(items[1]);
      if (s < 0 || e <= s) {
        error_at(Errc::ParseError, line_, col, "invalid span: need 0 <= start < end (seconds)");
      }
      return TimeSpan::make(s, e);
    }
    return items;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
  const std::set<std::string>& defined_;
};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == text.size()) break;
    start = nl + 1;
  }
  return lines;
}

}  // namespace

Plan parse_plan(std::string_view text) {
  Plan plan;
  std::set<std::string> defined;
  bool seen_question = false, seen_type = false;
  const auto lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const int line_no = static_cast<int>(li) + 1;
    LineParser p(lines[li], line_no, defined);
    if (p.rest_is_blank()) continue;

    if (p.peek() == '@') {
      p.expect('@');
      const int col = p.column();
      const std::string name = p.word();
      if (name == "question") {
        if (seen_question) error_at(Errc::ParseError, line_no, col, "duplicate @question");
        plan.question = p.string_literal();
        seen_question = true;
      } else if (name == "qa_type") {
        if (seen_type) error_at(Errc::ParseError, line_no, col, "duplicate @qa_type");
        const int tcol = p.column() + 1;
        const std::string t = p.word();
        auto qt = parse_qa_type(t);
        if (!qt) error_at(Errc::ParseError, line_no, tcol, "unknown qa_type '" + t + "'");
        plan.qa_type = *qt;
        seen_type = true;
      } else {
        error_at(Errc::ParseError, line_no, col, "unknown directive '@" + name + "'");
      }
      if (!p.rest_is_blank()) p.fail_here("unexpected trailing content");
      continue;
    }

    ToolCall call;
    call.line = line_no;
    p.skip_ws();
    const int out_col = p.column();
    call.output_name = p.word();
    if (call.output_name.empty()) p.fail_here("expected an output name");
    if (!is_identifier(call.output_name)) {
      error_at(Errc::ParseError, line_no, out_col,
               "invalid output name '" + call.output_name + "' (want [a-z][a-z0-9_]*)");
    }
    p.expect('=');
    p.skip_ws();
    const int tool_col = p.column();
    call.tool_name = p.word();
    if (!is_tool_name(call.tool_name)) {
      error_at(Errc::ParseError, line_no, tool_col, "expected a tool name");
    }
    p.expect('(');
    p.skip_ws();
    if (p.peek() != ')') {
      std::set<std::string> keys;
      while (true) {
        p.skip_ws();
        const int kcol = p.column();
        std::string key = p.word();
        if (!is_identifier(key)) {
          error_at(Errc::ParseError, line_no, kcol, "expected a parameter name");
        }
        if (!keys.insert(key).second) {
          error_at(Errc::ParseError, line_no, kcol, "duplicate parameter '" + key + "'");
        }
        p.expect('=');
        call.args.emplace_back(std::move(key), p.value());
        p.skip_ws();
        if (p.peek() == ',') {
          p.expect(',');
          continue;
        }
        break;
      }
    }
    p.expect(')');
    if (!p.rest_is_blank()) p.fail_here("unexpected trailing content");
    if (defined.contains(call.output_name)) {
      error_at(Errc::DuplicateOutput, line_no, out_col,
               "output '" + call.output_name + "' is assigned twice");
    }
    defined.insert(call.output_name);
    plan.steps.push_back(std::move(call));
  }
  return plan;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

std::string compact_seconds(Millis ms) {
  std::string s = format_seconds(ms);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string format_real(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, p);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::string format_arg(const ArgValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return quote(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_real(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, TimeSpan>) {
          return "[" + compact_seconds(v.start_ms()) + ", " + compact_seconds(v.end_ms()) + "]";
        } else if constexpr (std::is_same_v<T, Ref>) {
          return v.name;
        } else {
          std::string out = "[";
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += ", ";
            out += format_arg(v[i]);
          }
          return out + "]";
        }
      },
      value.data);
}

std::string format_call(const ToolCall& call) {
  std::string out = call.output_name + " = " + call.tool_name + "(";
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    if (i) out += ", ";
    out += call.args[i].first + "=" + format_arg(call.args[i].second);
  }
  return out + ")";
}

std::string format_plan(const Plan& plan) {
  std::string out;
  if (!plan.question.empty()) out += "@question " + quote(plan.question) + "\n";
  if (plan.qa_type) out += "@qa_type " + std::string(to_string(*plan.qa_type)) + "\n";
  for (const auto& step : plan.steps) out += format_call(step) + "\n";
  return out;
}

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::UnknownTool: return "UnknownTool";
    case ViolationKind::MissingParam: return "MissingParam";
    case ViolationKind::UnknownParam: return "UnknownParam";
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::InvalidValue: return "InvalidValue";
    case ViolationKind::UndefinedReference: return "UndefinedReference";
    case ViolationKind::DuplicateOutput: return "DuplicateOutput";
    case ViolationKind::MissingAnswer: return "MissingAnswer";
    case ViolationKind::Syntax: return "Syntax";
    case ViolationKind::NoReply: return "NoReply";
  }
  return "?";
}

std::string to_string(const Violation& v) {
  std::string out = std::string(to_string(v.kind)) + " at step " + std::to_string(v.step);
  if (!v.param.empty()) out += " (" + v.param + ")";
  return out + ": " + v.message;
}

std::optional<ValueKind> output_kind(const Plan& plan, std::string_view name,
                                     const ToolCatalog& catalog) {
  for (const auto& step : plan.steps) {
    if (step.output_name == name) {
      if (const ToolSpec* spec = find_tool(catalog, step.tool_name)) return spec->output_kind;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

struct Checker {
  const ToolCatalog& catalog;
  // Output names bound so far, with their kind when the producing tool is known.
  std::map<std::string, std::optional<ValueKind>> bound;
  std::vector<Violation> out;
  int step = 0;

  void add(ViolationKind k, const std::string& param, std::string msg) {
    out.push_back({k, step, param, std::move(msg)});
  }

  // Checks one scalar (non-list) value against the parameter's element kind.
  void check_scalar(const ParamSpec& p, const ArgValue& v) {
    if (v.is<Ref>()) {
      const auto& name = v.as<Ref>().name;
      auto it = bound.find(name);
      if (it == bound.end()) {
        add(ViolationKind::UndefinedReference, p.name, "reference to undefined output '" + name + "'");
        return;
      }
      if (it->second && !kind_assignable(*it->second, p.kind)) {
        add(ViolationKind::TypeMismatch, p.name,
            "'" + name + "' is " + std::string(to_string(*it->second)) + ", expected " +
                std::string(to_string(p.kind)));
      }
      return;
    }
    auto mismatch = [&](const char* what) {
      add(ViolationKind::TypeMismatch, p.name,
          std::string(what) + " literal where " + std::string(to_string(p.kind)) + " is expected");
    };
    if (v.is<std::string>()) {
      if (p.kind != ValueKind::Text) return mismatch("string");
      if (!p.choices.empty() &&
          std::find(p.choices.begin(), p.choices.end(), v.as<std::string>()) == p.choices.end()) {
        add(ViolationKind::InvalidValue, p.name, "'" + v.as<std::string>() + "' is not an allowed value");
      }
    } else if (v.is<std::int64_t>() || v.is<double>()) {
      if (p.kind != ValueKind::Score) return mismatch("numeric");
      if (p.integer && v.is<double>()) return mismatch("real");
      const double x = v.is<double>() ? v.as<double>() : static_cast<double>(v.as<std::int64_t>());
      if (p.min_value && x < *p.min_value) {
        add(ViolationKind::InvalidValue, p.name, "value below minimum");
      }
    } else if (v.is<bool>()) {
      mismatch("boolean");
    } else if (v.is<TimeSpan>()) {
      if (p.kind != ValueKind::Spans) mismatch("span");
    } else {
      mismatch("list");
    }
  }

  void check_arg(const ParamSpec& p, const ArgValue& v) {
    if (!v.is<ArgList>()) return check_scalar(p, v);
    if (!p.repeated && p.kind != ValueKind::Spans) {
      add(ViolationKind::TypeMismatch, p.name,
          "list literal where a single " + std::string(to_string(p.kind)) + " is expected");
      return;
    }
    for (const auto& e : v.as<ArgList>()) {
      if (e.is<ArgList>()) {
        add(ViolationKind::TypeMismatch, p.name, "nested list literal");
        continue;
      }
      check_scalar(p, e);
    }
  }

  void check_step(const ToolCall& call) {
    const ToolSpec* spec = find_tool(catalog, call.tool_name);
    if (!spec) {
      add(ViolationKind::UnknownTool, "", "unknown tool '" + call.tool_name + "'");
      // Still surface dangling references so removing a producer is visible.
      std::function<void(const ArgValue&)> refs = [&](const ArgValue& v) {
        if (v.is<Ref>() && !bound.contains(v.as<Ref>().name)) {
          add(ViolationKind::UndefinedReference, "", "reference to undefined output '" + v.as<Ref>().name + "'");
        } else if (v.is<ArgList>()) {
          for (const auto& e : v.as<ArgList>()) refs(e);
        }
      };
      for (const auto& [k, v] : call.args) refs(v);
    } else {
      for (const auto& [name, value] : call.args) {
        const ParamSpec* p = spec->find_param(name);
        if (!p) {
          add(ViolationKind::UnknownParam, name,
              "tool " + spec->name + " has no parameter '" + name + "'");
          continue;
        }
        check_arg(*p, value);
      }
      for (const auto& p : spec->params) {
        if (p.required && !call.find_arg(p.name)) {
          add(ViolationKind::MissingParam, p.name, "required parameter '" + p.name + "' missing");
        }
      }
    }
    if (bound.contains(call.output_name)) {
      add(ViolationKind::DuplicateOutput, "", "output '" + call.output_name + "' is assigned twice");
    } else {
      bound[call.output_name] = spec ? std::optional(spec->output_kind) : std::nullopt;
    }
  }
};

}  // namespace

std::vector<Violation> validate_plan(const Plan& plan, const ToolCatalog& catalog) {
  Checker c{catalog, {}, {}, 0};
  for (const auto& call : plan.steps) {
    ++c.step;
    c.check_step(call);
  }
  return std::move(c.out);
}

std::vector<Violation> check_plan_text(std::string_view text, const ToolCatalog& catalog,
                                       Plan* parsed) {
  std::string cleaned;
  for (auto line : split_lines(text)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line.substr(first).rfind("```", 0) == 0) line = {};
    cleaned.append(line);
    cleaned += '\n';
  }
  Plan plan;
  try {
    plan = parse_plan(cleaned);
  } catch (const Error& e) {
    const ViolationKind kind = e.code() == Errc::DuplicateOutput      ? ViolationKind::DuplicateOutput
                               : e.code() == Errc::UndefinedReference ? ViolationKind::UndefinedReference
                                                                      : ViolationKind::Syntax;
    return {{kind, 0, "", e.what()}};
  }
  auto out = validate_plan(plan, catalog);
  if (plan.steps.empty() || plan.steps.back().tool_name != "Answer_Gen") {
    out.push_back({ViolationKind::MissingAnswer, static_cast<int>(plan.steps.size()), "",
                   "the plan must end with an Answer_Gen call"});
  }
  if (parsed) *parsed = std::move(plan);
  return out;
}

}  // namespace procqa
