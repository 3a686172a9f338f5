#pragma once

// Straight-line tool-call programs:
//
//   @question "How was the butter prepared?"
//   @qa_type Preparation
//   v = Video_Load(path="butter_600s")
//   frames = Frame_Sample(video=v, n=50)
//
// See docs/plan_grammar.md for the full grammar.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "procqa/dataset.hpp"
#include "procqa/plan_value.hpp"
#include "procqa/tool_spec.hpp"

namespace procqa {

struct ToolCall {
  std::string output_name;
  std::string tool_name;
  std::vector<std::pair<std::string, ArgValue>> args;  // written order, unique keys
  int line = 0;  // source line, 0 when built in code; ignored by ==

  const ArgValue* find_arg(std::string_view name) const;
  bool operator==(const ToolCall& o) const {
    return output_name == o.output_name && tool_name == o.tool_name && args == o.args;
  }
};

struct Plan {
  std::vector<ToolCall> steps;
  std::string question;
  std::optional<QaType> qa_type;

  bool operator==(const Plan&) const = default;
};

// Throws Error with ParseError (line/column), DuplicateOutput or
// UndefinedReference (line). Never consults a registry.
Plan parse_plan(std::string_view text);

// Canonical text; parse_plan(format_plan(p)) == p.
std::string format_plan(const Plan& plan);
std::string format_call(const ToolCall& call);
std::string format_arg(const ArgValue& value);

bool is_identifier(std::string_view s);
bool is_tool_name(std::string_view s);

enum class ViolationKind {
  UnknownTool,
  MissingParam,
  UnknownParam,
  TypeMismatch,
  InvalidValue,
  UndefinedReference,
  DuplicateOutput,
  MissingAnswer,
  Syntax,    // planner reply that does not parse
  NoReply,   // planner backend failed to answer
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  int step = 0;  // 1-based
  std::string param;
  std::string message;

  bool operator==(const Violation&) const = default;
};

std::string to_string(const Violation& v);

// Static check against a tool catalog; empty result means the plan is safe to
// execute.
std::vector<Violation> validate_plan(const Plan& plan, const ToolCatalog& catalog);

// Full check of plan text as produced by a planner: parse failures become
// Syntax, DuplicateOutput or UndefinedReference violations (step 0, line in
// the message), then catalog checks, then MissingAnswer unless the last step
// calls Answer_Gen. Markdown code fence lines are ignored. `parsed` receives
// the plan when it parses.
std::vector<Violation> check_plan_text(std::string_view text, const ToolCatalog& catalog,
                                       Plan* parsed = nullptr);

// Static kind of a step output, if its tool is known.
std::optional<ValueKind> output_kind(const Plan& plan, std::string_view name,
                                     const ToolCatalog& catalog);

}  // namespace procqa
