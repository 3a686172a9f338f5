#include "procqa/tool_spec.hpp"

#include <sstream>

#include "procqa/plan.hpp"

namespace procqa {

std::string_view to_string(ValueKind k) {
  switch (k) {
    case ValueKind::Video: return "video-handle";
    case ValueKind::Frames: return "frame-collection";
    case ValueKind::Detections: return "detection-list";
    case ValueKind::Text: return "text";
    case ValueKind::Spans: return "span-list";
    case ValueKind::Score: return "score";
  }
  return "?";
}

std::optional<ValueKind> parse_value_kind(std::string_view s) {
  for (auto k : {ValueKind::Video, ValueKind::Frames, ValueKind::Detections, ValueKind::Text,
                 ValueKind::Spans, ValueKind::Score}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

bool kind_assignable(ValueKind from, ValueKind to) {
  if (from == to) return true;
  if (from == ValueKind::Frames && to == ValueKind::Spans) return true;
  if (from == ValueKind::Detections && to == ValueKind::Text) return true;
  return false;
}

const ParamSpec* ToolSpec::find_param(std::string_view n) const {
  for (const auto& p : params) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

const ToolSpec* find_tool(const ToolCatalog& catalog, std::string_view name) {
  for (const auto& t : catalog) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string describe_catalog(const ToolCatalog& catalog) {
  std::ostringstream out;
  for (const auto& t : catalog) {
    out << t.name << "(";
    for (std::size_t i = 0; i < t.params.size(); ++i) {
      const auto& p = t.params[i];
      if (i) out << ", ";
      out << p.name << ": " << (p.repeated ? "list of " : "") << to_string(p.kind);
      if (!p.choices.empty()) {
        out << " {";
        for (std::size_t c = 0; c < p.choices.size(); ++c) out << (c ? "|" : "") << p.choices[c];
        out << "}";
      }
      if (!p.required) {
        out << " = " << (p.default_value ? format_arg(*p.default_value) : "none");
      }
    }
    out << ") -> " << to_string(t.output_kind) << "\n    " << t.description << "\n";
  }
  return out.str();
}

}  // namespace procqa
