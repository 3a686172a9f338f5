#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace procqa {

// Every failure the engine reports carries one of these codes; the CLI maps
// them to exit codes and structured error JSON.
enum class Errc {
  InvalidSpan,
  SchemaError,
  ReferentialError,
  SpanError,
  ParseError,
  UnsupportedConstruct,
  InvalidGraph,
  DimensionMismatch,
  ZeroVector,
  MissingAnnotation,
  DuplicateOutput,
  UndefinedReference,
  NotFound,
  CorruptAsset,
  InvalidCount,
  InvalidArgument,
  BackendUnavailable,
  BackendError,
  EmptyEvidence,
  OutputKindMismatch,
  PlanningFailed,
  StepFailed,
  EmptyPlan,
  EmptyGroundTruth,
  JudgeParseError,
  UnknownItem,
  ConfigError,
  IoError,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

  // Source position for parser errors (1-based).
  std::optional<int> line;
  std::optional<int> column;
  // JSON pointer into the offending document, for schema errors.
  std::optional<std::string> json_path;
  // 1-based plan step for execution failures.
  std::optional<int> step;
  std::optional<std::string> qa_id;
  // Underlying failure when this error wraps another (StepFailed etc).
  std::optional<Errc> cause;

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace procqa
