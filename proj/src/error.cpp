#include "procqa/error.hpp"

namespace procqa {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidSpan: return "InvalidSpan";
    case Errc::SchemaError: return "SchemaError";
    case Errc::ReferentialError: return "ReferentialError";
    case Errc::SpanError: return "SpanError";
    case Errc::ParseError: return "ParseError";
    case Errc::UnsupportedConstruct: return "UnsupportedConstruct";
    case Errc::InvalidGraph: return "InvalidGraph";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::MissingAnnotation: return "MissingAnnotation";
    case Errc::DuplicateOutput: return "DuplicateOutput";
    case Errc::UndefinedReference: return "UndefinedReference";
    case Errc::NotFound: return "NotFound";
    case Errc::CorruptAsset: return "CorruptAsset";
    case Errc::InvalidCount: return "InvalidCount";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::BackendError: return "BackendError";
    case Errc::EmptyEvidence: return "EmptyEvidence";
    case Errc::OutputKindMismatch: return "OutputKindMismatch";
    case Errc::PlanningFailed: return "PlanningFailed";
    case Errc::StepFailed: return "StepFailed";
    case Errc::EmptyPlan: return "EmptyPlan";
    case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::JudgeParseError: return "JudgeParseError";
    case Errc::UnknownItem: return "UnknownItem";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace procqa
