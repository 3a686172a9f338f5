#pragma once

// Question answering end to end: plan synthesis, plan execution over a tool
// registry with a per-step trace, and benchmark runs over a dataset.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "procqa/dataset.hpp"
#include "procqa/error.hpp"
#include "procqa/http_client.hpp"
#include "procqa/plan.hpp"
#include "procqa/task_graph.hpp"
#include "procqa/tools.hpp"

namespace procqa {

// ---- planning ------------------------------------------------------------

enum class PlannerKind { Llm, Template };

struct PlannerBackend {
  PlannerKind kind = PlannerKind::Template;
  std::optional<std::string> model_endpoint;
  std::string prompt_template_id = "planner_v1";
  CompletionFn complete;  // required for Llm
  int max_retries = 2;

  static PlannerBackend template_planner() { return {}; }
  // Throws ConfigError when the endpoint is empty or no completion is given.
  static PlannerBackend llm(std::string endpoint, CompletionFn complete, int max_retries = 2);
};

struct PlanRequest {
  std::string question;
  QaType qa_type = QaType::Preparation;
  std::optional<std::string> object_hint;
  std::string video_path;
  std::int64_t frames = kDefaultFrameCount;
  std::optional<TaskGraph> task_graph;  // injected into Mistake plans
};

struct PlanningEvent {
  enum class Kind { Retry, Fallback };
  Kind kind = Kind::Retry;
  int attempt = 0;  // 1-based planner attempt that was rejected
  std::vector<Violation> violations;
};

struct PlanResult {
  Plan plan;
  std::vector<PlanningEvent> events;
  bool fallback = false;
};

// Question-derived template inputs.
std::string planner_object_query(const std::string& question,
                                 const std::optional<std::string>& object_hint);
// Clock times ("2:00", "1:02:03") and second counts ("90s") in order of
// appearance, as milliseconds.
std::vector<Millis> question_time_anchors(const std::string& question);

// The deterministic per-type plan.
Plan template_plan(const PlanRequest& request);

std::string planner_prompt(const PlanRequest& request, const ToolCatalog& catalog,
                           const std::string& template_id,
                           const std::vector<Violation>& previous_violations);

// Every returned plan validates against `catalog`. Throws PlanningFailed
// (with every violation list in the message) when even the template fails.
PlanResult make_plan(const PlanRequest& request, const ToolCatalog& catalog,
                     const PlannerBackend& backend);

// ---- execution -----------------------------------------------------------

enum class StepStatus { Ok, Error };

struct TraceEvent {
  int step_index = 0;  // 1-based, plan order
  std::string output_name;
  std::string tool_name;
  std::string args_digest;
  std::string output_digest;  // empty on error
  std::string started_at;     // ISO-8601 UTC
  std::string ended_at;
  StepStatus status = StepStatus::Ok;
  std::string error;
};

nlohmann::json trace_event_to_json(const TraceEvent& e);
nlohmann::json planning_event_to_json(const PlanningEvent& e);

struct ExecutionResult {
  Bindings bindings;
  std::vector<TraceEvent> trace;
  std::vector<nlohmann::json> args;  // bound arguments per executed step
};

// Raised by execute() when a step fails; carries the partial run.
class StepFailedError : public Error {
 public:
  StepFailedError(const Error& cause, int step, ExecutionResult partial);
  const ExecutionResult& partial() const noexcept { return partial_; }

 private:
  ExecutionResult partial_;
};

// Runs steps in written order. Throws EmptyPlan, InvalidArgument for a plan
// that does not validate, or StepFailedError (code StepFailed).
ExecutionResult execute(const Plan& plan, const ToolRegistry& registry, const ToolContext& ctx);

// ---- questions and benchmarks --------------------------------------------

struct Prediction {
  std::string qa_id;
  std::string answer;
  SpanSet evidence;
  std::string plan_text;
  std::string trace_ref;
  bool operator==(const Prediction&) const = default;
};

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
std::string predictions_to_text(const std::vector<Prediction>& preds);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

struct OrchestratorConfig {
  std::shared_ptr<const ToolRegistry> registry;
  PlannerBackend planner;
  std::int64_t frames = kDefaultFrameCount;
  std::optional<TaskGraph> task_graph;
  std::optional<std::filesystem::path> trace_dir;  // traces and bindings written here
  std::size_t parallelism = 1;
};

// Errors propagate with qa_id set.
Prediction answer_question(const VideoMeta& video, const QAItem& item,
                           const OrchestratorConfig& config);

struct FailureRecord {
  std::string qa_id;
  Errc code = Errc::BackendError;
  std::optional<Errc> cause;
  std::string message;
};

nlohmann::json failure_to_json(const FailureRecord& f);

struct BenchmarkRun {
  std::vector<Prediction> predictions;  // dataset item order
  std::vector<FailureRecord> failures;  // dataset item order
};

BenchmarkRun run_benchmark(const Dataset& dataset, const OrchestratorConfig& config);

}  // namespace procqa
