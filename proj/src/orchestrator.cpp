#include "procqa/orchestrator.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <regex>
#include <set>

#include "procqa/assets.hpp"
#include "procqa/json_util.hpp"
#include "procqa/parallel.hpp"

namespace procqa {

// ---- planning ------------------------------------------------------------

PlannerBackend PlannerBackend::llm(std::string endpoint, CompletionFn complete, int max_retries) {
  if (endpoint.empty()) fail(Errc::ConfigError, "the LLM planner needs an endpoint");
  if (!complete) fail(Errc::ConfigError, "the LLM planner needs a completion function");
  if (max_retries < 0) fail(Errc::ConfigError, "planner retries must be >= 0");
  PlannerBackend b;
  b.kind = PlannerKind::Llm;
  b.model_endpoint = std::move(endpoint);
  b.complete = std::move(complete);
  b.max_retries = max_retries;
  return b;
}

std::string planner_object_query(const std::string& question,
                                 const std::optional<std::string>& object_hint) {
  if (object_hint && !object_hint->empty()) return *object_hint;
  const auto open = question.find('"');
  if (open != std::string::npos) {
    const auto close = question.find('"', open + 1);
    if (close != std::string::npos && close > open + 1) return question.substr(open + 1, close - open - 1);
  }
  return question;
}

std::vector<Millis> question_time_anchors(const std::string& question) {
  static const std::regex re(
      R"((?:^|[^\d:.])(?:(\d{1,2}):)?(\d{1,2}):(\d{2})(?![\d:])|(\d+(?:\.\d+)?)\s*(?:s|sec|secs|seconds)\b)");
  std::vector<Millis> out;
  for (auto it = std::sregex_iterator(question.begin(), question.end(), re);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (m[4].matched) {
      out.push_back(seconds_to_ms(std::stod(m[4].str())));
      continue;
    }
    const long long h = m[1].matched ? std::stoll(m[1].str()) : 0;
    const long long mm = std::stoll(m[2].str());
    const long long ss = std::stoll(m[3].str());
    if (ss >= 60 || (m[1].matched && mm >= 60)) continue;
    out.push_back(((h * 60 + mm) * 60 + ss) * 1000);
  }
  return out;
}

namespace {

// A reference wide enough that "within" keeps every frame of any video.
const TimeSpan kWholeTimeline = TimeSpan::make(0, 1'000'000'000'000);
constexpr std::int64_t kTemplateTopK = 16;

TimeSpan anchor_span(Millis t) { return TimeSpan::make(t, t + 1000); }

struct TemplateBuilder {
  Plan plan;

  void call(std::string out, std::string tool, std::vector<std::pair<std::string, ArgValue>> args) {
    plan.steps.push_back({std::move(out), std::move(tool), std::move(args), 0});
  }
};

// A trim that keeps frames on one side of an anchor, or everything.
std::pair<std::string, TimeSpan> trim_around(std::optional<Millis> anchor, const char* relation) {
  if (!anchor) return {"within", kWholeTimeline};
  return {relation, anchor_span(*anchor)};
}

}  // namespace

Plan template_plan(const PlanRequest& r) {
  TemplateBuilder b;
  b.plan.question = r.question;
  b.plan.qa_type = r.qa_type;
  const std::string query = planner_object_query(r.question, r.object_hint);
  std::vector<Millis> anchors = question_time_anchors(r.question);
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());

  b.call("video", "Video_Load", {{"path", r.video_path}});
  b.call("frames", "Frame_Sample", {{"video", Ref{"video"}}, {"n", r.frames}});

  switch (r.qa_type) {
    case QaType::Preparation: {
      // The object's state just before the anchor event.
      const auto [rel, ref] =
          trim_around(anchors.empty() ? std::nullopt : std::optional(anchors.front()), "before");
      b.call("hits", "Frame_Retrieve",
             {{"frames", Ref{"frames"}}, {"query", query}, {"top_k", kTemplateTopK}});
      b.call("before", "Frame_Trim",
             {{"frames", Ref{"hits"}}, {"relation", rel}, {"reference", ref}});
      b.call("captions", "Img_Caption", {{"frames", Ref{"before"}}});
      b.call("context", "Context_Sum", {{"texts", ArgList{Ref{"captions"}}}});
      b.call("answer", "Answer_Gen",
             {{"question", r.question},
              {"context", Ref{"context"}},
              {"frames", Ref{"before"}},
              {"evidence_hint", Ref{"before"}}});
      break;
    }
    case QaType::Evolution: {
      // Two windows around the interval the question names.
      std::optional<Millis> first, last;
      if (!anchors.empty()) {
        first = anchors.front();
        last = anchors.back();
      }
      const auto [early_rel, early_ref] = trim_around(first, "before");
      const auto [late_rel, late_ref] = trim_around(last, "after");
      b.call("hits", "Frame_Retrieve",
             {{"frames", Ref{"frames"}}, {"query", query}, {"top_k", kTemplateTopK}});
      b.call("early", "Frame_Trim",
             {{"frames", Ref{"hits"}}, {"relation", early_rel}, {"reference", early_ref}});
      b.call("late", "Frame_Trim",
             {{"frames", Ref{"hits"}}, {"relation", late_rel}, {"reference", late_ref}});
      b.call("early_captions", "Img_Caption", {{"frames", Ref{"early"}}});
      b.call("late_captions", "Img_Caption", {{"frames", Ref{"late"}}});
      b.call("context", "Context_Sum",
             {{"texts", ArgList{Ref{"early_captions"}, Ref{"late_captions"}}}});
      b.call("answer", "Answer_Gen",
             {{"question", r.question},
              {"context", Ref{"context"}},
              {"frames", Ref{"hits"}},
              {"evidence_hint", ArgList{Ref{"early"}, Ref{"late"}}}});
      break;
    }
    case QaType::Counterfactual: {
      b.call("hits", "Frame_Retrieve",
             {{"frames", Ref{"frames"}}, {"query", query}, {"top_k", kTemplateTopK}});
      b.call("hit_captions", "Img_Caption", {{"frames", Ref{"hits"}}});
      b.call("all_captions", "Img_Caption", {{"frames", Ref{"frames"}}});
      b.call("context", "Context_Sum",
             {{"texts", ArgList{Ref{"hit_captions"}, Ref{"all_captions"}}}});
      b.call("answer", "Answer_Gen",
             {{"question", r.question},
              {"context", Ref{"context"}},
              {"frames", Ref{"frames"}},
              {"evidence_hint", Ref{"hits"}}});
      break;
    }
    case QaType::Mistake: {
      b.call("actions", "Action_Rec", {{"frames", Ref{"frames"}}});
      b.call("hits", "Frame_Retrieve",
             {{"frames", Ref{"frames"}}, {"query", query}, {"top_k", kTemplateTopK}});
      b.call("captions", "Img_Caption", {{"frames", Ref{"hits"}}});
      ArgList texts{Ref{"actions"}, Ref{"captions"}};
      if (r.task_graph) {
        for (const auto& line : task_graph_lines(*r.task_graph)) texts.emplace_back("step order: " + line);
      }
      b.call("context", "Context_Sum", {{"texts", std::move(texts)}});
      b.call("answer", "Answer_Gen",
             {{"question", r.question},
              {"context", Ref{"context"}},
              {"frames", Ref{"hits"}},
              {"evidence_hint", Ref{"hits"}}});
      break;
    }
  }
  return b.plan;
}

std::string planner_prompt(const PlanRequest& request, const ToolCatalog& catalog,
                           const std::string& template_id,
                           const std::vector<Violation>& previous_violations) {
  const auto tmpl = prompt_template(template_id);
  if (!tmpl) fail(Errc::ConfigError, "unknown planner prompt template '" + template_id + "'");
  std::string feedback;
  if (!previous_violations.empty()) {
    feedback = "\nYour previous program was rejected:\n";
    for (const auto& v : previous_violations) feedback += "- " + to_string(v) + "\n";
    feedback += "Write a corrected program.\n";
  }
  if (request.task_graph) {
    feedback += "\nKnown step order of this task (from -> to):\n";
    for (const auto& line : task_graph_lines(*request.task_graph)) feedback += line + "\n";
  }
  return render_template(*tmpl, {{"catalog", describe_catalog(catalog)},
                                 {"grammar", std::string(plan_grammar_ebnf())},
                                 {"video_path", request.video_path},
                                 {"qa_type", std::string(to_string(request.qa_type))},
                                 {"question", request.question},
                                 {"feedback", feedback}});
}

namespace {

std::string violations_text(const std::vector<std::vector<Violation>>& lists) {
  std::string out;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    out += "\n  attempt " + std::to_string(i + 1) + ":";
    for (const auto& v : lists[i]) out += "\n    " + to_string(v);
  }
  return out;
}

}  // namespace

PlanResult make_plan(const PlanRequest& request, const ToolCatalog& catalog,
                     const PlannerBackend& backend) {
  if (catalog.empty()) fail(Errc::InvalidArgument, "cannot plan against an empty tool catalog");
  PlanResult result;
  std::vector<std::vector<Violation>> rejected;

  if (backend.kind == PlannerKind::Llm) {
    if (!backend.model_endpoint || !backend.complete) {
      fail(Errc::ConfigError, "the LLM planner needs an endpoint");
    }
    std::vector<Violation> previous;
    const int attempts = backend.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      std::vector<Violation> violations;
      Plan plan;
      try {
        const std::string reply =
            backend.complete(planner_prompt(request, catalog, backend.prompt_template_id, previous));
        violations = check_plan_text(reply, catalog, &plan);
      } catch (const Error& e) {
        if (e.code() != Errc::BackendUnavailable && e.code() != Errc::BackendError) throw;
        violations = {{ViolationKind::NoReply, 0, "", e.what()}};
      }
      if (violations.empty()) {
        plan.question = request.question;
        plan.qa_type = request.qa_type;
        result.plan = std::move(plan);
        return result;
      }
      rejected.push_back(violations);
      result.events.push_back({attempt < attempts ? PlanningEvent::Kind::Retry
                                                  : PlanningEvent::Kind::Fallback,
                               attempt, violations});
      previous = std::move(violations);
    }
    result.fallback = true;
  }

  result.plan = template_plan(request);
  auto violations = validate_plan(result.plan, catalog);
  if (!violations.empty()) {
    rejected.push_back(std::move(violations));
    Error err(Errc::PlanningFailed, "no valid plan:" + violations_text(rejected));
    throw err;
  }
  return result;
}

// ---- execution -----------------------------------------------------------

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch());
  const std::time_t secs = static_cast<std::time_t>(ms.count() / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms.count() % 1000));
  return out;
}

}  // namespace

nlohmann::json trace_event_to_json(const TraceEvent& e) {
  nlohmann::json j = {
      {"type", "step"},
      {"step_index", e.step_index},
      {"output", e.output_name},
      {"tool", e.tool_name},
      {"args_digest", e.args_digest},
      {"output_digest", e.output_digest},
      {"started_at", e.started_at},
      {"ended_at", e.ended_at},
      {"status", e.status == StepStatus::Ok ? "ok" : "error"},
  };
  if (e.status == StepStatus::Error) j["error"] = e.error;
  return j;
}

nlohmann::json planning_event_to_json(const PlanningEvent& e) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : e.violations) {
    v.push_back({{"kind", std::string(to_string(x.kind))},
                 {"step", x.step},
                 {"param", x.param},
                 {"message", x.message}});
  }
  return {{"type", "planning"},
          {"event", e.kind == PlanningEvent::Kind::Retry ? "retry" : "fallback"},
          {"attempt", e.attempt},
          {"violations", v}};
}

StepFailedError::StepFailedError(const Error& cause, int step, ExecutionResult partial)
    : Error(Errc::StepFailed, "step " + std::to_string(step) + " failed: " +
                                  std::string(errc_name(cause.code())) + ": " + cause.what()),
      partial_(std::move(partial)) {
  this->step = step;
  this->cause = cause.code();
  qa_id = cause.qa_id;
}

ExecutionResult execute(const Plan& plan, const ToolRegistry& registry, const ToolContext& ctx) {
  if (plan.steps.empty()) fail(Errc::EmptyPlan, "the plan has no steps");
  const auto violations = validate_plan(plan, registry);
  if (!violations.empty()) {
    std::string msg = "plan does not validate against the registry:";
    for (const auto& v : violations) msg += "\n  " + to_string(v);
    fail(Errc::InvalidArgument, msg);
  }
  ExecutionResult run;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const ToolCall& call = plan.steps[i];
    TraceEvent ev;
    ev.step_index = static_cast<int>(i) + 1;
    ev.output_name = call.output_name;
    ev.tool_name = call.tool_name;
    ev.started_at = iso_now();
    try {
      try {
        const CallArgs args = bind_call(*registry.spec(call.tool_name), call, run.bindings);
        nlohmann::json args_json = args.to_json();
        ev.args_digest = digest_text(args_json.dump());
        ToolValue value = registry.invoke(call.tool_name, args, ctx);
        ev.output_digest = digest_text(tool_value_to_json(value).dump());
        ev.ended_at = iso_now();
        run.args.push_back(std::move(args_json));
        run.bindings[call.output_name] = std::move(value);
        run.trace.push_back(std::move(ev));
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        fail(Errc::BackendError, e.what());
      }
    } catch (const Error& e) {
      ev.ended_at = iso_now();
      ev.status = StepStatus::Error;
      ev.error = std::string(errc_name(e.code())) + ": " + e.what();
      run.trace.push_back(std::move(ev));
      throw StepFailedError(e, static_cast<int>(i) + 1, std::move(run));
    }
  }
  return run;
}

// ---- questions and benchmarks --------------------------------------------

nlohmann::json prediction_to_json(const Prediction& p) {
  return {{"qa_id", p.qa_id},
          {"answer", p.answer},
          {"evidence", spanset_to_json(p.evidence)},
          {"plan_text", p.plan_text},
          {"trace_ref", p.trace_ref}};
}

Prediction prediction_from_json(const nlohmann::json& j) {
  JsonCursor c(j);
  c.object();
  Prediction p;
  p.qa_id = c.at("qa_id").str();
  p.answer = c.at("answer").str();
  const auto ev = c.at("evidence");
  ev.array();
  try {
    p.evidence = spanset_from_json(ev.node());
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaError) throw;
    ev.schema_fail(e.what());
  }
  if (auto pt = c.maybe("plan_text")) p.plan_text = pt->str();
  if (auto tr = c.maybe("trace_ref")) p.trace_ref = tr->str();
  return p;
}

std::string predictions_to_text(const std::vector<Prediction>& preds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : preds) arr.push_back(prediction_to_json(p));
  return arr.dump(2) + "\n";
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  const auto doc = read_json_file(path);
  JsonCursor c(doc);
  std::vector<Prediction> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.array().size(); ++i) {
    out.push_back(prediction_from_json(c.at(i).node()));
    if (!seen.insert(out.back().qa_id).second) {
      c.at(i).at("qa_id").schema_fail("duplicate prediction for '" + out.back().qa_id + "'");
    }
  }
  return out;
}

namespace {

void persist_trace(const std::filesystem::path& dir, const std::string& qa_id,
                   const std::vector<PlanningEvent>& planning, const Plan* plan,
                   const ExecutionResult& run) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& e : planning) lines += planning_event_to_json(e).dump() + "\n";
  for (const auto& e : run.trace) lines += trace_event_to_json(e).dump() + "\n";
  write_file_atomic(dir / (qa_id + ".trace.jsonl"), lines);

  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; plan && i < run.args.size(); ++i) {
    const auto& call = plan->steps[i];
    steps.push_back({{"step_index", i + 1},
                     {"output", call.output_name},
                     {"tool", call.tool_name},
                     {"args", run.args[i]},
                     {"value", tool_value_to_json(run.bindings.at(call.output_name))}});
  }
  write_file_atomic(dir / (qa_id + ".bindings.json"), steps.dump(2) + "\n");
}

}  // namespace

Prediction answer_question(const VideoMeta& video, const QAItem& item,
                           const OrchestratorConfig& config) {
  std::vector<PlanningEvent> planning;
  try {
    if (item.video_id != video.video_id) {
      fail(Errc::InvalidArgument, "item '" + item.qa_id + "' belongs to video '" + item.video_id +
                                      "', not '" + video.video_id + "'");
    }
    if (!config.registry) fail(Errc::ConfigError, "no tool registry configured");
    PlanRequest req;
    req.question = item.question;
    req.qa_type = item.qa_type;
    req.object_hint = item.object_hint;
    req.video_path = video.path_or_uri.empty() ? video.video_id : video.path_or_uri;
    req.frames = config.frames;
    if (item.qa_type == QaType::Mistake) req.task_graph = config.task_graph;

    PlanResult planned = make_plan(req, config.registry->catalog(), config.planner);
    planning = planned.events;
    ExecutionResult run;
    try {
      run = execute(planned.plan, *config.registry, ToolContext{item.qa_id});
    } catch (const StepFailedError& e) {
      if (config.trace_dir) persist_trace(*config.trace_dir, item.qa_id, planning, &planned.plan, e.partial());
      throw;
    }
    if (config.trace_dir) persist_trace(*config.trace_dir, item.qa_id, planning, &planned.plan, run);

    const ToolValue& last = run.bindings.at(planned.plan.steps.back().output_name);
    const auto* text = std::get_if<TextValue>(&last);
    if (!text) fail(Errc::OutputKindMismatch, "the final step did not produce an answer");
    Prediction p;
    p.qa_id = item.qa_id;
    p.answer = text->rendered();
    p.evidence = text->evidence.clip(video.bounds());
    if (p.evidence.empty()) fail(Errc::EmptyEvidence, "the answer has no evidence inside the video");
    p.plan_text = format_plan(planned.plan);
    p.trace_ref = item.qa_id + ".trace.jsonl";
    return p;
  } catch (Error& e) {
    e.qa_id = item.qa_id;
    throw;
  }
}

nlohmann::json failure_to_json(const FailureRecord& f) {
  nlohmann::json j = {{"qa_id", f.qa_id}, {"code", std::string(errc_name(f.code))}};
  if (f.cause) j["cause"] = std::string(errc_name(*f.cause));
  j["message"] = f.message;
  return j;
}

BenchmarkRun run_benchmark(const Dataset& dataset, const OrchestratorConfig& config) {
  const std::size_t n = dataset.items.size();
  std::vector<std::optional<Prediction>> preds(n);
  std::vector<std::optional<FailureRecord>> failures(n);
  parallel_for(n, std::max<std::size_t>(1, config.parallelism), [&](std::size_t i) {
    const QAItem& item = dataset.items[i];
    try {
      const VideoMeta* video = dataset.find_video(item.video_id);
      if (!video) fail(Errc::ReferentialError, "unknown video '" + item.video_id + "'");
      preds[i] = answer_question(*video, item, config);
    } catch (const Error& e) {
      failures[i] = FailureRecord{item.qa_id, e.code(), e.cause, e.what()};
    } catch (const std::exception& e) {
      failures[i] = FailureRecord{item.qa_id, Errc::BackendError, std::nullopt, e.what()};
    }
  });
  BenchmarkRun run;
  for (std::size_t i = 0; i < n; ++i) {
    if (preds[i]) run.predictions.push_back(std::move(*preds[i]));
    if (failures[i]) run.failures.push_back(std::move(*failures[i]));
  }
  return run;
}

}  // namespace procqa
