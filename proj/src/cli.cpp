#include "procqa/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "procqa/fixtures.hpp"
#include "procqa/json_util.hpp"
#include "procqa/remote_backend.hpp"
#include "procqa/task_graph.hpp"

namespace procqa {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (frames < 1) fail(Errc::ConfigError, "--frames must be at least 1");
  if (parallelism < 1) fail(Errc::ConfigError, "--parallel must be at least 1");
  if (backend == BackendMode::Remote && tool_endpoint.empty()) {
    fail(Errc::ConfigError, "remote backend needs --tool-endpoint or PROCQA_TOOL_ENDPOINT");
  }
  if (planner == PlannerKind::Llm && planner_endpoint.empty()) {
    fail(Errc::ConfigError, "llm planner needs --planner-endpoint or PROCQA_PLANNER_ENDPOINT");
  }
  if (!(blind_threshold >= 0.0 && blind_threshold <= 5.0)) {
    fail(Errc::ConfigError, "blind threshold must lie in [0, 5]");
  }
  if (!(redundancy.max_edit_ratio >= 0.0 && redundancy.max_edit_ratio <= 1.0) ||
      !(redundancy.min_cosine >= 0.0 && redundancy.min_cosine <= 1.0)) {
    fail(Errc::ConfigError, "redundancy thresholds must lie in [0, 1]");
  }
  if (timeout.count() <= 0) fail(Errc::ConfigError, "timeout must be positive");
}

void CliIo::log(const std::string& level, const std::string& message) const {
  if (log_json) {
    const auto now = std::chrono::system_clock::now();
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    err << nlohmann::json{{"ts_ms", ms}, {"level", level}, {"msg", message}}.dump() << "\n";
  } else {
    err << "procqa: " << level << ": " << message << "\n";
  }
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::IoError:
    case Errc::ConfigError:
    case Errc::BackendUnavailable:
      return 2;
    default:
      return 1;
  }
}

nlohmann::json error_to_json(const Error& e) {
  nlohmann::json j = {{"code", std::string(errc_name(e.code()))}, {"message", e.what()}};
  if (e.qa_id) j["qa_id"] = *e.qa_id;
  if (e.json_path) j["json_path"] = *e.json_path;
  if (e.line) j["line"] = *e.line;
  if (e.column) j["column"] = *e.column;
  if (e.step) j["step"] = *e.step;
  if (e.cause) j["cause"] = std::string(errc_name(*e.cause));
  return {{"error", j}};
}

namespace {

template <typename F>
int guarded(const CliIo& io, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    io.err << error_to_json(e).dump() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    io.err << error_to_json(Error(Errc::IoError, e.what())).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    io.err << nlohmann::json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}

struct Environment {
  Dataset dataset;
  OrchestratorConfig orchestrator;
};

Environment build_environment(const RunConfig& c) {
  c.validate();
  Environment env;
  std::shared_ptr<ToolBackend> backend;
  if (c.backend == BackendMode::Fixture) {
    auto suite = std::make_shared<const FixtureSuite>(
        load_fixture_suite(c.fixtures_path.value_or(c.dataset_path)));
    env.dataset = c.fixtures_path ? load_dataset(c.dataset_path) : suite->dataset;
    backend = std::make_shared<FixtureBackend>(suite);
  } else {
    env.dataset = load_dataset(c.dataset_path);
    RemoteConfig rc;
    rc.endpoint = c.tool_endpoint;
    rc.api_key = c.api_key;
    rc.timeout = c.timeout;
    rc.max_in_flight = static_cast<int>(std::min<std::size_t>(c.parallelism, RemoteToolBackend::kMaxInFlight));
    backend = std::make_shared<RemoteToolBackend>(rc);
  }
  auto& o = env.orchestrator;
  o.registry = std::make_shared<const ToolRegistry>(make_standard_registry(backend));
  if (c.planner == PlannerKind::Llm) {
    o.planner = PlannerBackend::llm(
        c.planner_endpoint,
        make_chat_completion({c.planner_endpoint, c.api_key, c.planner_model, c.timeout}));
  }
  o.frames = c.frames;
  o.parallelism = c.parallelism;
  if (c.task_graph_path) o.task_graph = parse_task_graph(read_text_file(*c.task_graph_path));
  o.trace_dir = c.output_dir / "traces";
  return env;
}

JudgeBackend make_judge(const JudgeConfig& j) {
  if (j.kind == JudgeKind::Stub) {
    std::vector<StubRule> rules;
    if (j.stub_rules_path) rules = stub_rules_from_json(read_json_file(*j.stub_rules_path));
    return JudgeBackend::stub(std::move(rules));
  }
  if (j.endpoint.empty()) fail(Errc::ConfigError, "remote judge needs --judge-endpoint or PROCQA_JUDGE_ENDPOINT");
  return JudgeBackend::remote(j.endpoint,
                              make_chat_completion({j.endpoint, j.api_key, j.model, j.timeout}));
}

void print_trace(const fs::path& trace_file, std::ostream& out) {
  std::ifstream in(trace_file);
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.value("type", "") == "planning") {
      out << "  planner " << j.value("event", "") << " after attempt " << j.value("attempt", 0)
          << "\n";
      continue;
    }
    out << "  [" << j.value("step_index", 0) << "] " << j.value("status", "") << "  "
        << j.value("output", "") << " = " << j.value("tool", "");
    if (j.contains("error")) out << "  " << j["error"].get<std::string>();
    out << "\n";
  }
}

std::string evidence_seconds(const SpanSet& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += to_string(s[i]);
  }
  return out;
}

}  // namespace

int cmd_validate(const fs::path& dataset_path, const CliIo& io) {
  return guarded(io, [&] {
    const auto doc = read_json_file(dataset_path);
    const Dataset ds = doc.is_object() && doc.contains("fixtures")
                           ? fixture_suite_from_json(doc).dataset
                           : dataset_from_json(doc);
    io.out << format_stats_table(dataset_stats(ds));
    io.log("info", "valid: " + std::to_string(ds.videos.size()) + " videos, " +
                       std::to_string(ds.items.size()) + " items");
    return 0;
  });
}

int cmd_run(const RunConfig& config, const std::string& qa_id, const CliIo& io) {
  return guarded(io, [&] {
    const Environment env = build_environment(config);
    const QAItem* item = env.dataset.find_item(qa_id);
    if (!item) {
      Error e(Errc::UnknownItem, "no item '" + qa_id + "' in " + config.dataset_path.string());
      e.qa_id = qa_id;
      throw e;
    }
    const VideoMeta* video = env.dataset.find_video(item->video_id);
    const fs::path trace_file = *env.orchestrator.trace_dir / (qa_id + ".trace.jsonl");
    Prediction p;
    try {
      p = answer_question(*video, *item, env.orchestrator);
    } catch (const Error&) {
      if (fs::exists(trace_file)) {
        io.out << "trace:\n";
        print_trace(trace_file, io.out);
      }
      throw;
    }
    io.out << "plan:\n" << p.plan_text << "trace:\n";
    print_trace(trace_file, io.out);
    io.out << "answer: " << p.answer << "\n";
    io.out << "evidence: " << evidence_seconds(p.evidence) << "\n";
    write_file_atomic(config.output_dir / (qa_id + ".prediction.json"),
                      prediction_to_json(p).dump(2) + "\n");
    return 0;
  });
}

int cmd_bench(const RunConfig& config, const CliIo& io) {
  return guarded(io, [&] {
    const Environment env = build_environment(config);
    const BenchmarkRun run = run_benchmark(env.dataset, env.orchestrator);
    write_file_atomic(config.output_dir / "predictions.json", predictions_to_text(run.predictions));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : run.failures) {
      failures.push_back(failure_to_json(f));
      io.log("warn", f.qa_id + ": " + f.message);
    }
    write_file_atomic(config.output_dir / "failures.json", failures.dump(2) + "\n");
    io.out << "bench: " << run.predictions.size() << " predictions, " << run.failures.size()
           << " failures -> " << (config.output_dir / "predictions.json").string() << "\n";
    return run.failures.empty() ? 0 : 1;
  });
}

int cmd_eval(const fs::path& predictions_path, const fs::path& dataset_path,
             const JudgeConfig& judge, MatchingPolicy matching, std::size_t parallelism,
             const fs::path& output_path, const CliIo& io) {
  return guarded(io, [&] {
    const JudgeBackend backend = make_judge(judge);
    const auto doc = read_json_file(dataset_path);
    const Dataset ds = doc.is_object() && doc.contains("fixtures")
                           ? fixture_suite_from_json(doc).dataset
                           : dataset_from_json(doc);
    const auto preds = load_predictions(predictions_path);
    const auto rows = evaluate_predictions(ds, preds, backend, matching, parallelism);
    write_file_atomic(output_path, item_evals_to_text(rows));
    for (const auto& r : rows) {
      if (r.failure) io.log("warn", r.qa_id + ": " + r.failure_reason);
    }
    io.out << format_report_table(aggregate_rows(rows), "procqa");
    return 0;
  });
}

int cmd_report(const fs::path& scores_path, const std::optional<fs::path>& json_out,
               const std::string& row_label, const CliIo& io) {
  return guarded(io, [&] {
    const BenchmarkReport report = aggregate_rows(load_item_evals(scores_path));
    io.out << format_report_table(report, row_label);
    if (json_out) write_file_atomic(*json_out, report_to_json(report).dump(2) + "\n");
    return 0;
  });
}

int cmd_filter_redundancy(const fs::path& dataset_path, const fs::path& sequences_path,
                          const fs::path& embeddings_path, const RedundancyThresholds& thresholds,
                          const fs::path& output_path, const CliIo& io) {
  return guarded(io, [&] {
    const Dataset ds = load_dataset(dataset_path);
    std::map<std::string, ActionSequence> sequences;
    {
      const auto doc = read_json_file(sequences_path);
      JsonCursor c(doc);
      for (const auto& [id, _] : c.object().items()) {
        const auto seq = c.at(id);
        ActionSequence s;
        for (std::size_t i = 0; i < seq.array().size(); ++i) s.push_back(seq.at(i).str());
        sequences[id] = std::move(s);
      }
    }
    std::map<std::string, std::vector<double>> embeddings;
    {
      const auto doc = read_json_file(embeddings_path);
      JsonCursor c(doc);
      for (const auto& [id, _] : c.object().items()) {
        const auto v = c.at(id);
        std::vector<double> e;
        for (std::size_t i = 0; i < v.array().size(); ++i) e.push_back(v.at(i).number());
        embeddings[id] = std::move(e);
      }
    }
    const auto kept = redundancy_filter(ds.videos, sequences, embeddings, thresholds);
    const std::set<std::string> keep(kept.begin(), kept.end());
    Dataset out;
    for (const auto& v : ds.videos) {
      if (keep.contains(v.video_id)) out.videos.push_back(v);
    }
    for (const auto& item : ds.items) {
      if (keep.contains(item.video_id)) out.items.push_back(item);
    }
    write_file_atomic(output_path, dataset_to_json(out).dump(2) + "\n");
    io.out << "redundancy: kept " << out.videos.size() << " of " << ds.videos.size()
           << " videos\n";
    return 0;
  });
}

int cmd_filter_blind(const fs::path& dataset_path, const std::optional<fs::path>& answers_path,
                     const std::string& blind_endpoint, const std::string& blind_model,
                     const JudgeConfig& judge, double threshold, std::size_t parallelism,
                     const fs::path& output_path, const CliIo& io) {
  return guarded(io, [&] {
    if (!(threshold >= 0.0 && threshold <= 5.0)) {
      fail(Errc::ConfigError, "blind threshold must lie in [0, 5]");
    }
    const Dataset ds = load_dataset(dataset_path);
    const JudgeBackend judge_backend = make_judge(judge);
    BlindAnswerFn answer_fn;
    if (answers_path) {
      // Blind answers depend on the question alone, so key them by text.
      const auto doc = read_json_file(*answers_path);
      JsonCursor c(doc);
      std::map<std::string, std::string> by_question;
      for (const auto& [qa_id, _] : c.object().items()) {
        const QAItem* item = ds.find_item(qa_id);
        if (!item) fail(Errc::UnknownItem, "blind answer for unknown item '" + qa_id + "'");
        const std::string a = c.at(qa_id).str();
        auto [it, fresh] = by_question.emplace(item->question, a);
        if (!fresh && it->second != a) {
          fail(Errc::InvalidArgument, "conflicting blind answers for one question text");
        }
      }
      answer_fn = [by_question](const std::string& q) {
        auto it = by_question.find(q);
        return it == by_question.end() ? std::string() : it->second;
      };
    } else {
      if (blind_endpoint.empty()) {
        fail(Errc::ConfigError, "blind filter needs --answers or --blind-endpoint");
      }
      auto complete = make_chat_completion({blind_endpoint, judge.api_key, blind_model, judge.timeout});
      answer_fn = [complete](const std::string& q) {
        return complete("Answer this question about a procedural video you cannot see. "
                        "Answer in one or two sentences.\n\nQuestion: " + q);
      };
    }
    const BlindJudgeFn judge_fn = [&judge_backend](const std::string& q, const std::string& gold,
                                                   const std::string& a) {
      return judge_answer(q, gold, a, judge_backend);
    };
    const auto result = blind_filter(ds.items, answer_fn, judge_fn, threshold, parallelism);
    Dataset out;
    out.videos = ds.videos;
    out.items = result.kept;
    write_file_atomic(output_path, dataset_to_json(out).dump(2) + "\n");
    nlohmann::json audit = nlohmann::json::array();
    for (const auto& a : result.audit) audit.push_back(blind_audit_to_json(a));
    fs::path audit_path = output_path;
    audit_path.replace_extension(".audit.json");
    write_file_atomic(audit_path, audit.dump(2) + "\n");
    io.out << "blind: kept " << result.kept.size() << " of " << ds.items.size() << " items\n";
    return 0;
  });
}

// ---- command line --------------------------------------------------------

namespace {

void add_run_options(CLI::App* cmd, RunConfig& c, std::string& backend, std::string& planner,
                     std::int64_t& timeout_ms) {
  cmd->add_option("dataset", c.dataset_path, "Dataset or fixture suite JSON")->required();
  cmd->add_option("--backend", backend, "Tool backend")
      ->check(CLI::IsMember({"fixture", "remote"}))
      ->capture_default_str();
  cmd->add_option("--fixtures", c.fixtures_path,
                  "Fixture suite for the fixture backend (default: the dataset file)");
  cmd->add_option("--planner", planner, "Planner")
      ->check(CLI::IsMember({"template", "llm"}))
      ->capture_default_str();
  cmd->add_option("--frames", c.frames, "Frames sampled per video")->capture_default_str();
  cmd->add_option("--parallel", c.parallelism, "Questions run concurrently")->capture_default_str();
  cmd->add_option("--tool-endpoint", c.tool_endpoint, "Model-tool server base URL")
      ->envname("PROCQA_TOOL_ENDPOINT");
  cmd->add_option("--planner-endpoint", c.planner_endpoint, "Chat-completions base URL for the planner")
      ->envname("PROCQA_PLANNER_ENDPOINT");
  cmd->add_option("--planner-model", c.planner_model, "Planner model name")->capture_default_str();
  cmd->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
  cmd->add_option("--task-graph", c.task_graph_path, "DOT task graph injected into Mistake plans");
  cmd->add_option("--out", c.output_dir, "Output directory")->capture_default_str();
}

void add_judge_options(CLI::App* cmd, JudgeConfig& j, std::string& kind, std::int64_t& timeout_ms) {
  cmd->add_option("--judge", kind, "Judge backend")
      ->check(CLI::IsMember({"stub", "remote"}))
      ->capture_default_str();
  cmd->add_option("--judge-rules", j.stub_rules_path, "Stub judge rule table (JSON)");
  cmd->add_option("--judge-endpoint", j.endpoint, "Chat-completions base URL for the judge")
      ->envname("PROCQA_JUDGE_ENDPOINT");
  cmd->add_option("--judge-model", j.model, "Judge model name")->capture_default_str();
  cmd->add_option("--judge-timeout-ms", timeout_ms, "Judge request timeout")->capture_default_str();
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"procqa: object-centric procedural video QA engine"};
  app.require_subcommand(1);
  bool log_json = false;
  app.add_flag("--log-json", log_json, "Write logs to stderr as JSON lines");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Validate a dataset or fixture suite and print statistics");
  validate->add_option("dataset", validate_path, "Dataset JSON")->required();

  RunConfig run_cfg;
  std::string run_backend = "fixture", run_planner = "template", qa_id;
  std::int64_t run_timeout = 60000;
  auto* run = app.add_subcommand("run", "Answer one question and print plan, trace and answer");
  add_run_options(run, run_cfg, run_backend, run_planner, run_timeout);
  run->add_option("qa_id", qa_id, "Item to answer")->required();

  RunConfig bench_cfg;
  std::string bench_backend = "fixture", bench_planner = "template";
  std::int64_t bench_timeout = 60000;
  auto* bench = app.add_subcommand("bench", "Answer every item and write predictions.json");
  add_run_options(bench, bench_cfg, bench_backend, bench_planner, bench_timeout);

  std::string preds_path, eval_dataset, eval_matching = "optimal", eval_judge = "stub";
  std::string eval_out = "scores.json";
  std::size_t eval_parallel = 1;
  std::int64_t eval_timeout = 60000;
  JudgeConfig eval_jc;
  auto* eval = app.add_subcommand("eval", "Score predictions: judge plus evidence mIoU per item");
  eval->add_option("predictions", preds_path, "Predictions JSON")->required();
  eval->add_option("dataset", eval_dataset, "Dataset or fixture suite JSON")->required();
  add_judge_options(eval, eval_jc, eval_judge, eval_timeout);
  eval->add_option("--matching", eval_matching, "Span matching policy")
      ->check(CLI::IsMember({"optimal", "greedy"}))
      ->capture_default_str();
  eval->add_option("--parallel", eval_parallel, "Concurrent judge calls")->capture_default_str();
  eval->add_option("--out", eval_out, "Per-item scores JSON")->capture_default_str();

  std::string scores_path, report_label = "procqa";
  std::optional<std::string> report_json;
  auto* report = app.add_subcommand("report", "Render per-type Score / mIoU% table from scores");
  report->add_option("scores", scores_path, "Per-item scores JSON")->required();
  report->add_option("--json", report_json, "Also write the report as JSON here");
  report->add_option("--label", report_label, "Row label")->capture_default_str();

  auto* filter = app.add_subcommand("filter", "Dataset quality filters");
  filter->require_subcommand(1);
  std::string red_dataset, red_seq, red_emb, red_out = "filtered.json";
  RedundancyThresholds red_th;
  auto* redundancy = filter->add_subcommand("redundancy", "Drop near-duplicate videos within an activity");
  redundancy->add_option("dataset", red_dataset, "Dataset JSON")->required();
  redundancy->add_option("--sequences", red_seq, "{video_id: [step labels]} JSON")->required();
  redundancy->add_option("--embeddings", red_emb, "{video_id: [floats]} JSON")->required();
  redundancy->add_option("--max-edit-ratio", red_th.max_edit_ratio, "Drop at or below this normalized edit distance")
      ->capture_default_str();
  redundancy->add_option("--min-cosine", red_th.min_cosine, "Drop at or above this cosine similarity")
      ->capture_default_str();
  redundancy->add_option("--out", red_out, "Filtered dataset JSON")->capture_default_str();

  std::string blind_dataset, blind_endpoint, blind_model = "gpt-5", blind_judge = "stub";
  std::string blind_out = "filtered.json";
  std::optional<std::string> blind_answers;
  double blind_threshold = kDefaultBlindThreshold;
  std::size_t blind_parallel = 1;
  std::int64_t blind_timeout = 60000;
  JudgeConfig blind_jc;
  auto* blind = filter->add_subcommand("blind", "Drop items a model answers well without the video");
  blind->add_option("dataset", blind_dataset, "Dataset JSON")->required();
  blind->add_option("--answers", blind_answers, "{qa_id: blind answer} JSON");
  blind->add_option("--blind-endpoint", blind_endpoint, "Chat-completions base URL for blind answers")
      ->envname("PROCQA_BLIND_ENDPOINT");
  blind->add_option("--blind-model", blind_model, "Blind model name")->capture_default_str();
  add_judge_options(blind, blind_jc, blind_judge, blind_timeout);
  blind->add_option("--threshold", blind_threshold, "Drop items whose judge average is at least this")
      ->capture_default_str();
  blind->add_option("--parallel", blind_parallel, "Concurrent items")->capture_default_str();
  blind->add_option("--out", blind_out, "Filtered dataset JSON (audit written next to it)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const CliIo io{out, err, log_json};
  const std::string api_key = env_or_empty("PROCQA_API_KEY");
  auto finish_run = [&](RunConfig& c, const std::string& backend, const std::string& planner,
                        std::int64_t timeout_ms) {
    c.backend = backend == "remote" ? BackendMode::Remote : BackendMode::Fixture;
    c.planner = planner == "llm" ? PlannerKind::Llm : PlannerKind::Template;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.api_key = api_key;
  };
  auto finish_judge = [&](JudgeConfig& j, const std::string& kind, std::int64_t timeout_ms) {
    j.kind = kind == "remote" ? JudgeKind::Remote : JudgeKind::Stub;
    j.timeout = std::chrono::milliseconds(timeout_ms);
    j.api_key = api_key;
  };

  if (*validate) return cmd_validate(validate_path, io);
  if (*run) {
    finish_run(run_cfg, run_backend, run_planner, run_timeout);
    return cmd_run(run_cfg, qa_id, io);
  }
  if (*bench) {
    finish_run(bench_cfg, bench_backend, bench_planner, bench_timeout);
    return cmd_bench(bench_cfg, io);
  }
  if (*eval) {
    finish_judge(eval_jc, eval_judge, eval_timeout);
    return cmd_eval(preds_path, eval_dataset, eval_jc, *parse_matching_policy(eval_matching),
                    std::max<std::size_t>(1, eval_parallel), eval_out, io);
  }
  if (*report) {
    return cmd_report(scores_path, report_json ? std::optional<fs::path>(*report_json) : std::nullopt,
                      report_label, io);
  }
  if (*redundancy) {
    return cmd_filter_redundancy(red_dataset, red_seq, red_emb, red_th, red_out, io);
  }
  finish_judge(blind_jc, blind_judge, blind_timeout);
  return cmd_filter_blind(blind_dataset,
                          blind_answers ? std::optional<fs::path>(*blind_answers) : std::nullopt,
                          blind_endpoint, blind_model, blind_jc, blind_threshold,
                          std::max<std::size_t>(1, blind_parallel), blind_out, io);
}

}  // namespace procqa
