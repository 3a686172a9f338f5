#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "procqa/cli.hpp"
#include "procqa/fixtures.hpp"
#include "procqa/json_util.hpp"
#include "support.hpp"

using namespace procqa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "procqa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string suite_path() { return (support::source_dir() / "data" / "butter_suite.json").string(); }

nlohmann::json first_error(const std::string& err) {
  const auto line = err.substr(0, err.find('\n'));
  return nlohmann::json::parse(line)["error"];
}

}  // namespace

TEST_CASE("validate") {
  auto r = cli({"validate", suite_path()});
  CHECK(r.code == 0);
  CHECK(r.out.find("Preparation") != std::string::npos);
  CHECK(r.err.find("valid: 1 videos, 4 items") != std::string::npos);

  const auto dir = support::scratch("cli_validate");
  support::spit(dir / "broken.json", "{\"videos\": [}");
  r = cli({"validate", (dir / "broken.json").string()});
  CHECK(r.code == 1);
  CHECK(first_error(r.err)["code"] == "SchemaError");

  r = cli({"validate", (dir / "absent.json").string()});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "IoError");

  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("run one question") {
  const auto dir = support::scratch("cli_run");
  auto r = cli({"run", suite_path(), "butter_prep", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("plan:\n@question") != std::string::npos);
  CHECK(r.out.find("[7] ok  answer = Answer_Gen") != std::string::npos);
  CHECK(r.out.find("evidence: [60.000s, 120.000s)") != std::string::npos);
  const auto p = prediction_from_json(read_json_file(dir / "butter_prep.prediction.json"));
  const auto suite = load_fixture_suite(suite_path());
  CHECK(p.answer == fixture_oracle(suite, "butter_prep").answer);
  CHECK(fs::exists(dir / "traces" / "butter_prep.trace.jsonl"));
  CHECK(fs::exists(dir / "traces" / "butter_prep.bindings.json"));

  r = cli({"run", suite_path(), "nope", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(first_error(r.err)["code"] == "UnknownItem");
  CHECK(first_error(r.err)["qa_id"] == "nope");

  r = cli({"run", suite_path(), "butter_prep", "--frames", "0", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "ConfigError");

  r = cli({"run", suite_path(), "butter_prep", "--backend", "cloud"});
  CHECK(r.code == 2);
}

TEST_CASE("remote modes need endpoints") {
  ::unsetenv("PROCQA_TOOL_ENDPOINT");
  ::unsetenv("PROCQA_PLANNER_ENDPOINT");
  ::unsetenv("PROCQA_JUDGE_ENDPOINT");
  const auto dir = support::scratch("cli_remote");
  auto r = cli({"bench", suite_path(), "--backend", "remote", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "ConfigError");
  CHECK(first_error(r.err)["message"].get<std::string>().find("--tool-endpoint") !=
        std::string::npos);
  r = cli({"run", suite_path(), "butter_prep", "--planner", "llm", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "ConfigError");

  // An unreachable tool server is an environment failure for the item.
  r = cli({"run", suite_path(), "butter_prep", "--backend", "remote", "--tool-endpoint",
           "http://127.0.0.1:9", "--timeout-ms", "500", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(first_error(r.err)["code"] == "StepFailed");
  CHECK(first_error(r.err)["cause"] == "BackendUnavailable");
}

TEST_CASE("bench, eval and report") {
  const auto dir = support::scratch("cli_pipeline");
  auto r = cli({"bench", suite_path(), "--parallel", "4", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("4 predictions, 0 failures") != std::string::npos);
  CHECK(read_json_file(dir / "failures.json").empty());

  const auto scores = (dir / "scores.json").string();
  r = cli({"eval", (dir / "predictions.json").string(), suite_path(), "--out", scores});
  REQUIRE(r.code == 0);
  const auto rows = load_item_evals(scores);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.score() == 5.0);
    CHECK(row.iou == 1.0);
  }
  CHECK(r.out.find("5.00    100.00") != std::string::npos);

  const auto report_json = (dir / "report.json").string();
  r = cli({"report", scores, "--json", report_json, "--label", "fixture"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("fixture") == r.out.find('\n', r.out.find('\n') + 1) + 1);
  const auto rep = read_json_file(report_json);
  CHECK(rep["overall"]["score"] == 5.0);
  CHECK(rep["overall"]["miou_pct"] == 100.0);
  CHECK(rep["overall"]["count"] == 4);

  r = cli({"eval", (dir / "predictions.json").string(), suite_path(), "--matching", "greedy",
           "--out", (dir / "greedy.json").string()});
  CHECK(r.code == 0);
  r = cli({"eval", (dir / "predictions.json").string(), suite_path(), "--judge", "remote"});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "ConfigError");
}

TEST_CASE("bench reports item failures") {
  const auto dir = support::scratch("cli_bench_fail");
  auto doc = read_json_file(suite_path());
  for (auto& item : doc["items"]) {
    if (item["qa_id"] == "butter_cf") item["object_hint"] = "saffron";
  }
  support::spit(dir / "suite.json", doc.dump());
  auto r = cli({"bench", (dir / "suite.json").string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.out.find("3 predictions, 1 failures") != std::string::npos);
  const auto failures = read_json_file(dir / "failures.json");
  REQUIRE(failures.size() == 1);
  CHECK(failures[0]["qa_id"] == "butter_cf");
  CHECK(failures[0]["cause"] == "EmptyEvidence");

  // The missing prediction is scored as a failure row.
  r = cli({"eval", (dir / "predictions.json").string(), (dir / "suite.json").string(), "--out",
           (dir / "scores.json").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("butter_cf: no prediction") != std::string::npos);
  const auto rows = load_item_evals(dir / "scores.json");
  REQUIRE(rows.size() == 4);
  CHECK(rows[2].failure);
}

TEST_CASE("empty predictions") {
  const auto dir = support::scratch("cli_empty");
  support::spit(dir / "preds.json", "[]");
  auto r = cli({"eval", (dir / "preds.json").string(), suite_path(), "--out",
                (dir / "scores.json").string()});
  CHECK(r.code == 0);
  const auto rows = load_item_evals(dir / "scores.json");
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.failure);
    CHECK(row.score() == 0.0);
  }
  r = cli({"report", (dir / "scores.json").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("0.00    0.00") != std::string::npos);

  support::spit(dir / "stray.json",
                R"([{"qa_id":"ghost","answer":"x","evidence":[[0,1]],"plan_text":"","trace_ref":""}])");
  r = cli({"eval", (dir / "stray.json").string(), suite_path(), "--out",
           (dir / "s2.json").string()});
  CHECK(r.code == 1);
  CHECK(first_error(r.err)["code"] == "UnknownItem");
}

TEST_CASE("task graph option") {
  const auto dir = support::scratch("cli_graph");
  support::spit(dir / "g.dot", "digraph { \"melt butter\" -> \"stir\" }");
  auto r = cli({"run", suite_path(), "butter_mistake", "--task-graph", (dir / "g.dot").string(),
                "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("step order: melt butter -> stir") != std::string::npos);

  support::spit(dir / "loop.dot", "digraph { a -> a }");
  r = cli({"run", suite_path(), "butter_mistake", "--task-graph", (dir / "loop.dot").string(),
           "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(first_error(r.err)["code"] == "InvalidGraph");
}

TEST_CASE("filters") {
  const auto dir = support::scratch("cli_filters");
  auto ds = load_fixture_suite(suite_path()).dataset;
  VideoMeta twin = ds.videos[0];
  twin.video_id = "butter_twin";
  VideoMeta other = ds.videos[0];
  other.video_id = "pancakes";
  other.activity = "pancakes";
  ds.videos.push_back(twin);
  ds.videos.push_back(other);
  support::spit(dir / "ds.json", dataset_to_json(ds).dump());
  const nlohmann::json seq = {{"butter_600s", {"melt", "stir"}},
                              {"butter_twin", {"melt", "stir"}},
                              {"pancakes", {"melt", "stir"}}};
  const nlohmann::json emb = {{"butter_600s", {1.0, 0.0}},
                              {"butter_twin", {1.0, 0.0}},
                              {"pancakes", {1.0, 0.0}}};
  support::spit(dir / "seq.json", seq.dump());
  support::spit(dir / "emb.json", emb.dump());
  auto r = cli({"filter", "redundancy", (dir / "ds.json").string(), "--sequences",
                (dir / "seq.json").string(), "--embeddings", (dir / "emb.json").string(), "--out",
                (dir / "dedup.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "redundancy: kept 2 of 3 videos\n");
  const auto kept = load_dataset(dir / "dedup.json");
  CHECK(kept.find_video("butter_600s"));
  CHECK(kept.find_video("pancakes"));
  CHECK(kept.items.size() == 4);

  const auto suite = load_fixture_suite(suite_path());
  const nlohmann::json answers = {{"butter_prep", suite.dataset.items[0].gold_answer},
                                  {"butter_evo", "no idea"}};
  support::spit(dir / "answers.json", answers.dump());
  r = cli({"filter", "blind", (dir / "ds.json").string(), "--answers",
           (dir / "answers.json").string(), "--out", (dir / "blind.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "blind: kept 3 of 4 items\n");
  CHECK_FALSE(load_dataset(dir / "blind.json").find_item("butter_prep"));
  const auto audit = read_json_file(dir / "blind.audit.json");
  CHECK(audit.size() == 4);

  r = cli({"filter", "blind", (dir / "ds.json").string(), "--threshold", "7", "--answers",
           (dir / "answers.json").string()});
  CHECK(r.code == 2);
  ::unsetenv("PROCQA_BLIND_ENDPOINT");
  r = cli({"filter", "blind", (dir / "ds.json").string()});
  CHECK(r.code == 2);
  CHECK(first_error(r.err)["code"] == "ConfigError");
}

TEST_CASE("json logs") {
  const auto r = cli({"--log-json", "validate", suite_path()});
  CHECK(r.code == 0);
  const auto line = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(line["level"] == "info");
  CHECK(line.contains("ts_ms"));
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(Errc::ConfigError) == 2);
  CHECK(exit_code_for(Errc::IoError) == 2);
  CHECK(exit_code_for(Errc::BackendUnavailable) == 2);
  CHECK(exit_code_for(Errc::SchemaError) == 1);
  CHECK(exit_code_for(Errc::StepFailed) == 1);
  Error e(Errc::StepFailed, "step 3 failed");
  e.step = 3;
  e.cause = Errc::BackendUnavailable;
  e.qa_id = "x";
  const auto j = error_to_json(e)["error"];
  CHECK(j["step"] == 3);
  CHECK(j["cause"] == "BackendUnavailable");
  CHECK(j["qa_id"] == "x");
}
