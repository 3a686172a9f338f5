#pragma once

// Command implementations behind the `procqa` executable. Each returns the
// process exit code: 0 success, 1 domain failure, 2 environment or I/O
// failure. Errors are reported on `err` as one JSON object per line.

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "procqa/dataset.hpp"
#include "procqa/error.hpp"
#include "procqa/eval.hpp"
#include "procqa/orchestrator.hpp"

namespace procqa {

enum class BackendMode { Fixture, Remote };

struct RunConfig {
  std::filesystem::path dataset_path;
  // Fixture suite for the fixture backend; the dataset file itself when unset.
  std::optional<std::filesystem::path> fixtures_path;
  BackendMode backend = BackendMode::Fixture;
  PlannerKind planner = PlannerKind::Template;
  std::int64_t frames = kDefaultFrameCount;
  std::size_t parallelism = 1;
  MatchingPolicy matching = MatchingPolicy::Optimal;
  double blind_threshold = kDefaultBlindThreshold;
  RedundancyThresholds redundancy;
  std::string tool_endpoint;
  std::string planner_endpoint;
  std::string judge_endpoint;
  std::string api_key;
  std::string planner_model = "gpt-5";
  std::string judge_model = "gpt-5-mini";
  std::chrono::milliseconds timeout{60000};
  std::optional<std::filesystem::path> task_graph_path;
  std::filesystem::path output_dir = "procqa_out";

  // Throws ConfigError: remote modes need endpoints, frames >= 1, ...
  void validate() const;
};

struct CliIo {
  std::ostream& out;
  std::ostream& err;
  bool log_json = false;

  void log(const std::string& level, const std::string& message) const;
};

// Maps an error to the uniform exit codes.
int exit_code_for(Errc code);
nlohmann::json error_to_json(const Error& e);

int cmd_validate(const std::filesystem::path& dataset_path, const CliIo& io);
int cmd_run(const RunConfig& config, const std::string& qa_id, const CliIo& io);
int cmd_bench(const RunConfig& config, const CliIo& io);

struct JudgeConfig {
  JudgeKind kind = JudgeKind::Stub;
  std::optional<std::filesystem::path> stub_rules_path;
  std::string endpoint;
  std::string api_key;
  std::string model = "gpt-5-mini";
  std::chrono::milliseconds timeout{60000};
};

int cmd_eval(const std::filesystem::path& predictions_path,
             const std::filesystem::path& dataset_path, const JudgeConfig& judge,
             MatchingPolicy matching, std::size_t parallelism,
             const std::filesystem::path& output_path, const CliIo& io);
int cmd_report(const std::filesystem::path& scores_path,
               const std::optional<std::filesystem::path>& json_out, const std::string& row_label,
               const CliIo& io);

int cmd_filter_redundancy(const std::filesystem::path& dataset_path,
                          const std::filesystem::path& sequences_path,
                          const std::filesystem::path& embeddings_path,
                          const RedundancyThresholds& thresholds,
                          const std::filesystem::path& output_path, const CliIo& io);
// Blind answers come from a {qa_id: answer} file or from a chat endpoint.
int cmd_filter_blind(const std::filesystem::path& dataset_path,
                     const std::optional<std::filesystem::path>& answers_path,
                     const std::string& blind_endpoint, const std::string& blind_model,
                     const JudgeConfig& judge, double threshold, std::size_t parallelism,
                     const std::filesystem::path& output_path, const CliIo& io);

// Full command line, as the executable sees it.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace procqa
