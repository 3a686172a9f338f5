#pragma once

// Deterministic synthetic videos: annotated timelines standing in for the
// perception models, plus the expected pipeline output per QA item.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "procqa/dataset.hpp"
#include "procqa/tools.hpp"

namespace procqa {

struct FixtureAction {
  TimeSpan span;
  std::string label;
  bool mistake = false;
};

struct FixtureObject {
  std::string label;
  TimeSpan span;
  std::array<double, 4> bbox{};
};

struct FixtureCaption {
  TimeSpan span;
  std::string text;
};

struct FixtureVideo {
  VideoHandle handle;
  std::vector<FixtureAction> actions;    // contiguous cover of [0, duration)
  std::vector<FixtureObject> objects;
  std::vector<FixtureCaption> captions;  // contiguous cover of [0, duration)
  std::map<std::string, std::string> answers;  // qa_id -> answer text
};

struct ExpectedOutput {
  std::string answer;
  SpanSet evidence;
  bool operator==(const ExpectedOutput&) const = default;
};

// A suite file is a dataset file with two extra members, "fixtures" and
// "expected", so the same file can drive both the loader and the backend.
struct FixtureSuite {
  std::map<std::string, FixtureVideo> fixtures;
  Dataset dataset;
  std::map<std::string, ExpectedOutput> expected;

  const std::vector<QAItem>& items() const { return dataset.items; }
};

FixtureSuite fixture_suite_from_json(const nlohmann::json& doc);
FixtureSuite load_fixture_suite(const std::filesystem::path& path);

// Throws UnknownItem for ids without an expectation.
ExpectedOutput fixture_oracle(const FixtureSuite& suite, const std::string& qa_id);

// Perception and generation tools answered from fixture annotations.
// Paths resolve as fixture ids, optionally prefixed "fixture://".
class FixtureBackend final : public ToolBackend {
 public:
  explicit FixtureBackend(std::shared_ptr<const FixtureSuite> suite) : suite_(std::move(suite)) {}

  VideoHandle load_video(const std::string& path) override;
  std::vector<double> relevance(const FrameCollection& frames, const std::string& query) override;
  DetectionList detect(const FrameCollection& frames, const std::string& query) override;
  std::vector<TextSegment> recognize_actions(const FrameCollection& frames) override;
  std::vector<std::string> caption(const FrameCollection& frames) override;
  std::string summarize(const std::vector<std::string>& texts) override;
  GeneratedAnswer answer(const AnswerRequest& request, const ToolContext& ctx) override;

  // Retrieval score table: 1 when an object labelled `query` is visible,
  // 0.5 when the caption mentions it, 0 otherwise.
  static constexpr double kVisibleScore = 1.0;
  static constexpr double kMentionScore = 0.5;

 private:
  const FixtureVideo& video(const std::string& video_id) const;
  std::shared_ptr<const FixtureSuite> suite_;
};

}  // namespace procqa
