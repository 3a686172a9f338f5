#pragma once

// Benchmark files: videos, QA items with gold evidence, summary statistics
// and the two quality-control filters (action-sequence redundancy and
// blind-answer screening).

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "procqa/judge_score.hpp"
#include "procqa/temporal.hpp"

namespace procqa {

enum class VideoSource { CaptainCook4D, COIN, EgoPER, Synthetic };
enum class View { Ego, Exo };
enum class QaType { Preparation, Evolution, Counterfactual, Mistake };

inline constexpr QaType kAllQaTypes[] = {QaType::Preparation, QaType::Evolution,
                                         QaType::Counterfactual, QaType::Mistake};

std::string_view to_string(VideoSource s);
std::string_view to_string(View v);
std::string_view to_string(QaType t);
std::optional<VideoSource> parse_video_source(std::string_view s);
std::optional<View> parse_view(std::string_view s);
std::optional<QaType> parse_qa_type(std::string_view s);

struct VideoMeta {
  std::string video_id;
  VideoSource source = VideoSource::Synthetic;
  Millis duration_ms = 0;
  View view = View::Ego;
  std::string activity;
  std::string path_or_uri;

  TimeSpan bounds() const { return TimeSpan::make(0, duration_ms); }
  bool operator==(const VideoMeta&) const = default;
};

struct QAItem {
  std::string qa_id;
  std::string video_id;
  QaType qa_type = QaType::Preparation;
  std::string question;
  std::string gold_answer;
  SpanSet gold_evidence;
  std::optional<std::string> error_type;
  // Optional object the question is about; used as the retrieval query by
  // the template planner.
  std::optional<std::string> object_hint;

  bool operator==(const QAItem&) const = default;
};

struct Dataset {
  std::vector<VideoMeta> videos;
  std::vector<QAItem> items;

  const VideoMeta* find_video(std::string_view video_id) const;
  const QAItem* find_item(std::string_view qa_id) const;
  bool operator==(const Dataset&) const = default;
};

// Validates every invariant; throws Error with SchemaError, ReferentialError
// or SpanError (json_path and qa_id set where applicable).
Dataset dataset_from_json(const nlohmann::json& doc);
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& ds);
nlohmann::json video_meta_to_json(const VideoMeta& v);
nlohmann::json qa_item_to_json(const QAItem& item);

struct DatasetStats {
  std::size_t n_videos = 0;
  std::size_t n_qa = 0;
  double mean_duration_s = 0.0;
  double std_duration_s = 0.0;  // population standard deviation
  std::map<QaType, double> qa_type_fractions;
  std::map<VideoSource, double> source_fractions;
  std::size_t n_mistake_videos = 0;  // videos with at least one Mistake item
};

DatasetStats dataset_stats(const Dataset& ds);
nlohmann::json stats_to_json(const DatasetStats& stats);
std::string format_stats_table(const DatasetStats& stats);

using ActionSequence = std::vector<std::string>;

// Levenshtein distance over whole step labels, unit costs.
std::size_t edit_distance(const ActionSequence& a, const ActionSequence& b);

// Throws DimensionMismatch or ZeroVector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct RedundancyThresholds {
  double max_edit_ratio = 0.2;   // drop when distance / max length <= this
  double min_cosine = 0.95;      // drop when cosine >= this
};

// Greedy per-activity filter in input order. Returns kept video ids in input
// order. Throws MissingAnnotation when a video lacks a sequence or embedding.
std::vector<std::string> redundancy_filter(
    const std::vector<VideoMeta>& videos,
    const std::map<std::string, ActionSequence>& sequences,
    const std::map<std::string, std::vector<double>>& embeddings,
    const RedundancyThresholds& thresholds = {});

using BlindAnswerFn = std::function<std::string(const std::string& question)>;
using BlindJudgeFn = std::function<JudgeScore(const std::string& question,
                                              const std::string& gold,
                                              const std::string& answer)>;

struct BlindAudit {
  std::string qa_id;
  std::string blind_answer;
  JudgeScore score;
  bool dropped = false;
};

struct BlindFilterResult {
  std::vector<QAItem> kept;
  std::vector<BlindAudit> audit;  // one per input item, input order
};

inline constexpr double kDefaultBlindThreshold = 3.0;

// Items answerable without the video (blind judge average >= threshold) are
// dropped. Backend failures are rethrown with qa_id set.
BlindFilterResult blind_filter(const std::vector<QAItem>& items, const BlindAnswerFn& answer_fn,
                               const BlindJudgeFn& judge_fn,
                               double threshold = kDefaultBlindThreshold,
                               std::size_t parallelism = 1);

nlohmann::json blind_audit_to_json(const BlindAudit& audit);

}  // namespace procqa
