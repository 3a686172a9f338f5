#pragma once

// Scoring: evidence mIoU under an explicit one-to-one span matching, the
// four-dimension answer judge, and per-type report aggregation.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "procqa/dataset.hpp"
#include "procqa/http_client.hpp"
#include "procqa/judge_score.hpp"
#include "procqa/orchestrator.hpp"
#include "procqa/temporal.hpp"

namespace procqa {

using Rational = boost::multiprecision::cpp_rational;

// ---- evidence mIoU -------------------------------------------------------

struct MatchedPair {
  std::optional<TimeSpan> pred;
  std::optional<TimeSpan> gt;
  IouFraction iou{0, 1};  // 0 unless both sides are present

  double value() const { return iou.value(); }
  bool operator==(const MatchedPair&) const = default;
};

enum class MatchingPolicy { Optimal, Greedy };

std::string_view to_string(MatchingPolicy p);
std::optional<MatchingPolicy> parse_matching_policy(std::string_view s);

// One-to-one assignment between spans. Optimal maximizes total IoU exactly;
// Greedy repeatedly takes the best remaining pair. Pairs with zero overlap
// are reported as unmatched. Order: matched pairs by prediction, then
// unmatched predictions, then unmatched ground truth.
std::vector<MatchedPair> match_spans(const SpanSet& pred, const SpanSet& gt,
                                     MatchingPolicy policy = MatchingPolicy::Optimal);

// Sum of matched IoUs over max(|pred|, |gt|). Throws EmptyGroundTruth.
Rational mean_iou_exact(const SpanSet& pred, const SpanSet& gt,
                        MatchingPolicy policy = MatchingPolicy::Optimal);
double mean_iou(const SpanSet& pred, const SpanSet& gt,
                MatchingPolicy policy = MatchingPolicy::Optimal);

// ---- judge ---------------------------------------------------------------

struct StubRule {
  std::string answer_contains;  // case-insensitive substring of the answer
  JudgeScore score;
};

enum class JudgeKind { Remote, Stub };

struct JudgeBackend {
  JudgeKind kind = JudgeKind::Stub;
  std::string endpoint;
  std::string prompt_template_id = "judge_v1";
  CompletionFn complete;        // Remote
  std::vector<StubRule> rules;  // Stub, first match wins

  static JudgeBackend stub(std::vector<StubRule> rules = {});
  // Throws ConfigError when the endpoint is empty or no completion is given.
  static JudgeBackend remote(std::string endpoint, CompletionFn complete);
};

std::vector<StubRule> stub_rules_from_json(const nlohmann::json& doc);

// Deterministic offline judge: exact match scores 5 everywhere, an empty
// answer 0, then the rule table, then round(5 * token F1) on every dimension.
JudgeScore stub_judge(const std::string& question, const std::string& gold,
                      const std::string& answer, const std::vector<StubRule>& rules);

// Bag-of-words F1 over lower-cased alphanumeric tokens.
double token_f1(const std::string& a, const std::string& b);

std::string judge_prompt(const std::string& question, const std::string& gold,
                         const std::string& answer, const std::string& template_id = "judge_v1");

// First {...} object in the reply, four integer dimensions in [0, 5].
// Throws JudgeParseError.
JudgeScore parse_judge_reply(const std::string& reply);

// Throws InvalidArgument for an empty question or gold answer, JudgeParseError
// when the remote reply is unusable twice, BackendUnavailable from transport.
JudgeScore judge_answer(const std::string& question, const std::string& gold,
                        const std::string& answer, const JudgeBackend& backend);

// ---- evaluation and reports ----------------------------------------------

struct ItemEval {
  std::string qa_id;
  QaType qa_type = QaType::Preparation;
  std::optional<JudgeScore> judge;  // absent on failure
  double iou = 0.0;
  bool failure = false;
  std::string failure_reason;

  double score() const { return judge ? judge->average() : 0.0; }
};

nlohmann::json item_eval_to_json(const ItemEval& e);
ItemEval item_eval_from_json(const nlohmann::json& j);
std::string item_evals_to_text(const std::vector<ItemEval>& rows);
std::vector<ItemEval> load_item_evals(const std::filesystem::path& path);

// One row per dataset item, dataset order. Items without a prediction and
// items whose judge call failed become failure rows scoring (0, 0).
// Throws UnknownItem for predictions of items not in the dataset.
std::vector<ItemEval> evaluate_predictions(const Dataset& dataset,
                                           const std::vector<Prediction>& predictions,
                                           const JudgeBackend& judge,
                                           MatchingPolicy policy = MatchingPolicy::Optimal,
                                           std::size_t parallelism = 1);

struct ReportCell {
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean_score = 0.0;  // judge average
  double miou_pct = 0.0;    // mean IoU x 100
};

struct BenchmarkReport {
  std::map<QaType, ReportCell> per_type;  // types with at least one item
  ReportCell overall;                     // item-weighted
};

struct ItemScore {
  JudgeScore judge;
  double iou = 0.0;
};

BenchmarkReport aggregate_rows(const std::vector<ItemEval>& rows);
// Items missing from `scores` count as failures scoring (0, 0). Throws
// UnknownItem for scores of items not in `items`.
BenchmarkReport aggregate_report(const std::vector<QAItem>& items,
                                 const std::map<std::string, ItemScore>& scores);

nlohmann::json report_to_json(const BenchmarkReport& report);
// Two columns per QA type plus the average, as "Score  mIoU%".
std::string format_report_table(const BenchmarkReport& report, const std::string& row_label);

}  // namespace procqa
