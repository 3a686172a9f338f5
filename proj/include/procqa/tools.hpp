#pragma once

// Runtime values that flow between tool calls, the backend interface the
// perception/generation tools delegate to, and the registry that binds plan
// arguments and dispatches calls.

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "procqa/plan.hpp"
#include "procqa/temporal.hpp"
#include "procqa/tool_spec.hpp"

namespace procqa {

struct VideoHandle {
  std::string video_id;
  double fps = 0.0;
  Millis duration_ms = 0;
  int width = 0;
  int height = 0;

  TimeSpan bounds() const { return TimeSpan::make(0, duration_ms); }
  bool operator==(const VideoHandle&) const = default;
};

// A sampled frame. `cell` is the slice of the timeline the frame stands for
// (the half-open interval between the midpoints to its sampling neighbours);
// frames used as evidence contribute their cells.
struct Frame {
  Millis timestamp_ms = 0;
  std::string image_ref;
  TimeSpan cell = TimeSpan::make(0, 1);
  bool operator==(const Frame&) const = default;
};

struct FrameCollection {
  VideoHandle video;
  std::vector<Frame> frames;  // strictly increasing timestamps

  SpanSet cells() const;
  bool operator==(const FrameCollection&) const = default;
};

struct Detection {
  Millis timestamp_ms = 0;
  std::string label;
  std::array<double, 4> bbox{};  // x, y, w, h in pixels
  double confidence = 0.0;
  bool operator==(const Detection&) const = default;
};

using DetectionList = std::vector<Detection>;

struct TextSegment {
  std::optional<Millis> timestamp_ms;
  std::optional<TimeSpan> span;
  std::string text;
  bool operator==(const TextSegment&) const = default;
};

// Text-kind value: captions, action descriptions, summaries and answers.
// Only Answer_Gen fills `evidence`.
struct TextValue {
  std::vector<TextSegment> segments;
  SpanSet evidence;

  static TextValue plain(std::string text) { return {{TextSegment{{}, {}, std::move(text)}}, {}}; }
  std::string rendered() const;  // one line per segment
  bool operator==(const TextValue&) const = default;
};

using ToolValue =
    std::variant<VideoHandle, FrameCollection, DetectionList, TextValue, SpanSet, double>;

ValueKind kind_of(const ToolValue& v);
nlohmann::json tool_value_to_json(const ToolValue& v);
std::string render_detections(const DetectionList& dets);

enum class TrimRelation { Before, After, Within };
std::optional<TrimRelation> parse_trim_relation(std::string_view s);

struct AnswerRequest {
  std::string question;
  std::string context;
  FrameCollection frames;
  SpanSet evidence_hint;
};

struct GeneratedAnswer {
  std::string answer;
  std::vector<TimeSpan> evidence;  // raw; normalized by the tool contract
};

struct ToolContext {
  std::string qa_id;
};

// What a perception/generation service must provide. Implementations must be
// safe to call concurrently.
class ToolBackend {
 public:
  virtual ~ToolBackend() = default;

  virtual VideoHandle load_video(const std::string& path) = 0;
  // One relevance score per input frame, same order.
  virtual std::vector<double> relevance(const FrameCollection& frames,
                                        const std::string& query) = 0;
  virtual DetectionList detect(const FrameCollection& frames, const std::string& query) = 0;
  // Action segments with spans; need not be clipped to the frames.
  virtual std::vector<TextSegment> recognize_actions(const FrameCollection& frames) = 0;
  // One caption per frame, in frame order.
  virtual std::vector<std::string> caption(const FrameCollection& frames) = 0;
  virtual std::string summarize(const std::vector<std::string>& texts) = 0;
  virtual GeneratedAnswer answer(const AnswerRequest& request, const ToolContext& ctx) = 0;
};

// ---- tool contracts ------------------------------------------------------

inline constexpr int kDefaultFrameCount = 50;
inline constexpr int kDefaultTopK = 8;

VideoHandle video_load(ToolBackend& backend, const std::string& path);
FrameCollection frame_sample(const VideoHandle& video, std::int64_t n);
FrameCollection frame_trim(const FrameCollection& frames, TrimRelation relation,
                           const SpanSet& reference);
FrameCollection frame_retrieve(ToolBackend& backend, const FrameCollection& frames,
                               const std::string& query, std::int64_t top_k);
// Selection rule shared by every backend: positive scores only, best first,
// earlier timestamp on ties, result in timestamp order.
FrameCollection select_top_frames(const FrameCollection& frames,
                                  const std::vector<double>& scores, std::int64_t top_k);
DetectionList obj_det(ToolBackend& backend, const FrameCollection& frames,
                      const std::string& query);
TextValue action_rec(ToolBackend& backend, const FrameCollection& frames);
TextValue img_caption(ToolBackend& backend, const FrameCollection& frames);
TextValue context_sum(ToolBackend& backend, const std::vector<std::string>& texts);
TextValue answer_gen(ToolBackend& backend, const AnswerRequest& request, const ToolContext& ctx);

// ---- registry ------------------------------------------------------------

// Arguments after binding: literals and references resolved into the
// parameter's kind, defaults applied.
using ParamValue = std::variant<std::string, std::vector<std::string>, double, SpanSet,
                                VideoHandle, FrameCollection, DetectionList>;

class CallArgs {
 public:
  void set(std::string name, ParamValue v) { values_[std::move(name)] = std::move(v); }
  bool has(const std::string& name) const { return values_.contains(name); }

  const std::string& text(const std::string& name) const;
  const std::vector<std::string>& texts(const std::string& name) const;
  double score(const std::string& name) const;
  const SpanSet& spans(const std::string& name) const;
  const VideoHandle& video(const std::string& name) const;
  const FrameCollection& frames(const std::string& name) const;

  nlohmann::json to_json() const;

 private:
  template <typename T>
  const T& get(const std::string& name) const;
  std::map<std::string, ParamValue> values_;
};

using Bindings = std::map<std::string, ToolValue>;

// Resolves a call's arguments against a tool spec and the values bound so
// far. Throws InvalidArgument on anything validate_plan would have flagged.
CallArgs bind_call(const ToolSpec& spec, const ToolCall& call, const Bindings& bindings);

using ToolHandler = std::function<ToolValue(const CallArgs&, const ToolContext&)>;

class ToolRegistry {
 public:
  void add(ToolSpec spec, ToolHandler handler);

  const ToolCatalog& catalog() const noexcept { return catalog_; }
  const ToolSpec* spec(std::string_view name) const { return find_tool(catalog_, name); }

  // Dispatches by name and checks the result kind against the spec.
  ToolValue invoke(const std::string& name, const CallArgs& args, const ToolContext& ctx) const;

 private:
  ToolCatalog catalog_;
  std::map<std::string, ToolHandler, std::less<>> handlers_;
};

// The nine tool specs, independent of any backend.
ToolCatalog standard_catalog();
ToolRegistry make_standard_registry(std::shared_ptr<ToolBackend> backend);

inline std::vector<Violation> validate_plan(const Plan& plan, const ToolRegistry& registry) {
  return validate_plan(plan, registry.catalog());
}

}  // namespace procqa
