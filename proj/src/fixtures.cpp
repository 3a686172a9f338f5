#include "procqa/fixtures.hpp"

#include <algorithm>
#include <cctype>

#include "procqa/error.hpp"
#include "procqa/json_util.hpp"

namespace procqa {

namespace {

TimeSpan parse_span(const JsonCursor& c) {
  const auto& n = c.node();
  if (!n.is_array() || n.size() != 2 || !n[0].is_number() || !n[1].is_number()) {
    c.schema_fail("span must be a [start_seconds, end_seconds] pair");
  }
  const Millis s = seconds_to_ms(n[0].get<double>());
  const Millis e = seconds_to_ms(n[1].get<double>());
  if (s < 0 || e <= s) c.schema_fail("invalid span");
  return TimeSpan::make(s, e);
}

std::array<double, 4> parse_bbox(const JsonCursor& c) {
  const auto& n = c.array();
  if (n.size() != 4) c.schema_fail("bbox must be [x, y, w, h]");
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) b[i] = c.at(i).number();
  if (!(b[2] > 0 && b[3] > 0)) c.schema_fail("bbox width and height must be positive");
  return b;
}

template <typename T>
void check_cover(const JsonCursor& c, const std::vector<T>& segs, Millis duration) {
  Millis at = 0;
  for (const auto& s : segs) {
    if (s.span.start_ms() != at) c.schema_fail("annotations must tile [0, duration) in order");
    at = s.span.end_ms();
  }
  if (at != duration) c.schema_fail("annotations must tile [0, duration) in order");
}

FixtureVideo parse_fixture(const JsonCursor& c) {
  c.object();
  FixtureVideo f;
  f.handle.video_id = c.at("video_id").str();
  f.handle.fps = c.at("fps").number();
  f.handle.duration_ms = c.at("duration_ms").integer();
  f.handle.width = static_cast<int>(c.at("width").integer());
  f.handle.height = static_cast<int>(c.at("height").integer());
  if (f.handle.video_id.empty()) c.at("video_id").schema_fail("video_id must be non-empty");
  if (!(f.handle.fps > 0)) c.at("fps").schema_fail("fps must be positive");
  if (f.handle.duration_ms <= 0) c.at("duration_ms").schema_fail("duration must be positive");
  if (f.handle.width <= 0 || f.handle.height <= 0) c.schema_fail("resolution must be positive");
  const Millis d = f.handle.duration_ms;

  const auto actions = c.at("actions");
  for (std::size_t i = 0; i < actions.array().size(); ++i) {
    const auto a = actions.at(i);
    FixtureAction act{parse_span(a.at("span")), a.at("label").str(), false};
    if (auto m = a.maybe("mistake")) act.mistake = m->boolean();
    f.actions.push_back(std::move(act));
  }
  check_cover(actions, f.actions, d);

  const auto captions = c.at("captions");
  for (std::size_t i = 0; i < captions.array().size(); ++i) {
    const auto a = captions.at(i);
    f.captions.push_back({parse_span(a.at("span")), a.at("text").str()});
  }
  check_cover(captions, f.captions, d);

  const auto objects = c.at("objects");
  for (std::size_t i = 0; i < objects.array().size(); ++i) {
    const auto o = objects.at(i);
    FixtureObject obj{o.at("label").str(), parse_span(o.at("span")), parse_bbox(o.at("bbox"))};
    if (obj.span.end_ms() > d) o.at("span").schema_fail("object span beyond duration");
    f.objects.push_back(std::move(obj));
  }

  if (auto answers = c.maybe("answers")) {
    for (const auto& [k, v] : answers->object().items()) {
      f.answers[k] = answers->at(k).str();
    }
  }
  return f;
}

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\n\r") - b + 1);
}

// Whole-word, case-insensitive containment.
bool mentions(const std::string& text, const std::string& query) {
  const std::string t = lower(text), q = lower(trim(query));
  if (q.empty()) return false;
  for (std::size_t pos = t.find(q); pos != std::string::npos; pos = t.find(q, pos + 1)) {
    const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(t[pos - 1]));
    const std::size_t end = pos + q.size();
    const bool right = end == t.size() || !std::isalnum(static_cast<unsigned char>(t[end]));
    if (left && right) return true;
  }
  return false;
}

bool label_matches(const std::string& label, const std::string& query) {
  return lower(trim(label)) == lower(trim(query));
}

}  // namespace

FixtureSuite fixture_suite_from_json(const nlohmann::json& doc) {
  JsonCursor root(doc);
  root.object();
  FixtureSuite suite;
  const auto fixtures = root.at("fixtures");
  for (std::size_t i = 0; i < fixtures.array().size(); ++i) {
    const auto fc = fixtures.at(i);
    FixtureVideo f = parse_fixture(fc);
    const std::string id = f.handle.video_id;
    if (!suite.fixtures.emplace(id, std::move(f)).second) {
      fc.at("video_id").schema_fail("duplicate fixture id '" + id + "'");
    }
  }

  // Items must point at fixtures before the dataset-level checks run.
  const auto items = root.at("items");
  for (std::size_t i = 0; i < items.array().size(); ++i) {
    const auto vid = items.at(i).at("video_id");
    if (!suite.fixtures.contains(vid.str())) {
      vid.schema_fail("item references unknown fixture '" + vid.str() + "'");
    }
  }
  suite.dataset = dataset_from_json(doc);
  const auto videos = root.at("videos");
  for (std::size_t i = 0; i < suite.dataset.videos.size(); ++i) {
    const auto& v = suite.dataset.videos[i];
    auto it = suite.fixtures.find(v.video_id);
    if (it == suite.fixtures.end()) {
      videos.at(i).at("video_id").schema_fail("video has no fixture '" + v.video_id + "'");
    }
    if (it->second.handle.duration_ms != v.duration_ms) {
      videos.at(i).at("duration_ms").schema_fail("duration differs from fixture");
    }
  }

  const auto expected = root.at("expected");
  for (const auto& [qa_id, _] : expected.object().items()) {
    const auto ec = expected.at(qa_id);
    const QAItem* item = suite.dataset.find_item(qa_id);
    if (!item) ec.schema_fail("expectation for unknown item '" + qa_id + "'");
    ExpectedOutput out;
    out.answer = ec.at("answer").str();
    const auto ev = ec.at("evidence");
    std::vector<TimeSpan> spans;
    for (std::size_t i = 0; i < ev.array().size(); ++i) spans.push_back(parse_span(ev.at(i)));
    out.evidence = SpanSet::normalize(std::move(spans));
    if (out.evidence.empty()) ev.schema_fail("expected evidence must be non-empty");
    const Millis d = suite.fixtures.at(item->video_id).handle.duration_ms;
    if (out.evidence.spans().back().end_ms() > d) ev.schema_fail("expected evidence beyond duration");
    suite.expected.emplace(qa_id, std::move(out));
  }
  return suite;
}

FixtureSuite load_fixture_suite(const std::filesystem::path& path) {
  return fixture_suite_from_json(read_json_file(path));
}

ExpectedOutput fixture_oracle(const FixtureSuite& suite, const std::string& qa_id) {
  auto it = suite.expected.find(qa_id);
  if (it == suite.expected.end()) fail(Errc::UnknownItem, "no fixture expectation for '" + qa_id + "'");
  return it->second;
}

const FixtureVideo& FixtureBackend::video(const std::string& video_id) const {
  auto it = suite_->fixtures.find(video_id);
  if (it == suite_->fixtures.end()) fail(Errc::NotFound, "no fixture '" + video_id + "'");
  return it->second;
}

VideoHandle FixtureBackend::load_video(const std::string& path) {
  constexpr std::string_view kScheme = "fixture://";
  std::string id = path;
  if (id.rfind(kScheme, 0) == 0) id = id.substr(kScheme.size());
  return video(id).handle;
}

std::vector<double> FixtureBackend::relevance(const FrameCollection& frames,
                                              const std::string& query) {
  const auto& v = video(frames.video.video_id);
  std::vector<double> scores;
  scores.reserve(frames.frames.size());
  for (const auto& f : frames.frames) {
    const Millis t = f.timestamp_ms;
    double s = 0.0;
    for (const auto& o : v.objects) {
      if (o.span.contains(t) && label_matches(o.label, query)) s = kVisibleScore;
    }
    if (s == 0.0) {
      for (const auto& c : v.captions) {
        if (c.span.contains(t) && mentions(c.text, query)) s = kMentionScore;
      }
    }
    scores.push_back(s);
  }
  return scores;
}

DetectionList FixtureBackend::detect(const FrameCollection& frames, const std::string& query) {
  const auto& v = video(frames.video.video_id);
  DetectionList out;
  for (const auto& f : frames.frames) {
    for (const auto& o : v.objects) {
      if (o.span.contains(f.timestamp_ms) && label_matches(o.label, query)) {
        out.push_back({f.timestamp_ms, o.label, o.bbox, 1.0});
      }
    }
  }
  return out;
}

std::vector<TextSegment> FixtureBackend::recognize_actions(const FrameCollection& frames) {
  const auto& v = video(frames.video.video_id);
  std::vector<TextSegment> out;
  for (const auto& a : v.actions) {
    const bool seen = std::any_of(frames.frames.begin(), frames.frames.end(),
                                  [&](const Frame& f) { return a.span.contains(f.timestamp_ms); });
    if (seen) out.push_back({{}, a.span, a.label});
  }
  return out;
}

std::vector<std::string> FixtureBackend::caption(const FrameCollection& frames) {
  const auto& v = video(frames.video.video_id);
  std::vector<std::string> out;
  for (const auto& f : frames.frames) {
    std::string text;
    for (const auto& c : v.captions) {
      if (c.span.contains(f.timestamp_ms)) text = c.text;
    }
    out.push_back(std::move(text));
  }
  return out;
}

std::string FixtureBackend::summarize(const std::vector<std::string>& texts) {
  std::string out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (i) out += "\n";
    out += texts[i];
  }
  return out;
}

GeneratedAnswer FixtureBackend::answer(const AnswerRequest& request, const ToolContext& ctx) {
  const auto& v = video(request.frames.video.video_id);
  GeneratedAnswer out;
  auto it = v.answers.find(ctx.qa_id);
  out.answer = it != v.answers.end() ? it->second : request.context;
  out.evidence = request.evidence_hint.spans();
  return out;
}

}  // namespace procqa
