#include "procqa/tools.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "procqa/error.hpp"

namespace procqa {

SpanSet FrameCollection::cells() const {
  std::vector<TimeSpan> spans;
  spans.reserve(frames.size());
  for (const auto& f : frames) spans.push_back(f.cell);
  return SpanSet::normalize(std::move(spans));
}

std::string TextValue::rendered() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (i) out += "\n";
    if (s.span) {
      out += format_seconds(s.span->start_ms()) + "s-" + format_seconds(s.span->end_ms()) + "s: ";
    } else if (s.timestamp_ms) {
      out += format_seconds(*s.timestamp_ms) + "s: ";
    }
    out += s.text;
  }
  return out;
}

ValueKind kind_of(const ToolValue& v) {
  switch (v.index()) {
    case 0: return ValueKind::Video;
    case 1: return ValueKind::Frames;
    case 2: return ValueKind::Detections;
    case 3: return ValueKind::Text;
    case 4: return ValueKind::Spans;
    default: return ValueKind::Score;
  }
}

namespace {

nlohmann::json video_json(const VideoHandle& v) {
  return {{"video_id", v.video_id}, {"fps", v.fps}, {"duration_ms", v.duration_ms},
          {"width", v.width}, {"height", v.height}};
}

nlohmann::json detection_json(const Detection& d) {
  return {{"timestamp_ms", d.timestamp_ms},
          {"label", d.label},
          {"bbox", {d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]}},
          {"confidence", d.confidence}};
}

}  // namespace

nlohmann::json tool_value_to_json(const ToolValue& value) {
  nlohmann::json j = {{"kind", to_string(kind_of(value))}};
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, VideoHandle>) {
          j.update(video_json(v));
        } else if constexpr (std::is_same_v<T, FrameCollection>) {
          j["video_id"] = v.video.video_id;
          auto arr = nlohmann::json::array();
          for (const auto& f : v.frames) {
            arr.push_back({{"timestamp_ms", f.timestamp_ms},
                           {"image_ref", f.image_ref},
                           {"cell", span_to_json(f.cell)}});
          }
          j["frames"] = std::move(arr);
        } else if constexpr (std::is_same_v<T, DetectionList>) {
          auto arr = nlohmann::json::array();
          for (const auto& d : v) arr.push_back(detection_json(d));
          j["detections"] = std::move(arr);
        } else if constexpr (std::is_same_v<T, TextValue>) {
          auto arr = nlohmann::json::array();
          for (const auto& s : v.segments) {
            nlohmann::json e = {{"text", s.text}};
            if (s.timestamp_ms) e["timestamp_ms"] = *s.timestamp_ms;
            if (s.span) e["span"] = span_to_json(*s.span);
            arr.push_back(std::move(e));
          }
          j["segments"] = std::move(arr);
          if (!v.evidence.empty()) j["evidence"] = spanset_to_json(v.evidence);
        } else if constexpr (std::is_same_v<T, SpanSet>) {
          j["spans"] = spanset_to_json(v);
        } else {
          j["value"] = v;
        }
      },
      value);
  return j;
}

std::string render_detections(const DetectionList& dets) {
  std::ostringstream out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    if (i) out << "\n";
    out << format_seconds(d.timestamp_ms) << "s: " << d.label << " at (" << d.bbox[0] << ", "
        << d.bbox[1] << ", " << d.bbox[2] << ", " << d.bbox[3] << ") conf " << d.confidence;
  }
  return out.str();
}

std::optional<TrimRelation> parse_trim_relation(std::string_view s) {
  if (s == "before") return TrimRelation::Before;
  if (s == "after") return TrimRelation::After;
  if (s == "within") return TrimRelation::Within;
  return std::nullopt;
}

// ---- contracts -------------------------------------------------------------

VideoHandle video_load(ToolBackend& backend, const std::string& path) {
  if (path.empty()) fail(Errc::NotFound, "empty video path");
  VideoHandle h = backend.load_video(path);
  if (!(h.fps > 0.0) || h.duration_ms <= 0 || h.width <= 0 || h.height <= 0 ||
      h.video_id.empty()) {
    fail(Errc::CorruptAsset, "video '" + path + "' has invalid metadata");
  }
  return h;
}

__extension__ typedef __int128 Wide;

FrameCollection frame_sample(const VideoHandle& video, std::int64_t n) {
  const Millis d = video.duration_ms;
  if (n < 1) fail(Errc::InvalidCount, "frame count must be at least 1");
  if (n > d) {
    fail(Errc::InvalidCount, "cannot sample " + std::to_string(n) + " distinct frames from " +
                                 std::to_string(d) + " ms");
  }
  std::vector<Millis> ts(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    // round((i + 0.5) * d / n), halves up, exact in 128-bit integers
    const Wide num = static_cast<Wide>(2 * i + 1) * d + n;
    ts[static_cast<std::size_t>(i)] = static_cast<Millis>(num / (2 * static_cast<Wide>(n)));
  }
  FrameCollection out;
  out.video = video;
  out.frames.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Millis lo = i == 0 ? 0 : (ts[i - 1] + ts[i] + 1) / 2;
    const Millis hi = i + 1 == ts.size() ? d : (ts[i] + ts[i + 1] + 1) / 2;
    out.frames.push_back(
        {ts[i], video.video_id + "@" + std::to_string(ts[i]), TimeSpan::make(lo, hi)});
  }
  return out;
}

FrameCollection frame_trim(const FrameCollection& frames, TrimRelation relation,
                           const SpanSet& reference) {
  if (reference.empty()) fail(Errc::InvalidArgument, "Frame_Trim needs a non-empty reference");
  // Multi-span references act through their hull so the three relations
  // always partition the input.
  const Millis lo = reference.spans().front().start_ms();
  const Millis hi = reference.spans().back().end_ms();
  FrameCollection out;
  out.video = frames.video;
  for (const auto& f : frames.frames) {
    const Millis t = f.timestamp_ms;
    const bool keep = relation == TrimRelation::Before  ? t < lo
                      : relation == TrimRelation::After ? t >= hi
                                                        : (t >= lo && t < hi);
    if (keep) out.frames.push_back(f);
  }
  return out;
}

FrameCollection select_top_frames(const FrameCollection& frames,
                                  const std::vector<double>& scores, std::int64_t top_k) {
  if (top_k < 1) fail(Errc::InvalidArgument, "top_k must be at least 1");
  if (scores.size() != frames.frames.size()) {
    fail(Errc::BackendError, "relevance scores do not match frame count");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isfinite(scores[i]) && scores[i] > 0.0) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (idx.size() > static_cast<std::size_t>(top_k)) idx.resize(static_cast<std::size_t>(top_k));
  std::sort(idx.begin(), idx.end());
  FrameCollection out;
  out.video = frames.video;
  for (auto i : idx) out.frames.push_back(frames.frames[i]);
  return out;
}

FrameCollection frame_retrieve(ToolBackend& backend, const FrameCollection& frames,
                               const std::string& query, std::int64_t top_k) {
  if (top_k < 1) fail(Errc::InvalidArgument, "top_k must be at least 1");
  if (frames.frames.empty()) return frames;
  return select_top_frames(frames, backend.relevance(frames, query), top_k);
}

DetectionList obj_det(ToolBackend& backend, const FrameCollection& frames,
                      const std::string& query) {
  if (query.find_first_not_of(" \t\n") == std::string::npos) {
    fail(Errc::InvalidArgument, "Obj_Det query must be non-empty");
  }
  if (frames.frames.empty()) return {};
  DetectionList dets = backend.detect(frames, query);
  for (const auto& d : dets) {
    const bool known_ts = std::any_of(frames.frames.begin(), frames.frames.end(),
                                      [&](const Frame& f) { return f.timestamp_ms == d.timestamp_ms; });
    if (!known_ts) fail(Errc::BackendError, "detection at a timestamp that was not requested");
    if (!(d.bbox[2] > 0.0 && d.bbox[3] > 0.0)) fail(Errc::BackendError, "detection box has no area");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      fail(Errc::BackendError, "detection confidence outside [0, 1]");
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.timestamp_ms < b.timestamp_ms;
  });
  return dets;
}

TextValue action_rec(ToolBackend& backend, const FrameCollection& frames) {
  if (frames.frames.empty()) return {};
  auto raw = backend.recognize_actions(frames);
  TextValue out;
  if (frames.frames.size() == 1) {
    const Millis t = frames.frames.front().timestamp_ms;
    std::string desc;
    for (const auto& s : raw) {
      if (s.span && s.span->contains(t)) {
        desc = s.text;
        break;
      }
    }
    if (desc.empty() && !raw.empty()) desc = raw.front().text;
    out.segments.push_back({{}, TimeSpan::make(t, t + 1), desc});
    return out;
  }
  const TimeSpan extent = TimeSpan::make(frames.frames.front().cell.start_ms(),
                                         frames.frames.back().cell.end_ms());
  for (const auto& s : raw) {
    if (!s.span) fail(Errc::BackendError, "action segment without a span");
    const Millis lo = std::max(s.span->start_ms(), extent.start_ms());
    const Millis hi = std::min(s.span->end_ms(), extent.end_ms());
    if (hi > lo) out.segments.push_back({{}, TimeSpan::make(lo, hi), s.text});
  }
  std::stable_sort(out.segments.begin(), out.segments.end(),
                   [](const TextSegment& a, const TextSegment& b) { return *a.span < *b.span; });
  for (std::size_t i = 1; i < out.segments.size(); ++i) {
    if (out.segments[i].span->start_ms() < out.segments[i - 1].span->end_ms()) {
      fail(Errc::BackendError, "action segments overlap");
    }
  }
  return out;
}

TextValue img_caption(ToolBackend& backend, const FrameCollection& frames) {
  if (frames.frames.empty()) return {};
  const auto captions = backend.caption(frames);
  if (captions.size() != frames.frames.size()) {
    fail(Errc::BackendError, "caption count does not match frame count");
  }
  TextValue out;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    out.segments.push_back({frames.frames[i].timestamp_ms, {}, captions[i]});
  }
  return out;
}

TextValue context_sum(ToolBackend& backend, const std::vector<std::string>& texts) {
  if (texts.empty()) return TextValue::plain("");
  return TextValue::plain(backend.summarize(texts));
}

TextValue answer_gen(ToolBackend& backend, const AnswerRequest& request, const ToolContext& ctx) {
  if (request.question.find_first_not_of(" \t\n") == std::string::npos) {
    fail(Errc::InvalidArgument, "Answer_Gen needs a question");
  }
  GeneratedAnswer gen = backend.answer(request, ctx);
  const TimeSpan bounds = request.frames.video.bounds();
  SpanSet evidence = SpanSet::normalize(std::move(gen.evidence)).clip(bounds);
  if (evidence.empty()) evidence = request.evidence_hint.clip(bounds);
  if (evidence.empty()) fail(Errc::EmptyEvidence, "no evidence spans for the answer");
  TextValue out = TextValue::plain(std::move(gen.answer));
  out.evidence = std::move(evidence);
  return out;
}

// ---- argument binding --------------------------------------------------------

template <typename T>
const T& CallArgs::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) fail(Errc::InvalidArgument, "missing argument '" + name + "'");
  if (const T* v = std::get_if<T>(&it->second)) return *v;
  fail(Errc::InvalidArgument, "argument '" + name + "' has the wrong kind");
}

const std::string& CallArgs::text(const std::string& n) const { return get<std::string>(n); }
const std::vector<std::string>& CallArgs::texts(const std::string& n) const {
  return get<std::vector<std::string>>(n);
}
double CallArgs::score(const std::string& n) const { return get<double>(n); }
const SpanSet& CallArgs::spans(const std::string& n) const { return get<SpanSet>(n); }
const VideoHandle& CallArgs::video(const std::string& n) const { return get<VideoHandle>(n); }
const FrameCollection& CallArgs::frames(const std::string& n) const {
  return get<FrameCollection>(n);
}

nlohmann::json CallArgs::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : values_) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, double> ||
                        std::is_same_v<T, std::vector<std::string>>) {
            j[name] = v;
          } else if constexpr (std::is_same_v<T, SpanSet>) {
            j[name] = spanset_to_json(v);
          } else {
            j[name] = tool_value_to_json(ToolValue(v));
          }
        },
        value);
  }
  return j;
}

namespace {

[[noreturn]] void bind_fail(const ToolCall& call, const std::string& param, const std::string& msg) {
  fail(Errc::InvalidArgument, call.tool_name + "." + param + ": " + msg);
}

const ToolValue& lookup(const ToolCall& call, const std::string& param, const Bindings& b,
                        const Ref& r) {
  auto it = b.find(r.name);
  if (it == b.end()) bind_fail(call, param, "unbound reference '" + r.name + "'");
  return it->second;
}

std::string bind_text(const ToolCall& call, const ParamSpec& p, const ArgValue& v,
                      const Bindings& b) {
  if (v.is<std::string>()) {
    const auto& s = v.as<std::string>();
    if (!p.choices.empty() && std::find(p.choices.begin(), p.choices.end(), s) == p.choices.end()) {
      bind_fail(call, p.name, "'" + s + "' is not an allowed value");
    }
    return s;
  }
  if (v.is<Ref>()) {
    const auto& tv = lookup(call, p.name, b, v.as<Ref>());
    if (const auto* t = std::get_if<TextValue>(&tv)) return t->rendered();
    if (const auto* d = std::get_if<DetectionList>(&tv)) return render_detections(*d);
  }
  bind_fail(call, p.name, "expected text");
}

void add_spans(const ToolCall& call, const ParamSpec& p, const ArgValue& v, const Bindings& b,
               std::vector<TimeSpan>& out) {
  if (v.is<TimeSpan>()) {
    out.push_back(v.as<TimeSpan>());
  } else if (v.is<Ref>()) {
    const auto& tv = lookup(call, p.name, b, v.as<Ref>());
    if (const auto* s = std::get_if<SpanSet>(&tv)) {
      out.insert(out.end(), s->begin(), s->end());
    } else if (const auto* f = std::get_if<FrameCollection>(&tv)) {
      const auto cells = f->cells();
      out.insert(out.end(), cells.begin(), cells.end());
    } else {
      bind_fail(call, p.name, "expected span-list");
    }
  } else if (v.is<ArgList>()) {
    for (const auto& e : v.as<ArgList>()) {
      if (e.is<ArgList>()) bind_fail(call, p.name, "nested list");
      add_spans(call, p, e, b, out);
    }
  } else {
    bind_fail(call, p.name, "expected span-list");
  }
}

ParamValue bind_param(const ToolCall& call, const ParamSpec& p, const ArgValue& v,
                      const Bindings& b) {
  switch (p.kind) {
    case ValueKind::Text: {
      if (!p.repeated) return bind_text(call, p, v, b);
      std::vector<std::string> texts;
      if (v.is<ArgList>()) {
        for (const auto& e : v.as<ArgList>()) texts.push_back(bind_text(call, p, e, b));
      } else {
        texts.push_back(bind_text(call, p, v, b));
      }
      return texts;
    }
    case ValueKind::Score: {
      double x = 0.0;
      if (v.is<std::int64_t>()) {
        x = static_cast<double>(v.as<std::int64_t>());
      } else if (v.is<double>() && !p.integer) {
        x = v.as<double>();
      } else if (v.is<Ref>()) {
        const auto& tv = lookup(call, p.name, b, v.as<Ref>());
        const auto* d = std::get_if<double>(&tv);
        if (!d) bind_fail(call, p.name, "expected score");
        x = *d;
      } else {
        bind_fail(call, p.name, p.integer ? "expected an integer" : "expected a number");
      }
      if (p.integer && x != std::floor(x)) bind_fail(call, p.name, "expected an integer");
      if (p.min_value && x < *p.min_value) bind_fail(call, p.name, "value below minimum");
      return x;
    }
    case ValueKind::Spans: {
      std::vector<TimeSpan> spans;
      add_spans(call, p, v, b, spans);
      return SpanSet::normalize(std::move(spans));
    }
    default:
      break;
  }
  if (!v.is<Ref>()) bind_fail(call, p.name, "expected a reference to a " + std::string(to_string(p.kind)));
  const auto& tv = lookup(call, p.name, b, v.as<Ref>());
  if (kind_of(tv) != p.kind) bind_fail(call, p.name, "expected " + std::string(to_string(p.kind)));
  return std::visit(
      [](const auto& x) -> ParamValue {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, VideoHandle> || std::is_same_v<T, FrameCollection> ||
                      std::is_same_v<T, DetectionList>) {
          return x;
        } else {
          return std::string();
        }
      },
      tv);
}

void check_output(const ToolSpec& spec, const ToolValue& v) {
  if (kind_of(v) != spec.output_kind) {
    fail(Errc::OutputKindMismatch, spec.name + " returned " + std::string(to_string(kind_of(v))) +
                                       ", declared " + std::string(to_string(spec.output_kind)));
  }
  if (const auto* f = std::get_if<FrameCollection>(&v)) {
    for (std::size_t i = 0; i < f->frames.size(); ++i) {
      const Millis t = f->frames[i].timestamp_ms;
      if (t < 0 || t >= f->video.duration_ms ||
          (i > 0 && t <= f->frames[i - 1].timestamp_ms)) {
        fail(Errc::OutputKindMismatch, spec.name + " returned frames out of order or range");
      }
    }
  } else if (const auto* d = std::get_if<DetectionList>(&v)) {
    for (const auto& det : *d) {
      if (!(det.bbox[2] > 0 && det.bbox[3] > 0 && det.confidence >= 0 && det.confidence <= 1)) {
        fail(Errc::OutputKindMismatch, spec.name + " returned an invalid detection");
      }
    }
  } else if (const auto* h = std::get_if<VideoHandle>(&v)) {
    if (!(h->fps > 0) || h->duration_ms <= 0) {
      fail(Errc::OutputKindMismatch, spec.name + " returned an invalid video handle");
    }
  }
}

}  // namespace

CallArgs bind_call(const ToolSpec& spec, const ToolCall& call, const Bindings& bindings) {
  for (const auto& [name, _] : call.args) {
    if (!spec.find_param(name)) bind_fail(call, name, "unknown parameter");
  }
  CallArgs args;
  for (const auto& p : spec.params) {
    const ArgValue* v = call.find_arg(p.name);
    if (!v && p.default_value) v = &*p.default_value;
    if (!v) {
      if (p.required) bind_fail(call, p.name, "missing required parameter");
      continue;
    }
    args.set(p.name, bind_param(call, p, *v, bindings));
  }
  return args;
}

void ToolRegistry::add(ToolSpec spec, ToolHandler handler) {
  if (find_tool(catalog_, spec.name)) fail(Errc::InvalidArgument, "duplicate tool " + spec.name);
  for (const auto& p : spec.params) {
    if (p.required && p.default_value) {
      fail(Errc::InvalidArgument, spec.name + "." + p.name + ": required params take no default");
    }
  }
  handlers_.emplace(spec.name, std::move(handler));
  catalog_.push_back(std::move(spec));
}

ToolValue ToolRegistry::invoke(const std::string& name, const CallArgs& args,
                               const ToolContext& ctx) const {
  const ToolSpec* s = spec(name);
  auto it = handlers_.find(name);
  if (!s || it == handlers_.end()) fail(Errc::NotFound, "unknown tool '" + name + "'");
  ToolValue out = it->second(args, ctx);
  check_output(*s, out);
  return out;
}

ToolCatalog standard_catalog() {
  auto req = [](std::string name, ValueKind kind) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = kind;
    return p;
  };
  auto opt_int = [](std::string name, std::int64_t def) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ValueKind::Score;
    p.required = false;
    p.integer = true;
    p.min_value = 1;
    p.default_value = ArgValue(def);
    return p;
  };
  ParamSpec relation = req("relation", ValueKind::Text);
  relation.choices = {"before", "after", "within"};
  ParamSpec texts = req("texts", ValueKind::Text);
  texts.repeated = true;
  ParamSpec hint = req("evidence_hint", ValueKind::Spans);
  hint.required = false;
  hint.default_value = ArgValue(ArgList{});

  const auto L = BackendBinding::Local;
  const auto R = BackendBinding::Remote;
  return {
      {"Video_Load", "Open a video and record frame rate, duration and resolution.",
       {req("path", ValueKind::Text)}, ValueKind::Video, R},
      {"Frame_Sample", "Sample n timestamped frames uniformly over the video.",
       {req("video", ValueKind::Video), opt_int("n", kDefaultFrameCount)}, ValueKind::Frames, L},
      {"Frame_Trim", "Keep frames before, after or within a reference interval.",
       {req("frames", ValueKind::Frames), relation, req("reference", ValueKind::Spans)},
       ValueKind::Frames, L},
      {"Frame_Retrieve", "Keep the top_k frames most relevant to a text query.",
       {req("frames", ValueKind::Frames), req("query", ValueKind::Text),
        opt_int("top_k", kDefaultTopK)},
       ValueKind::Frames, R},
      {"Obj_Det", "Open-vocabulary detection of the queried object in each frame.",
       {req("frames", ValueKind::Frames), req("query", ValueKind::Text)}, ValueKind::Detections,
       R},
      {"Action_Rec", "Temporally aligned descriptions of the actions over the frames.",
       {req("frames", ValueKind::Frames)}, ValueKind::Text, R},
      {"Img_Caption", "One object-focused caption per frame.", {req("frames", ValueKind::Frames)},
       ValueKind::Text, R},
      {"Context_Sum", "Fuse captions, actions and detections into one textual context.",
       {texts}, ValueKind::Text, R},
      {"Answer_Gen", "Answer the question from context and frames, with evidence spans.",
       {req("question", ValueKind::Text), req("context", ValueKind::Text),
        req("frames", ValueKind::Frames), hint},
       ValueKind::Text, R},
  };
}

ToolRegistry make_standard_registry(std::shared_ptr<ToolBackend> backend) {
  ToolRegistry reg;
  std::map<std::string, ToolHandler> handlers;
  // Handlers keep the backend alive through their shared_ptr captures.
  handlers["Video_Load"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return video_load(*backend, a.text("path"));
  };
  handlers["Frame_Sample"] = [](const CallArgs& a, const ToolContext&) -> ToolValue {
    return frame_sample(a.video("video"), static_cast<std::int64_t>(a.score("n")));
  };
  handlers["Frame_Trim"] = [](const CallArgs& a, const ToolContext&) -> ToolValue {
    return frame_trim(a.frames("frames"), *parse_trim_relation(a.text("relation")),
                      a.spans("reference"));
  };
  handlers["Frame_Retrieve"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return frame_retrieve(*backend, a.frames("frames"), a.text("query"),
                          static_cast<std::int64_t>(a.score("top_k")));
  };
  handlers["Obj_Det"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return obj_det(*backend, a.frames("frames"), a.text("query"));
  };
  handlers["Action_Rec"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return action_rec(*backend, a.frames("frames"));
  };
  handlers["Img_Caption"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return img_caption(*backend, a.frames("frames"));
  };
  handlers["Context_Sum"] = [backend](const CallArgs& a, const ToolContext&) -> ToolValue {
    return context_sum(*backend, a.texts("texts"));
  };
  handlers["Answer_Gen"] = [backend](const CallArgs& a, const ToolContext& ctx) -> ToolValue {
    AnswerRequest req{a.text("question"), a.text("context"), a.frames("frames"),
                      a.spans("evidence_hint")};
    return answer_gen(*backend, req, ctx);
  };
  for (auto& spec : standard_catalog()) {
    auto h = std::move(handlers.at(spec.name));
    reg.add(std::move(spec), std::move(h));
  }
  return reg;
}

}  // namespace procqa
