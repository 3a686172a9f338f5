#include "procqa/remote_backend.hpp"

#include <algorithm>
#include <thread>

#include "procqa/error.hpp"
#include "procqa/json_util.hpp"

namespace procqa {

namespace {

[[noreturn]] void malformed(const std::string& tool, const std::string& what) {
  fail(Errc::BackendError, tool + " response is malformed: " + what);
}

// Schema errors inside a result are the server's fault, not the caller's.
template <typename F>
auto parse_result(const std::string& tool, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != Errc::SchemaError && e.code() != Errc::InvalidSpan) throw;
    malformed(tool, e.what());
  }
}

Errc wire_code(const std::string& code) {
  static const std::pair<const char*, Errc> known[] = {
      {"NotFound", Errc::NotFound},
      {"CorruptAsset", Errc::CorruptAsset},
      {"InvalidArgument", Errc::InvalidArgument},
      {"InvalidCount", Errc::InvalidCount},
      {"BackendUnavailable", Errc::BackendUnavailable},
  };
  for (const auto& [name, errc] : known) {
    if (code == name) return errc;
  }
  return Errc::BackendError;
}

TimeSpan wire_span(const JsonCursor& c) {
  const auto& n = c.node();
  if (!n.is_array() || n.size() != 2 || !n[0].is_number() || !n[1].is_number()) {
    c.schema_fail("span must be [start_seconds, end_seconds]");
  }
  return span_from_json(n);
}

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<RemoteToolBackend::kMaxInFlight>& s) : s_(s) {
    s_.acquire();
  }
  ~SemaphoreGuard() { s_.release(); }
  std::counting_semaphore<RemoteToolBackend::kMaxInFlight>& s_;
};

}  // namespace

nlohmann::json wire_request(const nlohmann::json& args) { return {{"args", args}}; }

nlohmann::json wire_request(const nlohmann::json& args, const FrameCollection& frames) {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& f : frames.frames) ts.push_back(f.timestamp_ms);
  return {{"args", args}, {"video_id", frames.video.video_id}, {"frame_timestamps_ms", ts}};
}

RemoteToolBackend::RemoteToolBackend(RemoteConfig config)
    : config_(std::move(config)),
      url_(parse_endpoint_url(config_.endpoint)),
      in_flight_(std::clamp(config_.max_in_flight, 1, kMaxInFlight)) {
  if (config_.max_retries < 0) fail(Errc::ConfigError, "max_retries must be >= 0");
}

nlohmann::json RemoteToolBackend::call(const std::string& tool, const nlohmann::json& body) {
  SemaphoreGuard guard(in_flight_);
  const std::string path = "/v1/tools/" + tool;
  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    HttpResponse res;
    try {
      res = post_json(url_, path, body, config_.api_key, config_.timeout);
    } catch (const Error& e) {
      if (e.code() != Errc::BackendUnavailable) throw;
      last_failure = e.what();
      continue;
    }
    if (res.status >= 500) {
      last_failure = tool + " returned HTTP " + std::to_string(res.status);
      continue;
    }
    const auto doc = nlohmann::json::parse(res.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("ok") || !doc["ok"].is_boolean()) {
      malformed(tool, "expected an {\"ok\": ...} envelope (HTTP " + std::to_string(res.status) + ")");
    }
    if (!doc["ok"].get<bool>()) {
      const auto& err = doc.value("error", nlohmann::json::object());
      const std::string code = err.value("code", "BackendError");
      const std::string message = err.value("message", "unspecified error");
      fail(wire_code(code), tool + ": " + code + ": " + message);
    }
    if (!doc.contains("result") || !doc["result"].is_object()) malformed(tool, "missing result");
    return doc["result"];
  }
  fail(Errc::BackendUnavailable, tool + " unavailable after " +
                                     std::to_string(config_.max_retries + 1) +
                                     " attempts: " + last_failure);
}

VideoHandle RemoteToolBackend::load_video(const std::string& path) {
  const auto r = call("Video_Load", wire_request({{"path", path}}));
  return parse_result("Video_Load", [&] {
    JsonCursor c(r);
    VideoHandle h;
    h.video_id = c.at("video_id").str();
    h.fps = c.at("fps").number();
    h.duration_ms = c.at("duration_ms").integer();
    h.width = static_cast<int>(c.at("width").integer());
    h.height = static_cast<int>(c.at("height").integer());
    return h;
  });
}

std::vector<double> RemoteToolBackend::relevance(const FrameCollection& frames,
                                                 const std::string& query) {
  const auto r = call("Frame_Retrieve", wire_request({{"query", query}}, frames));
  return parse_result("Frame_Retrieve", [&] {
    JsonCursor c(r);
    const auto scores = c.at("scores");
    std::vector<double> out;
    for (std::size_t i = 0; i < scores.array().size(); ++i) out.push_back(scores.at(i).number());
    if (out.size() != frames.frames.size()) {
      scores.schema_fail("expected " + std::to_string(frames.frames.size()) + " scores");
    }
    return out;
  });
}

DetectionList RemoteToolBackend::detect(const FrameCollection& frames, const std::string& query) {
  const auto r = call("Obj_Det", wire_request({{"query", query}}, frames));
  return parse_result("Obj_Det", [&] {
    JsonCursor c(r);
    const auto dets = c.at("detections");
    DetectionList out;
    for (std::size_t i = 0; i < dets.array().size(); ++i) {
      const auto d = dets.at(i);
      Detection det;
      det.timestamp_ms = d.at("timestamp_ms").integer();
      det.label = d.at("label").str();
      const auto bbox = d.at("bbox");
      if (bbox.array().size() != 4) bbox.schema_fail("bbox must be [x, y, w, h]");
      for (std::size_t k = 0; k < 4; ++k) det.bbox[k] = bbox.at(k).number();
      det.confidence = d.at("confidence").number();
      out.push_back(std::move(det));
    }
    return out;
  });
}

std::vector<TextSegment> RemoteToolBackend::recognize_actions(const FrameCollection& frames) {
  const auto r = call("Action_Rec", wire_request(nlohmann::json::object(), frames));
  return parse_result("Action_Rec", [&] {
    JsonCursor c(r);
    const auto actions = c.at("actions");
    std::vector<TextSegment> out;
    for (std::size_t i = 0; i < actions.array().size(); ++i) {
      const auto a = actions.at(i);
      out.push_back({{}, wire_span(a.at("span")), a.at("description").str()});
    }
    return out;
  });
}

std::vector<std::string> RemoteToolBackend::caption(const FrameCollection& frames) {
  const auto r = call("Img_Caption", wire_request(nlohmann::json::object(), frames));
  return parse_result("Img_Caption", [&] {
    JsonCursor c(r);
    const auto caps = c.at("captions");
    if (caps.array().size() != frames.frames.size()) {
      caps.schema_fail("expected one caption per frame");
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < frames.frames.size(); ++i) {
      const auto cap = caps.at(i);
      if (cap.at("timestamp_ms").integer() != frames.frames[i].timestamp_ms) {
        cap.at("timestamp_ms").schema_fail("caption timestamps must follow the request order");
      }
      out.push_back(cap.at("caption").str());
    }
    return out;
  });
}

std::string RemoteToolBackend::summarize(const std::vector<std::string>& texts) {
  const auto r = call("Context_Sum", wire_request({{"texts", texts}}));
  return parse_result("Context_Sum", [&] { return JsonCursor(r).at("summary").str(); });
}

GeneratedAnswer RemoteToolBackend::answer(const AnswerRequest& request, const ToolContext&) {
  const nlohmann::json args = {
      {"question", request.question},
      {"context", request.context},
      {"evidence_hint", spanset_to_json(request.evidence_hint)},
  };
  const auto r = call("Answer_Gen", wire_request(args, request.frames));
  return parse_result("Answer_Gen", [&] {
    JsonCursor c(r);
    GeneratedAnswer out;
    out.answer = c.at("answer").str();
    const auto ev = c.at("evidence");
    for (std::size_t i = 0; i < ev.array().size(); ++i) out.evidence.push_back(wire_span(ev.at(i)));
    return out;
  });
}

}  // namespace procqa
