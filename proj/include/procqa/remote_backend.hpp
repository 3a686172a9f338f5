#pragma once

// ToolBackend over the model-tool server's HTTP wire protocol
// (docs/wire_protocol.md). One POST per tool call:
//
//   POST <endpoint>/v1/tools/<Tool>
//   {"args": {...}, "video_id": "...", "frame_timestamps_ms": [...]}
//
// answered by {"ok": true, "result": {...}} or
// {"ok": false, "error": {"code": "...", "message": "..."}}.

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

#include "procqa/http_client.hpp"
#include "procqa/tools.hpp"

namespace procqa {

struct RemoteConfig {
  std::string endpoint;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;  // transport failures and 5xx only
  std::chrono::milliseconds backoff{200};  // doubled per retry
  int max_in_flight = 8;
};

// Request bodies, exposed so the wire format can be tested without a server.
nlohmann::json wire_request(const nlohmann::json& args);
nlohmann::json wire_request(const nlohmann::json& args, const FrameCollection& frames);

class RemoteToolBackend final : public ToolBackend {
 public:
  static constexpr int kMaxInFlight = 64;

  // Throws ConfigError on an empty or malformed endpoint.
  explicit RemoteToolBackend(RemoteConfig config);

  VideoHandle load_video(const std::string& path) override;
  std::vector<double> relevance(const FrameCollection& frames, const std::string& query) override;
  DetectionList detect(const FrameCollection& frames, const std::string& query) override;
  std::vector<TextSegment> recognize_actions(const FrameCollection& frames) override;
  std::vector<std::string> caption(const FrameCollection& frames) override;
  std::string summarize(const std::vector<std::string>& texts) override;
  GeneratedAnswer answer(const AnswerRequest& request, const ToolContext& ctx) override;

  // Posts one request and returns the "result" member.
  nlohmann::json call(const std::string& tool, const nlohmann::json& body);

 private:
  RemoteConfig config_;
  EndpointUrl url_;
  std::counting_semaphore<kMaxInFlight> in_flight_;
};

}  // namespace procqa
