#pragma once

// Thin HTTP plumbing shared by the remote tool backend, the LLM planner and
// the remote judge.

#include <chrono>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

namespace procqa {

struct EndpointUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/prefix" without trailing slash
};

// Throws ConfigError for anything that is not an http(s) URL.
EndpointUrl parse_endpoint_url(const std::string& url);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// One POST of a JSON body. Transport failures (refused, timeout) raise
// BackendUnavailable; any HTTP status is returned to the caller.
HttpResponse post_json(const EndpointUrl& endpoint, const std::string& path,
                       const nlohmann::json& body, const std::string& api_key,
                       std::chrono::milliseconds timeout);

// Prompt in, completion text out.
using CompletionFn = std::function<std::string(const std::string& prompt)>;

struct ChatConfig {
  std::string endpoint;  // base URL; requests go to <endpoint>/v1/chat/completions
  std::string api_key;
  std::string model;
  std::chrono::milliseconds timeout{60000};
};

// OpenAI-compatible chat completions, temperature 0, single user message.
CompletionFn make_chat_completion(ChatConfig config);

}  // namespace procqa
