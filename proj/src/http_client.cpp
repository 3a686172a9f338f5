#include "procqa/http_client.hpp"

#include <httplib.h>

#include "procqa/error.hpp"

namespace procqa {

EndpointUrl parse_endpoint_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(Errc::ConfigError, "endpoint '" + url + "' is not a URL");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    fail(Errc::ConfigError, "endpoint '" + url + "' must use http or https");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  if (out.origin.size() == scheme_end + 3) fail(Errc::ConfigError, "endpoint '" + url + "' has no host");
  if (path_start != std::string::npos) {
    out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

HttpResponse post_json(const EndpointUrl& endpoint, const std::string& path,
                       const nlohmann::json& body, const std::string& api_key,
                       std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(endpoint.path_prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    fail(Errc::BackendUnavailable, "POST " + endpoint.origin + endpoint.path_prefix + path +
                                       " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

CompletionFn make_chat_completion(ChatConfig config) {
  if (config.endpoint.empty()) fail(Errc::ConfigError, "chat endpoint is not set");
  const EndpointUrl url = parse_endpoint_url(config.endpoint);
  return [url, config](const std::string& prompt) -> std::string {
    const nlohmann::json body = {
        {"model", config.model},
        {"temperature", 0},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    const HttpResponse res = post_json(url, "/v1/chat/completions", body, config.api_key,
                                       config.timeout);
    if (res.status >= 500) {
      fail(Errc::BackendUnavailable, "chat endpoint returned HTTP " + std::to_string(res.status));
    }
    if (res.status != 200) {
      fail(Errc::BackendError, "chat endpoint returned HTTP " + std::to_string(res.status));
    }
    const auto doc = nlohmann::json::parse(res.body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty()) {
      fail(Errc::BackendError, "chat endpoint returned a malformed completion");
    }
    const auto& msg = doc["choices"][0].value("message", nlohmann::json::object());
    if (!msg.contains("content") || !msg["content"].is_string()) {
      fail(Errc::BackendError, "chat completion has no text content");
    }
    return msg["content"].get<std::string>();
  };
}

}  // namespace procqa
