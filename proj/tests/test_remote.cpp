#include <doctest.h>

#include <httplib.h>

#include <deque>
#include <mutex>
#include <thread>

#include "procqa/eval.hpp"
#include "procqa/fixtures.hpp"
#include "procqa/json_util.hpp"
#include "procqa/orchestrator.hpp"
#include "procqa/remote_backend.hpp"
#include "support.hpp"

using namespace procqa;
using nlohmann::json;
using support::code_of;

namespace {

struct Recorded {
  std::string path;
  std::string body;
  std::string authorization;
};

// Loopback server answering POSTs from a queue of canned responses, or from
// a handler when one is installed.
class TestServer {
 public:
  using Handler = std::function<std::pair<int, std::string>(const std::string& path,
                                                            const std::string& body)>;

  TestServer() {
    server_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      std::pair<int, std::string> reply{500, "no canned response"};
      {
        std::lock_guard lock(mu_);
        requests_.push_back({req.path, req.body, req.get_header_value("Authorization")});
        if (handler_) {
          reply = handler_(req.path, req.body);
        } else if (!queue_.empty()) {
          reply = queue_.front();
          queue_.pop_front();
        }
      }
      res.status = reply.first;
      res.set_content(reply.second, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~TestServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  void push(int status, std::string body) {
    std::lock_guard lock(mu_);
    queue_.emplace_back(status, std::move(body));
  }
  void handle(Handler h) {
    std::lock_guard lock(mu_);
    handler_ = std::move(h);
  }
  std::vector<Recorded> requests() {
    std::lock_guard lock(mu_);
    return requests_;
  }
  void clear() {
    std::lock_guard lock(mu_);
    requests_.clear();
    queue_.clear();
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::deque<std::pair<int, std::string>> queue_;
  std::vector<Recorded> requests_;
  Handler handler_;
};

RemoteConfig fast_config(const std::string& url) {
  RemoteConfig c;
  c.endpoint = url;
  c.timeout = std::chrono::milliseconds(2000);
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

VideoHandle handle_from(const json& j) {
  return {j["video_id"], j["fps"], j["duration_ms"], j["width"], j["height"]};
}

FrameCollection frames_from(const json& input) {
  FrameCollection fc;
  fc.video = handle_from(input["video"]);
  for (const auto& t : input["timestamps_ms"]) {
    const Millis ts = t.get<Millis>();
    fc.frames.push_back({ts, "", TimeSpan::make(ts, ts + 1)});
  }
  return fc;
}

SpanSet seconds_set(const json& arr) {
  std::vector<TimeSpan> spans;
  for (const auto& s : arr) spans.push_back(span_from_json(s));
  return SpanSet::normalize(spans);
}

// Drives the backend call an exchange describes and renders the engine-side
// result in the exchange's "expect" shape.
json drive(RemoteToolBackend& b, const std::string& tool, const json& in) {
  if (tool == "Video_Load") {
    const auto h = b.load_video(in["path"]);
    return {{"video_id", h.video_id}, {"fps", h.fps}, {"duration_ms", h.duration_ms},
            {"width", h.width}, {"height", h.height}};
  }
  if (tool == "Frame_Retrieve") return {{"scores", b.relevance(frames_from(in), in["query"])}};
  if (tool == "Obj_Det") {
    json dets = json::array();
    for (const auto& d : b.detect(frames_from(in), in["query"])) {
      dets.push_back({{"timestamp_ms", d.timestamp_ms}, {"label", d.label},
                      {"bbox", d.bbox}, {"confidence", d.confidence}});
    }
    return {{"detections", dets}};
  }
  if (tool == "Action_Rec") {
    json acts = json::array();
    for (const auto& a : b.recognize_actions(frames_from(in))) {
      acts.push_back({{"span_ms", {a.span->start_ms(), a.span->end_ms()}}, {"description", a.text}});
    }
    return {{"actions", acts}};
  }
  if (tool == "Img_Caption") return {{"captions", b.caption(frames_from(in))}};
  if (tool == "Context_Sum") {
    return {{"summary", b.summarize(in["texts"].get<std::vector<std::string>>())}};
  }
  if (tool == "Answer_Gen") {
    AnswerRequest r{in["question"], in["context"], frames_from(in),
                    seconds_set(in["evidence_hint_s"])};
    const auto g = b.answer(r, {"qa"});
    json ev = json::array();
    for (const auto& s : g.evidence) ev.push_back({s.start_ms(), s.end_ms()});
    return {{"answer", g.answer}, {"evidence_ms", ev}};
  }
  FAIL("unknown tool in exchange: " << tool);
  return {};
}

}  // namespace

TEST_CASE("golden wire exchanges") {
  TestServer server;
  RemoteToolBackend backend(fast_config(server.url()));
  std::set<std::string> tools_seen;
  std::size_t files = 0, errors = 0;
  for (const auto& entry : std::filesystem::directory_iterator(support::data_dir() / "wire")) {
    const auto ex = read_json_file(entry.path());
    const std::string name = entry.path().filename().string();
    const std::string tool = ex["tool"];
    CAPTURE(name);
    ++files;
    tools_seen.insert(tool);
    server.clear();
    const auto& resp = ex["response"];
    server.push(resp["status"], resp.contains("raw_body") ? resp["raw_body"].get<std::string>()
                                                          : resp["body"].dump());
    if (ex.contains("expect_error")) {
      ++errors;
      const auto e = support::caught([&] { drive(backend, tool, ex["input"]); });
      CHECK(errc_name(e.code()) == ex["expect_error"].get<std::string>());
    } else {
      CHECK(drive(backend, tool, ex["input"]) == ex["expect"]);
    }
    const auto reqs = server.requests();
    REQUIRE(reqs.size() == 1);
    CHECK(reqs[0].path == "/v1/tools/" + tool);
    CHECK(reqs[0].body == ex["request"].get<std::string>());
  }
  CHECK(files >= 19);
  CHECK(errors >= 10);
  CHECK(tools_seen == std::set<std::string>{"Video_Load", "Frame_Retrieve", "Obj_Det",
                                            "Action_Rec", "Img_Caption", "Context_Sum",
                                            "Answer_Gen"});
}

TEST_CASE("request bodies") {
  CHECK(wire_request({{"path", "a"}}).dump() == R"({"args":{"path":"a"}})");
  FrameCollection fc;
  fc.video.video_id = "v";
  fc.frames = {{5, "", TimeSpan::make(0, 10)}, {15, "", TimeSpan::make(10, 20)}};
  CHECK(wire_request(json::object(), fc).dump() ==
        R"({"args":{},"frame_timestamps_ms":[5,15],"video_id":"v"})");
}

TEST_CASE("server errors are retried") {
  TestServer server;
  const std::string ok = R"({"ok":true,"result":{"summary":"s"}})";
  RemoteToolBackend backend(fast_config(server.url()));

  server.push(503, "busy");
  server.push(502, "");
  server.push(200, ok);
  CHECK(backend.summarize({"a"}) == "s");
  CHECK(server.requests().size() == 3);

  server.clear();
  for (int i = 0; i < 3; ++i) server.push(500, "boom");
  const auto e = support::caught([&] { backend.summarize({"a"}); });
  CHECK(e.code() == Errc::BackendUnavailable);
  CHECK(std::string(e.what()).find("after 3 attempts") != std::string::npos);
  CHECK(server.requests().size() == 3);

  // Client errors are final.
  server.clear();
  server.push(400, R"({"ok":false,"error":{"code":"InvalidArgument","message":"bad"}})");
  server.push(200, ok);
  CHECK(code_of([&] { backend.summarize({"a"}); }) == Errc::InvalidArgument);
  CHECK(server.requests().size() == 1);

  server.clear();
  auto cfg = fast_config(server.url());
  cfg.max_retries = 0;
  RemoteToolBackend once(cfg);
  server.push(503, "");
  server.push(200, ok);
  CHECK(code_of([&] { once.summarize({"a"}); }) == Errc::BackendUnavailable);
  CHECK(server.requests().size() == 1);
}

TEST_CASE("transport and configuration failures") {
  auto cfg = fast_config("http://127.0.0.1:9");
  cfg.max_retries = 1;
  RemoteToolBackend refused(cfg);
  CHECK(code_of([&] { refused.load_video("x"); }) == Errc::BackendUnavailable);

  CHECK(code_of([] { RemoteToolBackend(fast_config("")); }) == Errc::ConfigError);
  CHECK(code_of([] { RemoteToolBackend(fast_config("ftp://host")); }) == Errc::ConfigError);
  CHECK(code_of([] { RemoteToolBackend(fast_config("http://")); }) == Errc::ConfigError);
  auto neg = fast_config("http://localhost");
  neg.max_retries = -1;
  CHECK(code_of([&] { RemoteToolBackend{neg}; }) == Errc::ConfigError);

  const auto u = parse_endpoint_url("https://tools.example:8443/api/");
  CHECK(u.origin == "https://tools.example:8443");
  CHECK(u.path_prefix == "/api");
}

TEST_CASE("path prefix and credentials") {
  TestServer server;
  auto cfg = fast_config(server.url() + "/tools-svc/");
  cfg.api_key = "secret-token";
  RemoteToolBackend backend(cfg);
  server.push(200, R"({"ok":true,"result":{"summary":"s"}})");
  backend.summarize({});
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].path == "/tools-svc/v1/tools/Context_Sum");
  CHECK(reqs[0].authorization == "Bearer secret-token");
  CHECK(reqs[0].body == R"({"args":{"texts":[]}})");
}

TEST_CASE("chat completions") {
  TestServer server;
  auto complete = make_chat_completion({server.url(), "k", "gpt-5", std::chrono::milliseconds(2000)});
  server.push(200, R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})");
  CHECK(complete("hi") == "hello");
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].path == "/v1/chat/completions");
  CHECK(reqs[0].body ==
        R"({"messages":[{"content":"hi","role":"user"}],"model":"gpt-5","temperature":0})");

  server.push(503, "");
  CHECK(code_of([&] { complete("hi"); }) == Errc::BackendUnavailable);
  server.push(401, "{}");
  CHECK(code_of([&] { complete("hi"); }) == Errc::BackendError);
  server.push(200, R"({"choices":[]})");
  CHECK(code_of([&] { complete("hi"); }) == Errc::BackendError);
  server.push(200, R"({"choices":[{"message":{"content":null}}]})");
  CHECK(code_of([&] { complete("hi"); }) == Errc::BackendError);
  CHECK(code_of([] { make_chat_completion({"", "", "m", std::chrono::milliseconds(1)}); }) ==
        Errc::ConfigError);
}

TEST_CASE("judge and planner over HTTP") {
  TestServer server;
  auto complete = make_chat_completion({server.url(), "", "gpt-5-mini", std::chrono::milliseconds(2000)});
  const auto judge = JudgeBackend::remote(server.url(), complete);
  server.push(200, R"({"choices":[{"message":{"content":"Sure."}}]})");
  server.push(200, R"({"choices":[{"message":{"content":"{\"ci\":2,\"do\":3,\"cu\":4,\"tu\":1}"}}]})");
  CHECK(judge_answer("q", "g", "a", judge).average() == 2.5);
  CHECK(server.requests().size() == 2);
}

TEST_CASE("fixture backend served over the wire") {
  const auto suite = std::make_shared<const FixtureSuite>(
      load_fixture_suite(support::source_dir() / "data" / "butter_suite.json"));
  FixtureBackend local(suite);
  std::mutex handles_mu;
  std::map<std::string, VideoHandle> handles;

  // A minimal stand-in for the tool server, backed by the fixture backend.
  TestServer server;
  server.handle([&](const std::string& path, const std::string& body) -> std::pair<int, std::string> {
    const auto req = json::parse(body);
    const std::string tool = path.substr(path.rfind('/') + 1);
    const auto& args = req["args"];
    FrameCollection fc;
    if (req.contains("video_id")) {
      std::lock_guard lock(handles_mu);
      fc.video = handles.at(req["video_id"]);
      for (const auto& t : req["frame_timestamps_ms"]) {
        fc.frames.push_back({t.get<Millis>(), "", TimeSpan::make(t.get<Millis>(), t.get<Millis>() + 1)});
      }
    }
    json result;
    try {
      if (tool == "Video_Load") {
        const auto h = local.load_video(args["path"]);
        std::lock_guard lock(handles_mu);
        handles[h.video_id] = h;
        result = {{"video_id", h.video_id}, {"fps", h.fps}, {"duration_ms", h.duration_ms},
                  {"width", h.width}, {"height", h.height}};
      } else if (tool == "Frame_Retrieve") {
        result = {{"scores", local.relevance(fc, args["query"])}};
      } else if (tool == "Action_Rec") {
        json acts = json::array();
        for (const auto& a : local.recognize_actions(fc)) {
          acts.push_back({{"span", span_to_json(*a.span)}, {"description", a.text}});
        }
        result = {{"actions", acts}};
      } else if (tool == "Img_Caption") {
        json caps = json::array();
        const auto texts = local.caption(fc);
        for (std::size_t i = 0; i < texts.size(); ++i) {
          caps.push_back({{"timestamp_ms", fc.frames[i].timestamp_ms}, {"caption", texts[i]}});
        }
        result = {{"captions", caps}};
      } else if (tool == "Context_Sum") {
        result = {{"summary", local.summarize(args["texts"])}};
      } else if (tool == "Answer_Gen") {
        AnswerRequest r{args["question"], args["context"], fc, spanset_from_json(args["evidence_hint"])};
        const auto g = local.answer(r, {});
        json ev = json::array();
        for (const auto& s : g.evidence) ev.push_back(span_to_json(s));
        result = {{"answer", g.answer}, {"evidence", ev}};
      } else {
        return {404, json{{"ok", false}, {"error", {{"code", "NotFound"}, {"message", tool}}}}.dump()};
      }
    } catch (const Error& e) {
      return {400, json{{"ok", false},
                        {"error", {{"code", errc_name(e.code())}, {"message", e.what()}}}}.dump()};
    }
    return {200, json{{"ok", true}, {"result", result}}.dump()};
  });

  auto remote = std::make_shared<RemoteToolBackend>(fast_config(server.url()));
  // Handle metadata survives the round trip.
  CHECK(remote->load_video("fixture://butter_600s") == local.load_video("fixture://butter_600s"));
  CHECK(code_of([&] { remote->load_video("fixture://nope"); }) == Errc::NotFound);

  OrchestratorConfig cfg;
  cfg.registry = std::make_shared<const ToolRegistry>(make_standard_registry(remote));
  cfg.parallelism = 4;
  const auto run = run_benchmark(suite->dataset, cfg);
  REQUIRE(run.failures.empty());
  REQUIRE(run.predictions.size() == 4);
  for (const auto& p : run.predictions) {
    CAPTURE(p.qa_id);
    CHECK(p.evidence == fixture_oracle(*suite, p.qa_id).evidence);
  }
}
