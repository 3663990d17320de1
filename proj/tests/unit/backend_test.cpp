#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "support.hpp"

using namespace toolverify;

TEST(StageTag, NamesRoundTrip) {
  for (auto tag : kAllStageTags) {
    auto parsed = parse_stage_tag(to_string(tag));
    ASSERT_TRUE(parsed);
    EXPECT_EQ(*parsed, tag);
  }
  EXPECT_FALSE(parse_stage_tag("selection"));
  EXPECT_FALSE(parse_stage_tag(""));
}

TEST(Sampling, Validation) {
  SamplingParams ok;
  EXPECT_NO_THROW(ok.validate());
  SamplingParams bad = ok;
  bad.top_p = 0.0;
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad = ok;
  bad.max_tokens = 0;
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad = ok;
  bad.temperature = -1;
  EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(Backends, RoutesPerStageWithFallback) {
  auto fallback = std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return "default"; });
  auto verifier = std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return "verifier"; });
  Backends backends(fallback);
  backends.route(StageTag::kVqGen, verifier);
  EXPECT_EQ(backends.generate(StageTag::kVqGen, "q").text, "verifier");
  EXPECT_EQ(backends.generate(StageTag::kSelect, "q").text, "default");
  EXPECT_EQ(verifier->total(), 1u);
  EXPECT_EQ(fallback->total(), 1u);
}

TEST(Backends, EmptyPromptAndMissingBackendAreRejected) {
  Backends none;
  EXPECT_THROW(none.generate(StageTag::kSelect, "x"), PreconditionError);
  Backends backends(std::make_shared<tvtest::FunctionBackend>([](const GenerationRequest&) { return "x"; }));
  EXPECT_THROW(backends.generate(StageTag::kSelect, ""), PreconditionError);
}

TEST(Backends, SeedOverridesSampling) {
  std::optional<std::int64_t> seen;
  Backends backends(std::make_shared<tvtest::FunctionBackend>([&](const GenerationRequest& r) {
    seen = r.sampling.seed;
    return "x";
  }));
  backends.generate(StageTag::kSelect, "p", 42);
  EXPECT_EQ(seen, 42);
  backends.generate(StageTag::kSelect, "p");
  EXPECT_FALSE(seen);
}

namespace {

ScriptRule rule(std::string match, std::string response) {
  ScriptRule r;
  r.match = std::move(match);
  r.response = std::move(response);
  return r;
}

GenerationRequest request(std::string prompt, StageTag tag = StageTag::kSelect, std::optional<std::int64_t> seed = {}) {
  GenerationRequest r;
  r.prompt = std::move(prompt);
  r.tag = tag;
  r.sampling.seed = seed;
  return r;
}

}  // namespace

TEST(ScriptedBackend, FirstMatchingRuleWins) {
  ScriptedBackend backend({rule("weather", "A"), rule("weather today", "B"), rule("", "fallback")});
  EXPECT_EQ(backend.generate(request("weather today")).text, "A");
  EXPECT_EQ(backend.generate(request("cats")).text, "fallback");
  EXPECT_EQ(backend.call_count(), 2u);
}

TEST(ScriptedBackend, FiltersAndOnce) {
  auto once = rule("x", "first");
  once.once = true;
  auto staged = rule("x", "staged");
  staged.stage = StageTag::kVqGen;
  auto seeded = rule("x", "seeded");
  seeded.seed = 3;
  auto excl = rule("x", "no-y");
  excl.excludes = "y";
  ScriptedBackend backend({once, staged, seeded, excl, rule("x", "last")});

  EXPECT_EQ(backend.generate(request("x")).text, "first");
  EXPECT_EQ(backend.generate(request("x", StageTag::kVqGen)).text, "staged");
  EXPECT_EQ(backend.generate(request("x", StageTag::kSelect, 3)).text, "seeded");
  EXPECT_EQ(backend.generate(request("x")).text, "no-y");
  EXPECT_EQ(backend.generate(request("xy")).text, "last");
  EXPECT_EQ(backend.call_count(StageTag::kVqGen), 1u);
  auto tags = backend.tag_sequence();
  ASSERT_EQ(tags.size(), 5u);
  EXPECT_EQ(tags[1], StageTag::kVqGen);
}

TEST(ScriptedBackend, RegexCaptures) {
  auto r = rule("Name1: ([^\\n]+)\\nName2:$", " $1 By Date");
  r.regex = true;
  ScriptedBackend backend({r});
  EXPECT_EQ(backend.generate(request("Name1: Humidity\nName2:")).text, " Humidity By Date");
  EXPECT_THROW(backend.generate(request("Name1: Humidity\nName2: x")), UnmatchedScriptError);
}

TEST(ScriptedBackend, UnmatchedPromptThrowsWithExcerpt) {
  ScriptedBackend backend;
  try {
    backend.generate(request("nothing scripted"));
    FAIL();
  } catch (const UnmatchedScriptError& e) {
    EXPECT_NE(std::string(e.what()).find("nothing scripted"), std::string::npos);
  }
}

TEST(ScriptedBackend, LoadsJsonLines) {
  tvtest::TempDir dir;
  text::write_file(dir.file("s.jsonl"),
                   "# comment\n\n{\"match\":\"a\",\"response\":\"1\",\"stage\":\"select\"}\n{\"match\":\"a\",\"response\":\"2\"}\n");
  auto backend = ScriptedBackend::from_file(dir.file("s.jsonl"));
  EXPECT_EQ(backend->generate(request("a", StageTag::kParamGen)).text, "2");
  EXPECT_EQ(backend->generate(request("a", StageTag::kSelect)).text, "1");

  text::write_file(dir.file("bad.jsonl"), "{\"match\":\"a\",\"response\":\"1\"}\n{not json\n");
  try {
    ScriptedBackend::from_file(dir.file("bad.jsonl"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2"), std::string::npos);
  }
  text::write_file(dir.file("tag.jsonl"), "{\"match\":\"a\",\"response\":\"1\",\"stage\":\"bogus\"}\n");
  EXPECT_THROW(ScriptedBackend::from_file(dir.file("tag.jsonl")), PreconditionError);
}

namespace {

RemoteBackend::Options endpoint(std::string url, std::string token = "") {
  RemoteBackend::Options o;
  o.url = std::move(url);
  o.token = std::move(token);
  return o;
}

}  // namespace

TEST(RemoteBackend, EncodesAndDecodes) {
  GenerationRequest r = request("hello", StageTag::kSelect, 9);
  auto body = RemoteBackend::encode_request(r);
  EXPECT_EQ(body["prompt"], "hello");
  EXPECT_EQ(body["seed"], 9);
  EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.9);
  r.sampling.seed.reset();
  EXPECT_TRUE(RemoteBackend::encode_request(r)["seed"].is_null());

  RemoteBackend backend(endpoint("http://127.0.0.1:1/generate"));
  EXPECT_EQ(backend.decode_response(R"({"text":"hi"})").text, "hi");
  EXPECT_TRUE(backend.decode_response(R"({"text":"","truncated":true})").truncated);
  EXPECT_THROW(backend.decode_response(R"({"text":""})"), ProtocolError);
  EXPECT_THROW(backend.decode_response(R"({"output":"x"})"), ProtocolError);
  EXPECT_THROW(backend.decode_response("<html>"), ProtocolError);
  EXPECT_THROW(RemoteBackend(endpoint("localhost:80")), PreconditionError);
}

namespace {

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  LocalServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
};

}  // namespace

TEST(RemoteBackend, TalksToEndpoint) {
  LocalServer local;
  std::string auth;
  nlohmann::json received;
  local.server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    received = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"text", "echo: " + received["prompt"].get<std::string>()}}.dump(), "application/json");
  });
  local.server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  local.start();

  RemoteBackend backend(endpoint(local.url("/generate"), "secret"));
  auto response = backend.generate(request("ping", StageTag::kSelect, 5));
  EXPECT_EQ(response.text, "echo: ping");
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(received["seed"], 5);

  RemoteBackend broken(endpoint(local.url("/broken")));
  EXPECT_THROW(broken.generate(request("ping")), ProtocolError);
}

TEST(RemoteBackend, RetriesThenReportsTransportError) {
  int port;
  {
    LocalServer probe;
    probe.start();
    port = probe.port;
  }
  auto options = endpoint("http://127.0.0.1:" + std::to_string(port) + "/generate");
  options.timeout = std::chrono::milliseconds(500);
  options.retry.max_retries = 2;
  options.retry.initial_backoff = std::chrono::milliseconds(1);
  RemoteBackend backend(options);
  EXPECT_THROW(backend.generate(request("ping")), TransportError);
}
