#include <gtest/gtest.h>

#include <condition_variable>
#include <future>
#include <thread>

#include "httplib.h"
#include "nlidisc/api_service.hpp"
#include "nlidisc/corpus.hpp"
#include "nlidisc/session.hpp"
#include "support.hpp"

using namespace nlidisc;
using nlohmann::json;
namespace fx = nlidisc::testing;

namespace {

constexpr const char* kStamp = "2024-05-01T12:00:00Z";

ServiceOptions options_for(const std::vector<NLIProblem>& problems) {
  ServiceOptions o;
  o.problems = problems;
  o.exemplars = fx::fixture_exemplars();
  o.clock = [] { return std::string(kStamp); };
  return o;
}

struct Api {
  explicit Api(fx::NliMockOptions mock = {}, std::optional<std::filesystem::path> log = std::nullopt)
      : problems(fx::fixture_problems()) {
    auto o = options_for(problems);
    o.event_log = std::move(log);
    service = std::make_unique<ApiService>(std::make_shared<Gateway>(fx::nli_mock(problems, std::move(mock))),
                                           std::move(o));
  }
  ApiResponse get(const std::string& path, std::map<std::string, std::string> query = {}) {
    return service->handle("GET", path, "", query);
  }
  ApiResponse post(const std::string& path, const json& body = json::object()) {
    return service->handle("POST", path, body.dump());
  }
  std::string open(const std::string& problem_id, bool blind = false, const std::string& mode = "zero-shot") {
    auto r = post("/sessions", {{"problem_id", problem_id}, {"mode", mode}, {"blind", blind}});
    EXPECT_EQ(r.status, 201) << r.body.dump();
    return r.body["session_id"].get<std::string>();
  }

  std::vector<NLIProblem> problems;
  std::unique_ptr<ApiService> service;
};

std::string error_code(const ApiResponse& r) { return r.body["error"]["code"].get<std::string>(); }

}  // namespace

TEST(Api, Health) {
  Api api;
  const auto r = api.get("/health");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
  EXPECT_EQ(r.body["backend"], "nli-mock");
}

TEST(Api, FullSessionMatchesTheLibrary) {
  Api api({fx::FinalPolicy::capitulating, fx::wrong_label});
  const auto id = api.open("snli-barn", false, "few-shot-discussion");
  EXPECT_EQ(id, "s-000001");
  const std::vector<std::string> turns = {"I think contradiction, because a barn has no kitchen.",
                                          "Families do not cook in barns."};
  for (const auto& t : turns) {
    const auto r = api.post("/sessions/" + id + "/turns", {{"text", t}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
  }
  auto r = api.post("/sessions/" + id + "/finalize");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["phase"], "finalized");
  EXPECT_EQ(r.body["final_label"], "contradiction");
  EXPECT_EQ(r.body["history"].size(), 4u);
  EXPECT_EQ(r.body["problem"]["label"], "neutral");
  EXPECT_TRUE(r.body.contains("initial_system_label"));

  const auto exported = api.get("/sessions/" + id + "/export");
  ASSERT_EQ(exported.status, 200);

  // The same discussion driven through the library directly.
  const auto problems = fx::fixture_problems();
  Gateway gw(fx::nli_mock(problems, {fx::FinalPolicy::capitulating, fx::wrong_label}));
  SessionContext ctx{gw, SamplingParams{}.with_samples(1), PromptConfig{}, "lib"};
  const auto barn = *std::find_if(problems.begin(), problems.end(), [](const auto& p) { return p.id == "snli-barn"; });
  auto s = start_session("s-000001", barn, PromptMode::few_shot_discussion, fx::fixture_exemplars(), ctx);
  for (const auto& t : turns) s = human_turn(s, t, ctx);
  s = finalize(s, ctx);
  EXPECT_EQ(exported.body, to_json(session_record(s, kStamp)));
}

TEST(Api, BlindSessionsHideGoldAndPrediction) {
  Api api;
  const auto id = api.open("snli-nun", true);
  const auto r = api.get("/sessions/" + id);
  EXPECT_EQ(r.body["blind"], true);
  EXPECT_FALSE(r.body["problem"].contains("label"));
  EXPECT_FALSE(r.body.contains("initial_system_label"));
  EXPECT_FALSE(api.get("/problems/snli-nun", {{"blind", "1"}}).body.contains("label"));
  EXPECT_EQ(api.get("/problems/snli-nun").body["label"], "neutral");
}

TEST(Api, InlineProblemWithoutLabel) {
  ServiceOptions o = options_for({});
  ApiService service(std::make_shared<Gateway>(std::make_shared<MockBackend>()), o);
  json body = {{"problem", {{"premise", "A cat sleeps."}, {"hypothesis", "An animal rests."}}}};
  const auto r = service.handle("POST", "/sessions", body.dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_FALSE(r.body["problem"].contains("label"));
  EXPECT_TRUE(r.body["problem"]["id"].get<std::string>().starts_with("inline-"));
  body = {{"problem", {{"premise", " "}, {"hypothesis", "x"}}}};
  EXPECT_EQ(service.handle("POST", "/sessions", body.dump()).status, 400);
}

TEST(Api, ErrorStatuses) {
  Api api;
  EXPECT_EQ(api.get("/sessions/s-999999").status, 404);
  EXPECT_EQ(error_code(api.get("/sessions/s-999999")), "UnknownSession");
  EXPECT_EQ(api.post("/sessions", {{"problem_id", "nope"}}).status, 404);
  EXPECT_EQ(api.post("/sessions", {{"problem_id", "snli-nun"}, {"mode", "many-shot"}}).status, 400);
  EXPECT_EQ(api.post("/sessions", json::object()).status, 400);
  EXPECT_EQ(api.service->handle("POST", "/sessions", "{not json").status, 400);
  EXPECT_EQ(api.get("/teapot").status, 404);

  const auto id = api.open("snli-nun");
  EXPECT_EQ(api.post("/sessions/" + id + "/finalize").status, 409);
  EXPECT_EQ(api.get("/sessions/" + id + "/export").status, 409);
  auto empty = api.post("/sessions/" + id + "/turns", {{"text", "   "}});
  EXPECT_EQ(empty.status, 422);
  EXPECT_EQ(error_code(empty), "EmptyUtterance");
  EXPECT_EQ(api.post("/sessions/" + id + "/turns", {{"text", "ok"}, {"label", "maybe"}}).status, 400);
  EXPECT_EQ(api.post("/sessions/" + id + "/turns", {{"text", "I think entailment."}}).status, 200);
  EXPECT_EQ(api.post("/sessions/" + id + "/tags", {{"tags", json::array({"supportive", nullptr})}}).status, 409);
  EXPECT_EQ(api.post("/sessions/" + id + "/finalize").status, 200);
  EXPECT_EQ(api.post("/sessions/" + id + "/turns", {{"text", "more"}}).status, 409);
  EXPECT_EQ(api.post("/sessions/" + id + "/finalize").status, 409);
  EXPECT_EQ(api.post("/sessions/" + id + "/tags", {{"tags", json::array({"supportive"})}}).status, 422);
  EXPECT_EQ(api.post("/sessions/" + id + "/tags", {{"tags", json::array({"great", nullptr})}}).status, 422);
  const auto tagged = api.post("/sessions/" + id + "/tags", {{"tags", json::array({"supportive", nullptr})}});
  EXPECT_EQ(tagged.status, 200);
  const auto exported = api.get("/sessions/" + id + "/export").body;
  EXPECT_EQ(exported["utterances"][0]["tag"], "supportive");
  EXPECT_FALSE(exported["utterances"][1].contains("tag"));
}

TEST(Api, FinalizeFailureIsRetryable) {
  const auto problems = fx::fixture_problems();
  auto backend = std::make_shared<FunctionBackend>("flaky", [](const CompletionRequest& req) {
    BackendReply r;
    r.text = req.kind == PromptKind::finalize && req.sample_index == 0 ? " hmm" : " neutral";
    return r;
  });
  ApiService service(std::make_shared<Gateway>(backend), options_for(problems));
  auto r = service.handle("POST", "/sessions", json{{"problem_id", "snli-nun"}}.dump());
  const std::string id = r.body["session_id"];
  service.handle("POST", "/sessions/" + id + "/turns", json{{"text", "I think neutral."}}.dump());
  r = service.handle("POST", "/sessions/" + id + "/finalize", "");
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(error_code(r), "NoLabelFound");
  EXPECT_EQ(service.handle("GET", "/sessions/" + id, "").body["finalize_attempts"], 1);
  r = service.handle("POST", "/sessions/" + id + "/finalize", "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["finalize_attempts"], 2);
}

TEST(Api, BearerTokenAndPreflight) {
  auto o = options_for(fx::fixture_problems());
  o.bearer_token = "t0ken";
  ApiService service(std::make_shared<Gateway>(std::make_shared<MockBackend>()), o);
  EXPECT_EQ(service.handle("GET", "/health", "").status, 401);
  EXPECT_EQ(service.handle("GET", "/health", "", {}, "Bearer wrong").status, 401);
  EXPECT_EQ(service.handle("GET", "/health", "", {}, "Bearer t0ken").status, 200);
  EXPECT_EQ(service.handle("OPTIONS", "/sessions", "").status, 204);
}

TEST(Api, SampleFiltersAndHidesLabels) {
  Api api;
  const auto r = api.get("/problems/sample", {{"filter", "three-of-five"}, {"n", "4"}, {"seed", "3"}, {"blind", "1"}});
  ASSERT_EQ(r.status, 200);
  std::set<std::string> ids;
  for (const auto& p : r.body["problems"]) {
    ids.insert(p["id"].get<std::string>());
    EXPECT_FALSE(p.contains("label"));
  }
  EXPECT_EQ(ids, (std::set<std::string>{"snli-nun", "snli-barn", "snli-hat", "snli-chef"}));
  EXPECT_EQ(api.get("/problems/sample", {{"n", "2"}, {"seed", "3"}}).body,
            api.get("/problems/sample", {{"n", "2"}, {"seed", "3"}}).body);
  EXPECT_EQ(api.get("/problems/sample", {{"filter", "odd"}}).status, 400);
  EXPECT_EQ(api.get("/problems/sample", {{"n", "x"}}).status, 400);
}

TEST(Api, ScenarioBatches) {
  Api api({fx::FinalPolicy::oracle, fx::half_right});
  const json ids = {"snli-nun", "snli-barn", "r1-author", "r2-mayor", "r3-store"};
  auto r = api.post("/scenarios", {{"problem_ids", ids}, {"seed", 5}});
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_EQ(r.body["batch_id"], "b-000001");
  EXPECT_EQ(r.body["blind"], true);
  ASSERT_EQ(r.body["sessions"].size(), 5u);
  const std::string batch = r.body["batch_id"];
  for (const auto& s : r.body["sessions"]) {
    const std::string id = s["session_id"];
    const auto view = api.get("/sessions/" + id).body;
    EXPECT_FALSE(view.contains("scenario"));
    EXPECT_FALSE(view["problem"].contains("label"));
    EXPECT_EQ(view["argue_for"], s["argue_for"]);
    EXPECT_EQ(view["batch_id"], batch);
    EXPECT_EQ(api.post("/sessions/" + id + "/turns", {{"text", "Let's discuss it more."}}).status, 200);
    // The argued label is taken as the human's position.
    EXPECT_EQ(api.get("/sessions/" + id).body["human_label"], s["argue_for"]);
  }
  EXPECT_EQ(api.get("/scenarios/" + batch).body["finalized"], 0);
  for (const auto& s : r.body["sessions"]) api.post("/sessions/" + s["session_id"].get<std::string>() + "/finalize");
  const auto outcomes = api.get("/scenarios/" + batch + "/outcomes").body["outcomes"];
  ASSERT_EQ(outcomes.size(), 5u);
  for (const auto& o : outcomes) {
    EXPECT_EQ(o["success"], true) << o.dump();
    EXPECT_EQ(o["kind_mismatch"], false);
  }
  EXPECT_EQ(api.get("/scenarios/b-000009").status, 404);
  EXPECT_EQ(api.post("/scenarios", {{"problem_ids", json::array()}}).status, 422);
}

TEST(Api, RestartReplaysTheEventLog) {
  fx::TempDir dir;
  const auto log = dir / "events.jsonl";
  json before_a, before_b;
  {
    Api api({}, log);
    const auto a = api.open("snli-nun");
    api.post("/sessions/" + a + "/turns", {{"text", "I think entailment."}});
    api.post("/sessions/" + a + "/finalize");
    api.post("/sessions/" + a + "/tags", {{"tags", json::array({"supportive", "unsupportive"})}});
    const auto b = api.open("r1-author", true);
    api.post("/sessions/" + b + "/turns", {{"text", "Hmm."}});
    api.post("/scenarios", {{"problem_ids", {"snli-hat"}}});
    before_a = api.get("/sessions/" + a).body;
    before_b = api.get("/sessions/" + b).body;
  }
  Api again({}, log);
  EXPECT_EQ(again.service->session_count(), 3u);
  EXPECT_EQ(again.get("/sessions/s-000001").body, before_a);
  EXPECT_EQ(again.get("/sessions/s-000002").body, before_b);
  EXPECT_EQ(again.get("/sessions/s-000001/export").status, 200);
  EXPECT_EQ(again.open("snli-barn"), "s-000004");
  EXPECT_EQ(again.post("/scenarios", {{"problem_ids", {"snli-hat"}}}).body["batch_id"], "b-000002");
}

TEST(Api, ConcurrentTurnOnOneSessionIsRejected) {
  const auto problems = fx::fixture_problems();
  std::mutex mu;
  std::condition_variable cv;
  bool entered = false, release = false;
  auto backend = std::make_shared<FunctionBackend>("slow", [&](const CompletionRequest& req) {
    BackendReply r;
    r.text = " neutral";
    if (req.kind == PromptKind::session_turn) {
      std::unique_lock lock(mu);
      entered = true;
      cv.notify_all();
      cv.wait(lock, [&] { return release; });
      r.text = " Let me think.";
    }
    return r;
  });
  ApiService service(std::make_shared<Gateway>(backend), options_for(problems));
  const std::string id = service.handle("POST", "/sessions", json{{"problem_id", "snli-nun"}}.dump()).body["session_id"];
  const std::string other = service.handle("POST", "/sessions", json{{"problem_id", "snli-hat"}}.dump()).body["session_id"];
  auto first = std::async(std::launch::async, [&] {
    return service.handle("POST", "/sessions/" + id + "/turns", json{{"text", "one"}}.dump());
  });
  {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return entered; });
  }
  const auto second = service.handle("POST", "/sessions/" + id + "/turns", json{{"text", "two"}}.dump());
  EXPECT_EQ(second.status, 409);
  EXPECT_EQ(error_code(second), "SessionBusy");
  // Other sessions stay readable meanwhile.
  EXPECT_EQ(service.handle("GET", "/sessions/" + other, "").status, 200);
  {
    std::lock_guard lock(mu);
    release = true;
  }
  cv.notify_all();
  EXPECT_EQ(first.get().status, 200);
  EXPECT_EQ(service.handle("GET", "/sessions/" + id, "").body["history"].size(), 2u);
}

TEST(Api, ServesOverHttp) {
  const auto problems = fx::fixture_problems();
  auto o = options_for(problems);
  o.cors_origin = "http://localhost:5173";
  ApiService service(std::make_shared<Gateway>(fx::nli_mock(problems)), o);
  const int port = service.bind("127.0.0.1", 0);
  std::thread server([&] { service.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result health;
  for (int i = 0; i < 100 && !(health = client.Get("/health")); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");

  // Several clients driving separate sessions at once.
  std::vector<std::future<int>> results;
  for (const std::string pid : {"snli-nun", "snli-barn", "snli-hat", "r1-author"}) {
    results.push_back(std::async(std::launch::async, [port, pid] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/sessions", json{{"problem_id", pid}}.dump(), "application/json");
      if (!r || r->status != 201) return -1;
      const std::string id = json::parse(r->body)["session_id"];
      r = c.Post("/sessions/" + id + "/turns", json{{"text", "I think neutral."}}.dump(), "application/json");
      if (!r || r->status != 200) return -2;
      r = c.Post("/sessions/" + id + "/finalize", "", "application/json");
      return r ? r->status : -3;
    }));
  }
  for (auto& f : results) EXPECT_EQ(f.get(), 200);
  auto list = client.Get("/sessions");
  ASSERT_TRUE(list);
  EXPECT_EQ(json::parse(list->body)["sessions"].size(), 4u);
  auto missing = client.Get("/sessions/s-404404");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  service.stop();
  server.join();
}
