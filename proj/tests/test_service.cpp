#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <future>
#include <thread>

#include "mfa/dsl.hpp"
#include "mfa/runner.hpp"
#include "mfa/service.hpp"
#include "support/support.hpp"

using namespace mfa;
using nlohmann::json;

namespace {

struct Server {
  explicit Server(ServiceOptions o = {}) : service(prepare(std::move(o))) { port = service.start(); }
  ~Server() { service.stop(); }

  static ServiceOptions prepare(ServiceOptions o) {
    if (o.base_dir == ".") o.base_dir = test::cases_dir();
    return o;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }

  std::string upload_case(const std::string& file) {
    auto up = service.upload(read_text_file(test::cases_dir() / file));
    REQUIRE(up.status == 201);
    return up.body["automaton_id"];
  }

  json new_session(const std::string& automaton_id, std::uint64_t seed = 0) {
    auto c = client();
    auto res = c.Post("/sessions", json{{"automaton_id", automaton_id}, {"seed", seed}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return json::parse(res->body);
  }

  httplib::Result say(const std::string& session, const std::string& text) {
    auto c = client();
    return c.Post("/sessions/" + session + "/message", json{{"text", text}}.dump(), "application/json");
  }

  Service service;
  int port = 0;
};

struct Frame {
  std::uint64_t id;
  std::string event;
  json data;
};

std::vector<Frame> parse_frames(const std::string& stream) {
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (true) {
    const auto end = stream.find("\n\n", pos);
    if (end == std::string::npos) break;
    std::istringstream block(stream.substr(pos, end - pos));
    Frame f{};
    for (std::string line; std::getline(block, line);) {
      if (line.rfind("id: ", 0) == 0) f.id = std::stoull(line.substr(4));
      if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) f.data = json::parse(line.substr(6));
    }
    out.push_back(std::move(f));
    pos = end + 2;
  }
  return out;
}

// Reads the whole SSE stream until the server closes it.
std::string read_stream(const Server& s, const std::string& path, httplib::Headers headers = {}) {
  auto c = s.client();
  std::string body;
  auto res = c.Get(path, headers, [&](const char* data, std::size_t n) {
    body.append(data, n);
    return true;
  });
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").rfind("text/event-stream", 0) == 0);
  return body;
}

}  // namespace

TEST_CASE("uploading definitions") {
  Server s;
  auto c = s.client();

  auto ok = c.Post("/automata", read_text_file(test::cases_dir() / "arps.mfa"), "text/plain");
  REQUIRE(ok);
  CHECK(ok->status == 201);
  auto body = json::parse(ok->body);
  CHECK(body["automaton_id"] == "arps-v1");
  CHECK(body["version"] == 1);
  CHECK(body["report"]["errors"].empty());

  auto again = c.Post("/automata", read_text_file(test::cases_dir() / "arps.mfa"), "text/plain");
  CHECK(json::parse(again->body)["automaton_id"] == "arps-v2");

  auto syntax = c.Post("/automata", "automaton \"x\" {\n  edge a b\n}", "text/plain");
  REQUIRE(syntax);
  CHECK(syntax->status == 422);
  auto errs = json::parse(syntax->body)["errors"];
  REQUIRE(errs.size() == 1);
  CHECK(errs[0]["code"] == "PARSE");
  CHECK(errs[0]["location"] == "2:10");

  auto invalid = c.Post("/automata", "automaton \"x\" {\n  state l dialer template=\"t\"\n  initial l\n}", "text/plain");
  CHECK(invalid->status == 422);
  CHECK(json::parse(invalid->body)["errors"][0]["code"] == "DEAD_END");

  auto list = c.Get("/automata");
  REQUIRE(list);
  CHECK(json::parse(list->body).size() == 2);
}

TEST_CASE("graph endpoint describes nodes, edges and attachments") {
  Server s;
  const auto id = s.upload_case("trains.mfa");
  auto c = s.client();
  auto res = c.Get("/automata/" + id + "/graph");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  auto g = json::parse(res->body);
  CHECK(g["nodes"].size() == 10);
  CHECK(g["edges"].size() == 12);
  CHECK(g["initial"] == "q0");
  auto l8 = std::find_if(g["nodes"].begin(), g["nodes"].end(), [](const json& n) { return n["id"] == "l8"; });
  REQUIRE(l8 != g["nodes"].end());
  CHECK((*l8)["display"] == "never");
  CHECK((*l8)["history"]["archive"] == "h");
  CHECK((*l8)["backend"] == "scripted");

  CHECK(c.Get("/automata/nope-v1/graph")->status == 404);
}

TEST_CASE("a session over HTTP shows what the dialogue displays") {
  Server s;
  const auto id = s.upload_case("arps.mfa");
  auto handle = s.new_session(id, 3);
  CHECK(handle["session_id"] == "s1");
  CHECK(handle["status"] == "AwaitingUser");
  CHECK(handle["displayed"].empty());

  auto r1 = s.say("s1", "hello");
  REQUIRE(r1);
  REQUIRE(r1->status == 200);
  CHECK(json::parse(r1->body)["displayed"] == json::array({"Hello! How are you today?"}));

  auto r2 = s.say("s1", "It’s outrageous to take half an hour to serve a sandwich!");
  auto b2 = json::parse(r2->body);
  CHECK(b2["displayed"][0].get<std::string>().rfind("I understand that you are frustrated", 0) == 0);
  CHECK(b2["handle"]["current"] == "q3");

  auto c = s.client();
  auto state = json::parse(c.Get("/sessions/s1")->body);
  CHECK(state["histories"]["h"].size() == 2);
  CHECK(state["histories"]["h"][1]["origin"] == "l2");

  auto quit = s.say("s1", "/quit");
  CHECK(quit->status == 200);
  CHECK(json::parse(quit->body)["handle"]["status"] == "Ended");
  auto late = s.say("s1", "still there?");
  CHECK(late->status == 410);
  CHECK(json::parse(late->body)["error"]["code"] == "SESSION_ENDED");
}

TEST_CASE("request errors") {
  Server s;
  const auto id = s.upload_case("arps.mfa");
  auto c = s.client();
  CHECK(c.Post("/sessions", R"({"automaton_id":"ghost-v1"})", "application/json")->status == 404);
  CHECK(c.Post("/sessions", "not json", "application/json")->status == 400);
  CHECK(c.Post("/sessions", R"({"automaton_id":")" + id + R"(","seed":-1})", "application/json")->status == 400);
  CHECK(s.say("s9", "hi")->status == 404);
  s.new_session(id);
  CHECK(c.Post("/sessions/s1/message", "{}", "application/json")->status == 400);
  CHECK(c.Get("/sessions/s9")->status == 404);
  CHECK(c.Get("/sessions/s9/events")->status == 404);
}

TEST_CASE("a machine initial state speaks when the session opens") {
  Server s;
  auto up = s.service.upload(R"(automaton "greeter" {
  state l dialer final template="Welcome!"
  state q user
  edge l -> q
  edge q -> l
  initial l
})");
  REQUIRE(up.status == 201);
  auto handle = s.new_session(up.body["automaton_id"]);
  CHECK(handle["displayed"] == json::array({"Welcome!"}));
  CHECK(handle["awaiting_user"] == true);
}

TEST_CASE("runtime failure ends the session with an error status") {
  Server s;
  auto up = s.service.upload(R"(automaton "stuck" {
  state q user
  state l dialer template="hi"
  trigger never keyword keywords="zzz"
  edge q -> l
  edge l -> q on never
  initial q
})");
  REQUIRE(up.status == 201);
  s.new_session(up.body["automaton_id"]);
  auto r = s.say("s1", "go");
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body)["handle"]["status"] == "Error");
  CHECK(s.say("s1", "again")->status == 410);
}

TEST_CASE("overlapping messages on one session are refused") {
  // A backend that blocks until released, so a second request arrives mid-step.
  struct Gate {
    std::mutex m;
    std::condition_variable cv;
    bool entered = false, released = false;
  };
  auto gate = std::make_shared<Gate>();
  class Slow final : public ComponentFactory {
   public:
    explicit Slow(std::shared_ptr<Gate> g) : gate_(std::move(g)) {}
    std::unique_ptr<Backend> backend(const StateNode&, const BackendContext&) const override {
      struct B final : Backend {
        std::shared_ptr<Gate> g;
        std::string do_predict(const std::string&) override {
          std::unique_lock lock(g->m);
          g->entered = true;
          g->cv.notify_all();
          g->cv.wait(lock, [&] { return g->released; });
          return "done";
        }
      };
      auto b = std::make_unique<B>();
      b->g = gate_;
      return b;
    }

   private:
    std::shared_ptr<Gate> gate_;
  };

  ServiceOptions o;
  o.factory = std::make_shared<Slow>(gate);
  Server s(o);
  auto up = s.service.upload("automaton \"slow\" {\n state q user\n state l dialer template=\"x\"\n edge q -> l\n edge l -> q\n initial q\n}");
  s.new_session(up.body["automaton_id"]);

  auto first = std::async(std::launch::async, [&] { return s.say("s1", "one"); });
  {
    std::unique_lock lock(gate->m);
    REQUIRE(gate->cv.wait_for(lock, std::chrono::seconds(5), [&] { return gate->entered; }));
  }
  auto second = s.say("s1", "two");
  REQUIRE(second);
  CHECK(second->status == 409);
  CHECK(json::parse(second->body)["error"]["code"] == "BUSY");
  // Reads still answer while the step runs.
  CHECK(s.client().Get("/sessions/s1")->status == 200);
  {
    std::lock_guard lock(gate->m);
    gate->released = true;
  }
  gate->cv.notify_all();
  auto r = first.get();
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["displayed"] == json::array({"done"}));
}

// ---------------------------------------------------------------------------

TEST_CASE("event stream replays history, follows live events and closes at the end") {
  Server s;
  const auto id = s.upload_case("arps.mfa");
  s.new_session(id, 0);
  REQUIRE(s.say("s1", "hello")->status == 200);

  // Subscribe mid-dialogue; the rest of the conversation happens while the stream is open.
  auto stream = std::async(std::launch::async, [&] { return read_stream(s, "/sessions/s1/events"); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  REQUIRE(s.say("s1", "It’s outrageous to take half an hour to serve a sandwich!")->status == 200);
  REQUIRE(s.say("s1", "I have to go back to work quickly!")->status == 200);
  REQUIRE(s.say("s1", "/quit")->status == 200);

  REQUIRE(stream.wait_for(std::chrono::seconds(10)) == std::future_status::ready);
  auto frames = parse_frames(stream.get());
  auto transcript = parse_jsonl(s.client().Get("/sessions/s1/transcript")->body);
  REQUIRE(frames.size() == transcript.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].id == i);
    CHECK(frames[i].event == to_string(transcript[i].kind));
    CHECK(event_from_json(frames[i].data) == transcript[i]);
  }
  CHECK(frames.back().event == "Terminated");
}

TEST_CASE("event stream resumes after the last seen id") {
  Server s;
  const auto id = s.upload_case("arps.mfa");
  s.new_session(id, 0);
  s.say("s1", "hello");
  s.say("s1", "/quit");
  auto all = parse_frames(read_stream(s, "/sessions/s1/events"));
  REQUIRE(all.size() > 5);
  auto tail = parse_frames(read_stream(s, "/sessions/s1/events", {{"Last-Event-ID", "4"}}));
  REQUIRE(tail.size() == all.size() - 5);
  CHECK(tail.front().id == 5);
  auto by_query = parse_frames(read_stream(s, "/sessions/s1/events?after=4"));
  CHECK(by_query.size() == tail.size());
}

TEST_CASE("concurrent subscribers see the same stream") {
  Server s;
  const auto id = s.upload_case("nvc.mfa");
  s.new_session(id, 0);
  std::vector<std::future<std::string>> readers;
  for (int i = 0; i < 4; ++i)
    readers.push_back(std::async(std::launch::async, [&] { return read_stream(s, "/sessions/s1/events"); }));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  for (const auto& line : test::case_script("nvc_user.txt")) REQUIRE(s.say("s1", line)->status == 200);
  s.say("s1", "/quit");
  std::vector<std::string> bodies;
  for (auto& r : readers) {
    REQUIRE(r.wait_for(std::chrono::seconds(10)) == std::future_status::ready);
    bodies.push_back(r.get());
  }
  for (const auto& b : bodies) CHECK(b == bodies.front());
  CHECK(parse_frames(bodies.front()).size() == parse_jsonl(s.client().Get("/sessions/s1/transcript")->body).size());
}

TEST_CASE("stopping the service closes open streams") {
  auto s = std::make_unique<Server>();
  const auto id = s->upload_case("arps.mfa");
  s->new_session(id, 0);
  auto stream = std::async(std::launch::async, [&] {
    auto c = s->client();
    std::string body;
    c.Get("/sessions/s1/events", [&](const char* d, std::size_t n) {
      body.append(d, n);
      return true;
    });
    return body;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  s->service.stop();
  CHECK(stream.wait_for(std::chrono::seconds(5)) == std::future_status::ready);
}

TEST_CASE("HTTP transcript matches the scripted runner byte for byte") {
  Server s;
  const auto id = s.upload_case("nvc.mfa");
  s.new_session(id, 1234);
  auto script = test::case_script("nvc_user.txt");
  for (const auto& line : script) s.say("s1", line);
  s.say("s1", "/quit");
  const std::string over_http = s.client().Get("/sessions/s1/transcript")->body;

  script.emplace_back(kQuitCommand);
  const std::string local = to_jsonl(run_scripted(test::load_case("nvc.mfa"), script, 1234, {test::case_options(), true}));
  CHECK(over_http == local);
}

TEST_CASE("CORS and bearer token") {
  ServiceOptions o;
  o.bearer_token = "letmein";
  o.cors_origin = "http://ui.local";
  Server s(o);
  auto c = s.client();

  auto pre = c.Options("/automata");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");
  CHECK(pre->get_header_value("Access-Control-Allow-Headers").find("Authorization") != std::string::npos);

  auto denied = c.Get("/automata");
  CHECK(denied->status == 401);
  CHECK(denied->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");
  auto wrong = c.Get("/automata", {{"Authorization", "Bearer nope"}});
  CHECK(wrong->status == 401);
  auto allowed = c.Get("/automata", {{"Authorization", "Bearer letmein"}});
  CHECK(allowed->status == 200);
}
