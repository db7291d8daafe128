#include "mfa/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "mfa/dsl.hpp"

namespace mfa {

using nlohmann::json;

namespace {

struct StoredAutomaton {
  std::string id;
  int version = 0;
  std::shared_ptr<const Automaton> automaton;
  std::filesystem::path base_dir;
};

// Events are copied out of the session by its listener so that streaming
// never touches the session itself (which may be mid-step).
struct SessionEntry {
  std::string id;
  std::string automaton_id;
  std::mutex step_mutex;
  std::unique_ptr<Session> session;

  std::mutex events_mutex;
  std::condition_variable events_cv;
  std::vector<Event> events;
  bool closed = false;
  json handle;  // refreshed after every step, read under events_mutex
};

json error_body(std::string_view code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json issues_json(const std::vector<ValidationIssue>& issues) {
  json out = json::array();
  for (const auto& i : issues) out.push_back({{"code", i.code}, {"location", i.location}, {"message", i.message}});
  return out;
}

std::string slug(const std::string& name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    else if ((c == '-' || c == '_' || c == ' ') && !out.empty() && out.back() != '-') out.push_back('-');
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "automaton" : out;
}

json attachment_json(const std::optional<AttachmentSpec>& att) {
  if (!att) return nullptr;
  return {{"archive", att->archive.str()}, {"mode", to_string(att->mode)}};
}

json graph_json(const StoredAutomaton& stored) {
  const Automaton& a = *stored.automaton;
  json nodes = json::array();
  for (const auto& s : a.states) {
    json n = {{"id", s.id.str()},
              {"kind", to_string(s.kind)},
              {"final", s.is_final},
              {"display", to_string(s.display)},
              {"history", attachment_json(s.attachment())}};
    if (!s.is_user())
      if (auto cfg = resolve_dialer_config(s).config) n["backend"] = to_string(cfg->kind);
    nodes.push_back(std::move(n));
  }
  json edges = json::array();
  for (const auto& e : a.edges) {
    json ts = json::array();
    for (const auto& t : e.triggers) ts.push_back(t.str());
    edges.push_back({{"id", e.id.str()}, {"from", e.from.str()}, {"to", e.to.str()}, {"triggers", ts},
                     {"priority", e.priority}});
  }
  json triggers = json::array();
  for (const auto& t : a.triggers)
    triggers.push_back({{"id", t.id.str()},
                        {"kind", to_string(t.kind)},
                        {"default_priority", t.default_priority},
                        {"history", attachment_json(t.attachment())}});
  json archives = json::array();
  for (const auto& h : a.archives) archives.push_back(h.str());
  return {{"automaton_id", stored.id}, {"name", a.name},       {"initial", a.initial ? a.initial->str() : ""},
          {"nodes", nodes},            {"edges", edges},       {"triggers", triggers},
          {"histories", archives}};
}

json handle_json(const SessionEntry& entry) {
  const Session& s = *entry.session;
  return {{"session_id", entry.id},
          {"automaton_id", entry.automaton_id},
          {"automaton", s.automaton().name},
          {"status", to_string(s.status())},
          {"current", s.current().str()},
          {"awaiting_user", s.awaiting_user()},
          {"seed", s.seed()}};
}

json archives_json(const Session& s) {
  json out = json::object();
  for (const auto& id : s.histories().archive_ids()) {
    json pairs = json::array();
    for (const auto& p : s.histories().archive(id).pairs())
      pairs.push_back({{"seq", p.seq}, {"input", p.input}, {"output", p.output}, {"origin", p.origin.str()}});
    out[id.str()] = std::move(pairs);
  }
  return out;
}

std::string sse_frame(const Event& e) {
  std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
                      "\ndata: " + to_json(e).dump() + "\n\n";
  return frame;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<bool> stopping{false};

  std::mutex registry_mutex;
  std::vector<StoredAutomaton> automata;
  std::map<std::string, int> versions;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::uint64_t session_counter = 0;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  const StoredAutomaton* find_automaton(const std::string& id) {
    for (const auto& a : automata)
      if (a.id == id) return &a;
    return nullptr;
  }

  std::shared_ptr<SessionEntry> find_session(const std::string& id) {
    std::lock_guard lock(registry_mutex);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  Upload upload(std::string_view text, const std::filesystem::path& base_dir) {
    auto parsed = dsl::parse(text);
    if (!parsed.ok()) {
      json errors = json::array();
      for (const auto& e : parsed.errors)
        errors.push_back({{"code", "PARSE"},
                          {"location", std::to_string(e.line) + ":" + std::to_string(e.column)},
                          {"message", e.message()}});
      return {422, {{"errors", errors}, {"warnings", json::array()}}};
    }
    Automaton a = std::move(*parsed.automaton);
    auto report = validate(a);
    json report_json = {{"errors", issues_json(report.errors)}, {"warnings", issues_json(report.warnings)}};
    if (!report.ok()) return {422, report_json};

    std::lock_guard lock(registry_mutex);
    const std::string base = slug(a.name);
    const int version = ++versions[base];
    StoredAutomaton stored{base + "-v" + std::to_string(version), version,
                           std::make_shared<const Automaton>(std::move(a)), base_dir};
    json body = {{"automaton_id", stored.id}, {"name", stored.automaton->name}, {"version", version},
                 {"report", report_json}};
    automata.push_back(std::move(stored));
    return {201, body};
  }

  void update_handle(SessionEntry& entry) {
    json h = handle_json(entry);
    std::lock_guard lock(entry.events_mutex);
    entry.handle = std::move(h);
    if (entry.session->over()) entry.closed = true;
    entry.events_cv.notify_all();
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type, Authorization, Last-Event-ID"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      if (options.bearer_token && req.get_header_value("Authorization") != "Bearer " + *options.bearer_token) {
        reply(res, 401, error_body("UNAUTHORIZED", "missing or wrong bearer token"));
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server.Post("/automata", [this](const httplib::Request& req, httplib::Response& res) {
      auto up = upload(req.body, options.base_dir);
      reply(res, up.status, up.body);
    });

    server.Get("/automata", [this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      std::lock_guard lock(registry_mutex);
      for (const auto& a : automata)
        list.push_back({{"automaton_id", a.id},
                        {"name", a.automaton->name},
                        {"version", a.version},
                        {"states", a.automaton->states.size()},
                        {"edges", a.automaton->edges.size()}});
      reply(res, 200, list);
    });

    server.Get(R"(/automata/([^/]+)/graph)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(registry_mutex);
      const auto* a = find_automaton(req.matches[1]);
      if (!a) return reply(res, 404, error_body("NOT_FOUND", "no automaton " + std::string(req.matches[1])));
      reply(res, 200, graph_json(*a));
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create_session(req, res); });

    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find_session(req.matches[1]);
      if (!entry) return reply(res, 404, error_body("NOT_FOUND", "no session " + std::string(req.matches[1])));
      if (!entry->step_mutex.try_lock()) {
        std::lock_guard lock(entry->events_mutex);
        return reply(res, 200, entry->handle);
      }
      std::lock_guard step(entry->step_mutex, std::adopt_lock);
      json body = handle_json(*entry);
      body["histories"] = archives_json(*entry->session);
      reply(res, 200, body);
    });

    server.Post(R"(/sessions/([^/]+)/message)", [this](const httplib::Request& req, httplib::Response& res) {
      post_message(req, res);
    });

    server.Get(R"(/sessions/([^/]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find_session(req.matches[1]);
      if (!entry) return reply(res, 404, error_body("NOT_FOUND", "no session " + std::string(req.matches[1])));
      std::vector<Event> copy;
      {
        std::lock_guard lock(entry->events_mutex);
        copy = entry->events;
      }
      res.set_content(to_jsonl(copy), "application/x-ndjson");
    });

    server.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      stream_events(req, res);
    });
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body.empty() ? "{}" : req.body);
    } catch (const json::exception&) {
      return reply(res, 400, error_body("BAD_REQUEST", "body must be JSON"));
    }
    if (!body.is_object() || !body.contains("automaton_id") || !body["automaton_id"].is_string())
      return reply(res, 400, error_body("BAD_REQUEST", "automaton_id is required"));
    if (body.contains("seed") && !body["seed"].is_number_unsigned())
      return reply(res, 400, error_body("BAD_REQUEST", "seed must be a non-negative integer"));

    StoredAutomaton stored;
    auto entry = std::make_shared<SessionEntry>();
    {
      std::lock_guard lock(registry_mutex);
      const auto* a = find_automaton(body["automaton_id"].get<std::string>());
      if (!a) return reply(res, 404, error_body("NOT_FOUND", "no automaton " + body["automaton_id"].dump()));
      stored = *a;
      entry->id = "s" + std::to_string(++session_counter);
    }
    entry->automaton_id = stored.id;
    const std::uint64_t seed =
        body.contains("seed") ? body["seed"].get<std::uint64_t>() : std::uint64_t{std::random_device{}()};

    SessionOptions so;
    so.id = entry->id;
    so.step_budget = options.step_budget;
    so.factory = options.factory;
    so.context.base_dir = stored.base_dir;
    so.context.sink_dir = options.sink_dir;
    so.context.chat = options.chat;

    std::vector<Event> opening;
    {
      std::lock_guard step(entry->step_mutex);
      try {
        entry->session = Session::start(stored.automaton, seed, so);
      } catch (const Error& ex) {
        return reply(res, 422, error_body(code_name(ex.code()), ex.what()));
      }
      entry->session->set_listener([raw = entry.get()](const Event& e) {
        std::lock_guard lock(raw->events_mutex);
        raw->events.push_back(e);
        raw->events_cv.notify_all();
      });
      // A machine initial state speaks first.
      if (!entry->session->awaiting_user() && !entry->session->over()) opening = entry->session->step(std::nullopt);
      update_handle(*entry);
    }
    {
      std::lock_guard lock(registry_mutex);
      sessions[entry->id] = entry;
    }
    json out;
    {
      std::lock_guard lock(entry->events_mutex);
      out = entry->handle;
    }
    out["displayed"] = displayed(opening);
    reply(res, 201, out);
  }

  void post_message(const httplib::Request& req, httplib::Response& res) {
    auto entry = find_session(req.matches[1]);
    if (!entry) return reply(res, 404, error_body("NOT_FOUND", "no session " + std::string(req.matches[1])));

    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return reply(res, 400, error_body("BAD_REQUEST", "body must be JSON"));
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
      return reply(res, 400, error_body("BAD_REQUEST", "text is required"));

    std::unique_lock step(entry->step_mutex, std::try_to_lock);
    if (!step.owns_lock()) return reply(res, 409, error_body("BUSY", "a message is already being processed"));
    Session& s = *entry->session;
    if (s.over()) return reply(res, 410, error_body("SESSION_ENDED", "session " + entry->id + " has ended"));
    if (!s.awaiting_user()) return reply(res, 409, error_body("INPUT_UNEXPECTED", "session is not awaiting user input"));

    std::vector<Event> events;
    try {
      events = s.step(body["text"].get<std::string>());
    } catch (const Error& ex) {
      return reply(res, 409, error_body(code_name(ex.code()), ex.what()));
    }
    update_handle(*entry);
    json out = {{"displayed", displayed(events)}, {"handle", handle_json(*entry)}};
    reply(res, 200, out);
  }

  void stream_events(const httplib::Request& req, httplib::Response& res) {
    auto entry = find_session(req.matches[1]);
    if (!entry) return reply(res, 404, error_body("NOT_FOUND", "no session " + std::string(req.matches[1])));

    std::size_t from = 0;
    const std::string last = req.has_header("Last-Event-ID") ? req.get_header_value("Last-Event-ID")
                                                              : req.get_param_value("after");
    if (!last.empty()) {
      try {
        from = static_cast<std::size_t>(std::stoull(last)) + 1;
      } catch (const std::exception&) {
        return reply(res, 400, error_body("BAD_REQUEST", "Last-Event-ID must be a sequence number"));
      }
    }

    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, entry, next = from](std::size_t, httplib::DataSink& sink) mutable {
          std::unique_lock lock(entry->events_mutex);
          entry->events_cv.wait_for(lock, std::chrono::milliseconds(200), [&] {
            return next < entry->events.size() || entry->closed || stopping.load();
          });
          std::string chunk;
          while (next < entry->events.size()) chunk += sse_frame(entry->events[next++]);
          const bool finished = entry->closed || stopping.load();
          lock.unlock();

          if (!chunk.empty() && !sink.write(chunk.data(), chunk.size())) return false;
          if (finished) {
            sink.done();
            return true;
          }
          if (chunk.empty() && !sink.is_writable()) return false;
          return true;
        });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

Service::Upload Service::upload(std::string_view text, const std::optional<std::filesystem::path>& base_dir) {
  return impl_->upload(text, base_dir.value_or(impl_->options.base_dir));
}

std::size_t Service::load_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".mfa") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::size_t accepted = 0;
  for (const auto& f : files) {
    auto up = upload(read_text_file(f), f.parent_path());
    if (up.status == 201) {
      ++accepted;
    } else {
      std::cerr << f.string() << ": rejected " << up.body.dump() << '\n';
    }
  }
  return accepted;
}

int Service::start(const std::string& host, int port) {
  auto& impl = *impl_;
  int bound = port == 0 ? impl.server.bind_to_any_port(host) : (impl.server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  impl.port = bound;
  impl.stopping = false;
  impl.thread = std::thread([&impl] { impl.server.listen_after_bind(); });
  impl.server.wait_until_ready();
  return bound;
}

void Service::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
  auto& impl = *impl_;
  impl.stopping = true;
  {
    std::lock_guard lock(impl.registry_mutex);
    for (auto& [id, entry] : impl.sessions) entry->events_cv.notify_all();
  }
  impl.server.stop();
  if (impl.thread.joinable() && impl.thread.get_id() != std::this_thread::get_id()) impl.thread.join();
}

int Service::port() const noexcept { return impl_->port; }

}  // namespace mfa
