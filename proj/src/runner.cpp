#include "mfa/runner.hpp"

#include <sstream>

namespace mfa {

using nlohmann::json;

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::UserInput: return "UserInput";
    case EventKind::StateOutput: return "StateOutput";
    case EventKind::TriggerEval: return "TriggerEval";
    case EventKind::Transition: return "Transition";
    case EventKind::Display: return "Display";
    case EventKind::Terminated: return "Terminated";
    case EventKind::Warning: return "Warning";
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view text) noexcept {
  for (auto k : {EventKind::UserInput, EventKind::StateOutput, EventKind::TriggerEval, EventKind::Transition,
                 EventKind::Display, EventKind::Terminated, EventKind::Warning})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

std::string_view to_string(SessionStatus status) noexcept {
  switch (status) {
    case SessionStatus::AwaitingUser: return "AwaitingUser";
    case SessionStatus::Running: return "Running";
    case SessionStatus::Ended: return "Ended";
    case SessionStatus::Error: return "Error";
  }
  return "?";
}

json to_json(const Event& e) {
  json j = {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"data", e.data}};
  j["state"] = e.state ? json(e.state->str()) : json(nullptr);
  return j;
}

Event event_from_json(const json& j) {
  Event e;
  e.seq = j.at("seq").get<std::uint64_t>();
  auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::Parse, "unknown event kind " + j.at("kind").dump());
  e.kind = *kind;
  if (auto it = j.find("state"); it != j.end() && !it->is_null()) e.state = StateId(it->get<std::string>());
  if (auto it = j.find("data"); it != j.end()) e.data = *it;
  return e;
}

std::string to_jsonl(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json(e).dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<Event> parse_jsonl(std::string_view text) {
  std::vector<Event> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::Parse, std::string("bad transcript line: ") + ex.what());
    }
  }
  return out;
}

std::vector<std::string> displayed(const std::vector<Event>& events) {
  std::vector<std::string> out;
  for (const auto& e : events)
    if (e.kind == EventKind::Display) out.push_back(e.data.at("text").get<std::string>());
  return out;
}

std::vector<StateId> visited_states(const std::vector<Event>& events) {
  std::vector<StateId> out;
  for (const auto& e : events) {
    if (out.empty() && e.state) out.push_back(*e.state);
    if (e.kind == EventKind::Transition) out.emplace_back(e.data.at("to").get<std::string>());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const ComponentFactory& default_factory() {
  static const ComponentFactory factory;
  return factory;
}

}  // namespace

Session::Session(std::shared_ptr<const Automaton> automaton, std::uint64_t seed, SessionOptions options)
    : automaton_(std::move(automaton)),
      seed_(seed),
      options_(std::move(options)),
      rng_(seed),
      current_(*automaton_->initial),
      status_(SessionStatus::Running) {}

Session::~Session() = default;

std::unique_ptr<Session> Session::start(std::shared_ptr<const Automaton> automaton, std::uint64_t seed,
                                        SessionOptions options) {
  if (!automaton || !automaton->validated || !automaton->initial)
    throw Error(ErrorCode::Unvalidated, "automaton must pass validation before a session starts");

  std::unique_ptr<Session> s(new Session(std::move(automaton), seed, std::move(options)));
  const Automaton& a = *s->automaton_;
  const ComponentFactory& factory = s->options_.factory ? *s->options_.factory : default_factory();
  BackendContext ctx = s->options_.context;
  ctx.session_id = s->options_.id;

  s->histories_ = HistoryGraph::from_automaton(a);
  for (const auto& node : a.states) {
    if (node.is_user()) continue;
    auto backend = factory.backend(node, ctx);
    backend->attach(s->histories_->find(node.id));
    s->backends_.emplace(node.id, std::move(backend));
  }
  for (const auto& def : a.triggers) {
    auto trigger = factory.trigger(def, ctx);
    trigger->attach(s->histories_->find(def.id));
    s->triggers_.emplace(def.id, std::move(trigger));
  }

  const StateNode* initial = a.find_state(s->current_);
  s->status_ = initial->is_user() ? SessionStatus::AwaitingUser : SessionStatus::Running;
  return s;
}

const Event& Session::emit(EventKind kind, std::optional<StateId> state, json data) {
  Event e;
  e.seq = transcript_.size();
  e.kind = kind;
  e.state = std::move(state);
  e.data = std::move(data);
  transcript_.push_back(std::move(e));
  if (listener_) listener_(transcript_.back());
  return transcript_.back();
}

Backend& Session::backend_for(const StateId& id) {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw Error(ErrorCode::UnknownState, "no backend for state " + id.str());
  return *it->second;
}

void Session::terminate(SessionStatus status, const std::string& reason, std::optional<ErrorCode> code,
                        const std::string& message) {
  json data = {{"reason", reason}};
  if (code) data["code"] = code_name(*code);
  if (!message.empty()) data["message"] = message;
  status_ = status;
  failure_ = code;
  emit(EventKind::Terminated, current_, std::move(data));
}

Selection Session::choose(const StateId& state, const std::string& message) {
  std::vector<json> warnings;
  TriggerEvaluator evaluate = [&](const TriggerId& id, const StateId& q, std::string_view m) {
    auto it = triggers_.find(id);
    if (it == triggers_.end()) throw Error(ErrorCode::TriggerConfig, "unknown trigger " + id.str());
    try {
      return it->second->fire(q, m);
    } catch (const Error& ex) {
      if (ex.code() != ErrorCode::ClassifierParse) throw;
      warnings.push_back({{"code", code_name(ex.code())}, {"trigger", id.str()}, {"message", ex.what()}});
      return false;
    }
  };
  Selection sel = select_next(*automaton_, state, message, evaluate, rng_);

  for (auto& w : warnings) emit(EventKind::Warning, state, std::move(w));
  for (std::size_t i = 0; i < sel.evaluations.size(); ++i) {
    const auto& ev = sel.evaluations[i];
    json outputs = json::array();
    for (const auto& [tid, fired] : ev.outputs) outputs.push_back({{"trigger", tid.str()}, {"output", fired ? 1 : 0}});
    emit(EventKind::TriggerEval, state,
         {{"edge", ev.edge->id.str()},
          {"to", ev.edge->to.str()},
          {"triggers", std::move(outputs)},
          {"fired", ev.fired},
          {"priority", ev.edge->priority},
          {"value", ev.value},
          {"chosen", sel.chosen == i}});
  }
  return sel;
}

std::vector<Event> Session::step(std::optional<std::string> user_input) {
  if (over()) throw Error(ErrorCode::SessionEnded, "session " + id() + " has ended");
  if (status_ == SessionStatus::AwaitingUser && !user_input)
    throw Error(ErrorCode::InputRequired, "session " + id() + " is waiting for user input");
  if (status_ == SessionStatus::Running && user_input)
    throw Error(ErrorCode::InputUnexpected, "session " + id() + " is not at a user state");

  const std::size_t mark = transcript_.size();
  if (user_input) {
    emit(EventKind::UserInput, current_, {{"text", *user_input}});
    if (*user_input == kQuitCommand) {
      end("quit");
      return {transcript_.begin() + static_cast<std::ptrdiff_t>(mark), transcript_.end()};
    }
    last_message_ = *user_input;
  }
  status_ = SessionStatus::Running;
  run_from(current_);
  return {transcript_.begin() + static_cast<std::ptrdiff_t>(mark), transcript_.end()};
}

// One iteration per visited state: a user state has already taken its
// input, a machine state produces r and becomes the message source.
void Session::run_from(const StateId& start) {
  StateId here = start;
  std::size_t machine_steps = 0;
  bool first = true;

  try {
    while (true) {
      const StateNode* node = automaton_->find_state(here);
      if (!node) throw Error(ErrorCode::UnknownState, "state " + here.str() + " is not declared");

      if (node->is_user() && !first) {
        current_ = here;
        status_ = SessionStatus::AwaitingUser;
        return;
      }
      first = false;

      std::optional<std::string> output;
      if (!node->is_user()) {
        if (++machine_steps > options_.step_budget) {
          terminate(SessionStatus::Error, "error", ErrorCode::StepBudget,
                    "more than " + std::to_string(options_.step_budget) + " machine states in one turn");
          return;
        }
        Backend& backend = backend_for(here);
        std::string r = backend.predict(last_message_);
        emit(EventKind::StateOutput, here, {{"input", last_message_}, {"output", r}});
        backend.add_pair_if_attached(last_message_, r);
        output = std::move(r);
      }

      const std::string& message = output ? *output : last_message_;
      Selection sel = choose(here, message);
      auto next = sel.next();

      if (output) {
        bool show = false;
        switch (node->display) {
          case DisplayPolicy::Always: show = true; break;
          case DisplayPolicy::Never: show = false; break;
          case DisplayPolicy::Auto: {
            const StateNode* succ = next ? automaton_->find_state(*next) : nullptr;
            show = succ && succ->is_user();
            break;
          }
        }
        if (show) emit(EventKind::Display, here, {{"text", *output}});
        last_message_ = *output;
      }

      current_ = here;
      if (!next) {
        if (node->is_final) {
          terminate(SessionStatus::Ended, "final", std::nullopt, "no trigger fired at final state " + here.str());
        } else {
          terminate(SessionStatus::Error, "error", ErrorCode::DeadEnd,
                    "no trigger fired at non-final state " + here.str());
        }
        return;
      }

      const TriggerEdge* edge = sel.chosen_edge();
      emit(EventKind::Transition, here,
           {{"from", here.str()},
            {"to", next->str()},
            {"edge", edge->id.str()},
            {"priority", edge->priority},
            {"ties", sel.tie_count}});
      here = *next;
      current_ = here;
    }
  } catch (const Error& ex) {
    current_ = here;
    terminate(SessionStatus::Error, "error", ex.code(), ex.what());
  } catch (const std::exception& ex) {
    current_ = here;
    terminate(SessionStatus::Error, "error", std::nullopt, ex.what());
  }
}

void Session::end(const std::string& reason) {
  if (over()) throw Error(ErrorCode::SessionEnded, "session " + id() + " has ended");
  const StateNode* node = automaton_->find_state(current_);
  if (!node || !node->is_final)
    throw Error(ErrorCode::NotFinal, "cannot end at non-final state " + current_.str());
  terminate(SessionStatus::Ended, reason, std::nullopt, "");
}

// ---------------------------------------------------------------------------

std::vector<Event> run_scripted(std::shared_ptr<const Automaton> automaton,
                                const std::vector<std::string>& user_script, std::uint64_t seed,
                                ScriptOptions options) {
  auto session = Session::start(std::move(automaton), seed, std::move(options.session));
  std::size_t next = 0;
  while (!session->over()) {
    if (!session->awaiting_user()) {
      session->step(std::nullopt);
      continue;
    }
    if (next < user_script.size()) {
      session->step(user_script[next++]);
      continue;
    }
    if (options.require_quit)
      throw Error(ErrorCode::ScriptUnderrun,
                  "session awaits input at " + session->current().str() + " after " +
                      std::to_string(user_script.size()) + " scripted inputs");
    session->end("quit");
  }
  return session->transcript();
}

std::vector<std::string> load_user_script(const std::filesystem::path& path) { return load_script(path); }

}  // namespace mfa
