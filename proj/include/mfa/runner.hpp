#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfa/automaton.hpp"
#include "mfa/backends.hpp"
#include "mfa/error.hpp"
#include "mfa/history.hpp"
#include "mfa/triggers.hpp"

namespace mfa {

enum class EventKind { UserInput, StateOutput, TriggerEval, Transition, Display, Terminated, Warning };

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view text) noexcept;

/// One observable step of the dialogue loop. Events carry no wall-clock or
/// session id so that transcripts replay byte for byte.
struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Warning;
  std::optional<StateId> state;
  nlohmann::json data = nlohmann::json::object();

  friend bool operator==(const Event&, const Event&) = default;
};

nlohmann::json to_json(const Event& event);
Event event_from_json(const nlohmann::json& j);
/// One compact JSON object per line.
std::string to_jsonl(const std::vector<Event>& events);
std::vector<Event> parse_jsonl(std::string_view text);

/// Display texts in order.
std::vector<std::string> displayed(const std::vector<Event>& events);
/// The state visit sequence: the initial state, then every Transition target.
std::vector<StateId> visited_states(const std::vector<Event>& events);

enum class SessionStatus { AwaitingUser, Running, Ended, Error };
std::string_view to_string(SessionStatus status) noexcept;

inline constexpr std::string_view kQuitCommand = "/quit";

/// Builds the runtime objects behind states and triggers. Tests swap in
/// table-driven triggers or recording backends here.
class ComponentFactory {
 public:
  virtual ~ComponentFactory() = default;
  virtual std::unique_ptr<Backend> backend(const StateNode& node, const BackendContext& context) const {
    return make_backend(node, context);
  }
  virtual std::unique_ptr<Trigger> trigger(const TriggerDef& def, const BackendContext& context) const {
    return make_trigger(def, context);
  }
};

struct SessionOptions {
  std::string id = "session";
  std::size_t step_budget = 64;  // machine states per step() call
  BackendContext context;
  std::shared_ptr<const ComponentFactory> factory;  // default factory when null
};

/// Live execution of one automaton. Strictly sequential; not thread-safe.
class Session {
 public:
  using Listener = std::function<void(const Event&)>;

  /// Throws UNVALIDATED unless the automaton passed validate(), and
  /// BACKEND_CONFIG / TRIGGER_CONFIG / IO if a component cannot be built.
  static std::unique_ptr<Session> start(std::shared_ptr<const Automaton> automaton, std::uint64_t seed,
                                        SessionOptions options = {});

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
  ~Session();

  /// Runs one user turn (or, from a machine initial state, the opening
  /// machine turns) until the next user node or termination. Runtime
  /// failures (DEAD_END, STEP_BUDGET, backend errors) end the session with
  /// status Error and a Terminated event rather than throwing.
  /// Throws SESSION_ENDED, INPUT_REQUIRED or INPUT_UNEXPECTED on misuse.
  std::vector<Event> step(std::optional<std::string> user_input);

  /// Normal end; throws NOT_FINAL at a non-final state, SESSION_ENDED when
  /// already over.
  void end(const std::string& reason);

  [[nodiscard]] const std::string& id() const noexcept { return options_.id; }
  [[nodiscard]] const Automaton& automaton() const noexcept { return *automaton_; }
  [[nodiscard]] const StateId& current() const noexcept { return current_; }
  [[nodiscard]] const std::string& last_message() const noexcept { return last_message_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] SessionStatus status() const noexcept { return status_; }
  [[nodiscard]] bool awaiting_user() const noexcept { return status_ == SessionStatus::AwaitingUser; }
  [[nodiscard]] bool over() const noexcept {
    return status_ == SessionStatus::Ended || status_ == SessionStatus::Error;
  }
  [[nodiscard]] const std::vector<Event>& transcript() const noexcept { return transcript_; }
  [[nodiscard]] const HistoryGraph& histories() const noexcept { return *histories_; }
  [[nodiscard]] const std::optional<ErrorCode>& failure() const noexcept { return failure_; }

  /// Called synchronously for every appended event.
  void set_listener(Listener listener) { listener_ = std::move(listener); }

 private:
  Session(std::shared_ptr<const Automaton> automaton, std::uint64_t seed, SessionOptions options);

  const Event& emit(EventKind kind, std::optional<StateId> state, nlohmann::json data);
  void run_from(const StateId& state);
  /// Evaluates outgoing edges and records TriggerEval events; returns the
  /// selection. Classifier parse failures become a 0 plus a Warning.
  Selection choose(const StateId& state, const std::string& message);
  void terminate(SessionStatus status, const std::string& reason, std::optional<ErrorCode> code,
                 const std::string& message);
  Backend& backend_for(const StateId& id);

  std::shared_ptr<const Automaton> automaton_;
  std::uint64_t seed_;
  SessionOptions options_;
  Rng rng_;
  StateId current_;
  std::string last_message_;
  SessionStatus status_;
  std::vector<Event> transcript_;
  std::optional<ErrorCode> failure_;
  Listener listener_;

  std::unique_ptr<HistoryGraph> histories_;
  std::map<StateId, std::unique_ptr<Backend>> backends_;
  std::map<TriggerId, std::unique_ptr<Trigger>> triggers_;
};

struct ScriptOptions {
  SessionOptions session;
  /// When false, running out of script at a user node ends the session as
  /// if the user had quit. When true that situation is SCRIPT_UNDERRUN.
  bool require_quit = false;
};

/// Feeds the script at each user turn and returns the full transcript.
std::vector<Event> run_scripted(std::shared_ptr<const Automaton> automaton,
                                const std::vector<std::string>& user_script, std::uint64_t seed,
                                ScriptOptions options = {});

/// Script files for users: one input per line, blank lines and '#' comments
/// skipped, like dialer scripts.
std::vector<std::string> load_user_script(const std::filesystem::path& path);

}  // namespace mfa
