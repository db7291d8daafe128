#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mfa/automaton.hpp"
#include "mfa/http.hpp"
#include "mfa/runner.hpp"

namespace mfa::test {

std::filesystem::path cases_dir();

/// Removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// Loads and validates a shipped case file; fails loudly if it does not validate.
std::shared_ptr<const Automaton> load_case(const std::string& file);
std::vector<std::string> case_script(const std::string& file);
SessionOptions case_options(const std::filesystem::path& sink_dir = ".");

// ---------------------------------------------------------------------------
// Random automata with table-driven triggers
// ---------------------------------------------------------------------------

/// f(trigger, state, message) looked up in a table; missing entries are 0.
struct TriggerTable {
  std::map<std::tuple<std::string, std::string, std::string>, bool> entries;
  [[nodiscard]] bool lookup(const std::string& trigger, const std::string& state, const std::string& message) const;
};

/// Machine states answer "out:<id>" whatever they receive; triggers read a
/// shared table. This keeps the message alphabet finite.
class TableFactory final : public ComponentFactory {
 public:
  explicit TableFactory(std::shared_ptr<const TriggerTable> table) : table_(std::move(table)) {}
  std::unique_ptr<Backend> backend(const StateNode& node, const BackendContext& context) const override;
  std::unique_ptr<Trigger> trigger(const TriggerDef& def, const BackendContext& context) const override;

 private:
  std::shared_ptr<const TriggerTable> table_;
};

std::string machine_output(const StateId& id);

struct RandomCase {
  Automaton automaton;  // validated
  std::shared_ptr<TriggerTable> table;
  std::vector<std::string> inputs;  // user script
};

/// Up to `max_states` states, mixed kinds, random edges and priorities, a
/// random trigger table over every reachable message. Always validates.
RandomCase random_case(std::mt19937_64& gen, int max_states = 6);

/// Arbitrary automaton for DSL tests: odd strings, attachments, display
/// policies, parallel edges. Need not validate.
Automaton random_definition(std::mt19937_64& gen);

/// Literal reading of the dialogue loop: returns the visited states.
/// Independent of select_next and Session; shares only the RNG contract
/// (mt19937_64 seeded once, one rejection-sampled draw per real tie, ties
/// ordered by edge declaration).
std::vector<StateId> reference_visits(const Automaton& a, const TriggerTable& table,
                                      const std::vector<std::string>& inputs, std::uint64_t seed,
                                      std::size_t step_budget = 64);

/// All simple machine-only paths between user turns, enumerated without
/// memoisation; nullopt when a machine-only cycle is reachable.
std::optional<int> brute_force_max_chain(const Automaton& a);

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

/// Records requests; answers from a queue or a handler.
class MockTransport final : public HttpTransport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;

  void push(int status, std::string body);
  void push_failure(std::string what);
  void set_handler(Handler h);
  HttpResponse post(const HttpRequest& request) override;

  [[nodiscard]] std::vector<HttpRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  std::deque<std::optional<HttpResponse>> queue_;  // nullopt = transport failure
  std::deque<std::string> failures_;
  Handler handler_;
  std::vector<HttpRequest> requests_;
};

/// {"choices":[{"message":{"content": text}}]}
std::string completion_body(const std::string& text);

}  // namespace mfa::test
