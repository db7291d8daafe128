#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfa/ids.hpp"
#include "mfa/random.hpp"

namespace mfa {

enum class StateKind { User, Dialer, Writer };
enum class DisplayPolicy { Always, Never, Auto };
enum class AccessMode { Read, Write, ReadWrite };
enum class TriggerKind { Always, Keyword, Pattern, LlmClassifier };

std::string_view to_string(StateKind kind) noexcept;
std::string_view to_string(DisplayPolicy policy) noexcept;
std::string_view to_string(AccessMode mode) noexcept;
std::string_view to_string(TriggerKind kind) noexcept;

std::optional<StateKind> parse_state_kind(std::string_view text) noexcept;
std::optional<DisplayPolicy> parse_display_policy(std::string_view text) noexcept;
/// Accepts the short forms used in definition files: r, w, rw.
std::optional<AccessMode> parse_access_mode(std::string_view text) noexcept;
std::optional<TriggerKind> parse_trigger_kind(std::string_view text) noexcept;

inline bool can_read(AccessMode m) noexcept { return m != AccessMode::Write; }
inline bool can_write(AccessMode m) noexcept { return m != AccessMode::Read; }

struct SourceLocation {
  int line = 0;
  int column = 0;
};

/// Binding of a state or trigger to a history archive.
struct AttachmentSpec {
  ArchiveId archive;
  AccessMode mode = AccessMode::ReadWrite;

  friend bool operator==(const AttachmentSpec&, const AttachmentSpec&) = default;
};

/// Backend / trigger configuration bag (prompt, script_file, endpoint, ...).
using Params = std::map<std::string, std::string>;

struct StateNode {
  StateId id;
  StateKind kind = StateKind::Dialer;
  bool is_final = false;
  DisplayPolicy display = DisplayPolicy::Always;
  Params backend;
  // More than one entry is representable so that validation can report it.
  std::vector<AttachmentSpec> attachments;
  SourceLocation location;

  [[nodiscard]] bool is_user() const noexcept { return kind == StateKind::User; }
  [[nodiscard]] std::optional<AttachmentSpec> attachment() const {
    if (attachments.empty()) return std::nullopt;
    return attachments.front();
  }
};

struct TriggerDef {
  TriggerId id;
  TriggerKind kind = TriggerKind::Always;
  int default_priority = 1;
  Params params;
  std::vector<AttachmentSpec> attachments;
  SourceLocation location;

  [[nodiscard]] std::optional<AttachmentSpec> attachment() const {
    if (attachments.empty()) return std::nullopt;
    return attachments.front();
  }
};

/// Directed arc. An empty trigger list always fires; several triggers are a
/// conjunction.
struct TriggerEdge {
  EdgeId id;
  StateId from;
  StateId to;
  std::vector<TriggerId> triggers;
  int priority = 1;
  SourceLocation location;
};

struct Automaton {
  std::string name;
  std::vector<StateNode> states;
  std::vector<TriggerEdge> edges;
  std::optional<StateId> initial;
  std::vector<ArchiveId> archives;
  std::vector<TriggerDef> triggers;
  bool validated = false;

  [[nodiscard]] const StateNode* find_state(const StateId& id) const noexcept;
  [[nodiscard]] const TriggerDef* find_trigger(const TriggerId& id) const noexcept;
  [[nodiscard]] bool has_archive(const ArchiveId& id) const noexcept;
  /// Outgoing edges of `from` in declaration order.
  [[nodiscard]] std::vector<const TriggerEdge*> outgoing(const StateId& from) const;
  [[nodiscard]] std::vector<StateId> final_states() const;
};

/// Structural equality up to edge ids and declaration order; this is what a
/// parse/serialize round trip preserves.
bool structurally_equal(const Automaton& a, const Automaton& b);

/// Incremental construction in the style of add_state / add_edge.
class AutomatonBuilder {
 public:
  explicit AutomatonBuilder(std::string name);

  StateNode& user(std::string id);
  StateNode& dialer(std::string id, Params backend = {});
  StateNode& writer(std::string id, Params backend = {});
  TriggerDef& trigger(std::string id, TriggerKind kind, int default_priority = 1, Params params = {});
  AutomatonBuilder& history(std::string id);
  /// Priority defaults to the first trigger's default priority, else 1.
  TriggerEdge& edge(std::string from, std::string to, std::vector<std::string> triggers = {},
                    std::optional<int> priority = std::nullopt);
  AutomatonBuilder& initial(std::string id);

  [[nodiscard]] Automaton build() const;

 private:
  Automaton automaton_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationIssue {
  std::string code;
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  [[nodiscard]] bool ok() const noexcept { return errors.empty(); }
  [[nodiscard]] bool has_error(std::string_view code) const;
  [[nodiscard]] bool has_warning(std::string_view code) const;
};

/// Checks structure and configuration; sets `automaton.validated` when there
/// are no errors. Never throws on a parsed automaton.
ValidationReport validate(Automaton& automaton);
/// Same checks without touching the flag.
ValidationReport check(const Automaton& automaton);

// ---------------------------------------------------------------------------
// Transition
// ---------------------------------------------------------------------------

/// Def. of a trigger value: min(p * f, p). Zero means "not a candidate".
constexpr int trigger_value(int priority, bool fired) noexcept {
  const int f = fired ? 1 : 0;
  const int scaled = priority * f;
  return scaled < priority ? scaled : priority;
}

/// f_tau(q, s) for a trigger id.
using TriggerEvaluator =
    std::function<bool(const TriggerId& trigger, const StateId& state, std::string_view message)>;

struct EdgeEvaluation {
  const TriggerEdge* edge = nullptr;
  std::vector<std::pair<TriggerId, bool>> outputs;
  bool fired = false;
  int value = 0;
};

struct Selection {
  std::vector<EdgeEvaluation> evaluations;
  std::optional<std::size_t> chosen;  // index into evaluations
  std::size_t tie_count = 0;          // size of the argmax set

  [[nodiscard]] std::optional<StateId> next() const;
  [[nodiscard]] const TriggerEdge* chosen_edge() const;
};

/// Evaluates every outgoing edge of `current` and picks the highest-valued
/// firing edge; ties are broken uniformly with `rng` (one draw, only when
/// the argmax set has more than one element). Each trigger is evaluated at
/// most once per call.
Selection select_next(const Automaton& automaton, const StateId& current, std::string_view message,
                      const TriggerEvaluator& evaluate, Rng& rng);

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

struct ChainKey {
  StateId from;               // user node (or a machine initial state)
  std::optional<StateId> to;  // next user node; nullopt = terminal

  friend auto operator<=>(const ChainKey&, const ChainKey&) = default;
  friend bool operator==(const ChainKey&, const ChainKey&) = default;
};

struct WorkloadEstimate {
  std::optional<int> max_machine_chain;  // nullopt = unbounded
  std::map<ChainKey, int> per_pair;
  std::optional<double> estimated_latency;

  [[nodiscard]] bool unbounded() const noexcept { return !max_machine_chain.has_value(); }
};

/// Longest run of machine states between two user turns. Throws UNVALIDATED
/// if the automaton has not passed validation.
WorkloadEstimate estimate_workload(const Automaton& automaton,
                                   const std::map<StateKind, double>& per_state_cost = {});

}  // namespace mfa
