#include "mfa/automaton.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "mfa/backend_config.hpp"
#include "mfa/error.hpp"

namespace mfa {

std::string_view to_string(StateKind kind) noexcept {
  switch (kind) {
    case StateKind::User: return "user";
    case StateKind::Dialer: return "dialer";
    case StateKind::Writer: return "writer";
  }
  return "?";
}

std::string_view to_string(DisplayPolicy policy) noexcept {
  switch (policy) {
    case DisplayPolicy::Always: return "always";
    case DisplayPolicy::Never: return "never";
    case DisplayPolicy::Auto: return "auto";
  }
  return "?";
}

std::string_view to_string(AccessMode mode) noexcept {
  switch (mode) {
    case AccessMode::Read: return "r";
    case AccessMode::Write: return "w";
    case AccessMode::ReadWrite: return "rw";
  }
  return "?";
}

std::string_view to_string(TriggerKind kind) noexcept {
  switch (kind) {
    case TriggerKind::Always: return "always";
    case TriggerKind::Keyword: return "keyword";
    case TriggerKind::Pattern: return "pattern";
    case TriggerKind::LlmClassifier: return "llm";
  }
  return "?";
}

std::optional<StateKind> parse_state_kind(std::string_view text) noexcept {
  if (text == "user") return StateKind::User;
  if (text == "dialer") return StateKind::Dialer;
  if (text == "writer") return StateKind::Writer;
  return std::nullopt;
}

std::optional<DisplayPolicy> parse_display_policy(std::string_view text) noexcept {
  if (text == "always") return DisplayPolicy::Always;
  if (text == "never") return DisplayPolicy::Never;
  if (text == "auto") return DisplayPolicy::Auto;
  return std::nullopt;
}

std::optional<AccessMode> parse_access_mode(std::string_view text) noexcept {
  if (text == "r") return AccessMode::Read;
  if (text == "w") return AccessMode::Write;
  if (text == "rw") return AccessMode::ReadWrite;
  return std::nullopt;
}

std::optional<TriggerKind> parse_trigger_kind(std::string_view text) noexcept {
  if (text == "always") return TriggerKind::Always;
  if (text == "keyword") return TriggerKind::Keyword;
  if (text == "pattern") return TriggerKind::Pattern;
  if (text == "llm") return TriggerKind::LlmClassifier;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

const StateNode* Automaton::find_state(const StateId& id) const noexcept {
  for (const auto& s : states)
    if (s.id == id) return &s;
  return nullptr;
}

const TriggerDef* Automaton::find_trigger(const TriggerId& id) const noexcept {
  for (const auto& t : triggers)
    if (t.id == id) return &t;
  return nullptr;
}

bool Automaton::has_archive(const ArchiveId& id) const noexcept {
  return std::find(archives.begin(), archives.end(), id) != archives.end();
}

std::vector<const TriggerEdge*> Automaton::outgoing(const StateId& from) const {
  std::vector<const TriggerEdge*> out;
  for (const auto& e : edges)
    if (e.from == from) out.push_back(&e);
  return out;
}

std::vector<StateId> Automaton::final_states() const {
  std::vector<StateId> out;
  for (const auto& s : states)
    if (s.is_final) out.push_back(s.id);
  return out;
}

namespace {

using EdgeShape = std::tuple<std::string, std::string, std::vector<std::string>, int>;

EdgeShape shape_of(const TriggerEdge& e) {
  std::vector<std::string> ts;
  ts.reserve(e.triggers.size());
  for (const auto& t : e.triggers) ts.push_back(t.str());
  return {e.from.str(), e.to.str(), std::move(ts), e.priority};
}

bool same_state(const StateNode& a, const StateNode& b) {
  return a.id == b.id && a.kind == b.kind && a.is_final == b.is_final && a.display == b.display &&
         a.backend == b.backend && a.attachments == b.attachments;
}

bool same_trigger(const TriggerDef& a, const TriggerDef& b) {
  return a.id == b.id && a.kind == b.kind && a.default_priority == b.default_priority &&
         a.params == b.params && a.attachments == b.attachments;
}

template <class T>
std::vector<const T*> sorted_by_id(const std::vector<T>& items) {
  std::vector<const T*> out;
  for (const auto& i : items) out.push_back(&i);
  std::sort(out.begin(), out.end(), [](const T* x, const T* y) { return x->id < y->id; });
  return out;
}

}  // namespace

bool structurally_equal(const Automaton& a, const Automaton& b) {
  if (a.name != b.name || a.initial != b.initial) return false;
  if (a.states.size() != b.states.size() || a.triggers.size() != b.triggers.size() ||
      a.edges.size() != b.edges.size())
    return false;

  auto sa = sorted_by_id(a.states), sb = sorted_by_id(b.states);
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (!same_state(*sa[i], *sb[i])) return false;

  auto ta = sorted_by_id(a.triggers), tb = sorted_by_id(b.triggers);
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!same_trigger(*ta[i], *tb[i])) return false;

  std::set<ArchiveId> ha(a.archives.begin(), a.archives.end());
  std::set<ArchiveId> hb(b.archives.begin(), b.archives.end());
  if (ha != hb) return false;

  std::multiset<EdgeShape> ea, eb;
  for (const auto& e : a.edges) ea.insert(shape_of(e));
  for (const auto& e : b.edges) eb.insert(shape_of(e));
  return ea == eb;
}

// ---------------------------------------------------------------------------

AutomatonBuilder::AutomatonBuilder(std::string name) { automaton_.name = std::move(name); }

StateNode& AutomatonBuilder::user(std::string id) {
  StateNode n;
  n.id = StateId(std::move(id));
  n.kind = StateKind::User;
  n.is_final = true;
  n.display = DisplayPolicy::Never;
  automaton_.states.push_back(std::move(n));
  return automaton_.states.back();
}

StateNode& AutomatonBuilder::dialer(std::string id, Params backend) {
  StateNode n;
  n.id = StateId(std::move(id));
  n.kind = StateKind::Dialer;
  n.display = DisplayPolicy::Always;
  n.backend = std::move(backend);
  automaton_.states.push_back(std::move(n));
  return automaton_.states.back();
}

StateNode& AutomatonBuilder::writer(std::string id, Params backend) {
  StateNode n;
  n.id = StateId(std::move(id));
  n.kind = StateKind::Writer;
  n.display = DisplayPolicy::Never;
  n.backend = std::move(backend);
  automaton_.states.push_back(std::move(n));
  return automaton_.states.back();
}

TriggerDef& AutomatonBuilder::trigger(std::string id, TriggerKind kind, int default_priority,
                                      Params params) {
  TriggerDef t;
  t.id = TriggerId(std::move(id));
  t.kind = kind;
  t.default_priority = default_priority;
  t.params = std::move(params);
  automaton_.triggers.push_back(std::move(t));
  return automaton_.triggers.back();
}

AutomatonBuilder& AutomatonBuilder::history(std::string id) {
  automaton_.archives.emplace_back(std::move(id));
  return *this;
}

TriggerEdge& AutomatonBuilder::edge(std::string from, std::string to,
                                    std::vector<std::string> triggers, std::optional<int> priority) {
  TriggerEdge e;
  e.from = StateId(std::move(from));
  e.to = StateId(std::move(to));
  for (auto& t : triggers) e.triggers.emplace_back(std::move(t));
  if (priority) {
    e.priority = *priority;
  } else if (!e.triggers.empty()) {
    const TriggerDef* def = automaton_.find_trigger(e.triggers.front());
    e.priority = def ? def->default_priority : 1;
  }
  e.id = EdgeId(e.from.str() + "->" + e.to.str() + "#" + std::to_string(automaton_.edges.size()));
  automaton_.edges.push_back(std::move(e));
  return automaton_.edges.back();
}

AutomatonBuilder& AutomatonBuilder::initial(std::string id) {
  automaton_.initial = StateId(std::move(id));
  return *this;
}

Automaton AutomatonBuilder::build() const { return automaton_; }

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

bool ValidationReport::has_error(std::string_view code) const {
  return std::any_of(errors.begin(), errors.end(), [&](const auto& i) { return i.code == code; });
}

bool ValidationReport::has_warning(std::string_view code) const {
  return std::any_of(warnings.begin(), warnings.end(),
                     [&](const auto& i) { return i.code == code; });
}

namespace {

std::string where(std::string_view what, const std::string& id, const SourceLocation& loc) {
  std::ostringstream os;
  os << what << ' ' << id;
  if (loc.line > 0) os << " (line " << loc.line << ')';
  return os.str();
}

class Checker {
 public:
  explicit Checker(const Automaton& a) : a_(a) {}

  ValidationReport run() {
    check_ids();
    check_initial();
    for (const auto& s : a_.states) check_state(s);
    for (const auto& t : a_.triggers) check_trigger(t);
    for (const auto& e : a_.edges) check_edge(e);
    check_dead_ends();
    check_ties();
    check_reachability();
    return std::move(report_);
  }

 private:
  void error(std::string code, std::string loc, std::string msg) {
    report_.errors.push_back({std::move(code), std::move(loc), std::move(msg)});
  }
  void warning(std::string code, std::string loc, std::string msg) {
    report_.warnings.push_back({std::move(code), std::move(loc), std::move(msg)});
  }

  void check_ids() {
    std::unordered_set<std::string> seen;
    for (const auto& s : a_.states) {
      if (s.id.empty()) error("EMPTY_ID", where("state", "", s.location), "state id is empty");
      if (!seen.insert(s.id.str()).second)
        error("DUPLICATE_ID", where("state", s.id.str(), s.location), "state declared twice");
    }
    seen.clear();
    for (const auto& t : a_.triggers) {
      if (t.id.empty()) error("EMPTY_ID", where("trigger", "", t.location), "trigger id is empty");
      if (!seen.insert(t.id.str()).second)
        error("DUPLICATE_ID", where("trigger", t.id.str(), t.location), "trigger declared twice");
    }
    seen.clear();
    for (const auto& h : a_.archives)
      if (!seen.insert(h.str()).second)
        error("DUPLICATE_ID", "history " + h.str(), "history declared twice");
  }

  void check_initial() {
    if (!a_.initial) {
      error("MISSING_INITIAL", "automaton " + a_.name, "no initial state declared");
      return;
    }
    if (!a_.find_state(*a_.initial))
      error("UNKNOWN_STATE", "initial", "initial state '" + a_.initial->str() + "' is not declared");
  }

  void check_attachments(const std::vector<AttachmentSpec>& atts, const std::string& loc,
                         bool is_trigger) {
    if (atts.size() > 1)
      error("MULTI_ATTACH", loc, "attached to " + std::to_string(atts.size()) + " histories");
    for (const auto& att : atts) {
      if (!a_.has_archive(att.archive))
        error("UNKNOWN_ARCHIVE", loc, "history '" + att.archive.str() + "' is not declared");
      if (is_trigger && att.mode != AccessMode::Read)
        error("TRIGGER_WRITE", loc, "triggers may only read a history");
      if (!is_trigger && att.mode == AccessMode::Read)
        warning("READ_ONLY_STATE", loc, "state reads its history but its exchanges are not recorded");
    }
  }

  void check_state(const StateNode& s) {
    const auto loc = where("state", s.id.str(), s.location);
    if (s.is_user()) {
      if (!s.is_final) error("USER_NOT_FINAL", loc, "user states are always final");
      if (!s.backend.empty()) error("USER_BACKEND", loc, "user states take no backend attributes");
      if (!s.attachments.empty()) error("USER_ATTACHMENT", loc, "user states take no history");
      return;
    }
    auto resolved = resolve_dialer_config(s);
    for (auto& p : resolved.problems) error("BACKEND_CONFIG", loc, std::move(p));
    check_attachments(s.attachments, loc, false);
  }

  void check_trigger(const TriggerDef& t) {
    const auto loc = where("trigger", t.id.str(), t.location);
    if (t.default_priority < 1)
      error("BAD_PRIORITY", loc, "default priority must be >= 1");
    for (auto& p : check_trigger_config(t)) error("TRIGGER_CONFIG", loc, std::move(p));
    check_attachments(t.attachments, loc, true);
  }

  void check_edge(const TriggerEdge& e) {
    const auto loc = where("edge", e.from.str() + " -> " + e.to.str(), e.location);
    if (!a_.find_state(e.from))
      error("UNKNOWN_STATE", loc, "source '" + e.from.str() + "' is not declared");
    if (!a_.find_state(e.to))
      error("UNKNOWN_STATE", loc, "target '" + e.to.str() + "' is not declared");
    for (const auto& t : e.triggers)
      if (!a_.find_trigger(t))
        error("UNKNOWN_TRIGGER", loc, "trigger '" + t.str() + "' is not declared");
    const int q = static_cast<int>(a_.states.size());
    if (e.priority < 1 || e.priority > q)
      error("BAD_PRIORITY", loc,
            "priority " + std::to_string(e.priority) + " outside 1.." + std::to_string(q));
  }

  void check_dead_ends() {
    for (const auto& s : a_.states) {
      if (s.is_final) continue;
      if (a_.outgoing(s.id).empty())
        error("DEAD_END", where("state", s.id.str(), s.location),
              "non-final state has no outgoing edge");
    }
  }

  void check_ties() {
    for (const auto& s : a_.states) {
      std::map<int, int> counts;
      for (const auto* e : a_.outgoing(s.id)) ++counts[e->priority];
      for (auto [p, n] : counts)
        if (n > 1)
          warning("PRIORITY_TIE", where("state", s.id.str(), s.location),
                  std::to_string(n) + " outgoing edges share priority " + std::to_string(p) +
                      "; ties are broken at random");
    }
  }

  void check_reachability() {
    if (!a_.initial || !a_.find_state(*a_.initial)) return;
    std::unordered_set<StateId> seen{*a_.initial};
    std::vector<StateId> stack{*a_.initial};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto* e : a_.outgoing(cur))
        if (seen.insert(e->to).second) stack.push_back(e->to);
    }
    for (const auto& s : a_.states)
      if (!seen.count(s.id))
        warning("UNREACHABLE", where("state", s.id.str(), s.location),
                "not reachable from the initial state");
  }

  const Automaton& a_;
  ValidationReport report_;
};

}  // namespace

ValidationReport check(const Automaton& automaton) { return Checker(automaton).run(); }

ValidationReport validate(Automaton& automaton) {
  auto report = check(automaton);
  automaton.validated = report.ok();
  return report;
}

// ---------------------------------------------------------------------------
// Transition
// ---------------------------------------------------------------------------

std::optional<StateId> Selection::next() const {
  if (!chosen) return std::nullopt;
  return evaluations[*chosen].edge->to;
}

const TriggerEdge* Selection::chosen_edge() const {
  return chosen ? evaluations[*chosen].edge : nullptr;
}

Selection select_next(const Automaton& automaton, const StateId& current, std::string_view message,
                      const TriggerEvaluator& evaluate, Rng& rng) {
  Selection sel;
  std::unordered_map<TriggerId, bool> cache;
  int best = 0;
  for (const auto* edge : automaton.outgoing(current)) {
    EdgeEvaluation ev;
    ev.edge = edge;
    bool all = true;
    for (const auto& t : edge->triggers) {
      auto it = cache.find(t);
      if (it == cache.end()) it = cache.emplace(t, evaluate(t, current, message)).first;
      ev.outputs.emplace_back(t, it->second);
      all = all && it->second;
    }
    ev.fired = all;
    ev.value = trigger_value(edge->priority, all);
    best = std::max(best, ev.value);
    sel.evaluations.push_back(std::move(ev));
  }
  if (best == 0) return sel;

  std::vector<std::size_t> argmax;
  for (std::size_t i = 0; i < sel.evaluations.size(); ++i)
    if (sel.evaluations[i].value == best) argmax.push_back(i);
  sel.tie_count = argmax.size();
  sel.chosen = argmax.size() == 1 ? argmax.front() : argmax[uniform_index(rng, argmax.size())];
  return sel;
}

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

namespace {

// Longest machine-state run from a machine node to each reachable end
// (next user node, or nullopt for a terminal stop at a final machine state).
class ChainLengths {
 public:
  explicit ChainLengths(const Automaton& a) : a_(a) {}

  using Ends = std::map<std::optional<StateId>, int>;

  // nullopt on a machine-only cycle.
  std::optional<Ends> from(const StateId& id) {
    if (auto it = memo_.find(id); it != memo_.end()) return it->second;
    if (on_stack_.count(id)) return std::nullopt;
    on_stack_.insert(id);

    const StateNode* node = a_.find_state(id);
    Ends ends;
    if (node && node->is_final) ends[std::nullopt] = 1;
    for (const auto* e : a_.outgoing(id)) {
      const StateNode* target = a_.find_state(e->to);
      if (!target) continue;
      if (target->is_user()) {
        auto& slot = ends[target->id];
        slot = std::max(slot, 1);
        continue;
      }
      auto sub = from(target->id);
      if (!sub) return std::nullopt;
      for (const auto& [end, len] : *sub) {
        auto& slot = ends[end];
        slot = std::max(slot, len + 1);
      }
    }
    on_stack_.erase(id);
    memo_[id] = ends;
    return ends;
  }

 private:
  const Automaton& a_;
  std::unordered_set<StateId> on_stack_;
  std::unordered_map<StateId, Ends> memo_;
};

}  // namespace

WorkloadEstimate estimate_workload(const Automaton& automaton,
                                   const std::map<StateKind, double>& per_state_cost) {
  if (!automaton.validated)
    throw Error(ErrorCode::Unvalidated, "estimate_workload requires a validated automaton");

  WorkloadEstimate est;
  ChainLengths chains(automaton);
  auto record = [&](const StateId& from, const std::optional<StateId>& to, int len) {
    auto [it, inserted] = est.per_pair.emplace(ChainKey{from, to}, len);
    if (!inserted) it->second = std::max(it->second, len);
  };

  std::vector<StateId> sources;
  for (const auto& s : automaton.states)
    if (s.is_user()) sources.push_back(s.id);

  bool unbounded = false;
  for (const auto& u : sources) {
    for (const auto* e : automaton.outgoing(u)) {
      const StateNode* target = automaton.find_state(e->to);
      if (!target) continue;
      if (target->is_user()) {
        record(u, target->id, 0);
        continue;
      }
      auto ends = chains.from(target->id);
      if (!ends) {
        unbounded = true;
        break;
      }
      for (const auto& [end, len] : *ends) record(u, end, len);
    }
    if (unbounded) break;
  }

  if (!unbounded && automaton.initial) {
    const StateNode* init = automaton.find_state(*automaton.initial);
    if (init && !init->is_user()) {
      auto ends = chains.from(init->id);
      if (!ends) {
        unbounded = true;
      } else {
        for (const auto& [end, len] : *ends) record(init->id, end, len);
      }
    }
  }

  if (unbounded) {
    est.per_pair.clear();
    return est;
  }

  int longest = 0;
  for (const auto& [key, len] : est.per_pair) longest = std::max(longest, len);
  est.max_machine_chain = longest;

  if (!per_state_cost.empty()) {
    double total = 0.0;
    int machines = 0;
    for (const auto& s : automaton.states) {
      if (s.is_user()) continue;
      ++machines;
      if (auto it = per_state_cost.find(s.kind); it != per_state_cost.end()) total += it->second;
    }
    const double average = machines > 0 ? total / machines : 0.0;
    est.estimated_latency = average * longest;
  }
  return est;
}

}  // namespace mfa
