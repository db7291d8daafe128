#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mfa/dsl.hpp"
#include "mfa/triggers.hpp"

namespace mfa::test {

namespace fs = std::filesystem;

fs::path cases_dir() { return fs::path(MFA_CASES_DIR); }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("mfa-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::shared_ptr<const Automaton> load_case(const std::string& file) {
  auto a = dsl::load_file(cases_dir() / file);
  auto report = validate(a);
  if (!report.ok()) throw std::runtime_error(file + " does not validate: " + report.errors.front().message);
  return std::make_shared<const Automaton>(std::move(a));
}

std::vector<std::string> case_script(const std::string& file) {
  return load_user_script(cases_dir() / "scripts" / file);
}

SessionOptions case_options(const fs::path& sink_dir) {
  SessionOptions o;
  o.context.base_dir = cases_dir();
  o.context.sink_dir = sink_dir;
  return o;
}

// ---------------------------------------------------------------------------

bool TriggerTable::lookup(const std::string& trigger, const std::string& state, const std::string& message) const {
  auto it = entries.find({trigger, state, message});
  return it != entries.end() && it->second;
}

std::string machine_output(const StateId& id) { return "out:" + id.str(); }

namespace {

class FixedBackend final : public Backend {
 public:
  explicit FixedBackend(std::string out) : out_(std::move(out)) {}

 protected:
  std::string do_predict(const std::string&) override { return out_; }

 private:
  std::string out_;
};

class TableTrigger final : public Trigger {
 public:
  TableTrigger(TriggerId id, int p, std::shared_ptr<const TriggerTable> table)
      : Trigger(std::move(id), p), table_(std::move(table)) {}
  bool fire(const StateId& state, std::string_view message) override {
    return table_->lookup(id().str(), state.str(), std::string(message));
  }

 private:
  std::shared_ptr<const TriggerTable> table_;
};

int pick(std::mt19937_64& gen, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(gen);
}

bool coin(std::mt19937_64& gen, double p) { return std::bernoulli_distribution(p)(gen); }

}  // namespace

std::unique_ptr<Backend> TableFactory::backend(const StateNode& node, const BackendContext&) const {
  return std::make_unique<FixedBackend>(machine_output(node.id));
}

std::unique_ptr<Trigger> TableFactory::trigger(const TriggerDef& def, const BackendContext&) const {
  return std::make_unique<TableTrigger>(def.id, def.default_priority, table_);
}

RandomCase random_case(std::mt19937_64& gen, int max_states) {
  const std::vector<std::string> alphabet = {"a", "b", "c"};
  while (true) {
    const int n = pick(gen, 2, max_states);
    const int k = pick(gen, 1, 3);
    AutomatonBuilder b("random");
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      const std::string id = "s" + std::to_string(i);
      ids.push_back(id);
      const int roll = pick(gen, 0, 9);
      if (roll < 4) {
        b.user(id);
      } else if (roll < 9) {
        b.dialer(id, {{"template", "out"}}).is_final = coin(gen, 0.25);
      } else {
        b.writer(id, {{"sink", "unused.csv"}}).is_final = coin(gen, 0.25);
      }
    }
    for (int t = 0; t < k; ++t) b.trigger("t" + std::to_string(t), TriggerKind::Always);

    for (const auto& from : ids) {
      const int out = pick(gen, 0, 3);
      for (int e = 0; e < out; ++e) {
        std::vector<std::string> ts;
        const int nt = pick(gen, 0, 2);
        for (int j = 0; j < nt; ++j) {
          std::string t = "t" + std::to_string(pick(gen, 0, k - 1));
          if (std::find(ts.begin(), ts.end(), t) == ts.end()) ts.push_back(t);
        }
        // Small priorities make ties common.
        b.edge(from, ids[pick(gen, 0, n - 1)], ts, pick(gen, 1, std::min(n, 3)));
      }
    }
    b.initial(ids[pick(gen, 0, n - 1)]);

    Automaton a = b.build();
    if (!validate(a).ok()) continue;

    auto table = std::make_shared<TriggerTable>();
    std::vector<std::string> messages = alphabet;
    for (const auto& s : a.states) messages.push_back(machine_output(s.id));
    for (int t = 0; t < k; ++t)
      for (const auto& s : ids)
        for (const auto& m : messages) table->entries[{"t" + std::to_string(t), s, m}] = coin(gen, 0.5);

    std::vector<std::string> inputs;
    const int turns = pick(gen, 0, 8);
    for (int i = 0; i < turns; ++i) inputs.push_back(alphabet[pick(gen, 0, 2)]);
    return {std::move(a), std::move(table), std::move(inputs)};
  }
}

namespace {

std::string random_identifier(std::mt19937_64& gen, std::set<std::string>& used) {
  static const std::set<std::string> reserved = {"automaton", "state", "trigger", "history", "edge",
                                                 "initial",   "on",    "priority", "final"};
  static const std::string first = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
  static const std::string rest = first + "0123456789";
  while (true) {
    std::string id(1, first[pick(gen, 0, static_cast<int>(first.size()) - 1)]);
    const int len = pick(gen, 0, 6);
    for (int i = 0; i < len; ++i) id.push_back(rest[pick(gen, 0, static_cast<int>(rest.size()) - 1)]);
    if (!reserved.count(id) && used.insert(id).second) return id;
  }
}

std::string random_text(std::mt19937_64& gen) {
  static const std::vector<std::string> pieces = {
      "hello", " ", "\"quoted\"", "back\\slash", "\n", "\t", "é", "→", "🙂", "{msg}", "#not a comment",
      "a=b", "}", "{", "->", ",", "1.5", "-3", "", "It’s"};
  std::string out;
  const int n = pick(gen, 0, 5);
  for (int i = 0; i < n; ++i) out += pieces[pick(gen, 0, static_cast<int>(pieces.size()) - 1)];
  return out;
}

}  // namespace

Automaton random_definition(std::mt19937_64& gen) {
  static const std::vector<std::string> state_keys = {"prompt", "prompt_file", "script_file", "template",
                                                      "endpoint", "model", "temperature", "api_key_env",
                                                      "timeout", "sink", "field", "pattern"};
  static const std::vector<std::string> trigger_keys = {"prompt", "prompt_file", "keywords", "case", "pattern",
                                                        "endpoint", "model", "temperature", "api_key_env", "timeout"};
  Automaton a;
  a.name = random_text(gen);
  std::set<std::string> state_ids, trigger_ids, archive_ids;

  const int archives = pick(gen, 0, 3);
  for (int i = 0; i < archives; ++i) a.archives.emplace_back(random_identifier(gen, archive_ids));
  auto attachments = [&](std::vector<AttachmentSpec>& out) {
    const int n = a.archives.empty() ? 0 : pick(gen, 0, 2);
    for (int i = 0; i < n; ++i)
      out.push_back({a.archives[pick(gen, 0, static_cast<int>(a.archives.size()) - 1)],
                     static_cast<AccessMode>(pick(gen, 0, 2))});
  };

  const int n = pick(gen, 1, 7);
  for (int i = 0; i < n; ++i) {
    StateNode s;
    s.id = StateId(random_identifier(gen, state_ids));
    s.kind = static_cast<StateKind>(pick(gen, 0, 2));
    s.display = static_cast<DisplayPolicy>(pick(gen, 0, 2));
    s.is_final = s.is_user() || coin(gen, 0.3);
    const int params = pick(gen, 0, 3);
    for (int j = 0; j < params; ++j)
      s.backend[state_keys[pick(gen, 0, static_cast<int>(state_keys.size()) - 1)]] = random_text(gen);
    attachments(s.attachments);
    a.states.push_back(std::move(s));
  }

  const int k = pick(gen, 0, 4);
  for (int i = 0; i < k; ++i) {
    TriggerDef t;
    t.id = TriggerId(random_identifier(gen, trigger_ids));
    t.kind = static_cast<TriggerKind>(pick(gen, 0, 3));
    t.default_priority = pick(gen, -1, 9);
    const int params = pick(gen, 0, 3);
    for (int j = 0; j < params; ++j)
      t.params[trigger_keys[pick(gen, 0, static_cast<int>(trigger_keys.size()) - 1)]] = random_text(gen);
    attachments(t.attachments);
    a.triggers.push_back(std::move(t));
  }

  const int m = pick(gen, 0, 10);
  for (int i = 0; i < m; ++i) {
    TriggerEdge e;
    e.from = a.states[pick(gen, 0, n - 1)].id;
    e.to = a.states[pick(gen, 0, n - 1)].id;
    const int nt = a.triggers.empty() ? 0 : pick(gen, 0, 3);
    for (int j = 0; j < nt; ++j) e.triggers.push_back(a.triggers[pick(gen, 0, k - 1)].id);
    e.priority = pick(gen, 0, 9);
    e.id = EdgeId("e" + std::to_string(i));
    a.edges.push_back(std::move(e));
  }
  if (coin(gen, 0.8)) a.initial = a.states[pick(gen, 0, n - 1)].id;
  return a;
}

// ---------------------------------------------------------------------------

namespace {

// Rejection sampling written out again rather than borrowed from the engine.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t max = std::mt19937_64::max();
  const std::uint64_t limit = max - (max % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

}  // namespace

std::vector<StateId> reference_visits(const Automaton& a, const TriggerTable& table,
                                      const std::vector<std::string>& inputs, std::uint64_t seed,
                                      std::size_t step_budget) {
  std::mt19937_64 rng(seed);
  std::string c = a.initial->str();
  std::string s;
  std::size_t next_input = 0;
  std::size_t machine_steps = 0;
  std::vector<StateId> visits = {StateId(c)};

  auto kind_of = [&](const std::string& id) {
    for (const auto& st : a.states)
      if (st.id.str() == id) return st.kind;
    throw std::logic_error("undeclared state " + id);
  };

  // while continue the chat
  while (true) {
    if (kind_of(c) == StateKind::User) {
      if (next_input == inputs.size()) break;  // no more input: the user leaves
      s = inputs[next_input++];               // s <- get input from the user
      machine_steps = 0;
    } else {
      if (++machine_steps > step_budget) break;
      s = machine_output(StateId(c));  // r <- output from c; the runner then treats r as s
    }

    // T <- triggers adjacent to c returning 1
    std::vector<const TriggerEdge*> T;
    for (const auto& e : a.edges) {
      if (e.from.str() != c) continue;
      bool all = true;
      for (const auto& t : e.triggers) all = all && table.lookup(t.str(), c, s);
      if (all) T.push_back(&e);
    }
    if (T.empty()) break;

    // c <- endpoint of an edge in T with maximum priority
    int best = 0;
    for (const auto* e : T) best = std::max(best, e->priority);
    std::vector<const TriggerEdge*> top;
    for (const auto* e : T)
      if (e->priority == best) top.push_back(e);
    const TriggerEdge* chosen = top.size() == 1 ? top[0] : top[draw_index(rng, top.size())];
    c = chosen->to.str();
    visits.emplace_back(c);
  }
  return visits;
}

namespace {

struct Enumerator {
  const Automaton& a;
  bool cycle = false;
  int best = 0;
  std::vector<std::string> path;

  [[nodiscard]] const StateNode& node(const StateId& id) const { return *a.find_state(id); }

  void walk(const StateId& id) {
    if (std::find(path.begin(), path.end(), id.str()) != path.end()) {
      cycle = true;
      return;
    }
    path.push_back(id.str());
    best = std::max(best, static_cast<int>(path.size()));
    for (const auto& e : a.edges)
      if (e.from == id && !node(e.to).is_user()) walk(e.to);
    path.pop_back();
  }
};

}  // namespace

std::optional<int> brute_force_max_chain(const Automaton& a) {
  Enumerator en{a};
  std::vector<StateId> sources;
  for (const auto& s : a.states)
    if (s.is_user())
      for (const auto& e : a.edges)
        if (e.from == s.id && !en.node(e.to).is_user()) sources.push_back(e.to);
  if (a.initial && !en.node(*a.initial).is_user()) sources.push_back(*a.initial);
  for (const auto& src : sources) en.walk(src);
  if (en.cycle) return std::nullopt;
  return en.best;
}

// ---------------------------------------------------------------------------

void MockTransport::push(int status, std::string body) {
  std::lock_guard lock(mutex_);
  queue_.push_back(HttpResponse{status, std::move(body)});
}

void MockTransport::push_failure(std::string what) {
  std::lock_guard lock(mutex_);
  queue_.push_back(std::nullopt);
  failures_.push_back(std::move(what));
}

void MockTransport::set_handler(Handler h) {
  std::lock_guard lock(mutex_);
  handler_ = std::move(h);
}

HttpResponse MockTransport::post(const HttpRequest& request) {
  Handler handler;
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (!queue_.empty()) {
      auto next = std::move(queue_.front());
      queue_.pop_front();
      if (next) return *next;
      std::string what = std::move(failures_.front());
      failures_.pop_front();
      throw TransportFailure(what);
    }
    handler = handler_;
  }
  if (handler) return handler(request);
  throw TransportFailure("mock transport has no response queued");
}

std::vector<HttpRequest> MockTransport::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::string completion_body(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

}  // namespace mfa::test
