// One line per acceptance criterion; exit status is the number of failures.

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mfa/dsl.hpp"
#include "mfa/error.hpp"
#include "mfa/eval.hpp"
#include "mfa/history.hpp"
#include "mfa/runner.hpp"
#include "mfa/service.hpp"
#include "support/support.hpp"

using namespace mfa;
namespace fs = std::filesystem;

namespace {

struct Failure {
  std::string why;
};

void expect(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

std::string join(const std::vector<StateId>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s.str();
  return out;
}

ScriptOptions scripted(const fs::path& sink = ".") { return {test::case_options(sink), false}; }

// ---------------------------------------------------------------------------

void trigger_semantics() {
  for (int p = 0; p <= 10; ++p)
    for (int f = 0; f <= 1; ++f) {
      const int expected = std::min(p * f, p);
      expect(trigger_value(p, f == 1) == expected,
             "p=" + std::to_string(p) + " f=" + std::to_string(f) + " gave " + std::to_string(trigger_value(p, f == 1)));
    }
}

void arps_golden() {
  auto events = run_scripted(test::load_case("arps.mfa"), test::case_script("arps_user.txt"), 0, scripted());
  const auto visits = visited_states(events);
  const std::vector<StateId> prefix = {StateId("q0"), StateId("l1"), StateId("q0"),
                                       StateId("l2"), StateId("q3"), StateId("l4")};
  expect(visits.size() == prefix.size() + 1 && std::equal(prefix.begin(), prefix.end(), visits.begin()) &&
             visits.back() == StateId("q0"),
         "visited " + join(visits));
  const std::vector<std::string> table = {
      "Hello! How are you today?",
      "I understand that you are frustrated with the long wait time for your sandwich. Can you tell me more about "
      "this issue?",
      "We will suggest implementing a pre-made sandwich option to reduce wait time for customers in a hurry."};
  expect(displayed(events) == table, "displayed messages differ");
}

void baseline_contrast() {
  auto events = run_scripted(test::load_case("arps_baseline.mfa"), test::case_script("baseline_user.txt"), 0, scripted());
  const auto visits = visited_states(events);
  for (const auto& s : visits) expect(s != StateId("l2") && s != StateId("l4"), "visited " + join(visits));
  expect(join(visits) == "q0,l1,q0,l1,q0", "visited " + join(visits));
  expect(displayed(events).size() == 2, "expected two answers");
}

void ethics_display() {
  auto events = run_scripted(test::load_case("ethics.mfa"), test::case_script("ethics_user.txt"), 0, scripted());
  // For each user turn, which state's text reached the user.
  std::vector<std::string> shown_from;
  for (const auto& e : events)
    if (e.kind == EventKind::Display) shown_from.push_back(e.state->str());
  expect(shown_from == std::vector<std::string>{"l2", "l2", "l1", "l2"}, "display sources differ");
  expect(displayed(events) == std::vector<std::string>{"Tunisians eat different meals.",
                                                       "The man is in the main room, his wife is in another room.",
                                                       "The woman is in the main room, her husband is in the garage.",
                                                       "The champion's nationality could be from any country."},
         "displayed messages differ");
}

void train_booking() {
  for (const char* script : {"trains_user.txt", "trains_retry_user.txt"}) {
    test::TempDir sink;
    auto events = run_scripted(test::load_case("trains.mfa"), test::case_script(script), 0, scripted(sink.path()));
    expect(events.back().data["reason"] == "final", std::string(script) + ": did not reach the final state");
    auto records = read_sink(sink.path() / "bookings.csv");
    expect(records.size() == 3, std::string(script) + ": " + std::to_string(records.size()) + " records");
    expect(records[0].field == "departure_city" && records[0].value == "Paris", "departure record");
    expect(records[1].field == "destination" && records[1].value == "Lyon", "destination record");
    expect(records[2].field == "departure_time" && records[2].value == "09:00", "time record");
  }
  // "somewhere sunny" is not a city: the dialogue loops on q4 before accepting "to Lyon".
  test::TempDir sink;
  auto events =
      run_scripted(test::load_case("trains.mfa"), test::case_script("trains_retry_user.txt"), 0, scripted(sink.path()));
  const auto v = join(visited_states(events));
  expect(v.find("q4,l3,q4,w5") != std::string::npos, "no destination retry in " + v);
}

void brute_force_equivalence() {
  std::mt19937_64 gen(20240601);
  for (int round = 0; round < 500; ++round) {
    auto rc = test::random_case(gen);
    const std::uint64_t seed = gen();
    SessionOptions o;
    o.factory = std::make_shared<test::TableFactory>(rc.table);
    o.step_budget = 16;
    auto events = run_scripted(std::make_shared<const Automaton>(rc.automaton), rc.inputs, seed, {o, false});
    auto reference = test::reference_visits(rc.automaton, *rc.table, rc.inputs, seed, 16);
    expect(visited_states(events) == reference, "case " + std::to_string(round) + ": " + join(visited_states(events)) +
                                                    " vs " + join(reference));
  }
}

void tie_breaking() {
  AutomatonBuilder b("tie");
  b.user("q0");
  b.dialer("a", {{"template", "a"}});
  b.dialer("b", {{"template", "b"}});
  b.edge("q0", "a");
  b.edge("q0", "b");
  b.edge("a", "q0");
  b.edge("b", "q0");
  b.initial("q0");
  auto a = b.build();
  expect(validate(a).ok(), "tie automaton invalid");
  auto shared = std::make_shared<const Automaton>(std::move(a));
  int to_a = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto events = run_scripted(shared, {"go"}, seed);
    to_a += visited_states(events).at(1) == StateId("a");
  }
  expect(to_a >= 450 && to_a <= 550, "a chosen " + std::to_string(to_a) + " times");
}

void workload() {
  auto arps = test::load_case("arps.mfa");
  auto trains = test::load_case("trains.mfa");
  auto w1 = estimate_workload(*arps);
  auto w3 = estimate_workload(*trains);
  expect(w1.max_machine_chain == 1 && test::brute_force_max_chain(*arps) == 1, "arps chain");
  expect(w3.max_machine_chain == 2 && test::brute_force_max_chain(*trains) == 2, "trains chain");

  AutomatonBuilder b("loop");
  b.user("q0");
  b.dialer("x", {{"template", "x"}});
  b.dialer("y", {{"template", "y"}});
  b.edge("q0", "x");
  b.edge("x", "y");
  b.edge("y", "x");
  b.initial("q0");
  auto loop = b.build();
  expect(validate(loop).ok(), "loop automaton invalid");
  expect(estimate_workload(loop).unbounded() && !test::brute_force_max_chain(loop), "machine cycle not unbounded");
}

void history_semantics() {
  std::mt19937_64 gen(77);
  for (int round = 0; round < 1000; ++round) {
    HistoryGraph g;
    Archive& archive = g.add_archive(ArchiveId("h"));
    const int observers = 1 + static_cast<int>(gen() % 4);
    std::vector<HistoryAttachment*> atts;
    for (int i = 0; i < observers; ++i)
      atts.push_back(&g.attach(StateId("s" + std::to_string(i)), ArchiveId("h"), AccessMode::ReadWrite));
    atts.push_back(&g.attach(TriggerId("t"), ArchiveId("h"), AccessMode::Read));

    int mutations = 0;
    std::vector<ExchangePair> snapshot;
    std::vector<ExchangePair> snapshot_copy;
    const int ops = static_cast<int>(gen() % 20);
    for (int k = 0; k < ops; ++k) {
      if (archive.size() > 0 && gen() % 3 == 0) {
        archive.remove(archive.pairs()[gen() % archive.size()].seq);
      } else {
        atts[gen() % observers]->add_pair("in" + std::to_string(k), "out" + std::to_string(k));
      }
      ++mutations;
      if (k == ops / 2) {
        snapshot = atts.back()->read_pairs();
        snapshot_copy = snapshot;
      }
    }
    for (auto* a : atts)
      expect(a->notifications() == static_cast<std::uint64_t>(mutations),
             "observer saw " + std::to_string(a->notifications()) + " of " + std::to_string(mutations));
    expect(snapshot == snapshot_copy, "snapshot changed");
    try {
      g.attach(TriggerId("w"), ArchiveId("h"), AccessMode::Write);
      throw Failure{"trigger write attachment accepted"};
    } catch (const Error& e) {
      expect(e.code() == ErrorCode::TriggerWrite, "wrong error for trigger write");
    }
  }
}

void dsl_round_trip() {
  for (const char* f : {"arps.mfa", "arps_baseline.mfa", "trains.mfa", "nvc.mfa", "ethics.mfa"}) {
    auto a = dsl::load_file(test::cases_dir() / f);
    auto again = dsl::parse(dsl::serialize(a));
    expect(again.ok() && structurally_equal(a, *again.automaton), std::string(f) + " does not round-trip");
  }
  std::mt19937_64 gen(4242);
  for (int i = 0; i < 200; ++i) {
    auto a = test::random_definition(gen);
    auto again = dsl::parse(dsl::serialize(a));
    expect(again.ok() && structurally_equal(a, *again.automaton), "generated definition " + std::to_string(i));
  }

  // Delete one token per mutation and check the first error stays within a line.
  const std::string text = read_text_file(test::cases_dir() / "trains.mfa");
  int detected = 0, total = 0;
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& l = lines[ln];
    if (l.find_first_not_of(' ') == std::string::npos || l[l.find_first_not_of(' ')] == '#') continue;
    for (const std::string junk : {"= ", "-> ", "{ ", "42 "}) {
      auto copy = lines;
      const auto at = l.find_first_not_of(' ');
      copy[ln].insert(at, junk);
      std::string mutated;
      for (const auto& c : copy) mutated += c + "\n";
      auto r = dsl::parse(mutated);
      ++total;
      if (r.ok()) continue;
      ++detected;
      const int line = static_cast<int>(ln) + 1;
      expect(std::abs(r.errors.front().line - line) <= 1,
             "mutation on line " + std::to_string(line) + " reported at " + std::to_string(r.errors.front().line));
    }
  }
  expect(detected == total, std::to_string(total - detected) + " mutations went unnoticed");
}

void eval_harness() {
  using namespace eval;
  const auto data = load_dataset(test::cases_dir() / "datasets" / "anger.csv");
  const auto pool = load_dataset(test::cases_dir() / "datasets" / "distractors.csv", Source::Distractor);
  expect(data.size() == 100, "dataset size");
  std::map<std::string, int> truth;
  for (const auto& s : data) truth[s.text] = s.label;

  EvalOptions o;
  o.trigger_id = "Anger";
  o.model = "oracle";
  auto oracle = evaluate([&](std::string_view t) { return truth.at(std::string(t)) == 1; }, data, o);
  expect(oracle.accuracy == 100.0, "oracle accuracy " + std::to_string(oracle.accuracy));

  std::set<std::string> flipped;
  for (std::size_t i = 0; flipped.size() < 10; i += 9) flipped.insert(data[i].text);
  o.model = "ten-errors";
  auto ten = evaluate(
      [&](std::string_view t) { return (truth.at(std::string(t)) == 1) != (flipped.count(std::string(t)) > 0); }, data, o);
  expect(ten.accuracy == 90.0, "ten-error accuracy " + std::to_string(ten.accuracy));

  const std::string grid = render_table({oracle, ten});
  expect(grid.rfind("Trigger | % of random sentences | Nb. of sentences | % good eval.", 0) == 0, "grid header");
  expect(grid.find("Avg. time (s)") != std::string::npos, "grid latency column");
  expect(grid.find("90.00%") != std::string::npos && grid.find("100.00%") != std::string::npos, "grid accuracies");

  const std::map<int, std::size_t> expected = {{0, 0}, {30, 30}, {60, 60}};
  for (const auto& [pct, d] : expected) {
    auto mixed = augment(data, pool, {static_cast<double>(pct), 1, 100});
    const auto n = static_cast<std::size_t>(
        std::count_if(mixed.begin(), mixed.end(), [](auto& s) { return s.source == Source::Distractor; }));
    expect(mixed.size() == 100 && n == d, std::to_string(pct) + "%: " + std::to_string(n) + " distractors");
  }
}

void replay_determinism() {
  test::TempDir dir;
  auto script = test::case_script("nvc_user.txt");
  script.emplace_back(kQuitCommand);
  {
    std::ofstream out(dir.path() / "script.txt");
    for (const auto& l : script) out << l << '\n';
  }

  const std::string cmd = std::string(MFA_CLI_PATH) + " run " + (test::cases_dir() / "nvc.mfa").string() +
                          " --seed 99 --script " + (dir.path() / "script.txt").string() + " --transcript " +
                          (dir.path() / "cli.jsonl").string() + " --sink-dir " + dir.path().string() + " > " +
                          (dir.path() / "stdout.txt").string();
  expect(std::system(cmd.c_str()) == 0, "CLI run failed");
  const std::string cli = read_text_file(dir.path() / "cli.jsonl");

  ServiceOptions so;
  so.base_dir = test::cases_dir();
  so.sink_dir = dir.path();
  Service service(so);
  const int port = service.start();
  auto up = service.upload(read_text_file(test::cases_dir() / "nvc.mfa"));
  expect(up.status == 201, "upload failed");
  httplib::Client c("127.0.0.1", port);
  auto created = c.Post("/sessions", nlohmann::json{{"automaton_id", up.body["automaton_id"]}, {"seed", 99}}.dump(),
                        "application/json");
  expect(created && created->status == 201, "session not created");
  const std::string sid = nlohmann::json::parse(created->body)["session_id"];
  for (const auto& line : script) {
    auto r = c.Post("/sessions/" + sid + "/message", nlohmann::json{{"text", line}}.dump(), "application/json");
    expect(r && r->status == 200, "message rejected");
  }
  auto t = c.Get("/sessions/" + sid + "/transcript");
  service.stop();
  expect(t && t->body == cli, "service transcript differs from the CLI transcript");
  expect(!cli.empty(), "empty transcript");
}

struct Criterion {
  const char* name;
  double limit_seconds;
  std::function<void()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"trigger semantics", 1, trigger_semantics},
      {"complaint golden transcript", 1, arps_golden},
      {"baseline contrast", 1, baseline_contrast},
      {"bias guard display", 1, ethics_display},
      {"train booking", 1, train_booking},
      {"brute-force equivalence (500 automata)", 30, brute_force_equivalence},
      {"tie-breaking (1000 seeded runs)", 5, tie_breaking},
      {"workload estimator", 1, workload},
      {"history semantics (1000 sequences)", 10, history_semantics},
      {"definition round trip and error locality", 10, dsl_round_trip},
      {"evaluation harness", 5, eval_harness},
      {"replay determinism (CLI vs service)", 5, replay_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string why;
    try {
      c.run();
    } catch (const Failure& f) {
      why = f.why;
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (why.empty() && secs > c.limit_seconds) why = "over the time limit";
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.3fs / %.0fs", secs, c.limit_seconds);
    std::cout << (why.empty() ? "PASS" : "FAIL") << "  " << c.name << "  (" << timing << ")";
    if (!why.empty()) std::cout << "  " << why;
    std::cout << '\n';
    failures += !why.empty();
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed\n";
  return failures;
}
