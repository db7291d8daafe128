// mfa: command-line front end (run, validate, estimate, fmt, eval-trigger, serve).

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "mfa/automaton.hpp"
#include "mfa/dsl.hpp"
#include "mfa/eval.hpp"
#include "mfa/runner.hpp"
#include "mfa/service.hpp"
#include "mfa/triggers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<const mfa::Automaton> load_validated(const fs::path& file) {
  auto a = mfa::dsl::load_file(file);
  auto report = mfa::validate(a);
  for (const auto& w : report.warnings) std::cerr << "warning " << w.code << " " << w.location << ": " << w.message << '\n';
  if (!report.ok()) {
    for (const auto& e : report.errors) std::cerr << "error " << e.code << " " << e.location << ": " << e.message << '\n';
    throw mfa::Error(mfa::ErrorCode::Unvalidated, file.string() + " has validation errors");
  }
  return std::make_shared<const mfa::Automaton>(std::move(a));
}

std::shared_ptr<const mfa::ChatClient> chat_client() {
  return std::make_shared<const mfa::ChatClient>(mfa::make_http_transport());
}

struct RunArgs {
  std::string file;
  std::uint64_t seed = 0;
  std::string script;
  std::string transcript;
  std::string sink_dir = ".";
  std::size_t budget = 64;
  bool require_quit = false;
};

int cmd_run(const RunArgs& args) {
  auto automaton = load_validated(args.file);
  mfa::SessionOptions so;
  so.step_budget = args.budget;
  so.context.base_dir = fs::path(args.file).parent_path();
  so.context.sink_dir = args.sink_dir;
  so.context.chat = chat_client();

  std::vector<mfa::Event> transcript;
  if (!args.script.empty()) {
    mfa::ScriptOptions opts{so, args.require_quit};
    transcript = mfa::run_scripted(automaton, mfa::load_user_script(args.script), args.seed, opts);
    for (const auto& line : mfa::displayed(transcript)) std::cout << line << '\n';
  } else {
    auto session = mfa::Session::start(automaton, args.seed, so);
    session->set_listener([](const mfa::Event& e) {
      if (e.kind == mfa::EventKind::Display) std::cout << e.data["text"].get<std::string>() << '\n' << std::flush;
    });
    std::string line;
    while (!session->over()) {
      if (!session->awaiting_user()) {
        session->step(std::nullopt);
        continue;
      }
      std::cout << "> " << std::flush;
      if (!std::getline(std::cin, line)) {
        session->end("quit");
        break;
      }
      session->step(line);
    }
    transcript = session->transcript();
  }

  if (!args.transcript.empty()) {
    std::ofstream out(args.transcript, std::ios::binary);
    out << mfa::to_jsonl(transcript);
    if (!out) throw mfa::Error(mfa::ErrorCode::Io, "cannot write " + args.transcript);
  }
  const auto& last = transcript.back();
  if (last.kind == mfa::EventKind::Terminated && last.data.contains("code")) {
    std::cerr << "session failed: " << last.data.value("message", "") << '\n';
    return 1;
  }
  return 0;
}

int cmd_validate(const std::string& file, bool as_json) {
  auto parsed = mfa::dsl::parse(mfa::read_text_file(file));
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors) std::cerr << file << ':' << e.message() << '\n';
    return 1;
  }
  auto report = mfa::validate(*parsed.automaton);
  if (as_json) {
    auto issues = [](const std::vector<mfa::ValidationIssue>& v) {
      json out = json::array();
      for (const auto& i : v) out.push_back({{"code", i.code}, {"location", i.location}, {"message", i.message}});
      return out;
    };
    std::cout << json{{"errors", issues(report.errors)}, {"warnings", issues(report.warnings)}}.dump(2) << '\n';
  } else {
    for (const auto& e : report.errors) std::cout << "error " << e.code << " " << e.location << ": " << e.message << '\n';
    for (const auto& w : report.warnings) std::cout << "warning " << w.code << " " << w.location << ": " << w.message << '\n';
    std::cout << report.errors.size() << " error(s), " << report.warnings.size() << " warning(s)\n";
  }
  return report.ok() ? 0 : 1;
}

int cmd_estimate(const std::string& file, double cost_dialer, double cost_writer) {
  auto automaton = load_validated(file);
  std::map<mfa::StateKind, double> costs;
  if (cost_dialer > 0) costs[mfa::StateKind::Dialer] = cost_dialer;
  if (cost_writer > 0) costs[mfa::StateKind::Writer] = cost_writer;
  auto est = mfa::estimate_workload(*automaton, costs);

  if (est.unbounded()) {
    std::cout << "max_machine_chain: unbounded (machine-only cycle)\n";
    return 0;
  }
  std::cout << "max_machine_chain: " << *est.max_machine_chain << '\n';
  for (const auto& [key, len] : est.per_pair)
    std::cout << "  " << key.from << " -> " << (key.to ? key.to->str() : "(end)") << ": " << len << '\n';
  if (est.estimated_latency)
    std::cout << "estimated_latency: " << std::fixed << std::setprecision(2) << *est.estimated_latency << " s\n";
  return 0;
}

int cmd_fmt(const std::string& file) {
  std::cout << mfa::dsl::serialize(mfa::dsl::load_file(file));
  return 0;
}

struct EvalArgs {
  std::string trigger;
  std::string defs;
  std::string dataset;
  std::string distractors;
  double pct = 0;
  std::uint64_t seed = 0;
  std::size_t total = 0;
  std::string out;
  std::string model;
  unsigned workers = 1;
};

int cmd_eval(const EvalArgs& args) {
  auto automaton = mfa::dsl::load_file(args.defs);
  const auto* def = automaton.find_trigger(mfa::TriggerId(args.trigger));
  if (!def) throw mfa::Error(mfa::ErrorCode::TriggerConfig, "no trigger " + args.trigger + " in " + args.defs);

  mfa::BackendContext ctx;
  ctx.base_dir = fs::path(args.defs).parent_path();
  ctx.chat = chat_client();
  auto trigger = mfa::make_trigger(*def, ctx);

  auto data = mfa::eval::load_dataset(args.dataset);
  if (!args.distractors.empty()) {
    mfa::eval::AugmentOptions aug{args.pct, args.seed, std::nullopt};
    if (args.total) aug.total = args.total;
    data = mfa::eval::augment(data, mfa::eval::load_dataset(args.distractors, mfa::eval::Source::Distractor), aug);
  }

  mfa::eval::EvalOptions opts;
  opts.model = args.model.empty() ? std::string(mfa::to_string(def->kind)) : args.model;
  opts.distractor_pct = args.distractors.empty() ? 0.0 : args.pct;
  opts.workers = args.workers;
  auto report = mfa::eval::evaluate(*trigger, data, opts);

  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << mfa::eval::render_table({report});
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    out << mfa::eval::to_json(report).dump(2) << '\n';
    if (!out) throw mfa::Error(mfa::ErrorCode::Io, "cannot write " + args.out);
  }
  return 0;
}

mfa::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string defs;
  std::string sink_dir = ".";
  std::string token_env;
};

int cmd_serve(const ServeArgs& args) {
  mfa::ServiceOptions opts;
  opts.sink_dir = args.sink_dir;
  opts.chat = chat_client();
  if (!args.defs.empty()) opts.base_dir = args.defs;
  if (!args.token_env.empty()) {
    const char* token = std::getenv(args.token_env.c_str());
    if (!token || !*token) throw mfa::Error(mfa::ErrorCode::Io, "environment variable " + args.token_env + " is unset");
    opts.bearer_token = token;
  }

  mfa::Service service(opts);
  if (!args.defs.empty()) std::cerr << "loaded " << service.load_directory(args.defs) << " definition(s)\n";
  const int port = service.start(args.host, args.port);
  std::cerr << "listening on http://" << args.host << ':' << port << '\n';

  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.wait();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-LLM finite automaton engine"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a dialogue (interactive, or from a user script)");
  run_cmd->add_option("file", run.file, "Definition file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Tie-break seed");
  run_cmd->add_option("--script", run.script, "User inputs, one per line")->check(CLI::ExistingFile);
  run_cmd->add_option("--transcript", run.transcript, "Write the event transcript (JSON lines)");
  run_cmd->add_option("--sink-dir", run.sink_dir, "Directory for relative writer sinks");
  run_cmd->add_option("--budget", run.budget, "Machine states allowed per user turn");
  run_cmd->add_flag("--require-quit", run.require_quit, "Fail if the script ends before /quit");

  std::string validate_file;
  bool validate_json = false;
  auto* validate_cmd = app.add_subcommand("validate", "Check a definition");
  validate_cmd->add_option("file", validate_file)->required()->check(CLI::ExistingFile);
  validate_cmd->add_flag("--json", validate_json);

  std::string estimate_file;
  double cost_dialer = 0, cost_writer = 0;
  auto* estimate_cmd = app.add_subcommand("estimate", "Longest machine chain between user turns");
  estimate_cmd->add_option("file", estimate_file)->required()->check(CLI::ExistingFile);
  estimate_cmd->add_option("--cost-dialer", cost_dialer, "Average seconds per dialer call");
  estimate_cmd->add_option("--cost-writer", cost_writer, "Average seconds per writer call");

  std::string fmt_file;
  auto* fmt_cmd = app.add_subcommand("fmt", "Print a definition in canonical form");
  fmt_cmd->add_option("file", fmt_file)->required()->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval-trigger", "Measure a trigger on a labeled dataset");
  eval_cmd->add_option("trigger", ev.trigger)->required();
  eval_cmd->add_option("--defs", ev.defs)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", ev.dataset)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--distractors", ev.distractors)->check(CLI::ExistingFile);
  eval_cmd->add_option("--pct", ev.pct, "Share of distractors, percent")->check(CLI::Range(0.0, 100.0));
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--total", ev.total, "Fix the augmented dataset size");
  eval_cmd->add_option("--out", ev.out, "Report JSON");
  eval_cmd->add_option("--model", ev.model, "Column label in the grid");
  eval_cmd->add_option("--workers", ev.workers, "Concurrent classifier calls");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP + SSE service");
  serve_cmd->add_option("--host", serve.host);
  serve_cmd->add_option("--port", serve.port);
  serve_cmd->add_option("--defs", serve.defs, "Directory of .mfa files to preload")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--sink-dir", serve.sink_dir);
  serve_cmd->add_option("--token-env", serve.token_env, "Environment variable holding a bearer token");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*validate_cmd) return cmd_validate(validate_file, validate_json);
    if (*estimate_cmd) return cmd_estimate(estimate_file, cost_dialer, cost_writer);
    if (*fmt_cmd) return cmd_fmt(fmt_file);
    if (*eval_cmd) return cmd_eval(ev);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const std::exception& ex) {
    std::cerr << "mfa: " << ex.what() << '\n';
    return 2;
  }
  return 0;
}
