#include "mfa/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "mfa/backends.hpp"
#include "mfa/csv.hpp"
#include "mfa/error.hpp"
#include "mfa/random.hpp"
#include "mfa/triggers.hpp"

namespace mfa::eval {

using nlohmann::json;

std::string_view to_string(Source source) noexcept {
  return source == Source::Curated ? "curated" : "distractor";
}

std::vector<LabeledSentence> load_dataset(const std::filesystem::path& path, Source source) {
  const auto rows = csv::parse(read_text_file(path));
  std::vector<LabeledSentence> out;
  if (rows.empty()) return out;

  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorCode::Io, path.string() + ": header must contain text,label");
  };
  const std::size_t text_col = column("text");
  const std::size_t label_col = column("label");

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    const std::string where = path.string() + ":" + std::to_string(r + 1);
    if (row.size() <= std::max(text_col, label_col)) throw Error(ErrorCode::BadLabel, where + ": missing column");
    const std::string& label = row[label_col];
    if (label != "0" && label != "1") throw Error(ErrorCode::BadLabel, where + ": label '" + label + "' is not 0 or 1");
    if (row[text_col].empty()) throw Error(ErrorCode::BadLabel, where + ": empty text");
    out.push_back({row[text_col], label == "1" ? 1 : 0, source});
  }
  return out;
}

namespace {

void check_pct(double pct) {
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error(ErrorCode::BadPercentage, "percentage must be in [0, 100]");
}

}  // namespace

std::size_t distractor_count(std::size_t curated, const AugmentOptions& options) {
  check_pct(options.pct);
  if (options.total) return static_cast<std::size_t>(std::llround(*options.total * options.pct / 100.0));
  if (options.pct == 0.0) return 0;
  if (options.pct == 100.0)
    throw Error(ErrorCode::BadPercentage, "100% distractors needs an explicit total size");
  return static_cast<std::size_t>(std::llround(curated * options.pct / (100.0 - options.pct)));
}

std::vector<LabeledSentence> augment(const std::vector<LabeledSentence>& dataset,
                                     const std::vector<LabeledSentence>& distractors,
                                     const AugmentOptions& options) {
  const std::size_t d = distractor_count(dataset.size(), options);
  Rng rng(options.seed);

  std::vector<LabeledSentence> out = dataset;
  if (options.total) {
    const std::size_t keep = *options.total - d;
    if (keep > dataset.size())
      throw Error(ErrorCode::InsufficientDistractors,
                  "need " + std::to_string(keep) + " curated sentences, have " + std::to_string(dataset.size()));
    seeded_shuffle(out, rng);
    out.resize(keep);
  }
  if (d > distractors.size())
    throw Error(ErrorCode::InsufficientDistractors,
                "need " + std::to_string(d) + " distractors, have " + std::to_string(distractors.size()));

  std::vector<std::size_t> pool(distractors.size());
  std::iota(pool.begin(), pool.end(), 0);
  seeded_shuffle(pool, rng);
  for (std::size_t i = 0; i < d; ++i) {
    LabeledSentence s = distractors[pool[i]];
    s.label = 0;
    s.source = Source::Distractor;
    out.push_back(std::move(s));
  }
  seeded_shuffle(out, rng);
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const EvalReport& r) {
  json per = json::array();
  for (const auto& s : r.per_sentence) {
    json j = {{"text", s.text},
              {"expected", s.expected},
              {"got", s.got ? json(*s.got) : json(nullptr)},
              {"latency", s.latency},
              {"source", to_string(s.source)}};
    if (!s.error.empty()) j["error"] = s.error;
    per.push_back(std::move(j));
  }
  return {{"trigger_id", r.trigger_id},
          {"model", r.model},
          {"provenance", r.provenance},
          {"dataset_size", r.dataset_size},
          {"distractors", r.distractors},
          {"distractor_pct", r.distractor_pct},
          {"correct", r.correct},
          {"accuracy", r.accuracy},
          {"avg_latency", r.avg_latency},
          {"threshold", r.threshold},
          {"pass_threshold", r.pass_threshold},
          {"warnings", r.warnings},
          {"per_sentence", std::move(per)}};
}

namespace {

SentenceResult run_one(const Classifier& classify, const LabeledSentence& s) {
  SentenceResult res;
  res.text = s.text;
  res.expected = s.label;
  res.source = s.source;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    res.got = classify(s.text) ? 1 : 0;
  } catch (const std::exception& ex) {
    res.error = ex.what();
  }
  res.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace

EvalReport evaluate(const Classifier& classify, const std::vector<LabeledSentence>& dataset,
                    const EvalOptions& options) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");

  EvalReport report;
  report.trigger_id = options.trigger_id;
  report.model = options.model;
  report.provenance = options.provenance;
  report.dataset_size = dataset.size();
  report.distractor_pct = options.distractor_pct;
  report.threshold = options.threshold;
  report.per_sentence.resize(dataset.size());

  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, dataset.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i) report.per_sentence[i] = run_one(classify, dataset[i]);
  } else {
    // Strided partition; each worker writes only its own indices.
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < dataset.size(); i += workers)
          report.per_sentence[i] = run_one(classify, dataset[i]);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  double total_latency = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = report.per_sentence[i];
    if (s.source == Source::Distractor) ++report.distractors;
    total_latency += s.latency;
    if (!s.got) {
      report.warnings.push_back("sentence " + std::to_string(i) + ": " + s.error);
    } else if (*s.got == s.expected) {
      ++report.correct;
    }
  }
  report.accuracy = 100.0 * static_cast<double>(report.correct) / static_cast<double>(dataset.size());
  report.avg_latency = std::round(total_latency / static_cast<double>(dataset.size()) * 100.0) / 100.0;
  report.pass_threshold = report.accuracy >= report.threshold;
  return report;
}

EvalReport evaluate(Trigger& trigger, const std::vector<LabeledSentence>& dataset, EvalOptions options,
                    const StateId& state) {
  if (options.trigger_id.empty()) options.trigger_id = trigger.id().str();
  return evaluate([&](std::string_view text) { return trigger.fire(state, text); }, dataset, options);
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string pct_label(double pct) {
  if (pct == std::floor(pct)) return std::to_string(static_cast<long long>(pct)) + "%";
  return fixed(pct, 1) + "%";
}

}  // namespace

std::string render_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> models;
  for (const auto& r : reports)
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);

  // Rows keyed by (trigger, pct, size) in first-seen order.
  struct Row {
    std::string trigger, pct, size;
    std::map<std::string, const EvalReport*> by_model;
  };
  std::vector<Row> rows;
  for (const auto& r : reports) {
    Row key{r.trigger_id, pct_label(r.distractor_pct), std::to_string(r.dataset_size), {}};
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& x) {
      return x.trigger == key.trigger && x.pct == key.pct && x.size == key.size;
    });
    if (it == rows.end()) {
      rows.push_back(std::move(key));
      it = std::prev(rows.end());
    }
    it->by_model[r.model] = &r;
  }

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head1 = {"Trigger", "% of random sentences", "Nb. of sentences"};
  std::vector<std::string> head2 = {"", "", ""};
  for (std::size_t i = 0; i < models.size(); ++i) {
    head1.push_back(i == 0 ? "% good eval." : "");
    head2.push_back(models[i]);
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    head1.push_back(i == 0 ? "Avg. time (s)" : "");
    head2.push_back(models[i]);
  }
  cells.push_back(head1);
  const bool named_models = models.size() > 1 || (models.size() == 1 && !models.front().empty());
  if (named_models) cells.push_back(head2);

  std::string last_trigger;
  for (const auto& row : rows) {
    std::vector<std::string> line = {row.trigger == last_trigger ? "" : row.trigger, row.pct, row.size};
    last_trigger = row.trigger;
    for (const auto& m : models) {
      auto it = row.by_model.find(m);
      line.push_back(it == row.by_model.end() ? "-" : fixed(it->second->accuracy, 2) + "%");
    }
    for (const auto& m : models) {
      auto it = row.by_model.find(m);
      line.push_back(it == row.by_model.end() ? "-" : fixed(it->second->avg_latency, 2));
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(head1.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

  std::ostringstream os;
  const std::size_t header_rows = named_models ? 2 : 1;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::ostringstream line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) line << " | ";
      line << std::left << std::setw(static_cast<int>(width[c])) << cells[r][c];
    }
    std::string text = line.str();
    text.erase(text.find_last_not_of(' ') + 1);
    os << text << '\n';
    if (r + 1 == header_rows) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c) os << "-+-";
        os << std::string(width[c], '-');
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace mfa::eval
