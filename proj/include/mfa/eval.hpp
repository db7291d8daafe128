#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfa/ids.hpp"

namespace mfa {

class Trigger;

namespace eval {

enum class Source { Curated, Distractor };
std::string_view to_string(Source source) noexcept;

struct LabeledSentence {
  std::string text;
  int label = 0;  // 0 or 1
  Source source = Source::Curated;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

/// CSV with a header containing `text` and `label` columns. Throws BAD_LABEL
/// for labels other than 0/1 (or empty text), IO when unreadable.
std::vector<LabeledSentence> load_dataset(const std::filesystem::path& path, Source source = Source::Curated);

struct AugmentOptions {
  double pct = 0.0;  // share of distractors in the output, 0..100
  std::uint64_t seed = 0;
  /// When set, the output has exactly this many sentences: curated ones are
  /// sampled down to total - round(total * pct / 100). Otherwise every
  /// curated sentence is kept and round(n * pct / (100 - pct)) distractors
  /// are added.
  std::optional<std::size_t> total;
};

/// Number of distractors augment() will inject for `curated` sentences.
std::size_t distractor_count(std::size_t curated, const AugmentOptions& options);

/// Mixes label-0 distractors into a dataset (sampling without replacement)
/// and shuffles, all driven by the seed. Throws BAD_PERCENTAGE and
/// INSUFFICIENT_DISTRACTORS.
std::vector<LabeledSentence> augment(const std::vector<LabeledSentence>& dataset,
                                     const std::vector<LabeledSentence>& distractors,
                                     const AugmentOptions& options);

struct SentenceResult {
  std::string text;
  int expected = 0;
  std::optional<int> got;  // nullopt when the trigger failed
  double latency = 0.0;    // seconds
  Source source = Source::Curated;
  std::string error;
};

struct EvalReport {
  std::string trigger_id;
  std::string model;       // label for the grid, e.g. "keyword" or a model name
  std::string provenance;  // who labeled the data; phase 3 happens outside the tool
  std::size_t dataset_size = 0;
  std::size_t distractors = 0;
  double distractor_pct = 0.0;
  std::size_t correct = 0;
  double accuracy = 0.0;     // percent
  double avg_latency = 0.0;  // seconds, rounded to 0.01
  double threshold = 75.0;
  bool pass_threshold = false;
  std::vector<SentenceResult> per_sentence;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const EvalReport& report);

using Classifier = std::function<bool(std::string_view text)>;

struct EvalOptions {
  std::string trigger_id;
  std::string model;
  std::string provenance = "pre-labeled dataset";
  double distractor_pct = 0.0;  // recorded in the report
  double threshold = 75.0;
  /// >1 fans sentences out over worker threads. The classifier must then be
  /// safe to call concurrently.
  unsigned workers = 1;
};

/// Runs the classifier over every sentence, timing each call. Failures
/// count as wrong answers and add a warning. Throws EMPTY_DATASET.
EvalReport evaluate(const Classifier& classify, const std::vector<LabeledSentence>& dataset,
                    const EvalOptions& options);

/// Same, for a runtime trigger fired from `state`.
EvalReport evaluate(Trigger& trigger, const std::vector<LabeledSentence>& dataset, EvalOptions options,
                    const StateId& state = StateId("eval"));

/// Text grid with the columns Trigger | % of random sentences | Nb. of
/// sentences | % good eval. | Avg. time (s); one sub-column per model.
std::string render_table(const std::vector<EvalReport>& reports);

}  // namespace eval
}  // namespace mfa
