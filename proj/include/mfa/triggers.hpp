#pragma once

#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "mfa/automaton.hpp"
#include "mfa/backends.hpp"
#include "mfa/history.hpp"
#include "mfa/http.hpp"

namespace mfa {

/// f_tau plus a default priority. fire() receives the originating state to
/// keep the (q, s) signature even though the built-ins ignore it.
class Trigger {
 public:
  Trigger(TriggerId id, int default_priority);
  virtual ~Trigger() = default;

  [[nodiscard]] const TriggerId& id() const noexcept { return id_; }
  [[nodiscard]] int get_priority() const noexcept { return priority_; }
  /// Throws BAD_PRIORITY for p < 1; 0 is reserved for "not a candidate".
  void set_priority(int p);

  virtual bool fire(const StateId& state, std::string_view message) = 0;

  /// Triggers only ever read their history; anything else is TRIGGER_WRITE.
  void attach(const HistoryAttachment* attachment);
  [[nodiscard]] const HistoryAttachment* attachment() const noexcept { return history_; }

 protected:
  [[nodiscard]] std::vector<ExchangePair> readable_history() const;

 private:
  TriggerId id_;
  int priority_;
  const HistoryAttachment* history_ = nullptr;
};

class AlwaysTrigger final : public Trigger {
 public:
  explicit AlwaysTrigger(TriggerId id, int default_priority = 1) : Trigger(std::move(id), default_priority) {}
  bool fire(const StateId&, std::string_view) override { return true; }
};

/// 1 iff any keyword occurs on word boundaries. Word characters are ASCII
/// alphanumerics, '_' and any non-ASCII byte.
class KeywordTrigger final : public Trigger {
 public:
  KeywordTrigger(TriggerId id, int default_priority, std::vector<std::string> keywords,
                 bool case_sensitive = false);
  bool fire(const StateId& state, std::string_view message) override;

  [[nodiscard]] const std::vector<std::string>& keywords() const noexcept { return keywords_; }

 private:
  std::vector<std::string> keywords_;
  bool case_sensitive_;
};

class PatternTrigger final : public Trigger {
 public:
  PatternTrigger(TriggerId id, int default_priority, const std::string& pattern,
                 bool case_sensitive = true);
  bool fire(const StateId& state, std::string_view message) override;

 private:
  std::regex pattern_;
};

/// Binary classifier backed by a chat model: prompt as system message, the
/// readable history, then the message; the completion is parsed to a bit.
class LlmClassifierTrigger final : public Trigger {
 public:
  static constexpr double kDefaultTemperature = 0.1;

  LlmClassifierTrigger(TriggerId id, int default_priority, std::shared_ptr<const ChatClient> client,
                       ChatEndpoint endpoint, std::string model, std::string prompt,
                       double temperature = kDefaultTemperature);

  /// Throws CLASSIFIER_PARSE when the completion is not a bit.
  bool fire(const StateId& state, std::string_view message) override;
  [[nodiscard]] ChatPayload payload_for(std::string_view message) const;

 private:
  std::shared_ptr<const ChatClient> client_;
  ChatEndpoint endpoint_;
  std::string model_;
  std::string prompt_;
  double temperature_;
};

/// Trims whitespace, then accepts a leading 1/0 or yes/no (any case).
/// Throws CLASSIFIER_PARSE otherwise.
bool parse_classifier_output(std::string_view completion);

/// Splits "a, b ,c" into trimmed non-empty items.
std::vector<std::string> split_list(std::string_view text);

/// Builds the runtime trigger for a definition. Throws TRIGGER_CONFIG / IO.
std::unique_ptr<Trigger> make_trigger(const TriggerDef& def, const BackendContext& context);

}  // namespace mfa
