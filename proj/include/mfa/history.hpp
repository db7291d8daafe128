#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mfa/automaton.hpp"
#include "mfa/ids.hpp"

namespace mfa {

struct ExchangePair {
  std::string input;
  std::string output;
  StateId origin;
  std::uint64_t seq = 0;

  friend bool operator==(const ExchangePair&, const ExchangePair&) = default;
};

enum class ArchiveEventKind { Added, Removed };

struct ArchiveEvent {
  ArchiveEventKind kind;
  ExchangePair pair;
};

class Archive;

class ArchiveObserver {
 public:
  virtual ~ArchiveObserver() = default;
  virtual void update(const Archive& archive, const ArchiveEvent& event) = 0;
};

/// Observable ordered log of (message, response) pairs. Notifications are
/// synchronous: every observer has seen a mutation before the call returns.
class Archive {
 public:
  explicit Archive(ArchiveId id) : id_(std::move(id)) {}
  Archive(const Archive&) = delete;
  Archive& operator=(const Archive&) = delete;

  [[nodiscard]] const ArchiveId& id() const noexcept { return id_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

  /// Appends with the next archive-global seq (never reused).
  const ExchangePair& add(std::string input, std::string output, StateId origin);
  /// Throws NOT_FOUND when no entry has this seq.
  void remove(std::uint64_t seq);
  /// Snapshot copy in seq order.
  [[nodiscard]] std::vector<ExchangePair> pairs() const { return entries_; }

  void subscribe(ArchiveObserver* observer);
  void unsubscribe(ArchiveObserver* observer);
  [[nodiscard]] std::size_t observer_count() const noexcept { return observers_.size(); }

 private:
  void notify(const ArchiveEvent& event);

  ArchiveId id_;
  std::vector<ExchangePair> entries_;
  std::uint64_t next_seq_ = 1;
  std::vector<ArchiveObserver*> observers_;
};

/// Owner of a history attachment: a state or a trigger.
using AttachmentOwner = std::variant<StateId, TriggerId>;

std::string owner_name(const AttachmentOwner& owner);

/// Binds one owner to one archive with an access mode and observes it.
class HistoryAttachment final : public ArchiveObserver {
 public:
  using Listener = std::function<void(const ArchiveEvent&)>;

  HistoryAttachment(AttachmentOwner owner, Archive& archive, AccessMode mode);
  ~HistoryAttachment() override;
  HistoryAttachment(const HistoryAttachment&) = delete;
  HistoryAttachment& operator=(const HistoryAttachment&) = delete;

  [[nodiscard]] const AttachmentOwner& owner() const noexcept { return owner_; }
  [[nodiscard]] const Archive& archive() const noexcept { return archive_; }
  [[nodiscard]] AccessMode mode() const noexcept { return mode_; }

  /// Throws READ_ONLY on a Read attachment.
  void add_pair(std::string input, std::string output);
  /// Throws WRITE_ONLY on a Write attachment.
  [[nodiscard]] std::vector<ExchangePair> read_pairs() const;

  [[nodiscard]] std::uint64_t notifications() const noexcept { return notifications_; }
  void set_listener(Listener listener) { listener_ = std::move(listener); }

  void update(const Archive& archive, const ArchiveEvent& event) override;

 private:
  AttachmentOwner owner_;
  Archive& archive_;
  AccessMode mode_;
  std::uint64_t notifications_ = 0;
  Listener listener_;
};

/// The bipartite graph between states/triggers and archives. One instance
/// per session; archives are not shared across sessions.
class HistoryGraph {
 public:
  HistoryGraph() = default;
  HistoryGraph(const HistoryGraph&) = delete;
  HistoryGraph& operator=(const HistoryGraph&) = delete;

  /// Builds the archives and attachments declared by an automaton.
  static std::unique_ptr<HistoryGraph> from_automaton(const Automaton& automaton);

  Archive& add_archive(const ArchiveId& id);
  /// Throws UNKNOWN_ARCHIVE.
  [[nodiscard]] Archive& archive(const ArchiveId& id);
  [[nodiscard]] const Archive& archive(const ArchiveId& id) const;

  /// Throws MULTI_ATTACH if the owner is already attached and TRIGGER_WRITE
  /// if a trigger asks for anything but Read.
  HistoryAttachment& attach(const AttachmentOwner& owner, const ArchiveId& archive, AccessMode mode);
  [[nodiscard]] HistoryAttachment* find(const AttachmentOwner& owner) const;

  /// Edge set for one mode (E_r, E_w or E_rw) as (owner, archive) pairs.
  [[nodiscard]] std::vector<std::pair<std::string, ArchiveId>> edges(AccessMode mode) const;
  [[nodiscard]] std::vector<ArchiveId> archive_ids() const;

 private:
  // Declaration order matters: attachments unsubscribe from archives on
  // destruction, so they must be destroyed first.
  std::map<ArchiveId, std::unique_ptr<Archive>> archives_;
  std::map<AttachmentOwner, std::unique_ptr<HistoryAttachment>> attachments_;
};

}  // namespace mfa
