#include "mfa/history.hpp"

#include <algorithm>

#include "mfa/error.hpp"

namespace mfa {

const ExchangePair& Archive::add(std::string input, std::string output, StateId origin) {
  entries_.push_back(ExchangePair{std::move(input), std::move(output), std::move(origin), next_seq_++});
  notify(ArchiveEvent{ArchiveEventKind::Added, entries_.back()});
  return entries_.back();
}

void Archive::remove(std::uint64_t seq) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [seq](const ExchangePair& p) { return p.seq == seq; });
  if (it == entries_.end())
    throw Error(ErrorCode::NotFound,
                "archive " + id_.str() + " has no pair with seq " + std::to_string(seq));
  ExchangePair removed = std::move(*it);
  entries_.erase(it);
  notify(ArchiveEvent{ArchiveEventKind::Removed, std::move(removed)});
}

void Archive::subscribe(ArchiveObserver* observer) {
  if (std::find(observers_.begin(), observers_.end(), observer) == observers_.end())
    observers_.push_back(observer);
}

void Archive::unsubscribe(ArchiveObserver* observer) {
  observers_.erase(std::remove(observers_.begin(), observers_.end(), observer), observers_.end());
}

void Archive::notify(const ArchiveEvent& event) {
  // Copy: an observer may unsubscribe from inside update().
  const auto targets = observers_;
  for (auto* o : targets) o->update(*this, event);
}

std::string owner_name(const AttachmentOwner& owner) {
  return std::visit([](const auto& id) { return id.str(); }, owner);
}

HistoryAttachment::HistoryAttachment(AttachmentOwner owner, Archive& archive, AccessMode mode)
    : owner_(std::move(owner)), archive_(archive), mode_(mode) {
  archive_.subscribe(this);
}

HistoryAttachment::~HistoryAttachment() { archive_.unsubscribe(this); }

void HistoryAttachment::add_pair(std::string input, std::string output) {
  if (!can_write(mode_))
    throw Error(ErrorCode::ReadOnly,
                owner_name(owner_) + " has read-only access to " + archive_.id().str());
  const StateId origin = std::holds_alternative<StateId>(owner_)
                             ? std::get<StateId>(owner_)
                             : StateId(std::get<TriggerId>(owner_).str());
  archive_.add(std::move(input), std::move(output), origin);
}

std::vector<ExchangePair> HistoryAttachment::read_pairs() const {
  if (!can_read(mode_))
    throw Error(ErrorCode::WriteOnly,
                owner_name(owner_) + " has write-only access to " + archive_.id().str());
  return archive_.pairs();
}

void HistoryAttachment::update(const Archive&, const ArchiveEvent& event) {
  ++notifications_;
  if (listener_) listener_(event);
}

// ---------------------------------------------------------------------------

std::unique_ptr<HistoryGraph> HistoryGraph::from_automaton(const Automaton& automaton) {
  auto graph = std::make_unique<HistoryGraph>();
  for (const auto& id : automaton.archives) graph->add_archive(id);
  for (const auto& s : automaton.states)
    if (auto att = s.attachment()) graph->attach(s.id, att->archive, att->mode);
  for (const auto& t : automaton.triggers)
    if (auto att = t.attachment()) graph->attach(t.id, att->archive, att->mode);
  return graph;
}

Archive& HistoryGraph::add_archive(const ArchiveId& id) {
  auto& slot = archives_[id];
  if (!slot) slot = std::make_unique<Archive>(id);
  return *slot;
}

Archive& HistoryGraph::archive(const ArchiveId& id) {
  auto it = archives_.find(id);
  if (it == archives_.end())
    throw Error(ErrorCode::UnknownArchive, "history '" + id.str() + "' is not declared");
  return *it->second;
}

const Archive& HistoryGraph::archive(const ArchiveId& id) const {
  return const_cast<HistoryGraph*>(this)->archive(id);
}

HistoryAttachment& HistoryGraph::attach(const AttachmentOwner& owner, const ArchiveId& archive_id,
                                        AccessMode mode) {
  if (attachments_.count(owner))
    throw Error(ErrorCode::MultiAttach, owner_name(owner) + " is already attached to a history");
  if (std::holds_alternative<TriggerId>(owner) && mode != AccessMode::Read)
    throw Error(ErrorCode::TriggerWrite,
                "trigger " + owner_name(owner) + " may only read history " + archive_id.str());
  Archive& target = archive(archive_id);
  auto att = std::make_unique<HistoryAttachment>(owner, target, mode);
  auto& ref = *att;
  attachments_.emplace(owner, std::move(att));
  return ref;
}

HistoryAttachment* HistoryGraph::find(const AttachmentOwner& owner) const {
  auto it = attachments_.find(owner);
  return it == attachments_.end() ? nullptr : it->second.get();
}

std::vector<std::pair<std::string, ArchiveId>> HistoryGraph::edges(AccessMode mode) const {
  std::vector<std::pair<std::string, ArchiveId>> out;
  for (const auto& [owner, att] : attachments_)
    if (att->mode() == mode) out.emplace_back(owner_name(owner), att->archive().id());
  return out;
}

std::vector<ArchiveId> HistoryGraph::archive_ids() const {
  std::vector<ArchiveId> out;
  for (const auto& [id, _] : archives_) out.push_back(id);
  return out;
}

}  // namespace mfa
