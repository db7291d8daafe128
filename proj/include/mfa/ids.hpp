#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

namespace mfa {

/// String identifier tagged with the namespace it lives in, so a state id
/// cannot be passed where a trigger id is expected.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}

  [[nodiscard]] const std::string& str() const noexcept { return value_; }
  [[nodiscard]] bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Id& id) {
    return os << id.value_;
  }

 private:
  std::string value_;
};

struct StateTag {};
struct TriggerTag {};
struct ArchiveTag {};
struct EdgeTag {};

using StateId = Id<StateTag>;
using TriggerId = Id<TriggerTag>;
using ArchiveId = Id<ArchiveTag>;
using EdgeId = Id<EdgeTag>;

}  // namespace mfa

template <class Tag>
struct std::hash<mfa::Id<Tag>> {
  std::size_t operator()(const mfa::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
