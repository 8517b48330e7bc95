#ifndef MCG_META_HISTORY_HPP
#define MCG_META_HISTORY_HPP

#include <deque>

#include "mcg/tensor.hpp"

namespace mcg::meta {

struct HistoryRecord {
  Tensor image;
  Arr target_scores;
  bool adversarial = false;
};

// Capacity-bounded FIFO of (input, target scores) observations. Records
// are immutable once appended; the oldest is evicted first.
class AttackHistory {
 public:
  explicit AttackHistory(std::size_t capacity = 64) : cap_(capacity) {
    if (capacity == 0) throw ConfigError("history capacity must be positive");
  }

  void append(HistoryRecord r) {
    if (buf_.size() == cap_) buf_.pop_front();
    buf_.push_back(std::move(r));
  }

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return cap_; }
  bool empty() const { return buf_.empty(); }
  // oldest first
  const HistoryRecord& operator[](std::size_t i) const { return buf_.at(i); }

 private:
  std::deque<HistoryRecord> buf_;
  std::size_t cap_;
};

}  // namespace mcg::meta

#endif
