#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

#include "topopt/qd_optimizer.hpp"

namespace topopt {

// Single-producer single-consumer snapshot queue. A bounded channel never
// blocks the producer: when full, the oldest non-final snapshot is dropped.
// Capacity 0 means unbounded.
class SnapshotChannel {
 public:
  explicit SnapshotChannel(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(RepertoireSnapshot snapshot) {
    {
      std::lock_guard lock(mutex_);
      if (capacity_ > 0 && items_.size() >= capacity_) {
        for (auto it = items_.begin(); it != items_.end(); ++it) {
          if (!it->final) {
            items_.erase(it);
            ++dropped_;
            break;
          }
        }
      }
      items_.push_back(std::move(snapshot));
    }
    ready_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    ready_.notify_all();
  }

  // Blocks until a snapshot arrives or the channel is closed and drained.
  std::optional<RepertoireSnapshot> pop() {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    RepertoireSnapshot snap = std::move(items_.front());
    items_.pop_front();
    return snap;
  }

  std::optional<RepertoireSnapshot> try_pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    RepertoireSnapshot snap = std::move(items_.front());
    items_.pop_front();
    return snap;
  }

  bool has_pending() const {
    std::lock_guard lock(mutex_);
    return !items_.empty();
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<RepertoireSnapshot> items_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

}  // namespace topopt
