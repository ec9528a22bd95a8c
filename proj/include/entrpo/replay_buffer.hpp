#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "entrpo/advantage.hpp"
#include "entrpo/random.hpp"

namespace entrpo {

/// Bounded FIFO replay memory that empties itself after a solved episode.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000, double solved_clear_threshold = 195.0)
      : capacity_(capacity), solved_clear_threshold_(solved_clear_threshold) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void push(const Trajectory& traj) {
    for (const auto& t : traj.transitions) push(t);
  }

  void push(const Transition& t) {
    if (storage_.size() == capacity_) storage_.pop_front();
    storage_.push_back(t);
  }

  /// Uniform sample without replacement; nullopt when fewer than
  /// `batch_size` transitions are stored.
  std::optional<std::vector<Transition>> sample(std::size_t batch_size, Rng& rng) const {
    if (storage_.size() < batch_size) return std::nullopt;
    // Partial Fisher-Yates over a virtual index array; only swapped slots are stored.
    std::unordered_map<std::size_t, std::size_t> swapped;
    const auto slot = [&](std::size_t i) {
      const auto it = swapped.find(i);
      return it == swapped.end() ? i : it->second;
    };
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    const std::size_t n = storage_.size();
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t j = i + rng.index(n - i);
      const std::size_t picked = slot(j);
      swapped[j] = slot(i);
      batch.push_back(storage_[picked]);
    }
    return batch;
  }

  /// Empties the buffer iff the episode return is strictly above the threshold.
  bool clear_if_solved(double episode_return) {
    if (episode_return > solved_clear_threshold_) {
      storage_.clear();
      return true;
    }
    return false;
  }

  void clear() { storage_.clear(); }

  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::size_t capacity() const { return capacity_; }
  double solved_clear_threshold() const { return solved_clear_threshold_; }
  const Transition& operator[](std::size_t i) const { return storage_[i]; }

 private:
  std::size_t capacity_;
  double solved_clear_threshold_;
  std::deque<Transition> storage_;
};

}  // namespace entrpo
