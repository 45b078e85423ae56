#pragma once

#include <atomic>
#include <cstddef>
#include <new>

namespace hot {

/// Process-wide byte counters for tensor storage. Only tensor payloads are
/// counted; this is what the benchmark harness reports as peak memory.
class MemoryTracker {
 public:
  static void on_allocate(std::size_t bytes) {
    const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }
  static void on_deallocate(std::size_t bytes) {
    current_.fetch_sub(bytes, std::memory_order_relaxed);
  }
  static std::size_t current() { return current_.load(std::memory_order_relaxed); }
  static std::size_t peak() { return peak_.load(std::memory_order_relaxed); }
  /// Resets the high-water mark to the current live byte count.
  static void reset_peak() { peak_.store(current(), std::memory_order_relaxed); }

 private:
  static inline std::atomic<std::size_t> current_{0};
  static inline std::atomic<std::size_t> peak_{0};
};

template <typename T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <typename U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    MemoryTracker::on_allocate(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

}  // namespace hot
