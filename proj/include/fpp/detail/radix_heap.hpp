#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

namespace fpp::detail {

// Monotone priority queue over unsigned 128-bit keys; pops in exact
// (key, entry) order. Buckets are formed on key >> kDrop; the lowest bucket
// is kept as an exact binary heap, so ordering never depends on the
// coarsening. Keys pushed must not be below the last popped key.
template <class Entry>
class RadixHeap {
 public:
  using Key = unsigned __int128;
  static constexpr int kDrop = 40;

  bool empty() const { return size_ == 0; }
  std::size_t size() const { return size_; }

  void push(Key k, const Entry& e) {
    const int b = bucket(k);
    if (b == 0) {
      low_.push_back({k, e});
      std::push_heap(low_.begin(), low_.end(), Later{});
    } else {
      buckets_[b].push_back({k, e});
      mark(b);
    }
    ++size_;
  }

  // Smallest key; requires !empty().
  Key top_key() {
    if (low_.empty()) refill();
    return low_.front().k;
  }

  // Requires !empty().
  std::pair<Key, Entry> pop() {
    if (low_.empty()) refill();
    std::pop_heap(low_.begin(), low_.end(), Later{});
    Item it = low_.back();
    low_.pop_back();
    --size_;
    return {it.k, it.e};
  }

 private:
  struct Item {
    Key k;
    Entry e;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      if (a.k != b.k) return a.k > b.k;
      return b.e < a.e;
    }
  };

  static int bit_length(Key x) {
    const auto hi = static_cast<std::uint64_t>(x >> 64);
    if (hi) return 128 - __builtin_clzll(hi);
    const auto lo = static_cast<std::uint64_t>(x);
    return lo ? 64 - __builtin_clzll(lo) : 0;
  }

  int bucket(Key k) const { return bit_length((k >> kDrop) ^ last_); }

  void mark(int b) { occupied_[b >> 6] |= std::uint64_t{1} << (b & 63); }

  int lowest_nonempty() const {
    for (int w = 0; w < 2; ++w)
      if (occupied_[w]) return 64 * w + __builtin_ctzll(occupied_[w]);
    return -1;
  }

  void refill() {
    const int i = lowest_nonempty();
    auto& src = buckets_[i];
    Key m = src.front().k;
    for (const auto& it : src) m = std::min(m, it.k);
    last_ = m >> kDrop;
    for (const auto& it : src) {
      const int b = bucket(it.k);
      if (b == 0) {
        low_.push_back(it);
      } else {
        buckets_[b].push_back(it);
        mark(b);
      }
    }
    src.clear();
    occupied_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
    std::make_heap(low_.begin(), low_.end(), Later{});
  }

  std::vector<Item> low_;
  std::array<std::vector<Item>, 129> buckets_;
  std::array<std::uint64_t, 2> occupied_{};
  Key last_ = 0;
  std::size_t size_ = 0;
};

}  // namespace fpp::detail
