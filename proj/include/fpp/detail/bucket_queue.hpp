#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

namespace fpp::detail {

// Monotone priority queue on 128-bit keys, popped in exact (key, entry)
// order. Keys are binned into a ring of fixed-width buckets; the current
// bucket is an exact binary heap. Keys too far ahead of the ring wait in an
// overflow heap, so any key >= the last popped key is accepted.
template <class Entry, int kShift = 88, int kRingBits = 9>
class BucketQueue {
 public:
  using Key = unsigned __int128;

  bool empty() const { return size_ == 0; }

  // Empties the queue but keeps its storage.
  void clear() {
    low_.clear();
    far_.clear();
    for (std::size_t w = 0; w < kWords; ++w) {
      for (std::uint64_t bits = occupied_[w]; bits; bits &= bits - 1) ring_[w * 64 + __builtin_ctzll(bits)].clear();
      occupied_[w] = 0;
    }
    cur_ = 0;
    started_ = false;
    size_ = 0;
  }
  std::size_t size() const { return size_; }

  void push(Key k, const Entry& e) {
    ++size_;
    const std::uint64_t b = bucket_of(k);
    if (b == cur_ && started_) {
      low_.push_back({k, e});
      std::push_heap(low_.begin(), low_.end(), Later{});
    } else if (b < cur_ + kRing) {
      ring_[b & kMask].push_back({k, e});
      occupied_[(b & kMask) >> 6] |= std::uint64_t{1} << (b & 63);
    } else {
      far_.push_back({k, e});
      std::push_heap(far_.begin(), far_.end(), Later{});
    }
  }

  // Requires !empty().
  Key top_key() {
    if (low_.empty()) advance();
    return low_.front().k;
  }

  // Requires !empty().
  std::pair<Key, Entry> pop() {
    if (low_.empty()) advance();
    std::pop_heap(low_.begin(), low_.end(), Later{});
    const Item it = low_.back();
    low_.pop_back();
    --size_;
    return {it.k, it.e};
  }

 private:
  static constexpr std::uint64_t kRing = std::uint64_t{1} << kRingBits;
  static constexpr std::uint64_t kMask = kRing - 1;
  static constexpr std::size_t kWords = kRing / 64;

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

  static std::uint64_t bucket_of(Key k) { return static_cast<std::uint64_t>(k >> kShift); }

  // Next occupied ring slot at or after the current one, as an absolute
  // bucket number; kNone when the ring is empty.
  static constexpr std::uint64_t kNone = ~std::uint64_t{0};
  std::uint64_t next_ring_bucket() const {
    const std::uint64_t start = cur_ & kMask;
    const std::size_t w0 = start >> 6;
    const std::uint64_t head = occupied_[w0] & (~std::uint64_t{0} << (start & 63));
    if (head) return cur_ + (w0 * 64 + __builtin_ctzll(head)) - start;
    for (std::size_t i = 1; i <= kWords; ++i) {
      const std::size_t w = (w0 + i) % kWords;
      std::uint64_t bits = occupied_[w];
      if (i == kWords) bits &= (std::uint64_t{1} << (start & 63)) - 1;
      if (bits) return cur_ + ((w * 64 + __builtin_ctzll(bits) + kRing - start) & kMask);
    }
    return kNone;
  }

  void advance() {
    std::uint64_t nb = next_ring_bucket();
    if (!far_.empty()) nb = std::min(nb, bucket_of(far_.front().k));
    cur_ = nb;
    started_ = true;
    auto& slot = ring_[nb & kMask];
    if (occupied_[(nb & kMask) >> 6] & (std::uint64_t{1} << (nb & 63))) {
      low_.insert(low_.end(), slot.begin(), slot.end());
      slot.clear();
      occupied_[(nb & kMask) >> 6] &= ~(std::uint64_t{1} << (nb & 63));
    }
    while (!far_.empty() && bucket_of(far_.front().k) < cur_ + kRing) {
      std::pop_heap(far_.begin(), far_.end(), Later{});
      const Item it = far_.back();
      far_.pop_back();
      const std::uint64_t b = bucket_of(it.k);
      if (b == cur_) {
        low_.push_back(it);
      } else {
        ring_[b & kMask].push_back(it);
        occupied_[(b & kMask) >> 6] |= std::uint64_t{1} << (b & 63);
      }
    }
    std::make_heap(low_.begin(), low_.end(), Later{});
  }

  std::vector<Item> low_;
  std::array<std::vector<Item>, kRing> ring_;
  std::array<std::uint64_t, kWords> occupied_{};
  std::vector<Item> far_;
  std::uint64_t cur_ = 0;
  bool started_ = false;
  std::size_t size_ = 0;
};

}  // namespace fpp::detail
