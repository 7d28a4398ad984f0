#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "../lattice.hpp"

namespace fpp::detail {

// Sparse lattice storage in dense tiles. Tiles are found through a dense
// directory around the first tile once the map grows, and through an
// open-addressing table elsewhere.
template <std::size_t D, class Cell>
class TileMap {
 public:
  static constexpr int kShift = D == 2 ? 4 : (D == 3 ? 3 : 2);
  static constexpr std::int64_t kSide = std::int64_t{1} << kShift;
  static constexpr std::size_t kCells = [] {
    std::size_t n = 1;
    for (std::size_t i = 0; i < D; ++i) n *= static_cast<std::size_t>(kSide);
    return n;
  }();
  using Tile = std::array<Cell, kCells>;

  TileMap() : keys_(kInitial), slots_(kInitial, nullptr) {}

  Cell& at(const LatticePoint<D>& x) {
    LatticePoint<D> t;
    const std::size_t idx = split(x, t);
    if (last_ == nullptr || t != last_tile_) {
      last_ = lookup(t, true);
      last_tile_ = t;
    }
    return (*last_)[idx];
  }

  Cell* find(const LatticePoint<D>& x) const {
    LatticePoint<D> t;
    const std::size_t idx = split(x, t);
    Tile* p = const_cast<TileMap*>(this)->lookup(t, false);
    return p ? &(*p)[idx] : nullptr;
  }

  std::size_t tile_count() const { return tiles_.size(); }

 private:
  static constexpr std::size_t kInitial = 64;
  static constexpr int kBits = 64 / static_cast<int>(D);
  static constexpr std::int64_t kDirRadius = D == 2 ? 64 : (D == 3 ? 16 : 8);
  static constexpr std::int64_t kDirSide = 2 * kDirRadius;
  static constexpr std::size_t kDirThreshold = 16;

  static std::size_t split(const LatticePoint<D>& x, LatticePoint<D>& t) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < D; ++i) {
      t[i] = x[i] >> kShift;
      idx = idx * static_cast<std::size_t>(kSide) + static_cast<std::size_t>(x[i] & (kSide - 1));
    }
    return idx;
  }

  static std::uint64_t pack(const LatticePoint<D>& t) {
    constexpr std::int64_t lim = std::int64_t{1} << (kBits - 1);
    constexpr std::uint64_t mask = (std::uint64_t{1} << kBits) - 1;
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < D; ++i) {
      if (t[i] < -lim || t[i] >= lim) throw std::out_of_range("lattice coordinate outside the searchable range");
      key = (key << kBits) | (static_cast<std::uint64_t>(t[i]) & mask);
    }
    return key;
  }

  static std::size_t hash(std::uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return static_cast<std::size_t>(k);
  }

  // Directory slot for tile t, or -1 outside the directory window.
  std::ptrdiff_t dir_index(const LatticePoint<D>& t) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < D; ++i) {
      const std::int64_t r = t[i] - dir_origin_[i];
      if (r < 0 || r >= kDirSide) return -1;
      idx = idx * static_cast<std::size_t>(kDirSide) + static_cast<std::size_t>(r);
    }
    return static_cast<std::ptrdiff_t>(idx);
  }

  Tile* lookup(const LatticePoint<D>& t, bool insert) {
    std::ptrdiff_t d = -1;
    if (!dir_.empty()) {
      d = dir_index(t);
      if (d >= 0 && dir_[d]) return dir_[d];
    }
    const std::uint64_t key = pack(t);
    const std::size_t mask = slots_.size() - 1;
    std::size_t i = hash(key) & mask;
    while (slots_[i] != nullptr) {
      if (keys_[i] == key) return slots_[i];
      i = (i + 1) & mask;
    }
    if (!insert) return nullptr;
    tiles_.push_back(std::make_unique<Tile>());
    Tile* p = tiles_.back().get();
    keys_[i] = key;
    slots_[i] = p;
    if (d >= 0) dir_[d] = p;
    if (2 * tiles_.size() > slots_.size()) grow();
    if (dir_.empty() && tiles_.size() >= kDirThreshold) build_directory(t);
    return p;
  }

  void build_directory(const LatticePoint<D>& t) {
    for (std::size_t i = 0; i < D; ++i) dir_origin_[i] = t[i] - kDirRadius;
    std::size_t n = 1;
    for (std::size_t i = 0; i < D; ++i) n *= static_cast<std::size_t>(kDirSide);
    dir_.assign(n, nullptr);
    constexpr std::uint64_t mask = (std::uint64_t{1} << kBits) - 1;
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (!slots_[j]) continue;
      LatticePoint<D> u;
      std::uint64_t k = keys_[j];
      for (std::size_t i = D; i-- > 0;) {
        std::uint64_t v = k & mask;
        k >>= kBits;
        // Sign-extend the kBits-wide field.
        u[i] = static_cast<std::int64_t>(v << (64 - kBits)) >> (64 - kBits);
      }
      const std::ptrdiff_t d = dir_index(u);
      if (d >= 0) dir_[d] = slots_[j];
    }
  }

  void grow() {
    std::vector<std::uint64_t> keys(keys_.size() * 2);
    std::vector<Tile*> slots(slots_.size() * 2, nullptr);
    const std::size_t mask = slots.size() - 1;
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (!slots_[j]) continue;
      std::size_t i = hash(keys_[j]) & mask;
      while (slots[i]) i = (i + 1) & mask;
      keys[i] = keys_[j];
      slots[i] = slots_[j];
    }
    keys_.swap(keys);
    slots_.swap(slots);
  }

  std::vector<std::uint64_t> keys_;
  std::vector<Tile*> slots_;
  std::vector<std::unique_ptr<Tile>> tiles_;
  std::vector<Tile*> dir_;
  LatticePoint<D> dir_origin_{};
  LatticePoint<D> last_tile_{};
  Tile* last_ = nullptr;
};

}  // namespace fpp::detail
