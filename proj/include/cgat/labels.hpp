#pragma once

// Multi-hot class annotations and the share-any-class similarity.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace cgat {

class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::size_t classes) : classes_(classes), words_((classes + 63) / 64, 0) {}

  /// Builds a label over `classes` with the given active class ids.
  LabelVector(std::size_t classes, std::initializer_list<std::size_t> active) : LabelVector(classes) {
    for (auto c : active) set(c);
  }

  std::size_t classes() const { return classes_; }

  void set(std::size_t c, bool on = true) {
    if (c >= classes_) throw std::out_of_range("class id out of range");
    const std::uint64_t mask = std::uint64_t{1} << (c % 64);
    if (on) {
      words_[c / 64] |= mask;
    } else {
      words_[c / 64] &= ~mask;
    }
  }

  bool test(std::size_t c) const {
    if (c >= classes_) throw std::out_of_range("class id out of range");
    return (words_[c / 64] >> (c % 64)) & 1U;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  /// True iff both labels share at least one active class.
  bool overlaps(const LabelVector& other) const {
    const std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (words_[i] & other.words_[i]) return true;
    }
    return false;
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Binary semantic similarity z in {0,1}: 1 iff the labels share a class.
inline double similarity(const LabelVector& a, const LabelVector& b) {
  return a.overlaps(b) ? 1.0 : 0.0;
}

}  // namespace cgat
