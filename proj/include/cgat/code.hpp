#pragma once

// Binary hash codes over {-1,+1} and the sign quantizer.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgat {

class LengthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed tie rule shared by every quantizer in the library: sign(0) = +1.
inline constexpr std::int8_t sign_bit(double v) { return v >= 0.0 ? 1 : -1; }

class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(std::size_t k) : bits_(k, 1) {}

  /// Every entry must be exactly -1 or +1.
  explicit BinaryCode(std::vector<std::int8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
      if (b != 1 && b != -1) throw std::invalid_argument("BinaryCode entries must be -1 or +1");
    }
  }

  BinaryCode(std::initializer_list<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) {
      if (b != 1 && b != -1) throw std::invalid_argument("BinaryCode entries must be -1 or +1");
      bits_.push_back(static_cast<std::int8_t>(b));
    }
  }

  std::size_t size() const { return bits_.size(); }
  std::int8_t operator[](std::size_t i) const { return bits_[i]; }
  void set(std::size_t i, std::int8_t b) {
    if (b != 1 && b != -1) throw std::invalid_argument("BinaryCode entries must be -1 or +1");
    bits_[i] = b;
  }
  std::span<const std::int8_t> bits() const { return bits_; }

  BinaryCode operator-() const {
    BinaryCode out = *this;
    for (auto& b : out.bits_) b = static_cast<std::int8_t>(-b);
    return out;
  }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

  std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(b > 0 ? '+' : '-');
    return s;
  }

 private:
  std::vector<std::int8_t> bits_;
};

/// b_k = +1 if h_k >= 0 else -1.
inline BinaryCode quantize(std::span<const double> h) {
  std::vector<std::int8_t> bits(h.size());
  for (std::size_t k = 0; k < h.size(); ++k) bits[k] = sign_bit(h[k]);
  return BinaryCode(std::move(bits));
}

inline int inner_product(const BinaryCode& a, const BinaryCode& b) {
  if (a.size() != b.size()) {
    throw LengthError("code lengths differ: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  int acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

/// Number of differing positions, counted over packed words.
inline int hamming(const BinaryCode& a, const BinaryCode& b) {
  if (a.size() != b.size()) {
    throw LengthError("code lengths differ: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  int dist = 0;
  std::uint64_t wa = 0, wb = 0;
  std::size_t filled = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    wa |= std::uint64_t{a[k] < 0} << filled;
    wb |= std::uint64_t{b[k] < 0} << filled;
    if (++filled == 64) {
      dist += std::popcount(wa ^ wb);
      wa = wb = 0;
      filled = 0;
    }
  }
  if (filled > 0) dist += std::popcount(wa ^ wb);
  return dist;
}

}  // namespace cgat
