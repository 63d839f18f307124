#pragma once

// Center codes.
//
// For a target sample with positive set P and negative set N drawn from the
// code book B, the center code minimizes
//
//   psi(b) = sum_{i in P} w_i D_H(b, b_i) - sum_{j in N} w_j D_H(b, b_j)
//
// over b in {-1,+1}^K. Since D_H(a, b) = (K - a^T b) / 2, psi is separable per
// bit and its minimizer is sign(sum_i w_i b_i - sum_j w_j b_j). chcm()
// evaluates that closed form; oracle_center() enumerates all 2^K codes.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgat/code.hpp"
#include "cgat/labels.hpp"

namespace cgat {

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hash codes of the training set, indexed by training-sample id. The version
/// counter increments on every refresh so callers can detect stale centers.
class CodeBook {
 public:
  CodeBook() = default;
  explicit CodeBook(std::size_t code_length) : k_(code_length) {}

  explicit CodeBook(std::span<const BinaryCode> codes) {
    if (!codes.empty()) k_ = codes.front().size();
    bits_.reserve(codes.size() * k_);
    for (const auto& c : codes) append(c);
  }

  std::size_t size() const { return k_ == 0 ? 0 : bits_.size() / k_; }
  bool empty() const { return bits_.empty(); }
  std::size_t code_length() const { return k_; }
  std::uint64_t version() const { return version_; }

  std::span<const std::int8_t> row(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("CodeBook index " + std::to_string(i) + " out of range");
    return std::span<const std::int8_t>(bits_).subspan(i * k_, k_);
  }

  BinaryCode code(std::size_t i) const {
    auto r = row(i);
    return BinaryCode(std::vector<std::int8_t>(r.begin(), r.end()));
  }

  void append(const BinaryCode& c) {
    check_length(c);
    bits_.insert(bits_.end(), c.bits().begin(), c.bits().end());
  }

  /// Replaces the codes of `ids` and bumps the version once.
  void refresh(std::span<const std::size_t> ids, std::span<const BinaryCode> codes) {
    if (ids.size() != codes.size()) throw LengthError("CodeBook::refresh: ids and codes differ in length");
    for (std::size_t n = 0; n < ids.size(); ++n) {
      check_length(codes[n]);
      if (ids[n] >= size()) throw std::out_of_range("CodeBook::refresh: id out of range");
    }
    for (std::size_t n = 0; n < ids.size(); ++n) {
      auto src = codes[n].bits();
      std::copy(src.begin(), src.end(), bits_.begin() + static_cast<std::ptrdiff_t>(ids[n] * k_));
    }
    ++version_;
  }

 private:
  void check_length(const BinaryCode& c) const {
    if (c.size() != k_) {
      throw LengthError("CodeBook expects codes of length " + std::to_string(k_) + ", got " +
                        std::to_string(c.size()));
    }
  }

  std::size_t k_ = 0;
  std::vector<std::int8_t> bits_;
  std::uint64_t version_ = 0;
};

struct Partition {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Positives share at least one class with `target`; negatives share none.
inline Partition partition(std::span<const LabelVector> labels, const LabelVector& target) {
  Partition p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i].overlaps(target) ? p.positives : p.negatives).push_back(i);
  }
  return p;
}

/// w_{i/j} = (N / N_{p/n}) * s_{i/j} with s_i = z_i and s_j = M - z_j, where z
/// is the binary share-any-class similarity and M = 1.
struct WeightScheme {
  double max_similarity = 1.0;

  double positive_weight(std::size_t total, std::size_t n_pos, double z) const {
    return n_pos == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(n_pos) * z;
  }
  double negative_weight(std::size_t total, std::size_t n_neg, double z) const {
    return n_neg == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(n_neg) * (max_similarity - z);
  }
};

struct CenterWeights {
  std::vector<double> positive;
  std::vector<double> negative;
};

inline CenterWeights balanced_weights(std::span<const LabelVector> labels, const LabelVector& target,
                                      const Partition& p, const WeightScheme& scheme = {}) {
  const std::size_t total = p.positives.size() + p.negatives.size();
  CenterWeights w;
  w.positive.reserve(p.positives.size());
  w.negative.reserve(p.negatives.size());
  for (auto i : p.positives) {
    w.positive.push_back(scheme.positive_weight(total, p.positives.size(), similarity(labels[i], target)));
  }
  for (auto j : p.negatives) {
    w.negative.push_back(scheme.negative_weight(total, p.negatives.size(), similarity(labels[j], target)));
  }
  return w;
}

struct CenterCode {
  BinaryCode code;
  std::size_t source_index = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

namespace detail {

inline void check_sets(const CodeBook& book, std::span<const std::size_t> ids, std::span<const double> weights,
                       const char* what) {
  if (ids.size() != weights.size()) {
    throw LengthError(std::string(what) + ": ids and weights differ in length");
  }
  for (auto i : ids) {
    if (i >= book.size()) throw std::out_of_range(std::string(what) + ": id out of range");
  }
}

}  // namespace detail

/// Closed-form center: sign(sum_i w_i b_i - sum_j w_j b_j), sign(0) = +1.
inline CenterCode chcm(const CodeBook& book, std::span<const std::size_t> positives,
                       std::span<const double> positive_weights, std::span<const std::size_t> negatives,
                       std::span<const double> negative_weights, std::size_t source_index = 0) {
  if (positives.empty()) throw DegenerateInputError("chcm: empty positive set leaves the center unanchored");
  detail::check_sets(book, positives, positive_weights, "chcm positives");
  detail::check_sets(book, negatives, negative_weights, "chcm negatives");
  const std::size_t k = book.code_length();
  std::vector<double> acc(k, 0.0);
  for (std::size_t n = 0; n < positives.size(); ++n) {
    auto r = book.row(positives[n]);
    for (std::size_t b = 0; b < k; ++b) acc[b] += positive_weights[n] * r[b];
  }
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    auto r = book.row(negatives[n]);
    for (std::size_t b = 0; b < k; ++b) acc[b] -= negative_weights[n] * r[b];
  }
  return CenterCode{quantize(acc), source_index, positives.size(), negatives.size()};
}

/// Partition + balanced weights + closed form for one target label. The code
/// book and `labels` must be aligned by training-sample id.
inline CenterCode center_for(const CodeBook& book, std::span<const LabelVector> labels,
                             const LabelVector& target, std::size_t source_index = 0,
                             const WeightScheme& scheme = {}) {
  if (labels.size() != book.size()) throw LengthError("center_for: labels not aligned with code book");
  auto p = partition(labels, target);
  auto w = balanced_weights(labels, target, p, scheme);
  return chcm(book, p.positives, w.positive, p.negatives, w.negative, source_index);
}

/// psi(b), evaluated directly from Hamming distances.
inline double psi(const CodeBook& book, std::span<const std::size_t> positives,
                  std::span<const double> positive_weights, std::span<const std::size_t> negatives,
                  std::span<const double> negative_weights, const BinaryCode& b) {
  double value = 0.0;
  for (std::size_t n = 0; n < positives.size(); ++n) value += positive_weights[n] * hamming(b, book.code(positives[n]));
  for (std::size_t n = 0; n < negatives.size(); ++n) value -= negative_weights[n] * hamming(b, book.code(negatives[n]));
  return value;
}

struct OracleResult {
  BinaryCode code;
  double psi = 0.0;
};

inline constexpr std::size_t kOracleMaxBits = 16;

/// Exhaustive minimizer of psi over all 2^K codes. Returns the first minimizer
/// in enumeration order (bit k of the counter set means b_k = -1).
inline OracleResult oracle_center(const CodeBook& book, std::span<const std::size_t> positives,
                                  std::span<const double> positive_weights, std::span<const std::size_t> negatives,
                                  std::span<const double> negative_weights) {
  const std::size_t k = book.code_length();
  if (k > kOracleMaxBits) {
    throw CapabilityError("oracle_center: K = " + std::to_string(k) + " exceeds the enumeration limit of " +
                          std::to_string(kOracleMaxBits));
  }
  detail::check_sets(book, positives, positive_weights, "oracle positives");
  detail::check_sets(book, negatives, negative_weights, "oracle negatives");

  std::vector<BinaryCode> pos_codes, neg_codes;
  for (auto i : positives) pos_codes.push_back(book.code(i));
  for (auto j : negatives) neg_codes.push_back(book.code(j));

  OracleResult best;
  bool have = false;
  const std::uint64_t total = std::uint64_t{1} << k;
  BinaryCode b(k);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t bit = 0; bit < k; ++bit) b.set(bit, (mask >> bit) & 1U ? -1 : 1);
    double value = 0.0;
    for (std::size_t n = 0; n < pos_codes.size(); ++n) value += positive_weights[n] * hamming(b, pos_codes[n]);
    for (std::size_t n = 0; n < neg_codes.size(); ++n) value -= negative_weights[n] * hamming(b, neg_codes[n]);
    if (!have || value < best.psi) {
      best = OracleResult{b, value};
      have = true;
    }
  }
  return best;
}

}  // namespace cgat
