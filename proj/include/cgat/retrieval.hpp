#pragma once

// Exhaustive Hamming ranking over a bit-packed database and the retrieval
// metrics computed from it (MAP@top_n, PR and P@N curves).
//
// Relevance: a database item is relevant to a query iff their labels share at
// least one class. Rankings sort by ascending Hamming distance, ties broken by
// ascending database id.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cgat/code.hpp"
#include "cgat/io.hpp"
#include "cgat/labels.hpp"

namespace cgat {

class HammingIndex {
 public:
  HammingIndex() = default;

  HammingIndex(std::span<const BinaryCode> codes, std::span<const LabelVector> labels) {
    if (codes.size() != labels.size()) throw LengthError("build_index: codes and labels differ in length");
    if (!codes.empty()) k_ = codes.front().size();
    words_ = (k_ + 63) / 64;
    packed_.reserve(codes.size() * words_);
    for (const auto& c : codes) {
      if (c.size() != k_) throw LengthError("build_index: codes have non-uniform length");
      auto p = pack(c);
      packed_.insert(packed_.end(), p.begin(), p.end());
    }
    labels_.assign(labels.begin(), labels.end());
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t code_length() const { return k_; }
  const LabelVector& label(std::size_t i) const { return labels_.at(i); }

  /// Packed words: bit k of the code is set iff entry k is -1.
  std::vector<std::uint64_t> pack(const BinaryCode& c) const {
    std::vector<std::uint64_t> out((c.size() + 63) / 64, 0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] < 0) out[k / 64] |= std::uint64_t{1} << (k % 64);
    }
    return out;
  }

  BinaryCode unpack(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("HammingIndex::unpack: id out of range");
    std::vector<std::int8_t> bits(k_);
    const std::uint64_t* w = packed_.data() + i * words_;
    for (std::size_t k = 0; k < k_; ++k) bits[k] = ((w[k / 64] >> (k % 64)) & 1U) ? -1 : 1;
    return BinaryCode(std::move(bits));
  }

  std::vector<int> distances(const BinaryCode& query) const {
    check_query(query);
    const auto q = pack(query);
    std::vector<int> d(size());
    for (std::size_t i = 0; i < size(); ++i) {
      const std::uint64_t* w = packed_.data() + i * words_;
      int acc = 0;
      for (std::size_t j = 0; j < words_; ++j) acc += std::popcount(w[j] ^ q[j]);
      d[i] = acc;
    }
    return d;
  }

  /// Database ids by ascending distance, then ascending id (bucket sort).
  std::vector<std::size_t> rank(const BinaryCode& query) const {
    const auto d = distances(query);
    std::vector<std::size_t> start(k_ + 2, 0);
    for (int v : d) ++start[static_cast<std::size_t>(v) + 1];
    for (std::size_t b = 1; b < start.size(); ++b) start[b] += start[b - 1];
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < size(); ++i) order[start[static_cast<std::size_t>(d[i])]++] = i;
    return order;
  }

  /// 1/0 relevance of the ranked database for a query label.
  std::vector<std::uint8_t> ranked_relevance(const BinaryCode& query, const LabelVector& query_label) const {
    auto order = rank(query);
    std::vector<std::uint8_t> rel(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) rel[r] = labels_[order[r]].overlaps(query_label) ? 1 : 0;
    return rel;
  }

 private:
  void check_query(const BinaryCode& q) const {
    if (!empty() && q.size() != k_) {
      throw LengthError("query code length " + std::to_string(q.size()) + " does not match index K " +
                        std::to_string(k_));
    }
  }

  std::size_t k_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> packed_;
  std::vector<LabelVector> labels_;
};

inline HammingIndex build_index(std::span<const BinaryCode> codes, std::span<const LabelVector> labels) {
  return HammingIndex(codes, labels);
}

enum class ApNormalization {
  relevant_in_top_n,   // divide by the relevant count inside the top_n cut
  min_total_and_top_n, // divide by min(total relevant in database, top_n)
};

/// AP of a ranked 1/0 relevance list, restricted to the first top_n entries.
inline double average_precision(std::span<const std::uint8_t> relevance, std::size_t top_n,
                                 ApNormalization norm = ApNormalization::relevant_in_top_n) {
  const std::size_t cut = std::min(top_n, relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < cut; ++r) {
    if (relevance[r]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  std::size_t denom = hits;
  if (norm == ApNormalization::min_total_and_top_n) {
    const auto total = static_cast<std::size_t>(std::count(relevance.begin(), relevance.end(), std::uint8_t{1}));
    denom = std::min(total, top_n);
  }
  return denom == 0 ? 0.0 : sum / static_cast<double>(denom);
}

struct QuerySet {
  std::span<const BinaryCode> codes;
  std::span<const LabelVector> labels;
};

struct PrPoint {
  std::size_t cutoff = 0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PnPoint {
  std::size_t n = 0;
  double precision = 0.0;
};

struct MetricsReport {
  double map_at_n = 0.0;
  std::size_t top_n = 0;
  std::size_t query_count = 0;
  std::vector<PrPoint> pr_points;
  std::vector<PnPoint> pn_points;
};

namespace detail {

inline void check_queries(const QuerySet& q) {
  if (q.codes.empty()) throw std::invalid_argument("retrieval metrics need at least one query");
  if (q.codes.size() != q.labels.size()) throw LengthError("query codes and labels differ in length");
}

/// Runs fn(query_index) for every query, splitting across workers. Each call
/// writes only its own output slot, so results do not depend on `workers`.
template <typename Fn>
void for_each_query(std::size_t count, unsigned workers, Fn&& fn) {
  workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t q = 0; q < count; ++q) fn(q);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t per = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * per);
    const std::size_t end = std::min(count, begin + per);
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t q = begin; q < end; ++q) fn(q);
    });
  }
}

}  // namespace detail

inline double mean_average_precision(const HammingIndex& index, const QuerySet& queries, std::size_t top_n,
                                     unsigned workers = 1,
                                     ApNormalization norm = ApNormalization::relevant_in_top_n) {
  detail::check_queries(queries);
  if (top_n == 0) throw std::invalid_argument("top_n must be at least 1");
  std::vector<double> ap(queries.codes.size());
  detail::for_each_query(ap.size(), workers, [&](std::size_t q) {
    ap[q] = average_precision(index.ranked_relevance(queries.codes[q], queries.labels[q]), top_n, norm);
  });
  double sum = 0.0;
  for (double v : ap) sum += v;
  return sum / static_cast<double>(ap.size());
}

/// Evenly spaced rank cutoffs ending at the database size.
inline std::vector<std::size_t> default_pr_cutoffs(std::size_t database_size, std::size_t points = 100) {
  std::vector<std::size_t> out;
  if (database_size == 0) return out;
  const std::size_t step = std::max<std::size_t>(1, database_size / points);
  for (std::size_t c = step; c < database_size; c += step) out.push_back(c);
  out.push_back(database_size);
  return out;
}

inline std::vector<std::size_t> default_pn_grid(std::size_t database_size) {
  std::vector<std::size_t> out;
  for (std::size_t n = 100; n <= 1000 && n <= database_size; n += 100) out.push_back(n);
  if (out.empty() && database_size > 0) out.push_back(database_size);
  return out;
}

/// Precision and recall at each rank cutoff, averaged over queries. Recall is
/// relative to all relevant items in the database (0 when there are none).
inline std::vector<PrPoint> pr_curve(const HammingIndex& index, const QuerySet& queries,
                                     std::span<const std::size_t> cutoffs, unsigned workers = 1) {
  detail::check_queries(queries);
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] == 0 || cutoffs[i] > index.size() || (i > 0 && cutoffs[i] <= cutoffs[i - 1])) {
      throw std::invalid_argument("PR cutoffs must be increasing and within [1, database size]");
    }
  }
  const std::size_t nq = queries.codes.size();
  std::vector<double> prec(nq * cutoffs.size()), rec(nq * cutoffs.size());
  detail::for_each_query(nq, workers, [&](std::size_t q) {
    auto rel = index.ranked_relevance(queries.codes[q], queries.labels[q]);
    const auto total = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), std::uint8_t{1}));
    std::size_t hits = 0, r = 0;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      for (; r < cutoffs[c]; ++r) hits += rel[r];
      prec[q * cutoffs.size() + c] = static_cast<double>(hits) / static_cast<double>(cutoffs[c]);
      rec[q * cutoffs.size() + c] = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    }
  });
  std::vector<PrPoint> out(cutoffs.size());
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    double p = 0.0, rc = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      p += prec[q * cutoffs.size() + c];
      rc += rec[q * cutoffs.size() + c];
    }
    out[c] = PrPoint{cutoffs[c], rc / static_cast<double>(nq), p / static_cast<double>(nq)};
  }
  return out;
}

inline std::vector<PrPoint> pr_curve(const HammingIndex& index, const QuerySet& queries, unsigned workers = 1) {
  const auto cutoffs = default_pr_cutoffs(index.size());
  return pr_curve(index, queries, cutoffs, workers);
}

inline std::vector<PnPoint> p_at_n_curve(const HammingIndex& index, const QuerySet& queries,
                                         std::span<const std::size_t> n_grid, unsigned workers = 1) {
  std::vector<std::size_t> cut(n_grid.begin(), n_grid.end());
  for (auto& n : cut) n = std::min(n, index.size());
  std::vector<PnPoint> out;
  if (index.empty()) {
    detail::check_queries(queries);
    for (auto n : n_grid) out.push_back(PnPoint{n, 0.0});
    return out;
  }
  // P@N equals the PR-curve precision at cutoff N.
  std::vector<std::size_t> uniq(cut);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (!uniq.empty() && uniq.front() == 0) throw std::invalid_argument("P@N grid entries must be positive");
  auto pr = pr_curve(index, queries, uniq, workers);
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    auto it = std::lower_bound(uniq.begin(), uniq.end(), cut[i]);
    out.push_back(PnPoint{n_grid[i], pr[static_cast<std::size_t>(it - uniq.begin())].precision});
  }
  return out;
}

struct EvalConfig {
  std::size_t top_n = 500;
  std::vector<std::size_t> pn_grid;      // empty: default_pn_grid
  std::vector<std::size_t> pr_cutoffs;   // empty: default_pr_cutoffs
  ApNormalization norm = ApNormalization::relevant_in_top_n;
  unsigned workers = 1;
};

inline MetricsReport evaluate(const HammingIndex& index, const QuerySet& queries, const EvalConfig& cfg = {}) {
  MetricsReport rep;
  rep.top_n = cfg.top_n;
  rep.query_count = queries.codes.size();
  rep.map_at_n = mean_average_precision(index, queries, cfg.top_n, cfg.workers, cfg.norm);
  if (index.empty()) return rep;
  auto cutoffs = cfg.pr_cutoffs.empty() ? default_pr_cutoffs(index.size()) : cfg.pr_cutoffs;
  auto grid = cfg.pn_grid.empty() ? default_pn_grid(index.size()) : cfg.pn_grid;
  rep.pr_points = pr_curve(index, queries, cutoffs, cfg.workers);
  rep.pn_points = p_at_n_curve(index, queries, grid, cfg.workers);
  return rep;
}

/// CSV: kind,n,recall,precision,map,queries. One summary row, then one row
/// per PR point (n = rank cutoff) and per P@N point.
inline std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "kind,n,recall,precision,map,queries\n";
  os << "summary," << r.top_n << ",,," << io::format_double(r.map_at_n) << ',' << r.query_count << '\n';
  for (const auto& p : r.pr_points) {
    os << "pr," << p.cutoff << ',' << io::format_double(p.recall) << ',' << io::format_double(p.precision) << ",,\n";
  }
  for (const auto& p : r.pn_points) os << "pn," << p.n << ",," << io::format_double(p.precision) << ",,\n";
  return os.str();
}

inline MetricsReport metrics_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "kind,n,recall,precision,map,queries") {
    throw std::runtime_error("metrics CSV: unexpected header");
  }
  MetricsReport r;
  bool have_summary = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    while (f.size() < 6) f.emplace_back();
    try {
      if (f[0] == "summary") {
        r.top_n = std::stoull(f[1]);
        r.map_at_n = std::stod(f[4]);
        r.query_count = std::stoull(f[5]);
        have_summary = true;
      } else if (f[0] == "pr") {
        r.pr_points.push_back(PrPoint{std::stoull(f[1]), std::stod(f[2]), std::stod(f[3])});
      } else if (f[0] == "pn") {
        r.pn_points.push_back(PnPoint{std::stoull(f[1]), std::stod(f[3])});
      } else {
        throw std::runtime_error("metrics CSV: unknown row kind '" + f[0] + "'");
      }
    } catch (const std::logic_error&) {
      throw std::runtime_error("metrics CSV: malformed row '" + line + "'");
    }
  }
  if (!have_summary) throw std::runtime_error("metrics CSV: missing summary row");
  return r;
}

/// Short human-readable summary for terminals.
inline std::string summary_text(const MetricsReport& r) {
  std::ostringstream os;
  os << "MAP@" << r.top_n << " = " << io::format_double(r.map_at_n) << " over " << r.query_count << " queries";
  for (const auto& p : r.pn_points) {
    if (p.n == 100 || p.n == 500 || p.n == 1000) os << "; P@" << p.n << " = " << io::format_double(p.precision);
  }
  return os.str();
}

}  // namespace cgat
