#pragma once

// End-to-end helpers shared by the CLI and the acceptance suite: attack a
// query split against centers derived from the training code book, and score
// a model on a database/query split.

#include <cstddef>
#include <span>
#include <vector>

#include "cgat/attack.hpp"
#include "cgat/center.hpp"
#include "cgat/dataset.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/retrieval.hpp"

namespace cgat {

/// Center codes for arbitrary labels, taken from B = F(train) under `model`.
inline std::vector<CenterCode> centers_for_labels(const HashModel& model, const Subset& train,
                                                  std::span<const LabelVector> labels) {
  const CodeBook book(encode(model, train.features, train.size()));
  std::vector<CenterCode> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back(center_for(book, train.labels, labels[i], i));
  return out;
}

/// Adversarial copies of `queries` (row-major, same shape).
inline std::vector<double> attack_queries(const HashModel& model, const Subset& train, const Subset& queries,
                                          const AdvConfig& cfg, unsigned workers = 1) {
  const auto centers = centers_for_labels(model, train, queries.labels);
  std::vector<BinaryCode> codes;
  codes.reserve(centers.size());
  for (const auto& c : centers) codes.push_back(c.code);
  return pgd_batch(model, queries.features, codes, cfg, workers);
}

inline MetricsReport evaluate_model(const HashModel& model, const Subset& database,
                                    std::span<const double> query_features, std::span<const LabelVector> query_labels,
                                    const EvalConfig& cfg = {}) {
  const auto db_codes = encode(model, database.features, database.size());
  const auto index = build_index(db_codes, database.labels);
  const auto q_codes = encode(model, query_features, query_labels.size());
  return evaluate(index, QuerySet{q_codes, query_labels}, cfg);
}

inline double map_of(const HashModel& model, const Subset& database, std::span<const double> query_features,
                     std::span<const LabelVector> query_labels, std::size_t top_n, unsigned workers = 1) {
  const auto db_codes = encode(model, database.features, database.size());
  const auto index = build_index(db_codes, database.labels);
  const auto q_codes = encode(model, query_features, query_labels.size());
  return mean_average_precision(index, QuerySet{q_codes, query_labels}, top_n, workers);
}

}  // namespace cgat
