#pragma once

// Synthetic multi-label retrieval data and its on-disk container.
//
// Dataset file layout (little-endian, no padding):
//
//   "CGATDS1"                               magic + format version digit
//   u64 N, u64 d, u64 C
//   u64 n_train, u64 n_database, u64 n_query
//   f64 features[N * d]                     row-major
//   u8  labels[N * ceil(C / 8)]             bit c of a row lives in byte c/8, bit c%8
//   u8  splits[N]                           bit 0 train, bit 1 database, bit 2 query

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgat/io.hpp"
#include "cgat/labels.hpp"

namespace cgat {

enum SplitFlag : std::uint8_t {
  kTrain = 1U << 0,
  kDatabase = 1U << 1,
  kQuery = 1U << 2,
};

class DatasetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A contiguous copy of some rows of a dataset.
struct Subset {
  std::vector<double> features;
  std::vector<LabelVector> labels;
  std::vector<std::size_t> ids;
  std::size_t dim = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> features;
  std::vector<LabelVector> labels;
  std::vector<std::uint8_t> splits;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  std::size_t count(SplitFlag flag) const {
    return static_cast<std::size_t>(std::count_if(splits.begin(), splits.end(), [flag](auto s) { return (s & flag) != 0; }));
  }

  std::vector<std::size_t> ids(SplitFlag flag) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] & flag) out.push_back(i);
    }
    return out;
  }

  Subset gather(SplitFlag flag) const { return gather(ids(flag)); }

  Subset gather(std::span<const std::size_t> rows) const {
    Subset s;
    s.dim = dim;
    s.ids.assign(rows.begin(), rows.end());
    s.features.reserve(rows.size() * dim);
    for (auto i : rows) {
      auto r = row(i);
      s.features.insert(s.features.end(), r.begin(), r.end());
      s.labels.push_back(labels[i]);
    }
    return s;
  }

  /// Throws DatasetError on any broken invariant.
  void validate() const {
    if (dim == 0) throw DatasetError("dataset: feature dimension is zero");
    if (features.size() != labels.size() * dim || splits.size() != labels.size()) {
      throw DatasetError("dataset: features, labels and split tags are not aligned");
    }
    for (double v : features) {
      if (!(v >= 0.0 && v <= 1.0)) throw DatasetError("dataset: feature outside [0,1]");
    }
    for (const auto& l : labels) {
      if (l.classes() != classes) throw DatasetError("dataset: label width differs from class count");
      if (l.count() == 0) throw DatasetError("dataset: sample without an active class");
    }
    for (auto s : splits) {
      if (s == 0 || (s & ~(kTrain | kDatabase | kQuery)) != 0) throw DatasetError("dataset: invalid split tag");
      if ((s & kQuery) && (s & (kDatabase | kTrain))) throw DatasetError("dataset: query overlaps database or train");
      if ((s & kTrain) && !(s & kDatabase)) throw DatasetError("dataset: train sample outside the database");
    }
  }
};

struct GenSpec {
  std::size_t classes = 8;
  std::size_t dim = 32;
  std::size_t train_count = 2000;
  std::size_t database_count = 4000;
  std::size_t query_count = 200;
  double noise = 0.05;
  double multi_label_prob = 0.3;
  double contrast = 0.25;  // features = 0.5 + contrast * (raw - 0.5)
  std::uint64_t seed = 7;

  void validate() const {
    if (classes < 2) throw DatasetError("GenSpec: at least two classes are required");
    if (dim == 0 || train_count == 0 || database_count == 0 || query_count == 0) {
      throw DatasetError("GenSpec: dimension and split counts must be positive");
    }
    if (train_count > database_count) throw DatasetError("GenSpec: train split must be a subset of the database");
    if (!(noise >= 0.0)) throw DatasetError("GenSpec: noise must be non-negative");
    if (!(contrast > 0.0 && contrast <= 1.0)) throw DatasetError("GenSpec: contrast must be in (0,1]");
    if (!(multi_label_prob >= 0.0 && multi_label_prob <= 1.0)) {
      throw DatasetError("GenSpec: multi-label probability must be in [0,1]");
    }
  }
};

/// Class prototypes drawn for `spec`, in the same order generate() uses them.
inline std::vector<double> generate_prototypes(const GenSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> proto(0.2, 0.8);
  std::vector<double> out(spec.classes * spec.dim);
  for (double& v : out) v = proto(rng);
  return out;
}

/// Database rows come first (the leading train_count of them also tagged
/// train), queries last. Samples are i.i.d., so the train split is a uniform
/// random subset of the database.
///
/// A raw feature is the clipped mean of the sample's class prototypes plus
/// Gaussian noise; the stored feature shrinks it toward 0.5 by `contrast`,
/// which sets how large a fixed L-infinity budget is relative to the class
/// geometry. Returned prototypes are in raw units.
inline Dataset generate(const GenSpec& spec, std::vector<double>* prototypes_out = nullptr) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto prototypes = generate_prototypes(spec, rng);

  Dataset ds;
  ds.dim = spec.dim;
  ds.classes = spec.classes;
  const std::size_t n = spec.database_count + spec.query_count;
  ds.features.resize(n * spec.dim);
  ds.labels.reserve(n);
  ds.splits.resize(n);

  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, spec.classes - 2);
  std::bernoulli_distribution multi(spec.multi_label_prob);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t i = 0; i < n; ++i) {
    LabelVector label(spec.classes);
    const std::size_t first = pick(rng);
    label.set(first);
    std::size_t second = first;
    if (multi(rng)) {
      second = pick_other(rng);
      if (second >= first) ++second;
      label.set(second);
    }
    const double* pa = prototypes.data() + first * spec.dim;
    const double* pb = prototypes.data() + second * spec.dim;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double mean = 0.5 * (pa[j] + pb[j]);
      const double raw = std::clamp(mean + spec.noise * gauss(rng), 0.0, 1.0);
      ds.features[i * spec.dim + j] = spec.contrast == 1.0 ? raw : 0.5 + spec.contrast * (raw - 0.5);
    }
    ds.labels.push_back(std::move(label));
    if (i < spec.database_count) {
      ds.splits[i] = kDatabase | (i < spec.train_count ? kTrain : 0);
    } else {
      ds.splits[i] = kQuery;
    }
  }
  if (prototypes_out) *prototypes_out = std::move(prototypes);
  return ds;
}

inline constexpr std::string_view kDatasetTag = "CGATDS";
inline constexpr char kDatasetVersion = '1';

inline std::vector<char> serialize_dataset(const Dataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.bytes(kDatasetTag);
  w.u8(static_cast<std::uint8_t>(kDatasetVersion));
  w.u64(ds.size());
  w.u64(ds.dim);
  w.u64(ds.classes);
  w.u64(ds.count(kTrain));
  w.u64(ds.count(kDatabase));
  w.u64(ds.count(kQuery));
  for (double v : ds.features) w.f64(v);
  const std::size_t label_bytes = (ds.classes + 7) / 8;
  for (const auto& l : ds.labels) {
    for (std::size_t b = 0; b < label_bytes; ++b) {
      std::uint8_t byte = 0;
      for (std::size_t bit = 0; bit < 8 && b * 8 + bit < ds.classes; ++bit) {
        if (l.test(b * 8 + bit)) byte |= static_cast<std::uint8_t>(1U << bit);
      }
      w.u8(byte);
    }
  }
  for (auto s : ds.splits) w.u8(s);
  return w.data();
}

inline Dataset deserialize_dataset(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  io::expect_magic(r, kDatasetTag, kDatasetVersion);
  Dataset ds;
  const std::uint64_t n = r.u64();
  ds.dim = r.u64();
  ds.classes = r.u64();
  const std::uint64_t n_train = r.u64();
  const std::uint64_t n_db = r.u64();
  const std::uint64_t n_query = r.u64();
  if (ds.dim == 0 || ds.classes == 0) throw io::FormatError("dataset: zero dimension or class count");
  r.expect_at_least(n, 8 * ds.dim);
  ds.features.resize(n * ds.dim);
  for (double& v : ds.features) v = r.f64();
  const std::size_t label_bytes = (ds.classes + 7) / 8;
  r.expect_at_least(n, label_bytes);
  ds.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    LabelVector l(ds.classes);
    for (std::size_t b = 0; b < label_bytes; ++b) {
      const std::uint8_t byte = r.u8();
      for (std::size_t bit = 0; bit < 8; ++bit) {
        if (!((byte >> bit) & 1U)) continue;
        if (b * 8 + bit >= ds.classes) throw io::FormatError("dataset: label bit beyond class count");
        l.set(b * 8 + bit);
      }
    }
    ds.labels.push_back(std::move(l));
  }
  r.expect_at_least(n, 1);
  ds.splits.resize(n);
  for (auto& s : ds.splits) s = r.u8();
  if (r.remaining() != 0) throw io::FormatError("dataset: trailing bytes");
  try {
    ds.validate();
  } catch (const DatasetError& e) {
    throw io::FormatError(e.what());
  }
  if (ds.count(kTrain) != n_train || ds.count(kDatabase) != n_db || ds.count(kQuery) != n_query) {
    throw io::FormatError("dataset: split counts in header disagree with split tags");
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) { return deserialize_dataset(io::read_file(path)); }

}  // namespace cgat
