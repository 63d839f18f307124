#pragma once

// The hashing network f_theta: a stack of dense layers, each followed by tanh,
// whose last width is the code length K. F(x) = sign(f_theta(x)).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgat/code.hpp"
#include "cgat/diffcore.hpp"
#include "cgat/io.hpp"

namespace cgat {

class HashModel {
 public:
  HashModel() = default;

  /// He-style initialization: weights ~ N(0, 2 / fan_in), biases zero.
  /// layer_dims = {d, hidden..., K}.
  static HashModel create(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
    HashModel m = zeros(std::move(layer_dims));
    std::mt19937_64 rng(seed);
    for (auto& layer : m.layers_) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.in_dim())));
      for (double& w : layer.weights.values) w = dist(rng);
    }
    return m;
  }

  /// All parameters zero.
  static HashModel zeros(std::vector<std::size_t> layer_dims) {
    if (layer_dims.size() < 2) throw std::invalid_argument("HashModel needs at least input and code widths");
    for (auto w : layer_dims) {
      if (w == 0) throw std::invalid_argument("HashModel layer widths must be positive");
    }
    HashModel m;
    m.dims_ = std::move(layer_dims);
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) m.layers_.emplace_back(m.dims_[l], m.dims_[l + 1]);
    return m;
  }

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t code_length() const { return dims_.back(); }

  std::vector<diff::DenseParams>& layers() { return layers_; }
  const std::vector<diff::DenseParams>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Flat views over every parameter tensor in a fixed order (W0, b0, W1, b1, ...).
  std::vector<diff::ParamTensor*> params() {
    std::vector<diff::ParamTensor*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const diff::ParamTensor*> params() const {
    std::vector<const diff::ParamTensor*> out;
    for (const auto& l : layers_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Records f_theta on `tape` for a batch x (rows x input_dim). Parameter
  /// gradients accumulate according to the tape's mode.
  diff::Var forward(diff::Tape& tape, diff::Var x) {
    diff::Var h = x;
    for (auto& layer : layers_) h = tape.tanh(tape.dense(h, layer));
    return h;
  }

  /// Read-only variant: gradients flow to the input only.
  diff::Var forward(diff::Tape& tape, diff::Var x) const {
    diff::Var h = x;
    for (const auto& layer : layers_) h = tape.tanh(tape.dense(h, layer));
    return h;
  }

  friend bool operator==(const HashModel& a, const HashModel& b) {
    if (a.dims_ != b.dims_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (a.layers_[l].weights.values != b.layers_[l].weights.values) return false;
      if (a.layers_[l].bias.values != b.layers_[l].bias.values) return false;
    }
    return true;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<diff::DenseParams> layers_;
};

/// h = f_theta(x) in (-1,1)^K for a single input.
inline std::vector<double> continuous_code(const HashModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw diff::ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                           std::to_string(model.input_dim()));
  }
  diff::Tape tape(diff::ParamGrad::frozen);
  auto h = model.forward(tape, tape.input(x));
  auto v = tape.value(h);
  return {v.begin(), v.end()};
}

/// Continuous codes for a row-major batch (rows x input_dim), returned row-major.
inline std::vector<double> continuous_codes(const HashModel& model, std::span<const double> features,
                                            std::size_t rows) {
  if (rows * model.input_dim() != features.size()) throw diff::ShapeError("batch shape mismatch");
  if (rows == 0) return {};
  diff::Tape tape(diff::ParamGrad::frozen);
  auto h = model.forward(tape, tape.input(features, rows, model.input_dim()));
  auto v = tape.value(h);
  return {v.begin(), v.end()};
}

/// F(x) = sign(f_theta(x)) for every row of a batch.
inline std::vector<BinaryCode> encode(const HashModel& model, std::span<const double> features,
                                      std::size_t rows) {
  const std::size_t k = model.code_length();
  std::vector<BinaryCode> codes;
  codes.reserve(rows);
  // Chunked to bound tape memory on large databases.
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < rows; start += chunk) {
    const std::size_t n = std::min(chunk, rows - start);
    auto h = continuous_codes(model, features.subspan(start * model.input_dim(), n * model.input_dim()), n);
    for (std::size_t r = 0; r < n; ++r) codes.push_back(quantize(std::span<const double>(h).subspan(r * k, k)));
  }
  return codes;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   "CGATCK1"                     magic + format version digit
//   u32 K
//   u32 n_dims, u64 dims[n_dims]
//   u32 n_tensors
//   per tensor: u32 rank, u64 shape[rank], f64 values[prod(shape)]
//
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointTag = "CGATCK";
inline constexpr char kCheckpointVersion = '1';

inline std::vector<char> serialize_checkpoint(const HashModel& model) {
  io::ByteWriter w;
  w.bytes(kCheckpointTag);
  w.u8(static_cast<std::uint8_t>(kCheckpointVersion));
  w.u32(static_cast<std::uint32_t>(model.code_length()));
  w.u32(static_cast<std::uint32_t>(model.layer_dims().size()));
  for (auto d : model.layer_dims()) w.u64(d);
  auto ps = model.params();
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (const auto* p : ps) {
    w.u32(static_cast<std::uint32_t>(p->shape.size()));
    for (auto s : p->shape) w.u64(s);
    for (double v : p->values) w.f64(v);
  }
  return w.data();
}

inline HashModel deserialize_checkpoint(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  io::expect_magic(r, kCheckpointTag, kCheckpointVersion);
  const std::uint32_t k = r.u32();
  const std::uint32_t n_dims = r.u32();
  r.expect_at_least(n_dims, 8);
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) d = r.u64();
  if (dims.size() < 2 || dims.back() != k) throw io::FormatError("checkpoint: K does not match last layer width");
  HashModel model;
  try {
    model = HashModel::zeros(dims);
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(std::string("checkpoint: ") + e.what());
  }
  const std::uint32_t n_tensors = r.u32();
  auto ps = model.params();
  if (n_tensors != ps.size()) throw io::FormatError("checkpoint: tensor count does not match layer_dims");
  for (auto* p : ps) {
    const std::uint32_t rank = r.u32();
    r.expect_at_least(rank, 8);
    std::vector<std::size_t> shape(rank);
    for (auto& s : shape) s = r.u64();
    if (shape != p->shape) throw io::FormatError("checkpoint: tensor shape does not match layer_dims");
    r.expect_at_least(p->values.size(), 8);
    for (double& v : p->values) {
      v = r.f64();
      if (!std::isfinite(v)) throw io::FormatError("checkpoint: non-finite parameter");
    }
  }
  if (r.remaining() != 0) throw io::FormatError("checkpoint: trailing bytes");
  return model;
}

inline void save_checkpoint(const HashModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(model));
}

inline HashModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

}  // namespace cgat
