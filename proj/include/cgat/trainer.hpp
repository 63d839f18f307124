#pragma once

// Baseline and center-guided adversarial training.
//
// Per batch of the adversarial loop:
//   1. center codes from the current code book (closed form)
//   2. PGD adversarial batch with theta frozen
//   3. one SGD-with-momentum step on (1/n) * (L_ori(clean) + lambda * L_adv(adv))
//   4. code book refresh B_i = F(x_i) for the batch, using the updated theta
//
// Baseline training runs step 3 with lambda = 0 and skips 1, 2 and 4.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgat/attack.hpp"
#include "cgat/center.hpp"
#include "cgat/dataset.hpp"
#include "cgat/diffcore.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/loss.hpp"

namespace cgat {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda = 1.0;
  double quantization_weight = kDefaultQuantizationWeight;
  AdvConfig adv;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  int checkpoint_every = 0;             // epochs; 0 disables
  std::filesystem::path checkpoint_path;  // "<path>.epoch<E>" files

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (!(quantization_weight >= 0.0)) throw std::invalid_argument("TrainConfig: quantization weight must be >= 0");
    adv.validate();
  }
};

/// L_adv = -sum_i (1/K) (b*_i)^T f_theta(x'_i), evaluated without gradients.
inline double adv_loss(const HashModel& model, std::span<const double> batch_adv, std::span<const CenterCode> centers) {
  if (batch_adv.size() != centers.size() * model.input_dim()) {
    throw diff::ShapeError("adv_loss: adversarial batch not aligned with centers");
  }
  if (centers.empty()) return 0.0;
  std::vector<BinaryCode> codes;
  codes.reserve(centers.size());
  for (const auto& c : centers) codes.push_back(c.code);
  diff::Tape tape(diff::ParamGrad::frozen);
  auto h = model.forward(tape, tape.input(batch_adv, centers.size(), model.input_dim()));
  return tape.scalar(center_alignment(tape, h, codes));
}

/// Heavy-ball SGD: v = momentum * v + (g + wd * theta); theta -= lr * v.
class SgdMomentum {
 public:
  SgdMomentum(const HashModel& model, double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), wd_(weight_decay) {
    for (const auto* p : model.params()) velocity_.emplace_back(p->size(), 0.0);
  }

  void step(HashModel& model) {
    auto ps = model.params();
    for (std::size_t t = 0; t < ps.size(); ++t) {
      auto& p = *ps[t];
      auto& v = velocity_[t];
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double g = p.grad[i] + wd_ * p.values[i];
        v[i] = momentum_ * v[i] + g;
        p.values[i] -= lr_ * v[i];
      }
    }
  }

 private:
  double lr_, momentum_, wd_;
  std::vector<std::vector<double>> velocity_;
};

struct TrainLogRow {
  int epoch = 0;
  std::size_t batch = 0;
  double l_ori = 0.0;
  double l_adv = 0.0;
  double l_cat = 0.0;
  double wall_ms = 0.0;
};

/// Snapshot handed to an observer after every batch.
struct BatchEvent {
  int epoch = 0;
  std::size_t batch = 0;
  std::span<const std::size_t> ids;              // training-sample ids of the batch
  std::uint64_t codebook_version_at_centers = 0;  // version the centers were computed from
  std::uint64_t codebook_version_after = 0;
  const CodeBook* codebook = nullptr;             // null for baseline training
  const HashModel* model = nullptr;
  std::span<const CenterCode> centers;
  std::span<const double> adversarial;            // row-major, aligned with ids
};

using BatchObserver = std::function<void(const BatchEvent&)>;

struct TrainResult {
  HashModel model;
  std::vector<TrainLogRow> log;
  std::vector<std::vector<std::size_t>> batch_orders;  // shuffled ids, one entry per epoch
  CodeBook codebook;                                    // final B (adversarial training only)

  /// Mean L_cat per epoch, in epoch order.
  std::vector<double> epoch_mean_loss() const {
    std::vector<double> out;
    std::vector<std::size_t> counts;
    for (const auto& r : log) {
      const auto e = static_cast<std::size_t>(r.epoch);
      if (out.size() <= e) {
        out.resize(e + 1, 0.0);
        counts.resize(e + 1, 0);
      }
      out[e] += r.l_cat;
      ++counts[e];
    }
    for (std::size_t e = 0; e < out.size(); ++e) {
      if (counts[e]) out[e] /= static_cast<double>(counts[e]);
    }
    return out;
  }
};

inline std::string log_to_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "epoch,batch,L_ori,L_adv,L_cat,wall_ms\n";
  for (const auto& r : log) {
    os << r.epoch << ',' << r.batch << ',' << io::format_double(r.l_ori) << ',' << io::format_double(r.l_adv) << ','
       << io::format_double(r.l_cat) << ',' << io::format_double(r.wall_ms) << '\n';
  }
  return os.str();
}

namespace detail {

enum class TrainMode { baseline, adversarial };

inline std::vector<double> gather_rows(std::span<const double> features, std::size_t dim,
                                       std::span<const std::size_t> ids) {
  std::vector<double> out;
  out.reserve(ids.size() * dim);
  for (auto i : ids) {
    auto r = features.subspan(i * dim, dim);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

inline void check_finite(double v, const char* what, int epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string(what) + " became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch) + "; lower the learning rate or check the inputs");
  }
}

inline TrainResult run_training(HashModel model, const Subset& train, const TrainConfig& cfg, TrainMode mode,
                                const BatchObserver& observer) {
  cfg.validate();
  if (train.size() == 0) throw TrainingError("training set is empty");
  if (train.dim != model.input_dim()) {
    throw diff::ShapeError("training features have width " + std::to_string(train.dim) + ", model expects " +
                           std::to_string(model.input_dim()));
  }

  TrainResult result;
  const std::size_t n_train = train.size();
  const std::size_t d = model.input_dim();
  const bool adversarial = mode == TrainMode::adversarial;
  if (adversarial) result.codebook = CodeBook(encode(model, train.features, n_train));

  SgdMomentum opt(model, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n_train);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    result.batch_orders.push_back(order);

    for (std::size_t start = 0, batch = 0; start < n_train; start += cfg.batch_size, ++batch) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t n = std::min(cfg.batch_size, n_train - start);
      std::span<const std::size_t> ids(order.data() + start, n);
      const auto x = gather_rows(train.features, d, ids);
      std::vector<LabelVector> labels;
      labels.reserve(n);
      for (auto i : ids) labels.push_back(train.labels[i]);

      // (1) centers and (2) adversarial batch, theta frozen.
      std::vector<CenterCode> centers;
      std::vector<BinaryCode> center_codes;
      std::vector<double> x_adv;
      std::uint64_t version_at_centers = 0;
      if (adversarial) {
        version_at_centers = result.codebook.version();
        centers.reserve(n);
        for (auto i : ids) {
          centers.push_back(center_for(result.codebook, train.labels, train.labels[i], i));
          center_codes.push_back(centers.back().code);
        }
        x_adv = pgd_batch(model, x, center_codes, cfg.adv, cfg.workers);
      }

      // (3) descent on L_cat with x' fixed.
      model.zero_grad();
      diff::Tape tape;
      const bool adv_branch = adversarial && cfg.lambda != 0.0;
      const auto adv_rows = adv_branch ? std::span<const double>(x_adv) : std::span<const double>{};
      auto obj = cat_objective(tape, model, x, labels, adv_rows, center_codes, cfg.lambda, cfg.quantization_weight);
      // Logged losses carry the same 1/n factor as the objective.
      double l_adv_value = 0.0;
      if (obj.has_adv) {
        l_adv_value = tape.scalar(obj.l_adv);
      } else if (adversarial) {
        l_adv_value = adv_loss(model, x_adv, centers) / static_cast<double>(n);
      }
      const double l_ori_value = tape.scalar(obj.l_ori);
      const double l_cat_value = tape.scalar(obj.l_cat);
      check_finite(l_cat_value, "training loss", epoch, batch);
      check_finite(l_adv_value, "adversarial loss", epoch, batch);
      tape.backward(obj.l_cat);
      opt.step(model);

      // (4) refresh B from clean inputs under the updated parameters.
      if (adversarial) result.codebook.refresh(ids, encode(model, x, n));

      const auto t1 = std::chrono::steady_clock::now();
      result.log.push_back(TrainLogRow{epoch, batch, l_ori_value, l_adv_value, l_cat_value,
                                       std::chrono::duration<double, std::milli>(t1 - t0).count()});
      if (observer) {
        BatchEvent ev;
        ev.epoch = epoch;
        ev.batch = batch;
        ev.ids = ids;
        ev.codebook_version_at_centers = version_at_centers;
        ev.codebook_version_after = adversarial ? result.codebook.version() : 0;
        ev.codebook = adversarial ? &result.codebook : nullptr;
        ev.model = &model;
        ev.centers = centers;
        ev.adversarial = x_adv;
        observer(ev);
      }
    }

    for (const auto* p : model.params()) {
      for (double v : p->values) check_finite(v, "model parameter", epoch, 0);
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && (epoch + 1) % cfg.checkpoint_every == 0) {
      auto path = cfg.checkpoint_path;
      path += ".epoch" + std::to_string(epoch + 1);
      save_checkpoint(model, path);
    }
  }
  model.zero_grad();
  result.model = std::move(model);
  return result;
}

}  // namespace detail

/// Standard training on L_ori only; the undefended comparison model and the
/// warm start for adversarial training.
inline TrainResult pretrain_baseline(HashModel model, const Subset& train, const TrainConfig& cfg,
                                     const BatchObserver& observer = {}) {
  return detail::run_training(std::move(model), train, cfg, detail::TrainMode::baseline, observer);
}

inline TrainResult train_cgat(HashModel model, const Subset& train, const TrainConfig& cfg,
                              const BatchObserver& observer = {}) {
  return detail::run_training(std::move(model), train, cfg, detail::TrainMode::adversarial, observer);
}

}  // namespace cgat
