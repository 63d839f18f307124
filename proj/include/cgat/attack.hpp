#pragma once

// Center-guided PGD: push f_theta(x') away from the center code b* under an
// L-infinity budget.
//
//   L_ca = -(1/K) (b*)^T f_theta(x')
//   x'_t = clip_[0,1]( clip_{x +/- eps}( x'_{t-1} + alpha * sign(grad L_ca) ) )
//
// Coordinates whose gradient is exactly zero take no step.

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cgat/center.hpp"
#include "cgat/diffcore.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/loss.hpp"

namespace cgat {

struct AdvConfig {
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int iterations = 7;

  void validate() const {
    if (!(alpha > 0.0) || !(alpha <= epsilon)) {
      throw std::invalid_argument("AdvConfig requires 0 < alpha <= epsilon");
    }
    if (iterations < 0) throw std::invalid_argument("AdvConfig requires iterations >= 0");
  }
};

/// L_ca for a single input.
inline double attack_loss(const HashModel& model, std::span<const double> x_adv, const BinaryCode& center) {
  diff::Tape tape(diff::ParamGrad::frozen);
  auto h = model.forward(tape, tape.input(x_adv));
  return tape.scalar(center_alignment(tape, h, std::span<const BinaryCode>(&center, 1)));
}

/// Mean L_ca over a row-major batch.
inline double mean_attack_loss(const HashModel& model, std::span<const double> x_adv,
                               std::span<const BinaryCode> centers) {
  if (centers.empty()) return 0.0;
  diff::Tape tape(diff::ParamGrad::frozen);
  auto h = model.forward(tape, tape.input(x_adv, centers.size(), model.input_dim()));
  return tape.scalar(center_alignment(tape, h, centers)) / static_cast<double>(centers.size());
}

namespace detail {

/// PGD on rows [begin, end) of `x`, writing into the same rows of `out`.
inline void pgd_rows(const HashModel& model, std::span<const double> x, std::span<const BinaryCode> centers,
                     const AdvConfig& cfg, std::size_t begin, std::size_t end, std::span<double> out) {
  const std::size_t d = model.input_dim();
  const std::size_t n = end - begin;
  if (n == 0) return;
  auto orig = x.subspan(begin * d, n * d);
  auto adv = out.subspan(begin * d, n * d);
  std::copy(orig.begin(), orig.end(), adv.begin());
  auto batch_centers = centers.subspan(begin, n);
  for (int t = 0; t < cfg.iterations; ++t) {
    diff::Tape tape(diff::ParamGrad::frozen);
    auto xv = tape.input(adv, n, d);
    auto loss = center_alignment(tape, model.forward(tape, xv), batch_centers);
    tape.backward(loss);
    auto g = tape.grad(xv);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      double v = adv[i];
      if (g[i] > 0.0) {
        v += cfg.alpha;
      } else if (g[i] < 0.0) {
        v -= cfg.alpha;
      }
      v = std::clamp(v, orig[i] - cfg.epsilon, orig[i] + cfg.epsilon);
      adv[i] = std::clamp(v, 0.0, 1.0);
    }
  }
}

}  // namespace detail

/// Batched PGD over row-major inputs (rows = centers.size()). Rows are
/// independent, so `workers` > 1 splits them across threads with identical
/// results.
inline std::vector<double> pgd_batch(const HashModel& model, std::span<const double> x,
                                     std::span<const BinaryCode> centers, const AdvConfig& cfg,
                                     unsigned workers = 1) {
  cfg.validate();
  const std::size_t d = model.input_dim();
  const std::size_t n = centers.size();
  if (x.size() != n * d) throw diff::ShapeError("pgd: inputs not aligned with centers");
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("pgd: inputs must lie in [0,1]");
  }
  std::vector<double> out(x.size());
  workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    detail::pgd_rows(model, x, centers, cfg, 0, n, out);
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t per = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * per);
    const std::size_t end = std::min(n, begin + per);
    pool.emplace_back([&, begin, end] { detail::pgd_rows(model, x, centers, cfg, begin, end, out); });
  }
  pool.clear();
  return out;
}

inline std::vector<double> pgd(const HashModel& model, std::span<const double> x, const CenterCode& center,
                               const AdvConfig& cfg) {
  return pgd_batch(model, x, std::span<const BinaryCode>(&center.code, 1), cfg);
}

}  // namespace cgat
