#pragma once

// Self-checks exposed by the command-line tool: the closed-form center
// against exhaustive search, and tape gradients against central differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cgat/center.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/loss.hpp"

namespace cgat {

struct ChcmCheckReport {
  std::size_t instances = 0;
  std::size_t exact = 0;
  std::string first_failure;

  bool passed() const { return exact == instances; }
};

/// Random instances with K in {4, 8, 12}, 1-50 positives, 0-50 negatives and
/// weights uniform in [0, 3).
inline ChcmCheckReport chcm_check(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight(0.0, 3.0);
  constexpr std::size_t kLengths[] = {4, 8, 12};
  ChcmCheckReport rep;
  rep.instances = instances;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t k = kLengths[t % 3];
    const std::size_t n_pos = 1 + rng() % 50;
    const std::size_t n_neg = rng() % 51;
    CodeBook book(k);
    for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
      BinaryCode c(k);
      for (std::size_t b = 0; b < k; ++b) c.set(b, rng() & 1U ? 1 : -1);
      book.append(c);
    }
    std::vector<std::size_t> pos(n_pos), neg(n_neg);
    for (std::size_t i = 0; i < n_pos; ++i) pos[i] = i;
    for (std::size_t j = 0; j < n_neg; ++j) neg[j] = n_pos + j;
    std::vector<double> wp(n_pos), wn(n_neg);
    for (double& w : wp) w = weight(rng);
    for (double& w : wn) w = weight(rng);

    const auto center = chcm(book, pos, wp, neg, wn);
    const double got = psi(book, pos, wp, neg, wn, center.code);
    const auto best = oracle_center(book, pos, wp, neg, wn);
    if (std::abs(got - best.psi) <= 1e-9 * std::max(1.0, std::abs(best.psi))) {
      ++rep.exact;
    } else if (rep.first_failure.empty()) {
      rep.first_failure = "instance " + std::to_string(t) + ": psi(chcm) = " + std::to_string(got) +
                          ", oracle minimum = " + std::to_string(best.psi);
    }
  }
  return rep;
}

struct GradCheckReport {
  std::size_t models = 0;
  std::size_t partials = 0;
  std::size_t failures = 0;
  double max_relative_error = 0.0;

  bool passed() const { return failures == 0; }
};

namespace detail {

enum class CheckedLoss { ori, ca, adv, cat };

/// Scalar value of the checked loss on a frozen tape.
inline double checked_value(const HashModel& model, CheckedLoss which, std::span<const double> x,
                            std::span<const LabelVector> labels, std::span<const double> x_adv,
                            std::span<const BinaryCode> centers, double lambda) {
  diff::Tape tape(diff::ParamGrad::frozen);
  const std::size_t n = labels.size();
  switch (which) {
    case CheckedLoss::ori:
      return tape.scalar(pairwise_hash_loss(tape, model.forward(tape, tape.input(x, n, model.input_dim())), labels));
    case CheckedLoss::ca:
      return tape.scalar(
          center_alignment(tape, model.forward(tape, tape.input(x_adv.first(model.input_dim()))), centers.first(1)));
    case CheckedLoss::adv:
      return tape.scalar(center_alignment(tape, model.forward(tape, tape.input(x_adv, n, model.input_dim())), centers));
    case CheckedLoss::cat:
      return tape.scalar(cat_objective(tape, model, x, labels, x_adv, centers, lambda).l_cat);
  }
  return 0.0;
}

}  // namespace detail

/// Central differences (step 1e-5) for every parameter and input coordinate
/// of L_ori, L_ca, L_adv and the batch objective on `models` seeded networks.
/// A partial fails when |analytic - numeric| / max(1, |numeric|) >= tolerance.
inline GradCheckReport grad_check(std::size_t models, std::uint64_t seed, double tolerance = 1e-4,
                                  std::vector<std::size_t> layer_dims = {8, 12, 6}) {
  using detail::CheckedLoss;
  constexpr double step = 1e-5;
  constexpr double lambda = 1.0;
  constexpr std::size_t n = 5;
  GradCheckReport rep;
  rep.models = models;
  for (std::size_t m = 0; m < models; ++m) {
    auto model = HashModel::create(layer_dims, seed + m);
    const std::size_t d = model.input_dim();
    const std::size_t k = model.code_length();
    std::mt19937_64 rng(seed * 7919 + m);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n * d), x_adv(n * d);
    for (double& v : x) v = u(rng);
    for (std::size_t i = 0; i < x.size(); ++i) x_adv[i] = std::clamp(x[i] + (u(rng) - 0.5) * 0.06, 0.0, 1.0);
    std::vector<LabelVector> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(LabelVector(3, {static_cast<std::size_t>(rng() % 3)}));
    std::vector<BinaryCode> centers(n, BinaryCode(k));
    for (auto& c : centers) {
      for (std::size_t b = 0; b < k; ++b) c.set(b, rng() & 1U ? 1 : -1);
    }

    for (auto which : {CheckedLoss::ori, CheckedLoss::ca, CheckedLoss::adv, CheckedLoss::cat}) {
      auto value = [&] { return detail::checked_value(model, which, x, labels, x_adv, centers, lambda); };
      auto record = [&](double analytic, double numeric) {
        const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
        rep.max_relative_error = std::max(rep.max_relative_error, err);
        ++rep.partials;
        if (!(err < tolerance)) ++rep.failures;
      };
      auto central = [&](double& slot) {
        const double saved = slot;
        slot = saved + step;
        const double up = value();
        slot = saved - step;
        const double down = value();
        slot = saved;
        return (up - down) / (2.0 * step);
      };

      model.zero_grad();
      diff::Tape tape;
      diff::Var loss, input;
      switch (which) {
        case CheckedLoss::ori:
          input = tape.input(x, n, d);
          loss = pairwise_hash_loss(tape, model.forward(tape, input), labels);
          break;
        case CheckedLoss::ca:
          input = tape.input(std::span<const double>(x_adv).first(d));
          loss = center_alignment(tape, model.forward(tape, input), std::span<const BinaryCode>(centers).first(1));
          break;
        case CheckedLoss::adv:
          input = tape.input(x_adv, n, d);
          loss = center_alignment(tape, model.forward(tape, input), centers);
          break;
        case CheckedLoss::cat:
          loss = cat_objective(tape, model, x, labels, x_adv, centers, lambda).l_cat;
          break;
      }
      tape.backward(loss);

      for (auto* p : model.params()) {
        for (std::size_t i = 0; i < p->values.size(); ++i) record(p->grad[i], central(p->values[i]));
      }
      if (which == CheckedLoss::ori || which == CheckedLoss::ca || which == CheckedLoss::adv) {
        auto& source = which == CheckedLoss::ori ? x : x_adv;
        const auto g = tape.grad(input);
        for (std::size_t i = 0; i < g.size(); ++i) record(g[i], central(source[i]));
      }
    }
  }
  return rep;
}

}  // namespace cgat
