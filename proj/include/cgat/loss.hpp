#pragma once

// Training and attack objectives expressed on a tape.
//
// Pairwise likelihood (DPSH shape) over the batch:
//   L_ori = -sum_{i<j} [ s_ij * Theta_ij - log(1 + exp(Theta_ij)) ]
//           + mu * sum_i ||h_i - sign(h_i)||^2,     Theta_ij = h_i^T h_j / 2
//
// Center alignment, shared by the attack and the defense:
//   L = -(1/K) * sum_i (b*_i)^T h_i

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "cgat/code.hpp"
#include "cgat/diffcore.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/labels.hpp"

namespace cgat {

inline constexpr double kDefaultQuantizationWeight = 0.1;

/// `h` is an n x K node of continuous codes aligned with `labels`.
inline diff::Var pairwise_hash_loss(diff::Tape& tape, diff::Var h, std::span<const LabelVector> labels,
                                    double quantization_weight = kDefaultQuantizationWeight) {
  const std::size_t n = tape.rows(h);
  if (labels.size() != n) throw diff::ShapeError("pairwise_hash_loss: labels not aligned with batch");

  // Strictly-upper-triangular mask and the similarity-weighted mask.
  std::vector<double> upper(n * n, 0.0), sim_upper(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      upper[i * n + j] = 1.0;
      sim_upper[i * n + j] = similarity(labels[i], labels[j]);
    }
  }

  auto theta = tape.scale(tape.matmul_nt(h, h), 0.5);
  auto likelihood = tape.sub(tape.mul_const(tape.softplus(theta), upper), tape.mul_const(theta, sim_upper));
  auto pair_term = tape.sum(likelihood);

  std::vector<double> signs(tape.value(h).size());
  {
    auto hv = tape.value(h);
    for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = sign_bit(hv[i]);
  }
  auto quant_term = tape.sum(tape.square(tape.sub_const(h, signs)));
  return tape.add(pair_term, tape.scale(quant_term, quantization_weight));
}

/// `h` is an n x K node; one center code per row.
inline diff::Var center_alignment(diff::Tape& tape, diff::Var h, std::span<const BinaryCode> centers) {
  const std::size_t n = tape.rows(h);
  const std::size_t k = tape.cols(h);
  if (centers.size() != n) throw diff::ShapeError("center_alignment: centers not aligned with batch");
  std::vector<double> c(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    if (centers[i].size() != k) throw diff::ShapeError("center_alignment: center code length differs from K");
    for (std::size_t j = 0; j < k; ++j) c[i * k + j] = centers[i][j];
  }
  return tape.scale(tape.sum(tape.mul_const(h, c)), -1.0 / static_cast<double>(k));
}

struct CatObjective {
  diff::Var l_ori;
  diff::Var l_adv;  // valid only when has_adv
  diff::Var l_cat;
  bool has_adv = false;
};

/// Per-batch training objective (1/n) * (L_ori(x) + lambda * L_adv(x_adv)).
/// An empty `x_adv` leaves out the adversarial branch entirely.
template <typename Model>
CatObjective cat_objective(diff::Tape& tape, Model& model, std::span<const double> x,
                           std::span<const LabelVector> labels, std::span<const double> x_adv,
                           std::span<const BinaryCode> centers, double lambda,
                           double quantization_weight = kDefaultQuantizationWeight) {
  const std::size_t n = labels.size();
  const std::size_t d = model.input_dim();
  if (n == 0) throw std::invalid_argument("cat_objective: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  CatObjective out;
  auto h = model.forward(tape, tape.input(x, n, d));
  out.l_ori = tape.scale(pairwise_hash_loss(tape, h, labels, quantization_weight), inv_n);
  out.l_cat = out.l_ori;
  if (!x_adv.empty()) {
    auto h_adv = model.forward(tape, tape.input(x_adv, n, d));
    out.l_adv = tape.scale(center_alignment(tape, h_adv, centers), inv_n);
    out.l_cat = tape.add(out.l_ori, tape.scale(out.l_adv, lambda));
    out.has_adv = true;
  }
  return out;
}

/// L_ori for a batch of raw features (rows x d), evaluated without gradients.
inline double base_loss(const HashModel& model, std::span<const double> features,
                        std::span<const LabelVector> labels,
                        double quantization_weight = kDefaultQuantizationWeight) {
  if (labels.empty()) throw std::invalid_argument("base_loss: empty batch");
  diff::Tape tape(diff::ParamGrad::frozen);
  auto x = tape.input(features, labels.size(), model.input_dim());
  return tape.scalar(pairwise_hash_loss(tape, model.forward(tape, x), labels, quantization_weight));
}

}  // namespace cgat
