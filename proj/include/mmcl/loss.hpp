#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"

namespace mmcl {

struct LossConfig {
  // Similarities are divided by the temperature before exponentiation.
  double temperature = 0.07;
  // The printed form of the pair loss excludes the positive (j == i) from
  // the denominator, which lets per-sample losses go negative. Switching
  // this on restores the standard InfoNCE denominator (loss >= 0).
  bool include_positive = false;

  void validate() const {
    if (!(temperature > 0.0)) throw_config("loss: temperature must be positive");
  }
};

struct PairLossBreakdown {
  std::vector<double> per_sample; // L_i for each batch row
  double total = 0.0;             // sum over rows
};

struct FinalLoss {
  double total = 0.0;      // sum over ordered modality pairs / (|M|*(|M|-1))
  double per_sample = 0.0; // total / N, the value reported in logs
  int batch_size = 0;
  std::map<std::pair<int, int>, PairLossBreakdown> pairs;
};

namespace detail {

inline void check_pair_inputs(const Matrix& zm, const Matrix& zn) {
  if (!zm.same_shape(zn))
    throw_shape("pair_loss: embedding shapes differ, " + zm.shape_str() + " vs " +
                zn.shape_str());
  if (zm.rows() < 2)
    throw_numeric("pair_loss: batch size " + std::to_string(zm.rows()) +
                  " leaves no negatives; need N >= 2");
}

// Scaled similarity logits S_ij = sim(zm_i, zn_j) / tau from already
// normalized embeddings.
inline Matrix pair_logits(const Matrix& zm_hat, const Matrix& zn_hat, double tau) {
  Matrix s = matmul_nt(zm_hat, zn_hat);
  for (double& x : s.data()) x /= tau;
  return s;
}

inline PairLossBreakdown pair_loss_from_logits(const Matrix& s, bool include_positive) {
  const int n = s.rows();
  Matrix mask(n, n, 1.0);
  if (!include_positive)
    for (int i = 0; i < n; ++i) mask(i, i) = 0.0;
  std::vector<double> lse = log_sum_exp_row(s, &mask);
  PairLossBreakdown out;
  out.per_sample.resize(n);
  for (int i = 0; i < n; ++i) {
    out.per_sample[i] = lse[i] - s(i, i);
    out.total += out.per_sample[i];
  }
  return out;
}

// dL/dS for one pair: softmax over the denominator set minus the identity.
inline Matrix pair_logit_grad(const Matrix& s, bool include_positive) {
  const int n = s.rows();
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (!include_positive && j == i) continue;
      m = std::max(m, s(i, j));
    }
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (!include_positive && j == i) continue;
      denom += std::exp(s(i, j) - m);
    }
    for (int j = 0; j < n; ++j) {
      double p = (!include_positive && j == i) ? 0.0 : std::exp(s(i, j) - m) / denom;
      g(i, j) = p - (j == i ? 1.0 : 0.0);
    }
  }
  return g;
}

// Pair totals are reduced in value order, so L_final is invariant under any
// relabeling of modality ids (the multiset of pair losses is unchanged).
inline double ordered_sum(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace detail

// Eq.-style pairwise contrastive loss: the positive is the same batch row in
// the other modality, negatives are all other rows of modality n only.
inline PairLossBreakdown pair_loss(const Matrix& zm, const Matrix& zn, const LossConfig& cfg) {
  cfg.validate();
  detail::check_pair_inputs(zm, zn);
  Matrix s = detail::pair_logits(l2_normalize_rows(zm), l2_normalize_rows(zn), cfg.temperature);
  return detail::pair_loss_from_logits(s, cfg.include_positive);
}

// Average of the pair losses over all ordered pairs (m,n), m != n, of the
// modality set. Both orderings appear; the pair loss is asymmetric.
inline FinalLoss final_loss(const std::map<int, Matrix>& z_by_modality, const LossConfig& cfg) {
  cfg.validate();
  if (z_by_modality.size() < 2)
    throw_config("final_loss: need at least 2 modalities, have " +
                 std::to_string(z_by_modality.size()));
  const int n = z_by_modality.begin()->second.rows();
  std::map<int, Matrix> z_hat;
  for (const auto& [id, z] : z_by_modality) {
    if (z.rows() != n)
      throw_shape("final_loss: modality " + std::to_string(id) + " has batch " +
                  std::to_string(z.rows()) + ", expected " + std::to_string(n));
    z_hat.emplace(id, l2_normalize_rows(z));
  }
  FinalLoss out;
  out.batch_size = n;
  std::vector<double> totals;
  for (const auto& [m, zm] : z_hat)
    for (const auto& [nid, zn] : z_hat) {
      if (m == nid) continue;
      Matrix s = detail::pair_logits(zm, zn, cfg.temperature);
      PairLossBreakdown b = detail::pair_loss_from_logits(s, cfg.include_positive);
      totals.push_back(b.total);
      out.pairs.emplace(std::make_pair(m, nid), std::move(b));
    }
  const double count = static_cast<double>(z_hat.size()) * (z_hat.size() - 1);
  out.total = detail::ordered_sum(std::move(totals)) / count;
  out.per_sample = out.total / n;
  if (!std::isfinite(out.total)) throw_numeric("final_loss: non-finite loss");
  return out;
}

struct FinalLossWithGrads {
  FinalLoss loss;
  // dL_final/dz for the raw (pre-normalization) embeddings of each modality.
  std::map<int, Matrix> grads;
};

// Analytic backward of the final loss through the cosine similarity. For
// each ordered pair, dL/dS = softmax-over-denominator minus identity; that
// propagates to the normalized embeddings by the similarity product and then
// through the row normalization z / ||z||.
inline FinalLossWithGrads final_loss_with_gradients(const std::map<int, Matrix>& z_by_modality,
                                                    const LossConfig& cfg) {
  cfg.validate();
  if (z_by_modality.size() < 2)
    throw_config("final_loss: need at least 2 modalities, have " +
                 std::to_string(z_by_modality.size()));
  const int n = z_by_modality.begin()->second.rows();
  std::map<int, Matrix> z_hat;
  for (const auto& [id, z] : z_by_modality) {
    if (z.rows() != n)
      throw_shape("final_loss: modality " + std::to_string(id) + " has batch " +
                  std::to_string(z.rows()) + ", expected " + std::to_string(n));
    z_hat.emplace(id, l2_normalize_rows(z));
  }

  FinalLossWithGrads out;
  out.loss.batch_size = n;
  std::map<int, Matrix> grad_hat; // dL/d(normalized z), before the 1/count scale
  for (const auto& [id, zh] : z_hat)
    grad_hat.emplace(id, Matrix::zeros(zh.rows(), zh.cols()));

  std::vector<double> totals;
  for (const auto& [m, zm] : z_hat)
    for (const auto& [nid, zn] : z_hat) {
      if (m == nid) continue;
      Matrix s = detail::pair_logits(zm, zn, cfg.temperature);
      PairLossBreakdown b = detail::pair_loss_from_logits(s, cfg.include_positive);
      totals.push_back(b.total);
      out.loss.pairs.emplace(std::make_pair(m, nid), std::move(b));
      Matrix g = detail::pair_logit_grad(s, cfg.include_positive);
      for (double& x : g.data()) x /= cfg.temperature;
      add_in_place(grad_hat.at(m), matmul(g, zn));
      add_in_place(grad_hat.at(nid), matmul_tn(g, zm));
    }

  const double count = static_cast<double>(z_hat.size()) * (z_hat.size() - 1);
  out.loss.total = detail::ordered_sum(std::move(totals)) / count;
  out.loss.per_sample = out.loss.total / n;
  if (!std::isfinite(out.loss.total)) throw_numeric("final_loss: non-finite loss");

  // back through row normalization: dL/dz = (g - (g . zhat) zhat) / ||z||
  for (const auto& [id, z] : z_by_modality) {
    const Matrix& zh = z_hat.at(id);
    const Matrix& gh = grad_hat.at(id);
    Matrix g(z.rows(), z.cols());
    for (int i = 0; i < z.rows(); ++i) {
      double norm = 0.0;
      for (int j = 0; j < z.cols(); ++j) norm += z(i, j) * z(i, j);
      norm = std::sqrt(norm);
      double dot = 0.0;
      for (int j = 0; j < z.cols(); ++j) dot += gh(i, j) * zh(i, j);
      for (int j = 0; j < z.cols(); ++j)
        g(i, j) = (gh(i, j) - dot * zh(i, j)) / (norm * count);
    }
    out.grads.emplace(id, std::move(g));
  }
  return out;
}

inline std::map<int, Matrix> loss_gradients(const std::map<int, Matrix>& z_by_modality,
                                            const LossConfig& cfg) {
  return final_loss_with_gradients(z_by_modality, cfg).grads;
}

}  // namespace mmcl
