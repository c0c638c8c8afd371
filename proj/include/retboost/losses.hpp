#pragma once

#include <utility>
#include <vector>

#include "retboost/types.hpp"

namespace retboost::losses {

struct LossOutput {
  double value = 0.0;
  MatrixXd grad_img;  // B x d
  MatrixXd grad_txt;  // B x d
  MatrixXd grad_classifier;  // 0x0 unless the loss touches the classifier

  bool has_classifier_grad() const { return grad_classifier.size() > 0; }
};

// Logit-space cores shared by the losses below, exposed so numerical
// properties (stability shifts, reductions) can be probed directly.
struct CoreOutput {
  double value = 0.0;
  MatrixXd dlogits;
};

// -(1/B) sum_i w_i * log softmax(logits.row(i))[i]; logits must be square.
CoreOutput weighted_diag_nll(const MatrixXd& logits, const VectorXd& weights);

// sum_i w_i * (-log softmax(logits.row(i))[labels[i]]); no 1/B factor.
CoreOutput weighted_cross_entropy(const MatrixXd& logits, const std::vector<int>& labels,
                                  const VectorXd& weights);

// sum_i w_i * sum_j p_ij * (log p_ij - log(targets_ij + eps)), p = row softmax.
CoreOutput weighted_kl_to_targets(const MatrixXd& logits, const MatrixXd& targets,
                                  const VectorXd& weights, double eps);

// Bidirectional weighted InfoNCE with diagonal positives, the two directions
// averaged. Rows of img_emb/txt_emb are the paired embeddings.
LossOutput boosted_itc(const MatrixXd& img_emb, const MatrixXd& txt_emb, const VectorXd& weights,
                       double tau);

// Weighted identity cross-entropy through the shared classifier, evaluated on
// both modalities and summed. labels are class indices into w_id's rows.
LossOutput boosted_id(const MatrixXd& img_emb, const MatrixXd& txt_emb,
                      const std::vector<int>& labels, const VectorXd& weights,
                      const MatrixXd& w_id);

// Weighted similarity-distribution matching: KL from the row softmax of
// sim/tau to the normalized same-identity indicator, averaged over both
// directions unless bidirectional is false.
LossOutput boosted_sdm(const MatrixXd& img_emb, const MatrixXd& txt_emb,
                       const std::vector<IdentityLabel>& identities, const VectorXd& weights,
                       double tau, double eps = 1e-8, bool bidirectional = true);

// Coefficient-weighted sum of loss outputs (values and gradients alike).
LossOutput combined_objective(const std::vector<std::pair<LossOutput, double>>& terms);

}  // namespace retboost::losses
