#include "retboost/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace retboost::losses {

namespace {

// Pairwise dot products accumulated in plain index order so that value-level
// test oracles written as scalar loops reproduce every bit.
MatrixXd scaled_similarity(const MatrixXd& a, const MatrixXd& b, double tau) {
  MatrixXd s(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (int c = 0; c < a.cols(); ++c) {
        acc += a(i, c) * b(j, c);
      }
      s(i, j) = acc / tau;
    }
  }
  return s;
}

// Row-stabilized log-softmax, sequential accumulation.
MatrixXd log_softmax_rows(const MatrixXd& logits) {
  MatrixXd logp(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (int j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > m) {
        m = logits(i, j);
      }
    }
    double denom = 0.0;
    for (int j = 0; j < logits.cols(); ++j) {
      denom += std::exp(logits(i, j) - m);
    }
    const double log_denom = std::log(denom);
    for (int j = 0; j < logits.cols(); ++j) {
      logp(i, j) = logits(i, j) - m - log_denom;
    }
  }
  return logp;
}

void check_embedding_batch(const MatrixXd& img_emb, const MatrixXd& txt_emb,
                           const VectorXd& weights) {
  if (img_emb.rows() != txt_emb.rows() || img_emb.cols() != txt_emb.cols()) {
    throw std::runtime_error("loss: embedding shape mismatch (" +
                             std::to_string(img_emb.rows()) + "x" +
                             std::to_string(img_emb.cols()) + " vs " +
                             std::to_string(txt_emb.rows()) + "x" +
                             std::to_string(txt_emb.cols()) + ")");
  }
  if (weights.size() != img_emb.rows()) {
    throw std::runtime_error("loss: weight vector length " + std::to_string(weights.size()) +
                             " does not match batch size " + std::to_string(img_emb.rows()));
  }
}

}  // namespace

CoreOutput weighted_diag_nll(const MatrixXd& logits, const VectorXd& weights) {
  if (logits.rows() != logits.cols()) {
    throw std::runtime_error("weighted_diag_nll: logits must be square");
  }
  if (weights.size() != logits.rows()) {
    throw std::runtime_error("weighted_diag_nll: weight vector length mismatch");
  }
  const int B = static_cast<int>(logits.rows());
  const MatrixXd logp = log_softmax_rows(logits);

  CoreOutput out;
  double acc = 0.0;
  for (int i = 0; i < B; ++i) {
    acc += weights(i) * logp(i, i);
  }
  out.value = -acc / static_cast<double>(B);

  out.dlogits.resize(B, B);
  for (int i = 0; i < B; ++i) {
    const double scale = weights(i) / static_cast<double>(B);
    for (int j = 0; j < B; ++j) {
      const double p = std::exp(logp(i, j));
      out.dlogits(i, j) = scale * (p - (i == j ? 1.0 : 0.0));
    }
  }
  return out;
}

CoreOutput weighted_cross_entropy(const MatrixXd& logits, const std::vector<int>& labels,
                                  const VectorXd& weights) {
  const int B = static_cast<int>(logits.rows());
  const int C = static_cast<int>(logits.cols());
  if (static_cast<int>(labels.size()) != B) {
    throw std::runtime_error("weighted_cross_entropy: label count mismatch");
  }
  if (weights.size() != B) {
    throw std::runtime_error("weighted_cross_entropy: weight vector length mismatch");
  }
  for (int i = 0; i < B; ++i) {
    if (labels[i] < 0 || labels[i] >= C) {
      throw std::runtime_error("weighted_cross_entropy: label " + std::to_string(labels[i]) +
                               " out of range for " + std::to_string(C) + " classes");
    }
  }
  const MatrixXd logp = log_softmax_rows(logits);

  CoreOutput out;
  double acc = 0.0;
  for (int i = 0; i < B; ++i) {
    acc += weights(i) * logp(i, labels[i]);
  }
  out.value = -acc;

  out.dlogits.resize(B, C);
  for (int i = 0; i < B; ++i) {
    for (int c = 0; c < C; ++c) {
      const double p = std::exp(logp(i, c));
      out.dlogits(i, c) = weights(i) * (p - (c == labels[i] ? 1.0 : 0.0));
    }
  }
  return out;
}

CoreOutput weighted_kl_to_targets(const MatrixXd& logits, const MatrixXd& targets,
                                  const VectorXd& weights, double eps) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw std::runtime_error("weighted_kl_to_targets: target shape mismatch");
  }
  if (weights.size() != logits.rows()) {
    throw std::runtime_error("weighted_kl_to_targets: weight vector length mismatch");
  }
  const int B = static_cast<int>(logits.rows());
  const int N = static_cast<int>(logits.cols());
  const MatrixXd logp = log_softmax_rows(logits);

  CoreOutput out;
  out.dlogits.resize(B, N);
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    // f_i = sum_j p_ij * u_ij with u_ij = log p_ij - log(q_ij + eps).
    // Entries whose softmax mass underflowed to exactly zero contribute
    // nothing (the p*log p -> 0 limit), even where the target is also zero.
    double f = 0.0;
    for (int j = 0; j < N; ++j) {
      const double p = std::exp(logp(i, j));
      if (p == 0.0) continue;
      const double u = logp(i, j) - std::log(targets(i, j) + eps);
      f += p * u;
    }
    total += weights(i) * f;
    for (int m = 0; m < N; ++m) {
      const double p = std::exp(logp(i, m));
      if (p == 0.0) {
        out.dlogits(i, m) = 0.0;
        continue;
      }
      const double u = logp(i, m) - std::log(targets(i, m) + eps);
      out.dlogits(i, m) = weights(i) * p * (u - f);
    }
  }
  out.value = total;
  return out;
}

LossOutput boosted_itc(const MatrixXd& img_emb, const MatrixXd& txt_emb, const VectorXd& weights,
                       double tau) {
  check_embedding_batch(img_emb, txt_emb, weights);
  if (!(tau > 0.0)) {
    throw std::runtime_error("loss: tau must be positive");
  }
  const MatrixXd s = scaled_similarity(img_emb, txt_emb, tau);

  // i2t: image i queries the batch texts (rows of s); t2i: text i queries the
  // batch images (rows of s transposed). Both share the per-pair weights.
  const CoreOutput i2t = weighted_diag_nll(s, weights);
  const CoreOutput t2i = weighted_diag_nll(s.transpose(), weights);

  LossOutput out;
  out.value = (i2t.value + t2i.value) / 2.0;
  const MatrixXd ds = (i2t.dlogits + t2i.dlogits.transpose()) / 2.0;
  out.grad_img = ds * txt_emb / tau;
  out.grad_txt = ds.transpose() * img_emb / tau;
  return out;
}

LossOutput boosted_id(const MatrixXd& img_emb, const MatrixXd& txt_emb,
                      const std::vector<int>& labels, const VectorXd& weights,
                      const MatrixXd& w_id) {
  check_embedding_batch(img_emb, txt_emb, weights);
  if (w_id.cols() != img_emb.cols()) {
    throw std::runtime_error("loss: classifier width " + std::to_string(w_id.cols()) +
                             " does not match embedding dim " + std::to_string(img_emb.cols()));
  }
  const MatrixXd z_img = scaled_similarity(img_emb, w_id, 1.0);
  const MatrixXd z_txt = scaled_similarity(txt_emb, w_id, 1.0);

  const CoreOutput img_part = weighted_cross_entropy(z_img, labels, weights);
  const CoreOutput txt_part = weighted_cross_entropy(z_txt, labels, weights);

  LossOutput out;
  out.value = img_part.value + txt_part.value;
  out.grad_img = img_part.dlogits * w_id;
  out.grad_txt = txt_part.dlogits * w_id;
  out.grad_classifier =
      img_part.dlogits.transpose() * img_emb + txt_part.dlogits.transpose() * txt_emb;
  return out;
}

LossOutput boosted_sdm(const MatrixXd& img_emb, const MatrixXd& txt_emb,
                       const std::vector<IdentityLabel>& identities, const VectorXd& weights,
                       double tau, double eps, bool bidirectional) {
  check_embedding_batch(img_emb, txt_emb, weights);
  if (!(tau > 0.0)) {
    throw std::runtime_error("loss: tau must be positive");
  }
  const int B = static_cast<int>(img_emb.rows());
  if (static_cast<int>(identities.size()) != B) {
    throw std::runtime_error("loss: identity label count mismatch");
  }

  // q_ij = 1[y_i == y_j] / #same-identity in row i. The diagonal pairs the
  // sample with itself, so a well-formed batch always has >= 1 per row.
  MatrixXd q(B, B);
  for (int i = 0; i < B; ++i) {
    int count = 0;
    for (int j = 0; j < B; ++j) {
      if (identities[j] == identities[i]) {
        ++count;
      }
    }
    if (count == 0) {
      throw std::runtime_error("loss: batch row " + std::to_string(i) +
                               " has no same-identity counterpart");
    }
    for (int j = 0; j < B; ++j) {
      q(i, j) = identities[j] == identities[i] ? 1.0 / static_cast<double>(count) : 0.0;
    }
  }

  const MatrixXd s = scaled_similarity(img_emb, txt_emb, tau);
  const CoreOutput i2t = weighted_kl_to_targets(s, q, weights, eps);

  LossOutput out;
  MatrixXd ds;
  if (bidirectional) {
    const CoreOutput t2i = weighted_kl_to_targets(s.transpose(), q, weights, eps);
    out.value = (i2t.value + t2i.value) / 2.0;
    ds = (i2t.dlogits + t2i.dlogits.transpose()) / 2.0;
  } else {
    out.value = i2t.value;
    ds = i2t.dlogits;
  }
  out.grad_img = ds * txt_emb / tau;
  out.grad_txt = ds.transpose() * img_emb / tau;
  return out;
}

LossOutput combined_objective(const std::vector<std::pair<LossOutput, double>>& terms) {
  if (terms.empty()) {
    throw std::runtime_error("combined objective: no terms");
  }
  LossOutput out;
  const auto& first = terms.front().first;
  out.grad_img = MatrixXd::Zero(first.grad_img.rows(), first.grad_img.cols());
  out.grad_txt = MatrixXd::Zero(first.grad_txt.rows(), first.grad_txt.cols());
  for (const auto& [term, coef] : terms) {
    if (term.grad_img.rows() != out.grad_img.rows() ||
        term.grad_img.cols() != out.grad_img.cols() ||
        term.grad_txt.rows() != out.grad_txt.rows() ||
        term.grad_txt.cols() != out.grad_txt.cols()) {
      throw std::runtime_error("combined objective: gradient shape mismatch");
    }
    out.value += coef * term.value;
    out.grad_img += coef * term.grad_img;
    out.grad_txt += coef * term.grad_txt;
    if (term.has_classifier_grad()) {
      if (!out.has_classifier_grad()) {
        out.grad_classifier = MatrixXd::Zero(term.grad_classifier.rows(),
                                             term.grad_classifier.cols());
      } else if (term.grad_classifier.rows() != out.grad_classifier.rows() ||
                 term.grad_classifier.cols() != out.grad_classifier.cols()) {
        throw std::runtime_error("combined objective: classifier gradient shape mismatch");
      }
      out.grad_classifier += coef * term.grad_classifier;
    }
  }
  return out;
}

}  // namespace retboost::losses
