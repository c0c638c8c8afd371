#pragma once

#include <filesystem>
#include <string>

#include "retboost/rng.hpp"
#include "retboost/types.hpp"

namespace retboost::enc {

enum class Modality { kImage, kText };

std::string to_string(Modality m);

// One two-layer ReLU tower: p_in -> hidden -> d.
struct MlpParams {
  MatrixXd w1;  // hidden x p_in
  VectorXd b1;  // hidden
  MatrixXd w2;  // d x hidden
  VectorXd b2;  // d

  static MlpParams zeros(int p_in, int hidden, int d);
  bool same_shape(const MlpParams& other) const;
};

// Dual towers plus a shared identity-classifier head over embeddings.
struct EncoderParams {
  MlpParams img;
  MlpParams txt;
  MatrixXd w_id;  // n_classes x d
  double tau = 0.05;

  int embed_dim() const { return static_cast<int>(img.w2.rows()); }
  int hidden_dim() const { return static_cast<int>(img.w1.rows()); }
  int p_img() const { return static_cast<int>(img.w1.cols()); }
  int p_txt() const { return static_cast<int>(txt.w1.cols()); }
  int n_classes() const { return static_cast<int>(w_id.rows()); }

  const MlpParams& tower(Modality m) const { return m == Modality::kImage ? img : txt; }

  static EncoderParams init(int p_img, int p_txt, int hidden, int d, int n_classes,
                            double tau, Rng& rng);
};

// Row-normalized embeddings with their modality tag.
struct EmbeddingMatrix {
  MatrixXd values;  // n x d, unit rows
  Modality modality = Modality::kImage;
};

// Intermediate values kept for the backward pass.
struct ForwardCache {
  Modality modality = Modality::kImage;
  MatrixXd input;       // B x p_in
  MatrixXd pre_act;     // B x hidden, before ReLU
  MatrixXd activated;   // B x hidden
  MatrixXd pre_norm;    // B x d
  VectorXd norms;       // B
  MatrixXd embeddings;  // B x d, unit rows
};

// rows = normalize(W2 relu(W1 x + b1) + b2). Throws on width mismatch and on
// a degenerate (zero-norm) pre-normalization row.
ForwardCache forward(const EncoderParams& params, const MatrixXd& raw_features,
                     Modality modality);

inline EmbeddingMatrix embed(const EncoderParams& params, const MatrixXd& raw_features,
                             Modality modality) {
  return {forward(params, raw_features, modality).embeddings, modality};
}

// Exact gradients of a scalar loss through one tower, given dLoss/dEmbeddings.
// The L2-normalization Jacobian (I - e e^T)/||h|| is applied row-wise.
MlpParams backward(const EncoderParams& params, const ForwardCache& cache,
                   const MatrixXd& upstream_grad);

// Gradients for every trainable tensor. MlpParams doubles as the shape-matched
// gradient holder for a tower.
struct GradientSet {
  MlpParams img;
  MlpParams txt;
  MatrixXd w_id;

  static GradientSet zeros_like(const EncoderParams& params);
};

struct AdamState {
  GradientSet m;
  GradientSet v;
  long t = 0;

  static AdamState zeros_like(const EncoderParams& params);
};

// Standard bias-corrected Adam. Throws std::runtime_error naming the first
// parameter tensor with non-finite gradients.
void adam_step(EncoderParams& params, const GradientSet& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Published checkpoint: params.json (shapes, tau, epoch, rng state, extras)
// next to params.f32 (all tensors flattened row-major in declared order:
// img.w1, img.b1, img.w2, img.b2, txt.w1, txt.b1, txt.w2, txt.b2, w_id).
struct CheckpointMeta {
  int epoch = 0;
  std::string rng_state;
  std::string extra_json;  // trainer-owned hyperparameters, stored verbatim
};

void save_checkpoint(const std::filesystem::path& dir, const EncoderParams& params,
                     const CheckpointMeta& meta);

struct Checkpoint {
  EncoderParams params;
  CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Flattened parameter vector in declared order (f64, exact).
VectorXd flatten(const EncoderParams& params);
void unflatten(const VectorXd& flat, EncoderParams& params);
long param_count(const EncoderParams& params);

}  // namespace retboost::enc
