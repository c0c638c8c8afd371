#include "retboost/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "retboost/io.hpp"

namespace retboost::enc {

namespace {

constexpr double kDegenerateNorm = 1e-12;

MatrixXd gaussian_matrix(Rng& rng, int rows, int cols, double scale) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian() * scale;
  return m;
}

template <typename Ptr>
struct TensorRefT {
  const char* name;
  Ptr data;
  long size;
};
using TensorRef = TensorRefT<double*>;
using ConstTensorRef = TensorRefT<const double*>;

// Declared parameter order; the checkpoint layout depends on it.
template <typename Refs, typename T>
Refs make_refs(T& p) {
  return {{"img.w1", p.img.w1.data(), p.img.w1.size()},
          {"img.b1", p.img.b1.data(), p.img.b1.size()},
          {"img.w2", p.img.w2.data(), p.img.w2.size()},
          {"img.b2", p.img.b2.data(), p.img.b2.size()},
          {"txt.w1", p.txt.w1.data(), p.txt.w1.size()},
          {"txt.b1", p.txt.b1.data(), p.txt.b1.size()},
          {"txt.w2", p.txt.w2.data(), p.txt.w2.size()},
          {"txt.b2", p.txt.b2.data(), p.txt.b2.size()},
          {"w_id", p.w_id.data(), p.w_id.size()}};
}

std::vector<TensorRef> tensor_refs(EncoderParams& p) {
  return make_refs<std::vector<TensorRef>>(p);
}
std::vector<ConstTensorRef> tensor_refs(const EncoderParams& p) {
  return make_refs<std::vector<ConstTensorRef>>(p);
}
std::vector<TensorRef> tensor_refs(GradientSet& g) {
  return make_refs<std::vector<TensorRef>>(g);
}
std::vector<ConstTensorRef> tensor_refs(const GradientSet& g) {
  return make_refs<std::vector<ConstTensorRef>>(g);
}

}  // namespace

std::string to_string(Modality m) { return m == Modality::kImage ? "img" : "txt"; }

MlpParams MlpParams::zeros(int p_in, int hidden, int d) {
  MlpParams p;
  p.w1 = MatrixXd::Zero(hidden, p_in);
  p.b1 = VectorXd::Zero(hidden);
  p.w2 = MatrixXd::Zero(d, hidden);
  p.b2 = VectorXd::Zero(d);
  return p;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() &&
         b1.size() == other.b1.size() && w2.rows() == other.w2.rows() &&
         w2.cols() == other.w2.cols() && b2.size() == other.b2.size();
}

EncoderParams EncoderParams::init(int p_img, int p_txt, int hidden, int d, int n_classes,
                                  double tau, Rng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  auto tower = [&](int p_in) {
    MlpParams t;
    // He scaling into the ReLU layer, Xavier-ish out of it.
    t.w1 = gaussian_matrix(rng, hidden, p_in, std::sqrt(2.0 / p_in));
    t.b1 = VectorXd::Zero(hidden);
    t.w2 = gaussian_matrix(rng, d, hidden, std::sqrt(1.0 / hidden));
    t.b2 = VectorXd::Zero(d);
    return t;
  };
  EncoderParams params;
  params.img = tower(p_img);
  params.txt = tower(p_txt);
  params.w_id = gaussian_matrix(rng, n_classes, d, 0.01);
  params.tau = tau;
  return params;
}

ForwardCache forward(const EncoderParams& params, const MatrixXd& raw_features,
                     Modality modality) {
  const MlpParams& tower = params.tower(modality);
  if (raw_features.cols() != tower.w1.cols()) {
    throw std::invalid_argument("forward(" + to_string(modality) + "): feature width " +
                                std::to_string(raw_features.cols()) + " != expected " +
                                std::to_string(tower.w1.cols()));
  }
  ForwardCache cache;
  cache.modality = modality;
  cache.input = raw_features;
  cache.pre_act = raw_features * tower.w1.transpose();
  cache.pre_act.rowwise() += tower.b1.transpose();
  cache.activated = cache.pre_act.cwiseMax(0.0);
  cache.pre_norm = cache.activated * tower.w2.transpose();
  cache.pre_norm.rowwise() += tower.b2.transpose();

  const Eigen::Index n = cache.pre_norm.rows();
  cache.norms.resize(n);
  cache.embeddings.resize(n, cache.pre_norm.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = cache.pre_norm.row(i).norm();
    // Structurally collapsed rows are a caller error; non-finite ones are left
    // to propagate so the training loop can report the diverging loss itself.
    if (norm <= kDegenerateNorm) {
      throw std::runtime_error("degenerate embedding: " + to_string(modality) + " row " +
                               std::to_string(i) + " has pre-normalization norm " +
                               std::to_string(norm));
    }
    cache.norms(i) = norm;
    cache.embeddings.row(i) = cache.pre_norm.row(i) / norm;
  }
  return cache;
}

MlpParams backward(const EncoderParams& params, const ForwardCache& cache,
                   const MatrixXd& upstream_grad) {
  if (upstream_grad.rows() != cache.embeddings.rows() ||
      upstream_grad.cols() != cache.embeddings.cols()) {
    throw std::invalid_argument("backward: upstream gradient shape " +
                                std::to_string(upstream_grad.rows()) + "x" +
                                std::to_string(upstream_grad.cols()) +
                                " does not match cached forward " +
                                std::to_string(cache.embeddings.rows()) + "x" +
                                std::to_string(cache.embeddings.cols()));
  }
  const MlpParams& tower = params.tower(cache.modality);

  // Through the row normalization: dh = (g - (g.e) e) / ||h||.
  MatrixXd d_pre_norm(upstream_grad.rows(), upstream_grad.cols());
  for (Eigen::Index i = 0; i < upstream_grad.rows(); ++i) {
    const auto e = cache.embeddings.row(i);
    const auto g = upstream_grad.row(i);
    d_pre_norm.row(i) = (g - g.dot(e) * e) / cache.norms(i);
  }

  MlpParams grads;
  grads.w2.noalias() = d_pre_norm.transpose() * cache.activated;
  grads.b2 = d_pre_norm.colwise().sum().transpose();

  MatrixXd d_act = d_pre_norm * tower.w2;
  MatrixXd d_pre = ((cache.pre_act.array() > 0.0).cast<double>() * d_act.array()).matrix();
  grads.w1.noalias() = d_pre.transpose() * cache.input;
  grads.b1 = d_pre.colwise().sum().transpose();
  return grads;
}

GradientSet GradientSet::zeros_like(const EncoderParams& params) {
  GradientSet g;
  g.img = MlpParams::zeros(params.p_img(), params.hidden_dim(), params.embed_dim());
  g.txt = MlpParams::zeros(params.p_txt(), params.hidden_dim(), params.embed_dim());
  g.w_id = MatrixXd::Zero(params.w_id.rows(), params.w_id.cols());
  return g;
}

AdamState AdamState::zeros_like(const EncoderParams& params) {
  AdamState s;
  s.m = GradientSet::zeros_like(params);
  s.v = GradientSet::zeros_like(params);
  s.t = 0;
  return s;
}

void adam_step(EncoderParams& params, const GradientSet& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  auto g_refs = tensor_refs(grads);
  for (const auto& ref : g_refs) {
    for (long i = 0; i < ref.size; ++i) {
      if (!std::isfinite(ref.data[i])) {
        throw std::runtime_error(std::string("adam_step: non-finite gradient in ") + ref.name);
      }
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

  auto p_refs = tensor_refs(params);
  auto m_refs = tensor_refs(state.m);
  auto v_refs = tensor_refs(state.v);
  for (std::size_t k = 0; k < p_refs.size(); ++k) {
    double* p = p_refs[k].data;
    double* m = m_refs[k].data;
    double* v = v_refs[k].data;
    const double* gd = g_refs[k].data;
    for (long i = 0; i < p_refs[k].size; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gd[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

VectorXd flatten(const EncoderParams& params) {
  auto refs = tensor_refs(params);
  long total = 0;
  for (const auto& r : refs) total += r.size;
  VectorXd flat(total);
  long at = 0;
  for (const auto& r : refs) {
    for (long i = 0; i < r.size; ++i) flat(at++) = r.data[i];
  }
  return flat;
}

void unflatten(const VectorXd& flat, EncoderParams& params) {
  auto refs = tensor_refs(params);
  long total = 0;
  for (const auto& r : refs) total += r.size;
  if (flat.size() != total) {
    throw std::invalid_argument("unflatten: got " + std::to_string(flat.size()) +
                                " values, parameter layout needs " + std::to_string(total));
  }
  long at = 0;
  for (auto& r : refs) {
    for (long i = 0; i < r.size; ++i) r.data[i] = flat(at++);
  }
}

long param_count(const EncoderParams& params) {
  long total = 0;
  for (const auto& r : tensor_refs(params)) total += r.size;
  return total;
}

void save_checkpoint(const std::filesystem::path& dir, const EncoderParams& params,
                     const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = {{"format_version", 1},
                      {"p_img", params.p_img()},
                      {"p_txt", params.p_txt()},
                      {"hidden", params.hidden_dim()},
                      {"embed_dim", params.embed_dim()},
                      {"n_classes", params.n_classes()},
                      {"tau", params.tau},
                      {"epoch", meta.epoch},
                      {"rng_state", meta.rng_state}};
  if (!meta.extra_json.empty()) j["extra"] = nlohmann::json::parse(meta.extra_json);
  io::write_text_file(dir / "params.json", j.dump(2) + "\n");

  const VectorXd flat = flatten(params);
  MatrixXf column(flat.size(), 1);
  column.col(0) = flat.cast<float>();
  io::write_matrix_f32(dir / "params.f32", column);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file(dir / "params.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed params.json in " + dir.string() + ": " + e.what());
  }
  const int version = j.at("format_version").get<int>();
  if (version != 1) {
    throw std::runtime_error("unknown checkpoint format_version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const int p_img = j.at("p_img").get<int>();
  const int p_txt = j.at("p_txt").get<int>();
  const int hidden = j.at("hidden").get<int>();
  const int d = j.at("embed_dim").get<int>();
  const int n_classes = j.at("n_classes").get<int>();
  ckpt.params.img = MlpParams::zeros(p_img, hidden, d);
  ckpt.params.txt = MlpParams::zeros(p_txt, hidden, d);
  ckpt.params.w_id = MatrixXd::Zero(n_classes, d);
  ckpt.params.tau = j.at("tau").get<double>();
  ckpt.meta.epoch = j.at("epoch").get<int>();
  ckpt.meta.rng_state = j.at("rng_state").get<std::string>();
  if (j.contains("extra")) ckpt.meta.extra_json = j.at("extra").dump();

  const MatrixXf column = io::read_matrix_f32(dir / "params.f32");
  if (column.cols() != 1 || column.rows() != param_count(ckpt.params)) {
    throw std::runtime_error("params.f32 in " + dir.string() + " holds " +
                             std::to_string(column.size()) + " values, declared shapes need " +
                             std::to_string(param_count(ckpt.params)));
  }
  unflatten(column.col(0).cast<double>(), ckpt.params);
  return ckpt;
}

}  // namespace retboost::enc
