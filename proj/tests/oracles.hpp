#pragma once

// Reference implementations used only by the test suite. Everything here is
// written as literally as possible (full sorts, explicit loops, no reuse of
// library internals) so that agreement with the production code is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Core>

namespace oracle {

inline double rel_err(double analytic, double numeric) {
  double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

// Central-difference gradient of a scalar function of a flat parameter vector.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x;
    Eigen::VectorXd lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Rank of gallery item g for query row q: full sort by (similarity desc,
// index asc), then find the position. 1-based.
inline int rank_by_sort(const Eigen::MatrixXd& sim, int q, int g) {
  std::vector<int> order(static_cast<size_t>(sim.cols()));
  for (int j = 0; j < sim.cols(); ++j) order[static_cast<size_t>(j)] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sim(q, a) != sim(q, b)) return sim(q, a) > sim(q, b);
    return a < b;
  });
  for (size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == g) return static_cast<int>(pos) + 1;
  }
  return -1;
}

struct MinedPair {
  int query;
  int rank1_gallery;
};

// Literal transcription of the weak-positive set definition: the query's own
// gallery item sits at rank exactly k, and the rank-1 item belongs to a
// different identity.
inline std::vector<MinedPair> mine_by_sort(const Eigen::MatrixXd& sim,
                                           const std::vector<int>& query_ids,
                                           const std::vector<int>& gallery_ids,
                                           const std::vector<int>& paired_gallery, int k) {
  std::vector<MinedPair> out;
  for (int q = 0; q < sim.rows(); ++q) {
    std::vector<int> order(static_cast<size_t>(sim.cols()));
    for (int j = 0; j < sim.cols(); ++j) order[static_cast<size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sim(q, a) != sim(q, b)) return sim(q, a) > sim(q, b);
      return a < b;
    });
    int own = paired_gallery[static_cast<size_t>(q)];
    int own_rank = -1;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      if (order[pos] == own) own_rank = static_cast<int>(pos) + 1;
    }
    int top = order[0];
    if (own_rank == k && gallery_ids[static_cast<size_t>(top)] != query_ids[static_cast<size_t>(q)]) {
      out.push_back({q, top});
    }
  }
  return out;
}

struct MetricResult {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double map = 0.0;
};

// Recall@k and mAP from first principles: sort each query's gallery, walk it.
inline MetricResult metrics_by_sort(const Eigen::MatrixXd& sim,
                                    const std::vector<int>& query_ids,
                                    const std::vector<int>& gallery_ids) {
  int n_q = static_cast<int>(sim.rows());
  int n_g = static_cast<int>(sim.cols());
  MetricResult res;
  for (int q = 0; q < n_q; ++q) {
    std::vector<int> order(static_cast<size_t>(n_g));
    for (int j = 0; j < n_g; ++j) order[static_cast<size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sim(q, a) != sim(q, b)) return sim(q, a) > sim(q, b);
      return a < b;
    });
    auto hit_within = [&](int k) {
      int kk = std::min(k, n_g);
      for (int pos = 0; pos < kk; ++pos) {
        if (gallery_ids[static_cast<size_t>(order[static_cast<size_t>(pos)])] ==
            query_ids[static_cast<size_t>(q)])
          return true;
      }
      return false;
    };
    if (hit_within(1)) res.r1 += 1.0;
    if (hit_within(5)) res.r5 += 1.0;
    if (hit_within(10)) res.r10 += 1.0;

    int n_rel = 0;
    for (int j = 0; j < n_g; ++j) {
      if (gallery_ids[static_cast<size_t>(j)] == query_ids[static_cast<size_t>(q)]) ++n_rel;
    }
    double ap = 0.0;
    int seen_rel = 0;
    for (int pos = 0; pos < n_g; ++pos) {
      int item = order[static_cast<size_t>(pos)];
      if (gallery_ids[static_cast<size_t>(item)] == query_ids[static_cast<size_t>(q)]) {
        ++seen_rel;
        ap += static_cast<double>(seen_rel) / static_cast<double>(pos + 1);
      }
    }
    res.map += ap / static_cast<double>(n_rel);
  }
  res.r1 /= n_q;
  res.r5 /= n_q;
  res.r10 /= n_q;
  res.map /= n_q;
  return res;
}

// Scalar loss references. Mirrors the written definitions term by term,
// accumulating in the same left-to-right order as the production code so the
// all-weights-one comparisons can demand exact equality.

inline Eigen::MatrixXd sim_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double tau) {
  Eigen::MatrixXd s(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) acc += a(i, c) * b(j, c);
      s(i, j) = acc / tau;
    }
  }
  return s;
}

inline Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (Eigen::Index j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
    double denom = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) denom += std::exp(logits(i, j) - m);
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      out(i, j) = logits(i, j) - m - std::log(denom);
  }
  return out;
}

inline double itc_value(const Eigen::MatrixXd& img, const Eigen::MatrixXd& txt,
                        const Eigen::VectorXd& w, double tau) {
  Eigen::MatrixXd s = sim_matrix(img, txt, tau);
  Eigen::MatrixXd st = sim_matrix(txt, img, tau);
  Eigen::MatrixXd lp_i2t = log_softmax(s);
  Eigen::MatrixXd lp_t2i = log_softmax(st);
  Eigen::Index B = img.rows();
  double a = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) a += w[i] * lp_i2t(i, i);
  a = -a / static_cast<double>(B);
  double b = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) b += w[i] * lp_t2i(i, i);
  b = -b / static_cast<double>(B);
  return (a + b) / 2.0;
}

inline double id_value(const Eigen::MatrixXd& img, const Eigen::MatrixXd& txt,
                       const Eigen::MatrixXd& w_id, const std::vector<int>& labels,
                       const Eigen::VectorXd& w) {
  Eigen::MatrixXd zi = sim_matrix(img, w_id, 1.0);
  Eigen::MatrixXd zt = sim_matrix(txt, w_id, 1.0);
  Eigen::MatrixXd li = log_softmax(zi);
  Eigen::MatrixXd lt = log_softmax(zt);
  double a = 0.0;
  for (Eigen::Index i = 0; i < img.rows(); ++i)
    a += w[i] * li(i, labels[static_cast<size_t>(i)]);
  double b = 0.0;
  for (Eigen::Index i = 0; i < txt.rows(); ++i)
    b += w[i] * lt(i, labels[static_cast<size_t>(i)]);
  return -a + -b;
}

inline double sdm_direction(const Eigen::MatrixXd& logits, const std::vector<int>& ids,
                            const Eigen::VectorXd& w, double eps) {
  Eigen::MatrixXd lp = log_softmax(logits);
  Eigen::Index B = logits.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    int n_pos = 0;
    for (Eigen::Index j = 0; j < B; ++j) {
      if (ids[static_cast<size_t>(i)] == ids[static_cast<size_t>(j)]) ++n_pos;
    }
    double row = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
      double q = ids[static_cast<size_t>(i)] == ids[static_cast<size_t>(j)]
                     ? 1.0 / static_cast<double>(n_pos)
                     : 0.0;
      double p = std::exp(lp(i, j));
      row += p * (lp(i, j) - std::log(q + eps));
    }
    total += w[i] * row;
  }
  return total;
}

inline double sdm_value(const Eigen::MatrixXd& img, const Eigen::MatrixXd& txt,
                        const std::vector<int>& ids, const Eigen::VectorXd& w, double tau,
                        double eps, bool bidirectional) {
  Eigen::MatrixXd s = sim_matrix(img, txt, tau);
  double i2t = sdm_direction(s, ids, w, eps);
  if (!bidirectional) return i2t;
  Eigen::MatrixXd st = sim_matrix(txt, img, tau);
  double t2i = sdm_direction(st, ids, w, eps);
  return (i2t + t2i) / 2.0;
}

}  // namespace oracle
