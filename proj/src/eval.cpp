#include "retboost/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "retboost/mining.hpp"

namespace retboost::eval {

namespace {

// Gallery indices sorted best-first for one query; ties by ascending index,
// the same rule the mining module applies.
std::vector<int> ranking(const MatrixXd& sim, int query) {
  std::vector<int> order(static_cast<std::size_t>(sim.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = sim(query, a);
    const double sb = sim(query, b);
    if (sa != sb) {
      return sa > sb;
    }
    return a < b;
  });
  return order;
}

}  // namespace

void RetrievalRun::validate() const {
  if (static_cast<int>(query_identities.size()) != n_queries()) {
    throw std::runtime_error("retrieval run: query identity count mismatch");
  }
  if (static_cast<int>(gallery_identities.size()) != n_gallery()) {
    throw std::runtime_error("retrieval run: gallery identity count mismatch");
  }
  if (!gallery_sources.empty() && static_cast<int>(gallery_sources.size()) != n_gallery()) {
    throw std::runtime_error("retrieval run: gallery source count mismatch");
  }
  if (query_emb.cols() != gallery_emb.cols()) {
    throw std::runtime_error("retrieval run: embedding dim mismatch");
  }
  if (n_queries() == 0 || n_gallery() == 0) {
    throw std::runtime_error("retrieval run: empty query or gallery set");
  }
  std::unordered_set<IdentityLabel> gallery_ids(gallery_identities.begin(),
                                                gallery_identities.end());
  for (int i = 0; i < n_queries(); ++i) {
    if (gallery_ids.count(query_identities[i]) == 0) {
      throw std::runtime_error("retrieval run: query " + std::to_string(i) + " identity " +
                               std::to_string(query_identities[i]) + " absent from gallery");
    }
  }
}

Metrics evaluate(const RetrievalRun& run) {
  run.validate();
  const auto sim = mining::compute_similarity(run.query_emb, run.gallery_emb);
  const int n_q = run.n_queries();
  const int n_g = run.n_gallery();

  int hits1 = 0;
  int hits5 = 0;
  int hits10 = 0;
  double ap_sum = 0.0;
  const int k1 = std::min(1, n_g);
  const int k5 = std::min(5, n_g);
  const int k10 = std::min(10, n_g);

  for (int i = 0; i < n_q; ++i) {
    const auto order = ranking(sim.values, i);
    int first_relevant = n_g;  // 0-based position of the best relevant item
    int n_relevant = 0;
    int seen_relevant = 0;
    double ap = 0.0;
    for (int pos = 0; pos < n_g; ++pos) {
      if (run.gallery_identities[order[pos]] == run.query_identities[i]) {
        if (first_relevant == n_g) {
          first_relevant = pos;
        }
        ++seen_relevant;
        ap += static_cast<double>(seen_relevant) / static_cast<double>(pos + 1);
        ++n_relevant;
      }
    }
    ap_sum += ap / static_cast<double>(n_relevant);
    if (first_relevant < k1) {
      ++hits1;
    }
    if (first_relevant < k5) {
      ++hits5;
    }
    if (first_relevant < k10) {
      ++hits10;
    }
  }

  Metrics m;
  m.r1 = static_cast<double>(hits1) / static_cast<double>(n_q);
  m.r5 = static_cast<double>(hits5) / static_cast<double>(n_q);
  m.r10 = static_cast<double>(hits10) / static_cast<double>(n_q);
  m.map = ap_sum / static_cast<double>(n_q);
  return m;
}

VectorXd per_query_ap(const RetrievalRun& run) {
  run.validate();
  const auto sim = mining::compute_similarity(run.query_emb, run.gallery_emb);
  const int n_q = run.n_queries();
  const int n_g = run.n_gallery();
  VectorXd out(n_q);
  for (int i = 0; i < n_q; ++i) {
    const auto order = ranking(sim.values, i);
    int n_relevant = 0;
    int seen_relevant = 0;
    double ap = 0.0;
    for (int pos = 0; pos < n_g; ++pos) {
      if (run.gallery_identities[order[pos]] == run.query_identities[i]) {
        ++seen_relevant;
        ap += static_cast<double>(seen_relevant) / static_cast<double>(pos + 1);
        ++n_relevant;
      }
    }
    out(i) = ap / static_cast<double>(n_relevant);
  }
  return out;
}

RetrievalRun with_distractors(const RetrievalRun& primary,
                              const std::vector<DistractorGallery>& distractors,
                              bool remap_identities) {
  primary.validate();
  RetrievalRun out = primary;
  if (out.gallery_sources.empty()) {
    out.gallery_sources.assign(static_cast<std::size_t>(out.n_gallery()), "primary");
  }

  std::unordered_set<IdentityLabel> used(out.gallery_identities.begin(),
                                         out.gallery_identities.end());
  IdentityLabel next_free = 0;
  for (IdentityLabel id : out.gallery_identities) {
    next_free = std::max(next_free, id + 1);
  }

  for (const auto& gallery : distractors) {
    if (static_cast<int>(gallery.identities.size()) != gallery.emb.rows()) {
      throw std::runtime_error("distractor gallery '" + gallery.source +
                               "': identity count mismatch");
    }
    if (gallery.emb.cols() != out.gallery_emb.cols()) {
      throw std::runtime_error("distractor gallery '" + gallery.source +
                               "': embedding dim mismatch");
    }
    std::vector<IdentityLabel> ids = gallery.identities;
    if (remap_identities) {
      // Dense remap in ascending label order keeps the result independent of
      // row ordering quirks while preserving the equality structure.
      std::vector<IdentityLabel> distinct(ids.begin(), ids.end());
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      std::unordered_map<IdentityLabel, IdentityLabel> remap;
      for (IdentityLabel old_id : distinct) {
        remap[old_id] = next_free++;
      }
      for (auto& id : ids) {
        id = remap[id];
      }
    }
    for (IdentityLabel id : ids) {
      if (used.count(id) > 0) {
        throw std::runtime_error("distractor gallery '" + gallery.source +
                                 "': identity collision on label " + std::to_string(id));
      }
      next_free = std::max(next_free, id + 1);
    }
    used.insert(ids.begin(), ids.end());

    const int old_rows = out.n_gallery();
    MatrixXd merged(old_rows + gallery.emb.rows(), out.gallery_emb.cols());
    merged.topRows(old_rows) = out.gallery_emb;
    merged.bottomRows(gallery.emb.rows()) = gallery.emb;
    out.gallery_emb = std::move(merged);
    out.gallery_identities.insert(out.gallery_identities.end(), ids.begin(), ids.end());
    out.gallery_sources.insert(out.gallery_sources.end(),
                               static_cast<std::size_t>(gallery.emb.rows()), gallery.source);
  }
  return out;
}

Metrics evaluate_with_distractors(const RetrievalRun& primary,
                                  const std::vector<DistractorGallery>& distractors,
                                  bool remap_identities) {
  return evaluate(with_distractors(primary, distractors, remap_identities));
}

RetrievalRun make_run(const enc::EncoderParams& params, const data::Dataset& data) {
  data.validate();
  if (params.p_img() != data.images.cols()) {
    throw std::runtime_error("eval: model expects image width " + std::to_string(params.p_img()) +
                             ", dataset '" + data.name + "' has " +
                             std::to_string(data.images.cols()));
  }
  if (params.p_txt() != data.texts.cols()) {
    throw std::runtime_error("eval: model expects text width " + std::to_string(params.p_txt()) +
                             ", dataset '" + data.name + "' has " +
                             std::to_string(data.texts.cols()));
  }

  RetrievalRun run;
  MatrixXd text_in(static_cast<int>(data.samples.size()), data.texts.cols());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    text_in.row(static_cast<int>(i)) = data.texts.row(data.samples[i].text_row).cast<double>();
    run.query_identities.push_back(data.samples[i].identity);
  }
  run.query_emb = enc::embed(params, text_in, enc::Modality::kText).values;
  run.gallery_emb = enc::embed(params, data.images.cast<double>(), enc::Modality::kImage).values;
  run.gallery_identities = data.image_identities();
  run.gallery_sources.assign(static_cast<std::size_t>(run.n_gallery()), data.name);
  return run;
}

DistractorGallery make_distractor_gallery(const enc::EncoderParams& params,
                                          const data::Dataset& data) {
  data.validate();
  if (params.p_img() != data.images.cols()) {
    throw std::runtime_error("eval: model expects image width " + std::to_string(params.p_img()) +
                             ", distractor dataset '" + data.name + "' has " +
                             std::to_string(data.images.cols()));
  }
  DistractorGallery g;
  g.emb = enc::embed(params, data.images.cast<double>(), enc::Modality::kImage).values;
  g.identities = data.image_identities();
  g.source = data.name;
  return g;
}

Metrics cross_dataset_eval(const enc::EncoderParams& params, const data::Dataset& data) {
  return evaluate(make_run(params, data));
}

}  // namespace retboost::eval
