#include "retboost/mining.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace retboost::mining {

SimilarityMatrix compute_similarity(const MatrixXd& queries, const MatrixXd& gallery,
                                    std::vector<PairId> query_pair_ids,
                                    std::vector<PairId> gallery_pair_ids) {
  if (queries.cols() != gallery.cols()) {
    throw std::runtime_error("compute_similarity: dimension mismatch (queries " +
                             std::to_string(queries.cols()) + ", gallery " +
                             std::to_string(gallery.cols()) + ")");
  }
  const int n_q = static_cast<int>(queries.rows());
  const int n_g = static_cast<int>(gallery.rows());
  const int d = static_cast<int>(queries.cols());

  if (query_pair_ids.empty()) {
    query_pair_ids.resize(n_q);
    std::iota(query_pair_ids.begin(), query_pair_ids.end(), PairId{0});
  }
  if (gallery_pair_ids.empty()) {
    gallery_pair_ids.resize(n_g);
    std::iota(gallery_pair_ids.begin(), gallery_pair_ids.end(), PairId{0});
  }
  if (static_cast<int>(query_pair_ids.size()) != n_q) {
    throw std::runtime_error("compute_similarity: query id count mismatch");
  }
  if (static_cast<int>(gallery_pair_ids.size()) != n_g) {
    throw std::runtime_error("compute_similarity: gallery id count mismatch");
  }

  SimilarityMatrix sim;
  sim.values.resize(n_q, n_g);
  // Plain sequential accumulation, no blocked/vectorized dot: rank decisions
  // downstream compare these values for exact equality.
  for (int i = 0; i < n_q; ++i) {
    for (int j = 0; j < n_g; ++j) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        acc += queries(i, c) * gallery(j, c);
      }
      sim.values(i, j) = acc;
    }
  }
  sim.query_pair_ids = std::move(query_pair_ids);
  sim.gallery_pair_ids = std::move(gallery_pair_ids);
  return sim;
}

int rank_of(const SimilarityMatrix& sim, int query_index, int gallery_index) {
  if (query_index < 0 || query_index >= sim.n_queries()) {
    throw std::runtime_error("rank_of: query index out of range");
  }
  if (gallery_index < 0 || gallery_index >= sim.n_gallery()) {
    throw std::runtime_error("rank_of: gallery index out of range");
  }
  const double s = sim.values(query_index, gallery_index);
  int rank = 1;
  for (int j = 0; j < sim.n_gallery(); ++j) {
    const double v = sim.values(query_index, j);
    if (v > s || (v == s && j < gallery_index)) {
      ++rank;
    }
  }
  return rank;
}

int rank1_index(const SimilarityMatrix& sim, int query_index) {
  if (query_index < 0 || query_index >= sim.n_queries()) {
    throw std::runtime_error("rank1_index: query index out of range");
  }
  if (sim.n_gallery() == 0) {
    throw std::runtime_error("rank1_index: empty gallery");
  }
  int best = 0;
  for (int j = 1; j < sim.n_gallery(); ++j) {
    if (sim.values(query_index, j) > sim.values(query_index, best)) {
      best = j;
    }
  }
  return best;
}

std::vector<PairId> WeakPositiveSet::pair_ids() const {
  std::vector<PairId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    out.push_back(e.query_pair_id);
  }
  return out;
}

WeakPositiveSet mine(const SimilarityMatrix& sim,
                     const std::vector<IdentityLabel>& query_identities,
                     const std::vector<IdentityLabel>& gallery_identities,
                     const std::vector<int>& paired_gallery, int k) {
  if (k < 2) {
    throw std::runtime_error("mine: k must be at least 2");
  }
  const int n_q = sim.n_queries();
  if (static_cast<int>(query_identities.size()) != n_q ||
      static_cast<int>(paired_gallery.size()) != n_q) {
    throw std::runtime_error("mine: query metadata size mismatch");
  }
  if (static_cast<int>(gallery_identities.size()) != sim.n_gallery()) {
    throw std::runtime_error("mine: gallery metadata size mismatch");
  }

  WeakPositiveSet set;
  set.k = k;
  for (int i = 0; i < n_q; ++i) {
    const int g = paired_gallery[i];
    if (g < 0 || g >= sim.n_gallery()) {
      throw std::runtime_error("mine: paired gallery index out of range for query " +
                               std::to_string(i));
    }
    const int r = rank_of(sim, i, g);
    if (r != k) {
      continue;
    }
    const int top = rank1_index(sim, i);
    if (gallery_identities[top] == query_identities[i]) {
      continue;
    }
    WeakPositiveEntry entry;
    entry.query_index = i;
    entry.query_pair_id = sim.query_pair_ids[i];
    entry.paired_gallery_index = g;
    entry.rank_of_pair = r;
    entry.rank1_gallery_index = top;
    entry.rank1_pair_id = sim.gallery_pair_ids[top];
    entry.rank1_identity = gallery_identities[top];
    set.entries.push_back(entry);
  }
  return set;
}

std::unordered_set<PairId> pairs_at_rank1(const SimilarityMatrix& sim,
                                          const std::vector<int>& paired_gallery) {
  if (static_cast<int>(paired_gallery.size()) != sim.n_queries()) {
    throw std::runtime_error("pairs_at_rank1: paired gallery size mismatch");
  }
  std::unordered_set<PairId> out;
  for (int i = 0; i < sim.n_queries(); ++i) {
    const int g = paired_gallery[i];
    if (g < 0 || g >= sim.n_gallery()) {
      throw std::runtime_error("pairs_at_rank1: paired gallery index out of range for query " +
                               std::to_string(i));
    }
    if (rank_of(sim, i, g) == 1) {
      out.insert(sim.query_pair_ids[i]);
    }
  }
  return out;
}

void BoostConfig::validate() const {
  if (k < 2) {
    throw std::runtime_error("boost config: k must be at least 2");
  }
  if (!(exp_alpha >= 1.0)) {
    throw std::runtime_error("boost config: exp_alpha must be at least 1");
  }
  if (refresh_period < 1) {
    throw std::runtime_error("boost config: refresh period must be positive");
  }
  if (warmup_epochs < 0) {
    throw std::runtime_error("boost config: warmup epochs must be non-negative");
  }
}

std::size_t WeightTable::boosted_count() const {
  std::size_t n = 0;
  for (const auto& [id, w] : weights) {
    if (w > 1.0) {
      ++n;
    }
  }
  return n;
}

std::uint64_t WeightTable::content_hash() const {
  // Order-independent: combine a per-entry hash commutatively.
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (const auto& [id, w] : weights) {
    std::uint64_t e = id * 0xbf58476d1ce4e5b9ull;
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(w));
    std::memcpy(&bits, &w, sizeof(bits));
    e ^= bits * 0x94d049bb133111ebull;
    e ^= e >> 31;
    h += e;
  }
  return h;
}

WeightTable build_weights(const WeakPositiveSet& mined,
                          const std::vector<PairId>& all_pair_ids, const BoostConfig& config,
                          const std::unordered_set<PairId>& rank1_correct_pairs) {
  config.validate();
  WeightTable table;
  table.exp_alpha = config.exp_alpha;
  for (const auto& e : mined.entries) {
    table.weights[e.query_pair_id] = config.exp_alpha;
  }
  if (config.augmented) {
    for (PairId id : all_pair_ids) {
      if (rank1_correct_pairs.count(id) > 0) {
        table.weights[id] = config.exp_alpha;
      }
    }
  }
  return table;
}

void merge_weights(WeightTable& into, const WeightTable& from) {
  for (const auto& [id, w] : from.weights) {
    auto it = into.weights.find(id);
    if (it == into.weights.end() || it->second < w) {
      into.weights[id] = w;
    }
  }
}

VectorXd batch_weights(const WeightTable& table, const std::vector<PairId>& batch_pair_ids) {
  VectorXd w(static_cast<int>(batch_pair_ids.size()));
  for (int i = 0; i < w.size(); ++i) {
    w(i) = table.weight_for(batch_pair_ids[i]);
  }
  return w;
}

std::string to_jsonl(const WeakPositiveSet& set) {
  std::ostringstream out;
  for (const auto& e : set.entries) {
    nlohmann::json j;
    j["pair_id"] = e.query_pair_id;
    j["rank"] = e.rank_of_pair;
    j["rank1_pair_id"] = e.rank1_pair_id;
    j["rank1_identity"] = e.rank1_identity;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::string to_json(const WeightTable& table) {
  // Sort by pair id so the dump is deterministic.
  std::vector<std::pair<PairId, double>> items(table.weights.begin(), table.weights.end());
  std::sort(items.begin(), items.end());
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, w] : items) {
    j[std::to_string(id)] = w;
  }
  return j.dump(2) + "\n";
}

}  // namespace retboost::mining
