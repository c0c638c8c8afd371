#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "retboost/types.hpp"

namespace retboost::mining {

// Query x gallery cosine similarities plus index -> pair_id maps. Entries are
// accumulated in sequential order so independently coded reference loops
// reproduce every value bit-for-bit.
struct SimilarityMatrix {
  MatrixXd values;  // n_q x n_g
  std::vector<PairId> query_pair_ids;
  std::vector<PairId> gallery_pair_ids;

  int n_queries() const { return static_cast<int>(values.rows()); }
  int n_gallery() const { return static_cast<int>(values.cols()); }
};

SimilarityMatrix compute_similarity(const MatrixXd& queries, const MatrixXd& gallery,
                                    std::vector<PairId> query_pair_ids = {},
                                    std::vector<PairId> gallery_pair_ids = {});

// 1-based position of gallery_index in the descending sort of the query's
// row; ties break by ascending gallery index.
int rank_of(const SimilarityMatrix& sim, int query_index, int gallery_index);

// Index of the top-ranked gallery item for a query (same tie rule).
int rank1_index(const SimilarityMatrix& sim, int query_index);

struct WeakPositiveEntry {
  int query_index = 0;
  PairId query_pair_id = 0;
  int paired_gallery_index = 0;
  int rank_of_pair = 0;  // == k for mined entries
  int rank1_gallery_index = 0;
  PairId rank1_pair_id = 0;
  IdentityLabel rank1_identity = 0;
};

struct WeakPositiveSet {
  std::vector<WeakPositiveEntry> entries;
  int k = 2;

  std::vector<PairId> pair_ids() const;
};

// Pairs whose own gallery item sits at rank exactly k while the rank-1 item
// carries a different identity. Queries are texts, gallery items images.
WeakPositiveSet mine(const SimilarityMatrix& sim,
                     const std::vector<IdentityLabel>& query_identities,
                     const std::vector<IdentityLabel>& gallery_identities,
                     const std::vector<int>& paired_gallery, int k);

// Pair ids whose own gallery item is at rank 1 (used for the augmented set
// and for promotion tracking between refreshes).
std::unordered_set<PairId> pairs_at_rank1(const SimilarityMatrix& sim,
                                          const std::vector<int>& paired_gallery);

struct BoostConfig {
  int k = 2;
  double exp_alpha = 1.6;
  int refresh_period = 4;
  int warmup_epochs = 4;
  bool augmented = true;
  bool mine_i2t = false;  // experimental: also mine the image->text direction

  void validate() const;
};

// pair_id -> multiplicative loss weight; absent ids weigh 1. Rebuilt from
// scratch at every refresh, never accumulated.
struct WeightTable {
  std::unordered_map<PairId, double> weights;
  double exp_alpha = 1.0;
  int epoch_computed = 0;

  double weight_for(PairId id) const {
    auto it = weights.find(id);
    return it == weights.end() ? 1.0 : it->second;
  }
  std::size_t boosted_count() const;  // entries with weight > 1
  std::uint64_t content_hash() const;
};

WeightTable build_weights(const WeakPositiveSet& mined,
                          const std::vector<PairId>& all_pair_ids, const BoostConfig& config,
                          const std::unordered_set<PairId>& rank1_correct_pairs);

// Union of two tables built at the same refresh (t2i plus optional i2t).
void merge_weights(WeightTable& into, const WeightTable& from);

VectorXd batch_weights(const WeightTable& table, const std::vector<PairId>& batch_pair_ids);

// JSON-lines dump of a mined set: {pair_id, rank, rank1_pair_id, rank1_identity}.
std::string to_jsonl(const WeakPositiveSet& set);
// Flat JSON object {pair_id: weight}.
std::string to_json(const WeightTable& table);

}  // namespace retboost::mining
