#include <algorithm>
#include <set>
#include <unordered_set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "retboost/mining.hpp"
#include "retboost/rng.hpp"

using namespace retboost;
using mining::BoostConfig;
using mining::SimilarityMatrix;
using mining::WeightTable;

namespace {

SimilarityMatrix from_values(const MatrixXd& values) {
  SimilarityMatrix sim;
  sim.values = values;
  for (int i = 0; i < values.rows(); ++i) sim.query_pair_ids.push_back(static_cast<PairId>(i));
  for (int j = 0; j < values.cols(); ++j) sim.gallery_pair_ids.push_back(static_cast<PairId>(j));
  return sim;
}

MatrixXd random_unit_rows(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

}  // namespace

TEST_SUITE("mining") {
  TEST_CASE("similarity of identical and orthogonal unit rows") {
    MatrixXd q(1, 2), g(2, 2);
    q << 1.0, 0.0;
    g << 1.0, 0.0, 0.0, 1.0;
    auto sim = mining::compute_similarity(q, g);
    CHECK(sim.values(0, 0) == 1.0);
    CHECK(sim.values(0, 1) == 0.0);
    CHECK(sim.n_queries() == 1);
    CHECK(sim.n_gallery() == 2);
    CHECK(sim.query_pair_ids == std::vector<PairId>{0});
  }

  TEST_CASE("similarity matches the naive triple loop exactly") {
    MatrixXd q = random_unit_rows(3, 5, 1);
    MatrixXd g = random_unit_rows(3, 5, 2);
    auto sim = mining::compute_similarity(q, g);
    MatrixXd expect = oracle::sim_matrix(q, g, 1.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(sim.values(i, j) == expect(i, j));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CHECK(sim.values(i, j) >= -1.0 - 1e-9);
        CHECK(sim.values(i, j) <= 1.0 + 1e-9);
      }
  }

  TEST_CASE("similarity rejects mismatched dimensions") {
    CHECK_THROWS(mining::compute_similarity(random_unit_rows(2, 4, 1), random_unit_rows(2, 5, 2)));
  }

  TEST_CASE("rank_of hand cases") {
    MatrixXd v(1, 3);
    v << 0.9, 0.8, 0.1;
    auto sim = from_values(v);
    CHECK(mining::rank_of(sim, 0, 0) == 1);
    CHECK(mining::rank_of(sim, 0, 1) == 2);
    CHECK(mining::rank_of(sim, 0, 2) == 3);
    CHECK(mining::rank1_index(sim, 0) == 0);

    MatrixXd tie(1, 2);
    tie << 0.5, 0.5;
    auto tied = from_values(tie);
    CHECK(mining::rank_of(tied, 0, 0) == 1);
    CHECK(mining::rank_of(tied, 0, 1) == 2);
    CHECK(mining::rank1_index(tied, 0) == 0);
  }

  TEST_CASE("ranks over a row are a bijection onto 1..n") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      int n = 2 + static_cast<int>(rng.bounded(12));
      MatrixXd v(1, n);
      for (int j = 0; j < n; ++j) v(0, j) = static_cast<double>(rng.bounded(5)) / 4.0;  // ties likely
      auto sim = from_values(v);
      std::set<int> ranks;
      for (int j = 0; j < n; ++j) ranks.insert(mining::rank_of(sim, 0, j));
      CHECK(static_cast<int>(ranks.size()) == n);
      CHECK(*ranks.begin() == 1);
      CHECK(*ranks.rbegin() == n);
    }
  }

  TEST_CASE("hand-ranked 3-gallery instance is mined at k=2") {
    MatrixXd v(1, 3);
    v << 0.9, 0.8, 0.1;
    auto sim = from_values(v);
    std::vector<IdentityLabel> query_ids = {7};
    std::vector<int> paired = {1};

    auto mined = mining::mine(sim, query_ids, {3, 7, 5}, paired, 2);
    REQUIRE(mined.entries.size() == 1);
    CHECK(mined.entries[0].query_index == 0);
    CHECK(mined.entries[0].rank_of_pair == 2);
    CHECK(mined.entries[0].rank1_gallery_index == 0);
    CHECK(mined.entries[0].rank1_identity == 3);
    CHECK(mined.k == 2);

    // Same sims, but the rank-1 item shares the query identity: excluded.
    auto excluded = mining::mine(sim, query_ids, {7, 7, 5}, paired, 2);
    CHECK(excluded.entries.empty());

    CHECK_THROWS(mining::mine(sim, query_ids, {3, 7, 5}, paired, 1));
  }

  TEST_CASE("mining agrees with the brute-force oracle on random instances") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      int n_q = 2 + static_cast<int>(rng.bounded(31));
      int n_g = 2 + static_cast<int>(rng.bounded(31));
      int k = 2 + static_cast<int>(rng.bounded(4));
      MatrixXd v(n_q, n_g);
      for (int i = 0; i < n_q; ++i)
        for (int j = 0; j < n_g; ++j)
          v(i, j) = static_cast<double>(rng.bounded(9)) / 8.0 - 0.5;  // coarse grid forces ties
      auto sim = from_values(v);

      std::vector<IdentityLabel> gallery_ids(static_cast<size_t>(n_g));
      for (auto& id : gallery_ids) id = static_cast<IdentityLabel>(rng.bounded(6));
      std::vector<IdentityLabel> query_ids(static_cast<size_t>(n_q));
      std::vector<int> paired(static_cast<size_t>(n_q));
      for (int i = 0; i < n_q; ++i) {
        paired[static_cast<size_t>(i)] = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_g)));
        query_ids[static_cast<size_t>(i)] = gallery_ids[static_cast<size_t>(paired[static_cast<size_t>(i)])];
      }

      auto mined = mining::mine(sim, query_ids, gallery_ids, paired, k);
      auto expect = oracle::mine_by_sort(v, std::vector<int>(query_ids.begin(), query_ids.end()),
                                         std::vector<int>(gallery_ids.begin(), gallery_ids.end()),
                                         paired, k);
      REQUIRE(mined.entries.size() == expect.size());
      for (size_t e = 0; e < expect.size(); ++e) {
        CHECK(mined.entries[e].query_index == expect[e].query);
        CHECK(mined.entries[e].rank1_gallery_index == expect[e].rank1_gallery);
        CHECK(mined.entries[e].rank_of_pair == k);
      }

      // Every rank must agree with the full-sort oracle, ties included.
      for (int i = 0; i < std::min(n_q, 4); ++i)
        for (int j = 0; j < n_g; ++j)
          CHECK(mining::rank_of(sim, i, j) == oracle::rank_by_sort(v, i, j));

      // No query appears twice.
      std::set<int> queries;
      for (const auto& e : mined.entries) CHECK(queries.insert(e.query_index).second);
    }
  }

  TEST_CASE("build_weights assigns exp_alpha to mined pairs and resets the rest") {
    MatrixXd v(2, 3);
    v << 0.9, 0.8, 0.1,  // query 0: own item at rank 2 behind a wrong rank-1
        0.95, 0.2, 0.1;  // query 1: own item buried at rank 3
    auto sim = from_values(v);
    sim.query_pair_ids = {100, 101};
    sim.gallery_pair_ids = {200, 100, 101};
    std::vector<IdentityLabel> query_ids = {7, 4};
    std::vector<IdentityLabel> gallery_ids = {3, 7, 4};
    std::vector<int> paired = {1, 2};

    auto mined = mining::mine(sim, query_ids, gallery_ids, paired, 2);
    REQUIRE(mined.entries.size() == 1);
    CHECK(mined.entries[0].query_pair_id == 100);

    BoostConfig cfg;
    cfg.k = 2;
    cfg.exp_alpha = 1.6;
    cfg.augmented = false;
    std::vector<PairId> all = {100, 101, 200};
    auto rank1 = mining::pairs_at_rank1(sim, paired);
    CHECK(rank1.empty());  // neither query has its own item on top

    auto table = mining::build_weights(mined, all, cfg, rank1);
    CHECK(table.weight_for(100) == 1.6);
    CHECK(table.weight_for(101) == 1.0);
    CHECK(table.weight_for(200) == 1.0);
    CHECK(table.weight_for(999) == 1.0);
    CHECK(table.boosted_count() == 1);

    cfg.augmented = true;
    auto aug = mining::build_weights(mined, all, cfg, rank1);
    CHECK(aug.weight_for(100) == 1.6);
    CHECK(aug.weight_for(101) == 1.0);
    CHECK(aug.boosted_count() == table.boosted_count());

    // The augmented exp_alpha set contains the plain one.
    for (const auto& [pid, w] : table.weights)
      if (w > 1.0) CHECK(aug.weight_for(pid) == doctest::Approx(1.6));
  }

  TEST_CASE("augmented weighting boosts rank-1-correct pairs by hand") {
    // Pair A (query 0) correct at rank 1; pair B (query 1) at rank 2 behind a
    // wrong-identity rank-1.
    MatrixXd v(2, 2);
    v << 0.9, 0.1,
        0.8, 0.7;
    auto sim = from_values(v);
    sim.query_pair_ids = {10, 11};
    sim.gallery_pair_ids = {10, 11};
    std::vector<IdentityLabel> query_ids = {1, 2};
    std::vector<IdentityLabel> gallery_ids = {1, 2};
    std::vector<int> paired = {0, 1};

    auto mined = mining::mine(sim, query_ids, gallery_ids, paired, 2);
    REQUIRE(mined.entries.size() == 1);
    CHECK(mined.entries[0].query_pair_id == 11);

    BoostConfig cfg;
    cfg.augmented = true;
    auto rank1 = mining::pairs_at_rank1(sim, paired);
    CHECK(rank1.count(10) == 1);
    CHECK(rank1.count(11) == 0);

    auto table = mining::build_weights(mined, {10, 11}, cfg, rank1);
    CHECK(table.weight_for(10) == 1.6);
    CHECK(table.weight_for(11) == 1.6);
    CHECK(table.boosted_count() == 2);
  }

  TEST_CASE("exp_alpha of one produces the all-ones table regardless of mining") {
    MatrixXd v(1, 3);
    v << 0.9, 0.8, 0.1;
    auto sim = from_values(v);
    auto mined = mining::mine(sim, {7}, {3, 7, 5}, {1}, 2);
    REQUIRE_FALSE(mined.entries.empty());

    BoostConfig cfg;
    cfg.exp_alpha = 1.0;
    auto table = mining::build_weights(mined, {0, 1, 2}, cfg, mining::pairs_at_rank1(sim, {1}));
    CHECK(table.boosted_count() == 0);
    for (PairId p = 0; p < 3; ++p) CHECK(table.weight_for(p) == 1.0);
  }

  TEST_CASE("empty mined set without augmentation weighs everything one") {
    mining::WeakPositiveSet empty;
    BoostConfig cfg;
    cfg.augmented = false;
    auto table = mining::build_weights(empty, {1, 2, 3}, cfg, {});
    CHECK(table.boosted_count() == 0);
    CHECK(table.weight_for(1) == 1.0);
  }

  TEST_CASE("batch weights are lookups with default one and permutation equivariance") {
    WeightTable table;
    table.exp_alpha = 1.6;
    table.weights = {{17, 1.6}};

    auto w = mining::batch_weights(table, {17, 4});
    REQUIRE(w.size() == 2);
    CHECK(w[0] == 1.6);
    CHECK(w[1] == 1.0);

    auto flipped = mining::batch_weights(table, {4, 17});
    CHECK(flipped[0] == 1.0);
    CHECK(flipped[1] == 1.6);

    auto absent = mining::batch_weights(table, {1, 2, 3});
    for (int i = 0; i < 3; ++i) CHECK(absent[i] == 1.0);
  }

  TEST_CASE("weight table hash ignores insertion order") {
    WeightTable a, b;
    a.weights = {{1, 1.6}, {2, 1.0}, {3, 1.6}};
    b.weights = {{3, 1.6}, {1, 1.6}, {2, 1.0}};
    a.exp_alpha = b.exp_alpha = 1.6;
    CHECK(a.content_hash() == b.content_hash());
    b.weights[3] = 1.0;
    CHECK(a.content_hash() != b.content_hash());
  }

  TEST_CASE("merge keeps the larger weight per pair") {
    WeightTable a, b;
    a.exp_alpha = b.exp_alpha = 1.6;
    a.weights = {{1, 1.6}, {2, 1.0}};
    b.weights = {{2, 1.6}, {3, 1.6}};
    mining::merge_weights(a, b);
    CHECK(a.weight_for(1) == 1.6);
    CHECK(a.weight_for(2) == 1.6);
    CHECK(a.weight_for(3) == 1.6);
  }

  TEST_CASE("boost config validation") {
    BoostConfig cfg;
    cfg.validate();
    cfg.k = 1;
    CHECK_THROWS(cfg.validate());
    cfg = BoostConfig{};
    cfg.exp_alpha = 0.5;
    CHECK_THROWS(cfg.validate());
    cfg = BoostConfig{};
    cfg.refresh_period = 0;
    CHECK_THROWS(cfg.validate());
    cfg = BoostConfig{};
    cfg.warmup_epochs = -1;
    CHECK_THROWS(cfg.validate());
  }

  TEST_CASE("mined set serializes to JSON lines and tables to JSON") {
    MatrixXd v(1, 3);
    v << 0.9, 0.8, 0.1;
    auto sim = from_values(v);
    sim.query_pair_ids = {42};
    sim.gallery_pair_ids = {7, 42, 9};
    auto mined = mining::mine(sim, {7}, {3, 7, 5}, {1}, 2);
    std::string jsonl = mining::to_jsonl(mined);
    CHECK(jsonl.find("\"pair_id\"") != std::string::npos);
    CHECK(jsonl.find("42") != std::string::npos);
    CHECK(jsonl.find("\"rank\"") != std::string::npos);
    CHECK(jsonl.find("\"rank1_pair_id\"") != std::string::npos);
    CHECK(jsonl.find("\"rank1_identity\"") != std::string::npos);

    WeightTable table;
    table.weights = {{42, 1.6}};
    table.exp_alpha = 1.6;
    std::string json = mining::to_json(table);
    CHECK(json.find("\"42\"") != std::string::npos);
    CHECK(json.find("1.6") != std::string::npos);
  }
}
