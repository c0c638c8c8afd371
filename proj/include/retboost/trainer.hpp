#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "retboost/dataset.hpp"
#include "retboost/encoder.hpp"
#include "retboost/eval.hpp"
#include "retboost/mining.hpp"
#include "retboost/rng.hpp"
#include "retboost/types.hpp"

namespace retboost::train {

struct LossTerm {
  std::string name;  // "itc", "id", or "sdm"
  double coefficient = 1.0;

  bool operator==(const LossTerm&) const = default;
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::vector<LossTerm> losses = {{"itc", 1.0}};
  bool boosting = true;
  mining::BoostConfig boost;
  int eval_every = 4;
  std::string checkpoint_dir;  // empty: keep everything in memory
  int hidden = 64;
  int embed_dim = 32;
  double tau = 0.05;
  bool sdm_bidirectional = true;

  void validate() const;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& config);

// Named loss bundles: "clip" / "clip+b" (ITC only), "irra" / "irra+b"
// (ITC + SDM + ID, unit coefficients). The "+b" variants turn boosting on.
void apply_preset(TrainConfig& config, const std::string& preset);

// One metrics.csv row. Retrieval columns are NaN on train rows, loss is NaN
// on val/test rows.
struct EpochRecord {
  int epoch = 0;
  std::string split;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double map = 0.0;
  double loss = 0.0;
  std::size_t n_boosted = 0;
};

// One boost_log.csv row: what a refresh found, and how the pairs boosted at
// the previous refresh are ranked now.
struct RefreshRecord {
  int epoch = 0;
  std::size_t n_mined = 0;
  std::size_t n_rank1 = 0;
  std::size_t n_boosted = 0;
  std::size_t prev_mined = 0;
  std::size_t prev_mined_now_rank1 = 0;
};

struct TrainState {
  int epoch = 0;  // epochs completed so far
  enc::EncoderParams params;
  enc::AdamState opt;
  mining::WeightTable weights;
  Rng rng{0};
  std::vector<IdentityLabel> class_index;  // sorted distinct train identities
  std::vector<PairId> last_mined;          // R_k pair ids from the last refresh
  std::vector<EpochRecord> history;
  std::vector<RefreshRecord> refresh_log;
};

// Text-queries-vs-unique-images similarity for a whole split, with pair ids
// and the query->own-image index map mining needs.
struct MiningInputs {
  mining::SimilarityMatrix sim;
  std::vector<IdentityLabel> query_identities;
  std::vector<IdentityLabel> gallery_identities;
  std::vector<int> paired_gallery;
};
MiningInputs t2i_inputs(const enc::EncoderParams& params, const data::Dataset& dataset);

// Convenience for the mine subcommand and diagnostics.
mining::WeakPositiveSet mine_dataset(const enc::EncoderParams& params,
                                     const data::Dataset& dataset, int k);

// Re-mines weak positives with the current model and rebuilds the weight
// table from scratch; records the refresh and promotion accounting in state.
const mining::WeightTable& refresh_weights(TrainState& state, const data::Dataset& train_data,
                                           const mining::BoostConfig& boost_config);

// One pass over the shuffled pairs (remainder dropped): forward, weighted
// losses, Adam. Returns the mean batch loss.
double train_epoch(TrainState& state, const data::Dataset& dataset, const TrainConfig& config);

TrainState init_state(const TrainConfig& config, const data::Dataset& train_data);

// Continues a state to config.epochs, evaluating and checkpointing on the
// way; run() is init + run_from. Artifacts land in config.checkpoint_dir.
void run_from(TrainState& state, const TrainConfig& config, const data::Corpus& corpus);
TrainState run(const TrainConfig& config, const data::Corpus& corpus);

// Exact-resume serialization: the published checkpoint plus state.json and a
// float64 blob so a resumed run reproduces the uninterrupted one bitwise.
void save_state(const TrainState& state, const TrainConfig& config,
                const std::filesystem::path& dir);
struct SavedRun {
  TrainState state;
  TrainConfig config;
};
SavedRun load_state(const std::filesystem::path& dir);

std::string metrics_csv(const std::vector<EpochRecord>& history);
std::string boost_log_csv(const std::vector<RefreshRecord>& log);

}  // namespace retboost::train
