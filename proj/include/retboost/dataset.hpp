#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "retboost/types.hpp"

namespace retboost::data {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

// Generator knobs for one split of a synthetic two-modality identity corpus.
struct SynthConfig {
  int n_identities = 200;
  int images_per_id = 4;
  int texts_per_image = 1;
  int p_latent = 16;
  int p_img = 64;
  int p_txt = 64;
  double noise_img = 0.35;   // feature-space noise std
  double noise_txt = 0.35;
  double confusion_rate = 0.3;    // fraction of identities blended toward a confuser
  double confusion_lambda = 0.45; // blend strength, must stay < 1
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const SynthConfig&) const = default;
};

struct SampleRef {
  PairId pair_id = 0;
  IdentityLabel identity = 0;
  int image_row = 0;
  int text_row = 0;

  bool operator==(const SampleRef&) const = default;
};

// One (image, text, identity) pair materialized out of the row storage.
struct Sample {
  PairId pair_id = 0;
  IdentityLabel identity = 0;
  VectorXf image_feat;
  VectorXf text_feat;
};

// Feature rows are stored deduplicated: several samples (captions) may
// reference the same image row. Immutable after construction.
struct Dataset {
  std::string name;
  Split split = Split::kTrain;
  SynthConfig config;
  MatrixXf images;  // n_images x p_img
  MatrixXf texts;   // n_texts x p_txt
  std::vector<SampleRef> samples;

  int n_samples() const { return static_cast<int>(samples.size()); }
  int n_images() const { return static_cast<int>(images.rows()); }
  int n_texts() const { return static_cast<int>(texts.rows()); }
  int p_img() const { return static_cast<int>(images.cols()); }
  int p_txt() const { return static_cast<int>(texts.cols()); }

  Sample sample(int i) const;

  // Identity of each image row, derived from the samples referencing it.
  std::vector<IdentityLabel> image_identities() const;
  std::vector<IdentityLabel> sample_identities() const;
  std::vector<PairId> pair_ids() const;

  // Lowest pair_id referencing each image row (stable gallery-side tag).
  std::vector<PairId> image_pair_ids() const;

  std::vector<IdentityLabel> distinct_identities() const;  // sorted

  void validate() const;  // throws std::runtime_error on invariant violations
  bool operator==(const Dataset& other) const;
};

// Which identities get blended toward which confuser. Pure function of the
// config, so tests can recover the plan without it living in the dataset.
struct ConfusionPlanEntry {
  int identity_index = 0;
  int confuser_index = 0;
};
std::vector<ConfusionPlanEntry> confusion_plan(const SynthConfig& config);

Dataset generate(const SynthConfig& config, Split split = Split::kTrain,
                 const std::string& name = "synth");

// Train/val/test triple sharing the projection matrices (drawn once from the
// seed) with disjoint identity label ranges, so a model fitted on train
// meaningfully encodes the held-out splits.
struct Corpus {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct CorpusConfig {
  SynthConfig base;  // train-split shape; val/test reuse everything but the count
  int n_val_identities = 40;
  int n_test_identities = 50;
  std::string name = "synth";
};

Corpus generate_corpus(const CorpusConfig& config);

// On-disk layout: <dir>/manifest.jsonl + images.f32 + texts.f32 + meta.json.
void save(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load(const std::filesystem::path& dir);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace retboost::data
