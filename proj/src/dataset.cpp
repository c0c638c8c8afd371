#include "retboost/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "retboost/io.hpp"
#include "retboost/rng.hpp"

namespace retboost::data {

namespace {

// Sub-stream tags. Each split draws from its own generator so a split's
// content depends only on (seed, its own shape), not on sibling splits.
constexpr std::uint64_t kTagProjection = 0x01;
constexpr std::uint64_t kTagTrain = 0x10;
constexpr std::uint64_t kTagVal = 0x11;
constexpr std::uint64_t kTagTest = 0x12;

std::uint64_t split_tag(Split split) {
  switch (split) {
    case Split::kTrain: return kTagTrain;
    case Split::kVal: return kTagVal;
    case Split::kTest: return kTagTest;
  }
  throw std::logic_error("unreachable split");
}

MatrixXd draw_projection(Rng& rng, int rows, int cols) {
  MatrixXd a(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = rng.gaussian() * scale;
  return a;
}

std::vector<ConfusionPlanEntry> draw_confusion_plan(const SynthConfig& config, Rng& rng) {
  const int n = config.n_identities;
  const int n_confused = static_cast<int>(std::floor(config.confusion_rate * n));
  std::vector<ConfusionPlanEntry> plan;
  if (n < 2 || n_confused == 0) return plan;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  plan.reserve(static_cast<std::size_t>(n_confused));
  for (int c = 0; c < n_confused; ++c) {
    const int id = order[static_cast<std::size_t>(c)];
    // Uniform over the other n-1 identities.
    int confuser = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n - 1)));
    if (confuser >= id) ++confuser;
    plan.push_back({id, confuser});
  }
  return plan;
}

// One split drawn from its own generator stream. The projections are shared
// across splits; identity labels start at identity_offset.
Dataset generate_split(const SynthConfig& config, const MatrixXd& proj_img,
                       const MatrixXd& proj_txt, IdentityLabel identity_offset,
                       std::uint64_t block_seed, Split split, const std::string& name) {
  Rng rng(block_seed);
  const int n = config.n_identities;

  MatrixXd latents(n, config.p_latent);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < config.p_latent; ++k) latents(i, k) = rng.gaussian();

  // Blend confused prototypes toward their confuser's *original* prototype.
  const MatrixXd originals = latents;
  for (const auto& entry : draw_confusion_plan(config, rng)) {
    const double lambda = config.confusion_lambda;
    latents.row(entry.identity_index) =
        (1.0 - lambda) * originals.row(entry.identity_index) +
        lambda * originals.row(entry.confuser_index);
  }

  const int n_images = n * config.images_per_id;
  const int n_texts = n_images * config.texts_per_image;
  Dataset out;
  out.name = name;
  out.split = split;
  out.config = config;
  out.images.resize(n_images, config.p_img);
  out.texts.resize(n_texts, config.p_txt);
  out.samples.reserve(static_cast<std::size_t>(n_texts));

  PairId next_pair = 0;
  int image_row = 0, text_row = 0;
  VectorXd buf;
  for (int id = 0; id < n; ++id) {
    for (int img = 0; img < config.images_per_id; ++img) {
      buf = proj_img * latents.row(id).transpose();
      for (int k = 0; k < config.p_img; ++k) buf(k) += config.noise_img * rng.gaussian();
      out.images.row(image_row) = buf.cast<float>().transpose();
      for (int cap = 0; cap < config.texts_per_image; ++cap) {
        buf = proj_txt * latents.row(id).transpose();
        for (int k = 0; k < config.p_txt; ++k) buf(k) += config.noise_txt * rng.gaussian();
        out.texts.row(text_row) = buf.cast<float>().transpose();
        out.samples.push_back({next_pair++, identity_offset + id, image_row, text_row});
        ++text_row;
      }
      ++image_row;
    }
  }
  return out;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  throw std::logic_error("unreachable split");
}

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw std::runtime_error("unknown split name: " + text);
}

void SynthConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("SynthConfig: ") + what);
  };
  require(n_identities >= 1, "n_identities must be >= 1");
  require(images_per_id >= 1, "images_per_id must be >= 1");
  require(texts_per_image >= 1, "texts_per_image must be >= 1");
  require(p_latent >= 1 && p_img >= 1 && p_txt >= 1, "feature dims must be >= 1");
  require(noise_img >= 0.0 && noise_txt >= 0.0, "noise stds must be non-negative");
  require(confusion_rate >= 0.0 && confusion_rate <= 1.0, "confusion_rate must be in [0,1]");
  require(confusion_lambda >= 0.0 && confusion_lambda < 1.0,
          "confusion_lambda must be in [0,1) so identities stay distinct");
}

Sample Dataset::sample(int i) const {
  const SampleRef& ref = samples.at(static_cast<std::size_t>(i));
  Sample s;
  s.pair_id = ref.pair_id;
  s.identity = ref.identity;
  s.image_feat = images.row(ref.image_row).transpose();
  s.text_feat = texts.row(ref.text_row).transpose();
  return s;
}

std::vector<IdentityLabel> Dataset::image_identities() const {
  std::vector<IdentityLabel> ids(static_cast<std::size_t>(images.rows()), -1);
  for (const auto& ref : samples) ids[static_cast<std::size_t>(ref.image_row)] = ref.identity;
  return ids;
}

std::vector<IdentityLabel> Dataset::sample_identities() const {
  std::vector<IdentityLabel> ids;
  ids.reserve(samples.size());
  for (const auto& ref : samples) ids.push_back(ref.identity);
  return ids;
}

std::vector<PairId> Dataset::pair_ids() const {
  std::vector<PairId> ids;
  ids.reserve(samples.size());
  for (const auto& ref : samples) ids.push_back(ref.pair_id);
  return ids;
}

std::vector<PairId> Dataset::image_pair_ids() const {
  std::vector<PairId> ids(static_cast<std::size_t>(images.rows()),
                          std::numeric_limits<PairId>::max());
  for (const auto& ref : samples) {
    auto& slot = ids[static_cast<std::size_t>(ref.image_row)];
    slot = std::min(slot, ref.pair_id);
  }
  return ids;
}

std::vector<IdentityLabel> Dataset::distinct_identities() const {
  std::set<IdentityLabel> set;
  for (const auto& ref : samples) set.insert(ref.identity);
  return {set.begin(), set.end()};
}

void Dataset::validate() const {
  if (samples.empty()) throw std::runtime_error("dataset is empty");
  std::unordered_set<PairId> seen;
  seen.reserve(samples.size());
  for (const auto& ref : samples) {
    if (!seen.insert(ref.pair_id).second) {
      throw std::runtime_error("duplicate pair_id " + std::to_string(ref.pair_id));
    }
    if (ref.image_row < 0 || ref.image_row >= images.rows()) {
      throw std::runtime_error("pair_id " + std::to_string(ref.pair_id) +
                               " references missing image row " + std::to_string(ref.image_row));
    }
    if (ref.text_row < 0 || ref.text_row >= texts.rows()) {
      throw std::runtime_error("pair_id " + std::to_string(ref.pair_id) +
                               " references missing text row " + std::to_string(ref.text_row));
    }
    if (ref.identity < 0) throw std::runtime_error("negative identity label");
  }
  if (!images.allFinite() || !texts.allFinite()) {
    throw std::runtime_error("non-finite feature values");
  }
}

bool Dataset::operator==(const Dataset& other) const {
  return name == other.name && split == other.split && config == other.config &&
         samples == other.samples && images.rows() == other.images.rows() &&
         images.cols() == other.images.cols() && texts.rows() == other.texts.rows() &&
         texts.cols() == other.texts.cols() && images == other.images && texts == other.texts;
}

std::vector<ConfusionPlanEntry> confusion_plan(const SynthConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, split_tag(Split::kTrain)));
  // Skip past the latent draws to reach the plan draws.
  for (int i = 0; i < config.n_identities * config.p_latent; ++i) rng.gaussian();
  return draw_confusion_plan(config, rng);
}

Dataset generate(const SynthConfig& config, Split split, const std::string& name) {
  config.validate();
  Rng proj_rng(mix_seed(config.seed, kTagProjection));
  const MatrixXd proj_img = draw_projection(proj_rng, config.p_img, config.p_latent);
  const MatrixXd proj_txt = draw_projection(proj_rng, config.p_txt, config.p_latent);
  Dataset out = generate_split(config, proj_img, proj_txt, /*identity_offset=*/0,
                               mix_seed(config.seed, split_tag(split)), split, name);
  out.validate();
  return out;
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.base.validate();
  if (config.n_val_identities < 1 || config.n_test_identities < 1) {
    throw std::invalid_argument("corpus needs at least one val and one test identity");
  }
  Rng proj_rng(mix_seed(config.base.seed, kTagProjection));
  const MatrixXd proj_img = draw_projection(proj_rng, config.base.p_img, config.base.p_latent);
  const MatrixXd proj_txt = draw_projection(proj_rng, config.base.p_txt, config.base.p_latent);

  auto block = [&](int n_ids, IdentityLabel offset, Split split) {
    SynthConfig c = config.base;
    c.n_identities = n_ids;
    Dataset d = generate_split(c, proj_img, proj_txt, offset,
                               mix_seed(c.seed, split_tag(split)), split, config.name);
    d.validate();
    return d;
  };

  Corpus corpus;
  corpus.train = block(config.base.n_identities, 0, Split::kTrain);
  corpus.val = block(config.n_val_identities, config.base.n_identities, Split::kVal);
  corpus.test = block(config.n_test_identities,
                      config.base.n_identities + config.n_val_identities, Split::kTest);
  return corpus;
}

namespace {

nlohmann::json config_to_json(const SynthConfig& c) {
  return {{"n_identities", c.n_identities},
          {"images_per_id", c.images_per_id},
          {"texts_per_image", c.texts_per_image},
          {"p_latent", c.p_latent},
          {"p_img", c.p_img},
          {"p_txt", c.p_txt},
          {"noise_img", c.noise_img},
          {"noise_txt", c.noise_txt},
          {"confusion_rate", c.confusion_rate},
          {"confusion_lambda", c.confusion_lambda},
          {"seed", c.seed}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_identities = j.at("n_identities").get<int>();
  c.images_per_id = j.at("images_per_id").get<int>();
  c.texts_per_image = j.at("texts_per_image").get<int>();
  c.p_latent = j.at("p_latent").get<int>();
  c.p_img = j.at("p_img").get<int>();
  c.p_txt = j.at("p_txt").get<int>();
  c.noise_img = j.at("noise_img").get<double>();
  c.noise_txt = j.at("noise_txt").get<double>();
  c.confusion_rate = j.at("confusion_rate").get<double>();
  c.confusion_lambda = j.at("confusion_lambda").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);

  std::ostringstream manifest;
  for (const auto& ref : dataset.samples) {
    nlohmann::json line = {{"pair_id", ref.pair_id},
                           {"identity", ref.identity},
                           {"image_row", ref.image_row},
                           {"text_row", ref.text_row}};
    manifest << line.dump() << '\n';
  }
  io::write_text_file(dir / "manifest.jsonl", manifest.str());
  io::write_matrix_f32(dir / "images.f32", dataset.images);
  io::write_matrix_f32(dir / "texts.f32", dataset.texts);

  nlohmann::json meta = {{"format_version", 1},
                         {"name", dataset.name},
                         {"split", to_string(dataset.split)},
                         {"config", config_to_json(dataset.config)}};
  io::write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset load(const std::filesystem::path& dir) {
  Dataset out;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_text_file(dir / "meta.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed meta.json in " + dir.string() + ": " + e.what());
  }
  const int version = meta.at("format_version").get<int>();
  if (version != 1) {
    throw std::runtime_error("unknown dataset format_version " + std::to_string(version) +
                             " in " + dir.string());
  }
  out.name = meta.at("name").get<std::string>();
  out.split = split_from_string(meta.at("split").get<std::string>());
  out.config = config_from_json(meta.at("config"));

  out.images = io::read_matrix_f32(dir / "images.f32");
  out.texts = io::read_matrix_f32(dir / "texts.f32");

  std::istringstream manifest(io::read_text_file(dir / "manifest.jsonl"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("malformed manifest line " + std::to_string(line_no) + " in " +
                               dir.string() + ": " + e.what());
    }
    SampleRef ref;
    ref.pair_id = j.at("pair_id").get<PairId>();
    ref.identity = j.at("identity").get<IdentityLabel>();
    ref.image_row = j.at("image_row").get<int>();
    ref.text_row = j.at("text_row").get<int>();
    out.samples.push_back(ref);
  }
  try {
    out.validate();
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("invalid dataset in " + dir.string() + ": " + e.what());
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  save(corpus.train, dir / "train");
  save(corpus.val, dir / "val");
  save(corpus.test, dir / "test");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.train = load(dir / "train");
  corpus.val = load(dir / "val");
  corpus.test = load(dir / "test");
  return corpus;
}

}  // namespace retboost::data
