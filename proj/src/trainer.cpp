#include "retboost/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "retboost/io.hpp"
#include "retboost/losses.hpp"

namespace retboost::train {

namespace {

constexpr std::uint64_t kTagInit = 0x30;
constexpr std::uint64_t kTagShuffle = 0x31;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double json_double(const nlohmann::json& j) {
  return j.is_null() ? kNan : j.get<double>();
}

nlohmann::json double_json(double v) {
  nlohmann::json j;
  if (std::isnan(v)) {
    return j;  // null; NaN has no JSON literal
  }
  j = v;
  return j;
}

// Flattened gradient-set order mirrors the parameter order.
VectorXd flatten_grads(const enc::GradientSet& g) {
  const MatrixXd* mats[] = {&g.img.w1, &g.img.w2, &g.txt.w1, &g.txt.w2, &g.w_id};
  const VectorXd* vecs[] = {&g.img.b1, &g.img.b2, &g.txt.b1, &g.txt.b2};
  long total = 0;
  for (auto* m : mats) total += m->size();
  for (auto* v : vecs) total += v->size();
  VectorXd out(total);
  long at = 0;
  auto put_mat = [&](const MatrixXd& m) {
    out.segment(at, m.size()) = Eigen::Map<const VectorXd>(m.data(), m.size());
    at += m.size();
  };
  auto put_vec = [&](const VectorXd& v) {
    out.segment(at, v.size()) = v;
    at += v.size();
  };
  put_mat(g.img.w1);
  put_vec(g.img.b1);
  put_mat(g.img.w2);
  put_vec(g.img.b2);
  put_mat(g.txt.w1);
  put_vec(g.txt.b1);
  put_mat(g.txt.w2);
  put_vec(g.txt.b2);
  put_mat(g.w_id);
  return out;
}

void unflatten_grads(const VectorXd& flat, enc::GradientSet& g) {
  long at = 0;
  auto take_mat = [&](MatrixXd& m) {
    Eigen::Map<VectorXd>(m.data(), m.size()) = flat.segment(at, m.size());
    at += m.size();
  };
  auto take_vec = [&](VectorXd& v) {
    v = flat.segment(at, v.size());
    at += v.size();
  };
  take_mat(g.img.w1);
  take_vec(g.img.b1);
  take_mat(g.img.w2);
  take_vec(g.img.b2);
  take_mat(g.txt.w1);
  take_vec(g.txt.b1);
  take_mat(g.txt.w2);
  take_vec(g.txt.b2);
  take_mat(g.w_id);
  if (at != flat.size()) {
    throw std::runtime_error("resume state: optimizer blob size mismatch");
  }
}

nlohmann::json boost_to_json(const mining::BoostConfig& b) {
  nlohmann::json j;
  j["k"] = b.k;
  j["exp_alpha"] = b.exp_alpha;
  j["refresh_period"] = b.refresh_period;
  j["warmup_epochs"] = b.warmup_epochs;
  j["augmented"] = b.augmented;
  j["mine_i2t"] = b.mine_i2t;
  return j;
}

mining::BoostConfig boost_from_json(const nlohmann::json& j) {
  mining::BoostConfig b;
  for (const auto& [key, value] : j.items()) {
    if (key == "k") {
      b.k = value.get<int>();
    } else if (key == "exp_alpha") {
      b.exp_alpha = value.get<double>();
    } else if (key == "refresh_period") {
      b.refresh_period = value.get<int>();
    } else if (key == "warmup_epochs") {
      b.warmup_epochs = value.get<int>();
    } else if (key == "augmented") {
      b.augmented = value.get<bool>();
    } else if (key == "mine_i2t") {
      b.mine_i2t = value.get<bool>();
    } else {
      throw std::runtime_error("train config: unknown boost key '" + key + "'");
    }
  }
  return b;
}

// Image embedding per sample (queries) against per-text-row gallery; the
// mirror of t2i_inputs for the experimental i2t mining direction.
MiningInputs i2t_inputs(const enc::EncoderParams& params, const data::Dataset& dataset) {
  const int n = dataset.n_samples();
  std::vector<int> text_owner(static_cast<std::size_t>(dataset.n_texts()), -1);
  for (int s = 0; s < n; ++s) {
    const int row = dataset.samples[static_cast<std::size_t>(s)].text_row;
    if (text_owner[static_cast<std::size_t>(row)] != -1) {
      throw std::runtime_error("i2t mining: text row " + std::to_string(row) +
                               " referenced by several samples");
    }
    text_owner[static_cast<std::size_t>(row)] = s;
  }
  for (int row = 0; row < dataset.n_texts(); ++row) {
    if (text_owner[static_cast<std::size_t>(row)] == -1) {
      throw std::runtime_error("i2t mining: text row " + std::to_string(row) + " unreferenced");
    }
  }

  const MatrixXd image_emb =
      enc::embed(params, dataset.images.cast<double>(), enc::Modality::kImage).values;
  const MatrixXd text_emb =
      enc::embed(params, dataset.texts.cast<double>(), enc::Modality::kText).values;

  MiningInputs in;
  MatrixXd queries(n, image_emb.cols());
  std::vector<PairId> query_ids;
  std::vector<int> paired(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const auto& ref = dataset.samples[static_cast<std::size_t>(s)];
    queries.row(s) = image_emb.row(ref.image_row);
    query_ids.push_back(ref.pair_id);
    paired[static_cast<std::size_t>(s)] = ref.text_row;
    in.query_identities.push_back(ref.identity);
  }
  std::vector<PairId> gallery_ids(static_cast<std::size_t>(dataset.n_texts()));
  in.gallery_identities.resize(static_cast<std::size_t>(dataset.n_texts()));
  for (int row = 0; row < dataset.n_texts(); ++row) {
    const auto& ref = dataset.samples[static_cast<std::size_t>(text_owner[row])];
    gallery_ids[static_cast<std::size_t>(row)] = ref.pair_id;
    in.gallery_identities[static_cast<std::size_t>(row)] = ref.identity;
  }
  in.sim = mining::compute_similarity(queries, text_emb, std::move(query_ids),
                                      std::move(gallery_ids));
  in.paired_gallery = std::move(paired);
  return in;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) {
    throw std::runtime_error("train config: epochs must be non-negative");
  }
  if (batch_size < 2) {
    throw std::runtime_error("train config: batch_size must be at least 2");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::runtime_error("train config: lr must be finite and non-negative");
  }
  if (eval_every < 1) {
    throw std::runtime_error("train config: eval_every must be positive");
  }
  if (hidden < 1 || embed_dim < 1) {
    throw std::runtime_error("train config: hidden and embed_dim must be positive");
  }
  if (!(tau > 0.0)) {
    throw std::runtime_error("train config: tau must be positive");
  }
  if (losses.empty()) {
    throw std::runtime_error("train config: at least one loss term required");
  }
  for (const auto& term : losses) {
    if (term.name != "itc" && term.name != "id" && term.name != "sdm") {
      throw std::runtime_error("train config: unknown loss '" + term.name + "'");
    }
    if (!std::isfinite(term.coefficient)) {
      throw std::runtime_error("train config: non-finite coefficient for loss '" + term.name +
                               "'");
    }
  }
  if (boosting) {
    boost.validate();
  }
}

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("train config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw std::runtime_error("train config: top level must be an object");
  }
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") {
      c.epochs = value.get<int>();
    } else if (key == "batch_size") {
      c.batch_size = value.get<int>();
    } else if (key == "lr") {
      c.lr = value.get<double>();
    } else if (key == "seed") {
      c.seed = value.get<std::uint64_t>();
    } else if (key == "losses") {
      c.losses.clear();
      for (const auto& item : value) {
        LossTerm term;
        term.name = item.at("name").get<std::string>();
        term.coefficient = item.value("coefficient", 1.0);
        c.losses.push_back(term);
      }
    } else if (key == "boosting") {
      c.boosting = value.get<bool>();
    } else if (key == "boost") {
      c.boost = boost_from_json(value);
    } else if (key == "eval_every") {
      c.eval_every = value.get<int>();
    } else if (key == "checkpoint_dir") {
      c.checkpoint_dir = value.get<std::string>();
    } else if (key == "hidden") {
      c.hidden = value.get<int>();
    } else if (key == "embed_dim") {
      c.embed_dim = value.get<int>();
    } else if (key == "tau") {
      c.tau = value.get<double>();
    } else if (key == "sdm_bidirectional") {
      c.sdm_bidirectional = value.get<bool>();
    } else {
      throw std::runtime_error("train config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& term : c.losses) {
    terms.push_back({{"name", term.name}, {"coefficient", term.coefficient}});
  }
  j["losses"] = terms;
  j["boosting"] = c.boosting;
  j["boost"] = boost_to_json(c.boost);
  j["eval_every"] = c.eval_every;
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["hidden"] = c.hidden;
  j["embed_dim"] = c.embed_dim;
  j["tau"] = c.tau;
  j["sdm_bidirectional"] = c.sdm_bidirectional;
  return j.dump(2) + "\n";
}

void apply_preset(TrainConfig& config, const std::string& preset) {
  if (preset == "clip" || preset == "clip+b") {
    config.losses = {{"itc", 1.0}};
  } else if (preset == "irra" || preset == "irra+b") {
    config.losses = {{"itc", 1.0}, {"sdm", 1.0}, {"id", 1.0}};
  } else {
    throw std::runtime_error("unknown loss preset '" + preset + "'");
  }
  config.boosting = preset.size() > 2 && preset.substr(preset.size() - 2) == "+b";
}

MiningInputs t2i_inputs(const enc::EncoderParams& params, const data::Dataset& dataset) {
  const int n = dataset.n_samples();
  MatrixXd txt_in(n, dataset.p_txt());
  for (int s = 0; s < n; ++s) {
    txt_in.row(s) =
        dataset.texts.row(dataset.samples[static_cast<std::size_t>(s)].text_row).cast<double>();
  }
  const MatrixXd queries = enc::embed(params, txt_in, enc::Modality::kText).values;
  const MatrixXd gallery =
      enc::embed(params, dataset.images.cast<double>(), enc::Modality::kImage).values;

  MiningInputs in;
  in.sim = mining::compute_similarity(queries, gallery, dataset.pair_ids(),
                                      dataset.image_pair_ids());
  in.query_identities = dataset.sample_identities();
  in.gallery_identities = dataset.image_identities();
  in.paired_gallery.reserve(static_cast<std::size_t>(n));
  for (const auto& ref : dataset.samples) {
    in.paired_gallery.push_back(ref.image_row);
  }
  return in;
}

mining::WeakPositiveSet mine_dataset(const enc::EncoderParams& params,
                                     const data::Dataset& dataset, int k) {
  const auto in = t2i_inputs(params, dataset);
  return mining::mine(in.sim, in.query_identities, in.gallery_identities, in.paired_gallery, k);
}

const mining::WeightTable& refresh_weights(TrainState& state, const data::Dataset& train_data,
                                           const mining::BoostConfig& boost_config) {
  boost_config.validate();
  const auto in = t2i_inputs(state.params, train_data);
  const auto mined =
      mining::mine(in.sim, in.query_identities, in.gallery_identities, in.paired_gallery,
                   boost_config.k);
  const auto rank1 = mining::pairs_at_rank1(in.sim, in.paired_gallery);
  auto table = mining::build_weights(mined, train_data.pair_ids(), boost_config, rank1);

  if (boost_config.mine_i2t) {
    const auto in2 = i2t_inputs(state.params, train_data);
    const auto mined2 = mining::mine(in2.sim, in2.query_identities, in2.gallery_identities,
                                     in2.paired_gallery, boost_config.k);
    const auto rank1_2 = mining::pairs_at_rank1(in2.sim, in2.paired_gallery);
    const auto table2 = mining::build_weights(mined2, train_data.pair_ids(), boost_config,
                                              rank1_2);
    mining::merge_weights(table, table2);
  }

  RefreshRecord rec;
  rec.epoch = state.epoch;
  rec.n_mined = mined.entries.size();
  rec.n_rank1 = rank1.size();
  rec.n_boosted = table.boosted_count();
  rec.prev_mined = state.last_mined.size();
  for (PairId id : state.last_mined) {
    if (rank1.count(id) > 0) {
      ++rec.prev_mined_now_rank1;
    }
  }

  table.epoch_computed = state.epoch;
  state.weights = std::move(table);
  state.last_mined = mined.pair_ids();
  state.refresh_log.push_back(rec);
  return state.weights;
}

double train_epoch(TrainState& state, const data::Dataset& dataset, const TrainConfig& config) {
  const int B = config.batch_size;
  const int n = dataset.n_samples();
  const int n_batches = n / B;
  if (n_batches == 0) {
    throw std::runtime_error("train_epoch: split has " + std::to_string(n) +
                             " samples, fewer than batch_size " + std::to_string(B));
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(mix_seed(mix_seed(config.seed, kTagShuffle),
                           static_cast<std::uint64_t>(state.epoch)));
  shuffle_rng.shuffle(order);

  auto class_of = [&](IdentityLabel id) {
    const auto it = std::lower_bound(state.class_index.begin(), state.class_index.end(), id);
    if (it == state.class_index.end() || *it != id) {
      throw std::runtime_error("train_epoch: identity " + std::to_string(id) +
                               " missing from the classifier index");
    }
    return static_cast<int>(it - state.class_index.begin());
  };

  double total = 0.0;
  MatrixXd img_in(B, dataset.p_img());
  MatrixXd txt_in(B, dataset.p_txt());
  for (int b = 0; b < n_batches; ++b) {
    std::vector<PairId> pids(static_cast<std::size_t>(B));
    std::vector<IdentityLabel> identities(static_cast<std::size_t>(B));
    std::vector<int> labels(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
      const auto& ref = dataset.samples[static_cast<std::size_t>(order[b * B + i])];
      img_in.row(i) = dataset.images.row(ref.image_row).cast<double>();
      txt_in.row(i) = dataset.texts.row(ref.text_row).cast<double>();
      pids[static_cast<std::size_t>(i)] = ref.pair_id;
      identities[static_cast<std::size_t>(i)] = ref.identity;
      labels[static_cast<std::size_t>(i)] = class_of(ref.identity);
    }

    const auto fwd_img = enc::forward(state.params, img_in, enc::Modality::kImage);
    const auto fwd_txt = enc::forward(state.params, txt_in, enc::Modality::kText);
    const VectorXd w = mining::batch_weights(state.weights, pids);

    std::vector<std::pair<losses::LossOutput, double>> terms;
    for (const auto& term : config.losses) {
      if (term.name == "itc") {
        terms.emplace_back(
            losses::boosted_itc(fwd_img.embeddings, fwd_txt.embeddings, w, config.tau),
            term.coefficient);
      } else if (term.name == "id") {
        terms.emplace_back(losses::boosted_id(fwd_img.embeddings, fwd_txt.embeddings, labels, w,
                                              state.params.w_id),
                           term.coefficient);
      } else if (term.name == "sdm") {
        terms.emplace_back(
            losses::boosted_sdm(fwd_img.embeddings, fwd_txt.embeddings, identities, w,
                                config.tau, 1e-8, config.sdm_bidirectional),
            term.coefficient);
      } else {
        throw std::runtime_error("train_epoch: unknown loss '" + term.name + "'");
      }
    }
    const auto combined = losses::combined_objective(terms);
    if (!std::isfinite(combined.value)) {
      throw std::runtime_error("train_epoch: non-finite loss at epoch " +
                               std::to_string(state.epoch) + ", batch " + std::to_string(b));
    }

    auto grads = enc::GradientSet::zeros_like(state.params);
    grads.img = enc::backward(state.params, fwd_img, combined.grad_img);
    grads.txt = enc::backward(state.params, fwd_txt, combined.grad_txt);
    if (combined.has_classifier_grad()) {
      grads.w_id = combined.grad_classifier;
    }
    enc::adam_step(state.params, grads, state.opt, config.lr);
    total += combined.value;
  }
  return total / static_cast<double>(n_batches);
}

TrainState init_state(const TrainConfig& config, const data::Dataset& train_data) {
  config.validate();
  train_data.validate();
  TrainState state;
  state.class_index = train_data.distinct_identities();
  Rng init_rng(mix_seed(config.seed, kTagInit));
  state.params = enc::EncoderParams::init(train_data.p_img(), train_data.p_txt(), config.hidden,
                                          config.embed_dim,
                                          static_cast<int>(state.class_index.size()), config.tau,
                                          init_rng);
  state.opt = enc::AdamState::zeros_like(state.params);
  state.rng = init_rng;
  state.weights.exp_alpha = 1.0;
  state.weights.epoch_computed = 0;
  return state;
}

void run_from(TrainState& state, const TrainConfig& config, const data::Corpus& corpus) {
  config.validate();
  const std::filesystem::path dir(config.checkpoint_dir);
  const bool persist = !config.checkpoint_dir.empty();
  if (persist) {
    std::filesystem::create_directories(dir);
    io::write_text_file(dir / "config.json", config_to_json(config));
  }

  for (int e = state.epoch; e < config.epochs; ++e) {
    if (config.boosting && e >= config.boost.warmup_epochs &&
        (e - config.boost.warmup_epochs) % config.boost.refresh_period == 0) {
      refresh_weights(state, corpus.train, config.boost);
    }
    const double mean_loss = train_epoch(state, corpus.train, config);
    state.epoch = e + 1;
    state.history.push_back({state.epoch, "train", kNan, kNan, kNan, kNan, mean_loss,
                             state.weights.boosted_count()});

    if (state.epoch % config.eval_every == 0 || state.epoch == config.epochs) {
      const auto m = eval::evaluate(eval::make_run(state.params, corpus.val));
      state.history.push_back({state.epoch, "val", m.r1, m.r5, m.r10, m.map, kNan,
                               state.weights.boosted_count()});
      if (persist) {
        save_state(state, config, dir / "latest");
        io::write_text_file(dir / "metrics.csv", metrics_csv(state.history));
      }
    }
  }

  // Closing probe: rank the pairs boosted at the last refresh once more so
  // the final promotion window has an observation. No weights are rebuilt.
  if (config.boosting && !state.refresh_log.empty()) {
    const auto in = t2i_inputs(state.params, corpus.train);
    const auto mined = mining::mine(in.sim, in.query_identities, in.gallery_identities,
                                    in.paired_gallery, config.boost.k);
    const auto rank1 = mining::pairs_at_rank1(in.sim, in.paired_gallery);
    RefreshRecord rec;
    rec.epoch = config.epochs;
    rec.n_mined = mined.entries.size();
    rec.n_rank1 = rank1.size();
    rec.n_boosted = state.weights.boosted_count();
    rec.prev_mined = state.last_mined.size();
    for (PairId id : state.last_mined) {
      if (rank1.count(id) > 0) {
        ++rec.prev_mined_now_rank1;
      }
    }
    state.refresh_log.push_back(rec);
  }

  const auto mt = eval::evaluate(eval::make_run(state.params, corpus.test));
  state.history.push_back({config.epochs, "test", mt.r1, mt.r5, mt.r10, mt.map, kNan,
                           state.weights.boosted_count()});

  if (persist) {
    save_state(state, config, dir / "final");
    io::write_text_file(dir / "metrics.csv", metrics_csv(state.history));
    io::write_text_file(dir / "boost_log.csv", boost_log_csv(state.refresh_log));
  }
}

TrainState run(const TrainConfig& config, const data::Corpus& corpus) {
  TrainState state = init_state(config, corpus.train);
  run_from(state, config, corpus);
  return state;
}

void save_state(const TrainState& state, const TrainConfig& config,
                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  enc::CheckpointMeta meta;
  meta.epoch = state.epoch;
  meta.rng_state = state.rng.serialize();
  meta.extra_json = config_to_json(config);
  enc::save_checkpoint(dir, state.params, meta);

  const VectorXd p = enc::flatten(state.params);
  const VectorXd m = flatten_grads(state.opt.m);
  const VectorXd v = flatten_grads(state.opt.v);
  MatrixXd blob(p.size() + m.size() + v.size(), 1);
  blob.col(0).segment(0, p.size()) = p;
  blob.col(0).segment(p.size(), m.size()) = m;
  blob.col(0).segment(p.size() + m.size(), v.size()) = v;
  io::write_matrix_f64(dir / "resume.f64", blob);

  nlohmann::json j;
  j["format_version"] = 1;
  j["epoch"] = state.epoch;
  j["rng"] = state.rng.serialize();
  j["adam_t"] = state.opt.t;
  nlohmann::json weights;
  weights["exp_alpha"] = state.weights.exp_alpha;
  weights["epoch_computed"] = state.weights.epoch_computed;
  nlohmann::json table = nlohmann::json::object();
  std::vector<std::pair<PairId, double>> items(state.weights.weights.begin(),
                                               state.weights.weights.end());
  std::sort(items.begin(), items.end());
  for (const auto& [id, w] : items) {
    table[std::to_string(id)] = w;
  }
  weights["table"] = table;
  j["weights"] = weights;
  j["class_index"] = state.class_index;
  j["last_mined"] = state.last_mined;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& rec : state.history) {
    nlohmann::json r;
    r["epoch"] = rec.epoch;
    r["split"] = rec.split;
    r["r1"] = double_json(rec.r1);
    r["r5"] = double_json(rec.r5);
    r["r10"] = double_json(rec.r10);
    r["map"] = double_json(rec.map);
    r["loss"] = double_json(rec.loss);
    r["n_boosted"] = rec.n_boosted;
    history.push_back(r);
  }
  j["history"] = history;
  nlohmann::json refreshes = nlohmann::json::array();
  for (const auto& rec : state.refresh_log) {
    nlohmann::json r;
    r["epoch"] = rec.epoch;
    r["n_mined"] = rec.n_mined;
    r["n_rank1"] = rec.n_rank1;
    r["n_boosted"] = rec.n_boosted;
    r["prev_mined"] = rec.prev_mined;
    r["prev_mined_now_rank1"] = rec.prev_mined_now_rank1;
    refreshes.push_back(r);
  }
  j["refresh_log"] = refreshes;
  io::write_text_file(dir / "state.json", j.dump(2) + "\n");
}

SavedRun load_state(const std::filesystem::path& dir) {
  SavedRun out;
  const auto ckpt = enc::load_checkpoint(dir);
  out.config = config_from_json(ckpt.meta.extra_json);
  out.state.params = ckpt.params;

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file(dir / "state.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("resume state: malformed state.json: " + std::string(e.what()));
  }
  if (j.value("format_version", 0) != 1) {
    throw std::runtime_error("resume state: unknown format version");
  }
  out.state.epoch = j.at("epoch").get<int>();
  out.state.rng = Rng::deserialize(j.at("rng").get<std::string>());
  out.state.opt = enc::AdamState::zeros_like(out.state.params);
  out.state.opt.t = j.at("adam_t").get<long>();

  const MatrixXd blob = io::read_matrix_f64(dir / "resume.f64");
  const long p_count = enc::param_count(out.state.params);
  if (blob.cols() != 1 || blob.rows() != 3 * p_count) {
    throw std::runtime_error("resume state: resume.f64 holds " + std::to_string(blob.rows()) +
                             "x" + std::to_string(blob.cols()) + ", expected " +
                             std::to_string(3 * p_count) + "x1");
  }
  enc::unflatten(blob.col(0).segment(0, p_count), out.state.params);
  unflatten_grads(blob.col(0).segment(p_count, p_count), out.state.opt.m);
  unflatten_grads(blob.col(0).segment(2 * p_count, p_count), out.state.opt.v);

  const auto& weights = j.at("weights");
  out.state.weights.exp_alpha = weights.at("exp_alpha").get<double>();
  out.state.weights.epoch_computed = weights.at("epoch_computed").get<int>();
  for (const auto& [key, value] : weights.at("table").items()) {
    out.state.weights.weights[std::stoull(key)] = value.get<double>();
  }
  out.state.class_index = j.at("class_index").get<std::vector<IdentityLabel>>();
  out.state.last_mined = j.at("last_mined").get<std::vector<PairId>>();
  for (const auto& r : j.at("history")) {
    EpochRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.split = r.at("split").get<std::string>();
    rec.r1 = json_double(r.at("r1"));
    rec.r5 = json_double(r.at("r5"));
    rec.r10 = json_double(r.at("r10"));
    rec.map = json_double(r.at("map"));
    rec.loss = json_double(r.at("loss"));
    rec.n_boosted = r.at("n_boosted").get<std::size_t>();
    out.state.history.push_back(rec);
  }
  for (const auto& r : j.at("refresh_log")) {
    RefreshRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.n_mined = r.at("n_mined").get<std::size_t>();
    rec.n_rank1 = r.at("n_rank1").get<std::size_t>();
    rec.n_boosted = r.at("n_boosted").get<std::size_t>();
    rec.prev_mined = r.at("prev_mined").get<std::size_t>();
    rec.prev_mined_now_rank1 = r.at("prev_mined_now_rank1").get<std::size_t>();
    out.state.refresh_log.push_back(rec);
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,split,r1,r5,r10,map,loss,n_boosted\n";
  for (const auto& rec : history) {
    out += std::to_string(rec.epoch) + "," + rec.split + "," + fmt(rec.r1) + "," + fmt(rec.r5) +
           "," + fmt(rec.r10) + "," + fmt(rec.map) + "," + fmt(rec.loss) + "," +
           std::to_string(rec.n_boosted) + "\n";
  }
  return out;
}

std::string boost_log_csv(const std::vector<RefreshRecord>& log) {
  std::string out = "epoch,n_mined,n_rank1,n_boosted,prev_mined,prev_mined_now_rank1\n";
  for (const auto& rec : log) {
    out += std::to_string(rec.epoch) + "," + std::to_string(rec.n_mined) + "," +
           std::to_string(rec.n_rank1) + "," + std::to_string(rec.n_boosted) + "," +
           std::to_string(rec.prev_mined) + "," + std::to_string(rec.prev_mined_now_rank1) +
           "\n";
  }
  return out;
}

}  // namespace retboost::train
