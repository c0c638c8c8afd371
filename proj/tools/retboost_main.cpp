#include <cstdint>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "retboost/dataset.hpp"
#include "retboost/encoder.hpp"
#include "retboost/eval.hpp"
#include "retboost/io.hpp"
#include "retboost/mining.hpp"
#include "retboost/report.hpp"
#include "retboost/trainer.hpp"

namespace rb = retboost;
namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path resolve_checkpoint(const std::string& arg) {
  const fs::path p(arg);
  if (fs::exists(p / "params.json")) {
    return p;
  }
  if (fs::exists(p / "final" / "params.json")) {
    return p / "final";
  }
  throw std::runtime_error("no checkpoint under " + arg + " (params.json not found)");
}

struct GenDataArgs {
  std::string out;
  std::string name = "synth";
  rb::data::SynthConfig base;
  int val_identities = 40;
  int test_identities = 50;
};

int run_gen_data(const GenDataArgs& args) {
  rb::data::CorpusConfig cfg;
  cfg.base = args.base;
  cfg.n_val_identities = args.val_identities;
  cfg.n_test_identities = args.test_identities;
  cfg.name = args.name;
  const auto corpus = rb::data::generate_corpus(cfg);
  rb::data::save_corpus(corpus, args.out);
  std::cout << "wrote corpus '" << args.name << "' to " << args.out << " (train "
            << corpus.train.n_samples() << " samples, val " << corpus.val.n_samples()
            << ", test " << corpus.test.n_samples() << ")\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config_path;
  std::string out;
  std::string preset;
  std::uint64_t seed = 1;
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  int eval_every = 4;
  int hidden = 64;
  int embed_dim = 32;
  double tau = 0.05;
  bool boosting = true;
  int boost_k = 2;
  double boost_weight = 1.6;
  int refresh_epochs = 4;
  int warmup_epochs = 4;
  bool augmented = true;
  bool mine_i2t = false;
  bool sdm_bidirectional = true;
};

int run_train(const TrainArgs& args, const std::map<std::string, bool>& given) {
  rb::train::TrainConfig cfg;
  if (!args.config_path.empty()) {
    cfg = rb::train::config_from_json(rb::io::read_text_file(args.config_path));
  }
  if (given.at("preset")) {
    rb::train::apply_preset(cfg, args.preset);
  }
  if (given.at("seed")) cfg.seed = args.seed;
  if (given.at("epochs")) cfg.epochs = args.epochs;
  if (given.at("batch_size")) cfg.batch_size = args.batch_size;
  if (given.at("lr")) cfg.lr = args.lr;
  if (given.at("eval_every")) cfg.eval_every = args.eval_every;
  if (given.at("hidden")) cfg.hidden = args.hidden;
  if (given.at("embed_dim")) cfg.embed_dim = args.embed_dim;
  if (given.at("tau")) cfg.tau = args.tau;
  if (given.at("boosting")) cfg.boosting = args.boosting;
  if (given.at("boost_k")) cfg.boost.k = args.boost_k;
  if (given.at("boost_weight")) {
    cfg.boost.exp_alpha = args.boost_weight;
    cfg.boosting = true;  // asking for a weight turns the machinery on
  }
  if (given.at("refresh_epochs")) cfg.boost.refresh_period = args.refresh_epochs;
  if (given.at("warmup_epochs")) cfg.boost.warmup_epochs = args.warmup_epochs;
  if (given.at("augmented")) cfg.boost.augmented = args.augmented;
  if (given.at("mine_i2t")) cfg.boost.mine_i2t = args.mine_i2t;
  if (given.at("sdm_bidirectional")) cfg.sdm_bidirectional = args.sdm_bidirectional;
  if (given.at("out")) cfg.checkpoint_dir = args.out;
  cfg.validate();

  const auto corpus = rb::data::load_corpus(args.data);
  const auto state = rb::train::run(cfg, corpus);
  const auto& test = state.history.back();
  std::cout << "trained " << cfg.epochs << " epochs (seed " << cfg.seed << "); test R@1 "
            << fmt17(test.r1) << ", R@5 " << fmt17(test.r5) << ", R@10 " << fmt17(test.r10)
            << ", mAP " << fmt17(test.map) << "\n";
  if (!cfg.checkpoint_dir.empty()) {
    std::cout << "artifacts in " << cfg.checkpoint_dir << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> distractors;
  std::string out;
};

int run_eval(const EvalArgs& args) {
  const auto ckpt = rb::enc::load_checkpoint(resolve_checkpoint(args.checkpoint));
  const auto dataset = rb::data::load(args.data);
  const auto primary = rb::eval::make_run(ckpt.params, dataset);

  std::vector<rb::eval::DistractorGallery> galleries;
  std::vector<std::string> sources;
  for (const auto& dir : args.distractors) {
    const auto d = rb::data::load(dir);
    galleries.push_back(rb::eval::make_distractor_gallery(ckpt.params, d));
    sources.push_back(d.name);
  }
  const auto combined = rb::eval::with_distractors(primary, galleries);
  const auto metrics = rb::eval::evaluate(combined);

  nlohmann::json j;
  j["r1"] = metrics.r1;
  j["r5"] = metrics.r5;
  j["r10"] = metrics.r10;
  j["map"] = metrics.map;
  j["n_queries"] = combined.n_queries();
  j["n_gallery"] = combined.n_gallery();
  j["distractor_sources"] = sources;
  const std::string text = j.dump(2) + "\n";
  if (args.out.empty()) {
    std::cout << text;
  } else {
    rb::io::write_text_file(args.out, text);
    std::cout << "wrote " << args.out << "\n";
  }
  return 0;
}

struct MineArgs {
  std::string checkpoint;
  std::string data;
  int k = 2;
  std::string out;
  std::string weights_out;
  double boost_weight = 1.6;
  bool augmented = true;
};

int run_mine(const MineArgs& args) {
  const auto ckpt = rb::enc::load_checkpoint(resolve_checkpoint(args.checkpoint));
  const auto dataset = rb::data::load(args.data);
  const auto inputs = rb::train::t2i_inputs(ckpt.params, dataset);
  const auto mined = rb::mining::mine(inputs.sim, inputs.query_identities,
                                      inputs.gallery_identities, inputs.paired_gallery, args.k);
  const std::string jsonl = rb::mining::to_jsonl(mined);
  if (args.out.empty()) {
    std::cout << jsonl;
  } else {
    rb::io::write_text_file(args.out, jsonl);
    std::cout << "mined " << mined.entries.size() << " pairs at rank " << args.k << " -> "
              << args.out << "\n";
  }
  if (!args.weights_out.empty()) {
    rb::mining::BoostConfig bc;
    bc.k = args.k;
    bc.exp_alpha = args.boost_weight;
    bc.augmented = args.augmented;
    const auto rank1 = rb::mining::pairs_at_rank1(inputs.sim, inputs.paired_gallery);
    const auto table = rb::mining::build_weights(mined, dataset.pair_ids(), bc, rank1);
    rb::io::write_text_file(args.weights_out, rb::mining::to_json(table));
    std::cout << "wrote weight table (" << table.boosted_count() << " boosted) -> "
              << args.weights_out << "\n";
  }
  return 0;
}

struct AblateArgs {
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds = {1};
  std::string config_path;
  std::string data;
  std::string out;
};

int run_ablate(const AblateArgs& args) {
  rb::train::TrainConfig base;
  if (!args.config_path.empty()) {
    base = rb::train::config_from_json(rb::io::read_text_file(args.config_path));
  }
  const auto corpus = rb::data::load_corpus(args.data);

  std::string sweep = "axis,value,seed,r1,r5,r10,map,run_dir\n";
  std::string summary = "axis,value,n_seeds,r1_mean,r1_std,r5_mean,r5_std,r10_mean,r10_std,"
                        "map_mean,map_std\n";
  for (const auto& value_str : args.values) {
    rb::train::TrainConfig cfg = base;
    cfg.boosting = true;
    if (args.axis == "k") {
      cfg.boost.k = std::stoi(value_str);
    } else if (args.axis == "exp_alpha") {
      cfg.boost.exp_alpha = std::stod(value_str);
    } else if (args.axis == "refresh_period") {
      cfg.boost.refresh_period = std::stoi(value_str);
    } else {
      throw std::runtime_error("ablate: unknown axis '" + args.axis +
                               "' (want k, exp_alpha, or refresh_period)");
    }

    std::vector<double> r1s;
    std::vector<double> r5s;
    std::vector<double> r10s;
    std::vector<double> maps;
    for (std::uint64_t seed : args.seeds) {
      rb::train::TrainConfig run_cfg = cfg;
      run_cfg.seed = seed;
      const fs::path dir =
          fs::path(args.out) / (args.axis + "=" + value_str) / ("seed_" + std::to_string(seed));
      run_cfg.checkpoint_dir = dir.string();
      run_cfg.validate();
      const auto state = rb::train::run(run_cfg, corpus);
      const auto& test = state.history.back();
      sweep += args.axis + "," + value_str + "," + std::to_string(seed) + "," +
               fmt17(test.r1) + "," + fmt17(test.r5) + "," + fmt17(test.r10) + "," +
               fmt17(test.map) + "," + dir.string() + "\n";
      r1s.push_back(test.r1);
      r5s.push_back(test.r5);
      r10s.push_back(test.r10);
      maps.push_back(test.map);
      std::cout << "[ablate] " << args.axis << "=" << value_str << " seed=" << seed
                << " test R@1 " << fmt17(test.r1) << "\n";
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    auto sstd = [&](const std::vector<double>& v) {
      if (v.size() < 2) return 0.0;
      const double m = mean(v);
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    summary += args.axis + "," + value_str + "," + std::to_string(args.seeds.size()) + "," +
               fmt17(mean(r1s)) + "," + fmt17(sstd(r1s)) + "," + fmt17(mean(r5s)) + "," +
               fmt17(sstd(r5s)) + "," + fmt17(mean(r10s)) + "," + fmt17(sstd(r10s)) + "," +
               fmt17(mean(maps)) + "," + fmt17(sstd(maps)) + "\n";
  }
  fs::create_directories(args.out);
  rb::io::write_text_file(fs::path(args.out) / "sweep.csv", sweep);
  rb::io::write_text_file(fs::path(args.out) / "summary.csv", summary);
  std::cout << "wrote " << (fs::path(args.out) / "sweep.csv").string() << " and summary.csv\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::string scan;
  std::string out;
};

int run_report(const ReportArgs& args) {
  std::vector<fs::path> dirs;
  for (const auto& d : args.runs) {
    dirs.emplace_back(d);
  }
  if (!args.scan.empty()) {
    for (const auto& d : rb::report::scan_runs(args.scan)) {
      dirs.push_back(d);
    }
  }
  if (dirs.empty()) {
    throw std::runtime_error("report: no run directories (pass them as arguments or --scan)");
  }
  std::vector<rb::report::RunArtifacts> runs;
  runs.reserve(dirs.size());
  for (const auto& d : dirs) {
    runs.push_back(rb::report::load_run(d));
  }
  const auto rep = rb::report::build_report(runs);
  rb::report::write_report(rep, args.out);
  std::cout << "wrote report.md and " << rep.series.size() << " series file(s) to " << args.out
            << " from " << runs.size() << " run(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-encoder cross-modal retrieval with weak-positive boosting"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic train/val/test corpus");
  gen_cmd->add_option("--out", gen.out, "Output corpus directory")->required();
  gen_cmd->add_option("--name", gen.name, "Corpus name");
  gen_cmd->add_option("--seed", gen.base.seed, "Generator seed");
  gen_cmd->add_option("--n-identities", gen.base.n_identities, "Train identities");
  gen_cmd->add_option("--images-per-id", gen.base.images_per_id, "Images per identity");
  gen_cmd->add_option("--texts-per-image", gen.base.texts_per_image, "Captions per image");
  gen_cmd->add_option("--p-latent", gen.base.p_latent, "Latent dimension");
  gen_cmd->add_option("--p-img", gen.base.p_img, "Image feature width");
  gen_cmd->add_option("--p-txt", gen.base.p_txt, "Text feature width");
  gen_cmd->add_option("--noise-img", gen.base.noise_img, "Image feature noise std");
  gen_cmd->add_option("--noise-txt", gen.base.noise_txt, "Text feature noise std");
  gen_cmd->add_option("--confusion-rate", gen.base.confusion_rate,
                      "Fraction of identities blended toward a confuser");
  gen_cmd->add_option("--confusion-lambda", gen.base.confusion_lambda, "Blend strength");
  gen_cmd->add_option("--val-identities", gen.val_identities, "Validation identities");
  gen_cmd->add_option("--test-identities", gen.test_identities, "Test identities");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model on a corpus");
  tr_cmd->add_option("--data", tr.data, "Corpus directory (from gen-data)")->required();
  auto* o_config = tr_cmd->add_option("--config", tr.config_path, "Run config JSON");
  auto* o_out = tr_cmd->add_option("--out", tr.out, "Artifact directory");
  auto* o_preset = tr_cmd->add_option("--loss-preset", tr.preset,
                                      "clip, clip+b, irra, or irra+b");
  auto* o_seed = tr_cmd->add_option("--seed", tr.seed, "Training seed");
  auto* o_epochs = tr_cmd->add_option("--epochs", tr.epochs, "Epoch count");
  auto* o_bs = tr_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  auto* o_lr = tr_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  auto* o_ee = tr_cmd->add_option("--eval-every", tr.eval_every, "Epochs between evals");
  auto* o_hidden = tr_cmd->add_option("--hidden", tr.hidden, "Tower hidden width");
  auto* o_dim = tr_cmd->add_option("--embed-dim", tr.embed_dim, "Embedding dimension");
  auto* o_tau = tr_cmd->add_option("--tau", tr.tau, "Softmax temperature");
  auto* o_boosting = tr_cmd->add_option("--boosting", tr.boosting, "Enable boosting (0/1)");
  auto* o_k = tr_cmd->add_option("--boost-k", tr.boost_k, "Mining rank k");
  auto* o_bw = tr_cmd->add_option("--boost-weight", tr.boost_weight,
                                  "exp(alpha) weight for mined pairs; implies --boosting 1");
  auto* o_re = tr_cmd->add_option("--refresh-epochs", tr.refresh_epochs,
                                  "Epochs between weight refreshes");
  auto* o_we = tr_cmd->add_option("--warmup-epochs", tr.warmup_epochs,
                                  "Epochs before the first refresh");
  auto* o_aug = tr_cmd->add_option("--augmented", tr.augmented,
                                   "Also boost rank-1-correct pairs (0/1)");
  auto* o_i2t = tr_cmd->add_option("--mine-i2t", tr.mine_i2t,
                                   "Also mine the image-to-text direction (0/1)");
  auto* o_sdmbi = tr_cmd->add_option("--sdm-bidirectional", tr.sdm_bidirectional,
                                     "Average SDM over both directions (0/1)");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint or run directory")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset split directory")->required();
  ev_cmd->add_option("--distractors", ev.distractors,
                     "Comma-separated distractor dataset directories")
      ->delimiter(',');
  ev_cmd->add_option("--out", ev.out, "eval.json path (stdout when omitted)");

  MineArgs mn;
  auto* mn_cmd = app.add_subcommand("mine", "Dump the weak-positive set for a checkpoint");
  mn_cmd->add_option("--checkpoint", mn.checkpoint, "Checkpoint or run directory")->required();
  mn_cmd->add_option("--data", mn.data, "Dataset split directory")->required();
  mn_cmd->add_option("--k", mn.k, "Mining rank");
  mn_cmd->add_option("--out", mn.out, "JSONL path (stdout when omitted)");
  mn_cmd->add_option("--weights-out", mn.weights_out, "Also write the weight table JSON here");
  mn_cmd->add_option("--boost-weight", mn.boost_weight, "exp(alpha) for the weight table");
  mn_cmd->add_option("--augmented", mn.augmented, "Augmented weight table (0/1)");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Sweep one boosting axis over seeds");
  ab_cmd->add_option("--axis", ab.axis, "k, exp_alpha, or refresh_period")->required();
  ab_cmd->add_option("--values", ab.values, "Comma-separated axis values")
      ->required()
      ->delimiter(',');
  ab_cmd->add_option("--seeds", ab.seeds, "Comma-separated seeds")->delimiter(',');
  ab_cmd->add_option("--config", ab.config_path, "Base run config JSON");
  ab_cmd->add_option("--data", ab.data, "Corpus directory")->required();
  ab_cmd->add_option("--out", ab.out, "Sweep output directory")->required();

  ReportArgs rp;
  auto* rp_cmd = app.add_subcommand("report", "Summarize finished runs");
  rp_cmd->add_option("runs", rp.runs, "Run directories");
  rp_cmd->add_option("--scan", rp.scan, "Scan this tree for run directories");
  rp_cmd->add_option("--out", rp.out, "Report output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_cmd->parsed()) {
      return run_gen_data(gen);
    }
    if (tr_cmd->parsed()) {
      const std::map<std::string, bool> given = {
          {"config", o_config->count() > 0},
          {"out", o_out->count() > 0},
          {"preset", o_preset->count() > 0},
          {"seed", o_seed->count() > 0},
          {"epochs", o_epochs->count() > 0},
          {"batch_size", o_bs->count() > 0},
          {"lr", o_lr->count() > 0},
          {"eval_every", o_ee->count() > 0},
          {"hidden", o_hidden->count() > 0},
          {"embed_dim", o_dim->count() > 0},
          {"tau", o_tau->count() > 0},
          {"boosting", o_boosting->count() > 0},
          {"boost_k", o_k->count() > 0},
          {"boost_weight", o_bw->count() > 0},
          {"refresh_epochs", o_re->count() > 0},
          {"warmup_epochs", o_we->count() > 0},
          {"augmented", o_aug->count() > 0},
          {"mine_i2t", o_i2t->count() > 0},
          {"sdm_bidirectional", o_sdmbi->count() > 0},
      };
      return run_train(tr, given);
    }
    if (ev_cmd->parsed()) {
      return run_eval(ev);
    }
    if (mn_cmd->parsed()) {
      return run_mine(mn);
    }
    if (ab_cmd->parsed()) {
      return run_ablate(ab);
    }
    if (rp_cmd->parsed()) {
      return run_report(rp);
    }
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
