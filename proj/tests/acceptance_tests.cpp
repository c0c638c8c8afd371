// End-to-end acceptance harness: one PASS/FAIL line per criterion, exit code
// counts the hard failures. The training grid (criteria 6-8) runs in-process
// on the reference synthetic corpus and lands its report under
// ./acceptance_report for inspection.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "retboost/dataset.hpp"
#include "retboost/encoder.hpp"
#include "retboost/eval.hpp"
#include "retboost/losses.hpp"
#include "retboost/mining.hpp"
#include "retboost/report.hpp"
#include "retboost/rng.hpp"
#include "retboost/trainer.hpp"

using namespace retboost;

namespace {

int g_failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("ACCEPTANCE %d: %s (%s)\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) {
    ++g_failures;
  }
}

void note(const std::string& msg) { std::fprintf(stderr, "[acceptance] %s\n", msg.c_str()); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

MatrixXd unit_rows(int rows, int cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double norm = 0.0;
    for (int j = 0; j < cols; ++j) {
      m(i, j) = rng.gaussian();
      norm += m(i, j) * m(i, j);
    }
    m.row(i) /= std::sqrt(norm);
  }
  return m;
}

// ---- criterion 1: exp_alpha = 1 reduces bitwise to the unboosted trainer --

void criterion_reduction() {
  data::CorpusConfig cc;
  cc.base.n_identities = 30;
  cc.base.images_per_id = 2;
  cc.base.p_latent = 8;
  cc.base.p_img = 16;
  cc.base.p_txt = 16;
  cc.base.seed = 11;
  cc.n_val_identities = 6;
  cc.n_test_identities = 6;
  cc.name = "reduction";
  const data::Corpus corpus = data::generate_corpus(cc);

  train::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 8;
  cfg.hidden = 8;
  cfg.embed_dim = 6;
  cfg.eval_every = 4;
  cfg.seed = 3;
  cfg.boost.warmup_epochs = 2;
  cfg.boost.refresh_period = 2;

  train::TrainConfig boosted = cfg;
  boosted.boosting = true;
  boosted.boost.exp_alpha = 1.0;
  train::TrainConfig plain = cfg;
  plain.boosting = false;

  const train::TrainState a = train::run(boosted, corpus);
  const train::TrainState b = train::run(plain, corpus);

  const VectorXd pa = enc::flatten(a.params);
  const VectorXd pb = enc::flatten(b.params);
  const bool params_equal = pa.size() == pb.size() && (pa.array() == pb.array()).all();
  const bool history_equal =
      train::metrics_csv(a.history) == train::metrics_csv(b.history);

  std::size_t boosted_weights = 0;
  for (const auto& rec : a.refresh_log) {
    boosted_weights += rec.n_boosted;
  }
  verdict(1, params_equal && history_equal && boosted_weights == 0,
          std::string("params bitwise ") + (params_equal ? "equal" : "DIFFER") +
              ", per-epoch losses and metrics " + (history_equal ? "identical" : "DIFFER") +
              ", " + std::to_string(a.refresh_log.size()) + " refreshes all unweighted");
}

// ---- criterion 2: analytic gradients vs central finite differences --------

double pack_and_check(const losses::LossOutput& out,
                      const std::function<losses::LossOutput(const MatrixXd&, const MatrixXd&)>& f,
                      const MatrixXd& img, const MatrixXd& txt) {
  const int rows = static_cast<int>(img.rows());
  const int cols = static_cast<int>(img.cols());
  VectorXd x(2 * rows * cols);
  VectorXd analytic(2 * rows * cols);
  int at = 0;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j, ++at) {
      x[at] = img(i, j);
      analytic[at] = out.grad_img(i, j);
    }
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j, ++at) {
      x[at] = txt(i, j);
      analytic[at] = out.grad_txt(i, j);
    }
  }
  const auto value_of = [&](const VectorXd& v) {
    MatrixXd mi(rows, cols);
    MatrixXd mt(rows, cols);
    int k = 0;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j, ++k) {
        mi(i, j) = v[k];
      }
    }
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j, ++k) {
        mt(i, j) = v[k];
      }
    }
    return f(mi, mt).value;
  };
  const VectorXd numeric = oracle::fd_gradient(value_of, x);
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    worst = std::max(worst, oracle::rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

void criterion_gradients() {
  Rng rng(20240601);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int batch = 2 + static_cast<int>(rng.bounded(7));   // 2..8
    const int dim = 2 + static_cast<int>(rng.bounded(15));    // 2..16
    const MatrixXd img = unit_rows(batch, dim, rng);
    const MatrixXd txt = unit_rows(batch, dim, rng);
    VectorXd weights(batch);
    std::vector<IdentityLabel> ids(batch);
    std::vector<int> labels(batch);
    const int n_classes = 2 + static_cast<int>(rng.bounded(3));
    for (int i = 0; i < batch; ++i) {
      weights[i] = rng.bounded(2) == 0 ? 1.0 : 1.6;
      ids[i] = static_cast<IdentityLabel>(rng.bounded(3));
      labels[i] = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_classes)));
    }
    MatrixXd w_id(n_classes, dim);
    for (int i = 0; i < n_classes; ++i) {
      for (int j = 0; j < dim; ++j) {
        w_id(i, j) = 0.5 * rng.gaussian();
      }
    }

    worst = std::max(worst, pack_and_check(
                                losses::boosted_itc(img, txt, weights, 0.2),
                                [&](const MatrixXd& a, const MatrixXd& b) {
                                  return losses::boosted_itc(a, b, weights, 0.2);
                                },
                                img, txt));
    worst = std::max(worst, pack_and_check(
                                losses::boosted_sdm(img, txt, ids, weights, 0.2),
                                [&](const MatrixXd& a, const MatrixXd& b) {
                                  return losses::boosted_sdm(a, b, ids, weights, 0.2);
                                },
                                img, txt));
    const losses::LossOutput id_out = losses::boosted_id(img, txt, labels, weights, w_id);
    worst = std::max(worst, pack_and_check(id_out,
                                           [&](const MatrixXd& a, const MatrixXd& b) {
                                             return losses::boosted_id(a, b, labels, weights,
                                                                       w_id);
                                           },
                                           img, txt));
    // classifier gradient of the ID loss
    VectorXd wx(n_classes * dim);
    VectorXd wg(n_classes * dim);
    int at = 0;
    for (int i = 0; i < n_classes; ++i) {
      for (int j = 0; j < dim; ++j, ++at) {
        wx[at] = w_id(i, j);
        wg[at] = id_out.grad_classifier(i, j);
      }
    }
    const VectorXd wn = oracle::fd_gradient(
        [&](const VectorXd& v) {
          MatrixXd w(n_classes, dim);
          int k = 0;
          for (int i = 0; i < n_classes; ++i) {
            for (int j = 0; j < dim; ++j, ++k) {
              w(i, j) = v[k];
            }
          }
          return losses::boosted_id(img, txt, labels, weights, w).value;
        },
        wx);
    for (int i = 0; i < wx.size(); ++i) {
      worst = std::max(worst, oracle::rel_err(wg[i], wn[i]));
    }
  }
  verdict(2, worst <= 1e-5,
          "max relative error " + std::to_string(worst) + " over 50 batches x {itc,sdm,id}");
}

// ---- criterion 3: mining vs a literal R_k brute force ---------------------

void criterion_mining() {
  Rng rng(777);
  int bad_sets = 0;
  int bad_ranks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n_q = 1 + static_cast<int>(rng.bounded(32));
    const int n_g = 1 + static_cast<int>(rng.bounded(32));
    MatrixXd sims(n_q, n_g);
    for (int i = 0; i < n_q; ++i) {
      for (int j = 0; j < n_g; ++j) {
        sims(i, j) = (static_cast<double>(rng.bounded(17)) - 8.0) / 8.0;  // ties abound
      }
    }
    std::vector<int> gallery_ids(n_g);
    for (int j = 0; j < n_g; ++j) {
      gallery_ids[j] = static_cast<int>(rng.bounded(6));
    }
    std::vector<int> paired(n_q);
    std::vector<int> query_ids(n_q);
    std::vector<PairId> qpid(n_q);
    std::vector<PairId> gpid(n_g);
    for (int j = 0; j < n_g; ++j) {
      gpid[j] = 1000 + j;
    }
    for (int i = 0; i < n_q; ++i) {
      paired[i] = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_g)));
      query_ids[i] = gallery_ids[paired[i]];
      qpid[i] = 1000 + paired[i];
    }
    const int k = 2 + static_cast<int>(rng.bounded(4));

    mining::SimilarityMatrix sim;
    sim.values = sims;
    sim.query_pair_ids = qpid;
    sim.gallery_pair_ids = gpid;

    const std::vector<IdentityLabel> q_labels(query_ids.begin(), query_ids.end());
    const std::vector<IdentityLabel> g_labels(gallery_ids.begin(), gallery_ids.end());
    const auto mined = mining::mine(sim, q_labels, g_labels, paired, k);
    const auto expect = oracle::mine_by_sort(sims, query_ids, gallery_ids, paired, k);

    std::set<std::pair<int, int>> got;
    for (const auto& e : mined.entries) {
      got.insert({e.query_index, e.rank1_gallery_index});
    }
    std::set<std::pair<int, int>> want;
    for (const auto& e : expect) {
      want.insert({e.query, e.rank1_gallery});
    }
    if (got != want) {
      ++bad_sets;
    }
    for (int i = 0; i < n_q; ++i) {
      if (mining::rank_of(sim, i, paired[i]) !=
          oracle::rank_by_sort(sims, i, paired[i])) {
        ++bad_ranks;
      }
      const int j = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_g)));
      if (mining::rank_of(sim, i, j) != oracle::rank_by_sort(sims, i, j)) {
        ++bad_ranks;
      }
    }
  }
  verdict(3, bad_sets == 0 && bad_ranks == 0,
          "200 instances: " + std::to_string(bad_sets) + " set mismatches, " +
              std::to_string(bad_ranks) + " rank mismatches");
}

// ---- criterion 4: retrieval metrics vs a brute-force oracle ---------------

void criterion_metrics() {
  Rng rng(4242);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_g = 1 + static_cast<int>(rng.bounded(24));
    const int n_q = 1 + static_cast<int>(rng.bounded(24));
    std::vector<int> gallery_ids(n_g);
    for (int j = 0; j < n_g; ++j) {
      gallery_ids[j] = static_cast<int>(rng.bounded(5));
    }
    std::vector<int> query_ids(n_q);
    MatrixXd scores(n_q, n_g);
    for (int i = 0; i < n_q; ++i) {
      query_ids[i] = gallery_ids[rng.bounded(static_cast<std::uint64_t>(n_g))];
      for (int j = 0; j < n_g; ++j) {
        scores(i, j) = (static_cast<double>(rng.bounded(17)) - 8.0) / 8.0;
      }
    }

    eval::RetrievalRun run;
    run.query_emb = scores;  // gallery is an identity basis, so dot == score
    run.query_identities.assign(query_ids.begin(), query_ids.end());
    run.gallery_emb = MatrixXd::Identity(n_g, n_g);
    run.gallery_identities.assign(gallery_ids.begin(), gallery_ids.end());
    run.gallery_sources.assign(n_g, "primary");

    const eval::Metrics got = eval::evaluate(run);
    const oracle::MetricResult want = oracle::metrics_by_sort(scores, query_ids, gallery_ids);
    if (got.r1 != want.r1 || got.r5 != want.r5 || got.r10 != want.r10 || got.map != want.map) {
      ++mismatches;
    }
  }

  // hand case: relevant items at ranks 1 and 3 of a 3-item gallery
  eval::RetrievalRun hand;
  hand.query_emb = MatrixXd(1, 3);
  hand.query_emb << 0.9, 0.8, 0.5;
  hand.query_identities = {7};
  hand.gallery_emb = MatrixXd::Identity(3, 3);
  hand.gallery_identities = {7, 3, 7};
  hand.gallery_sources = {"primary", "primary", "primary"};
  const double hand_map = eval::evaluate(hand).map;
  const bool hand_ok = std::abs(hand_map - 5.0 / 6.0) <= 1e-9;

  verdict(4, mismatches == 0 && hand_ok,
          "100 instances exact, " + std::to_string(mismatches) + " mismatches; AP{1,3 of 3} = " +
              fmt(hand_map));
}

// ---- criterion 5: frozen hand values, independently recomputed ------------

void criterion_hand_values() {
  // Both scalars follow from logits [[1,0],[0,1]]: every row's correct-class
  // log-softmax is -log(1 + e^-1).
  const double row_nll = std::log1p(std::exp(-1.0));
  const double itc_independent = 0.5 * (1.6 + 1.0) * row_nll;  // both directions average
  const double id_independent = (1.6 + 1.0) * row_nll;

  const MatrixXd eye = MatrixXd::Identity(2, 2);
  VectorXd w(2);
  w << 1.6, 1.0;

  const double itc_value = losses::boosted_itc(eye, eye, w, 1.0).value;
  const double id_value = losses::weighted_cross_entropy(eye, {0, 1}, w).value;

  const bool itc_ok = std::abs(itc_value - itc_independent) <= 1e-5 &&
                      std::abs(itc_value - 0.40724019377368967) <= 1e-5;
  const bool id_ok = std::abs(id_value - id_independent) <= 1e-5 &&
                     std::abs(id_value - 0.81448038754737934) <= 1e-5;
  verdict(5, itc_ok && id_ok,
          "ITC 2x2 = " + std::to_string(itc_value) + " (want ~0.40724), ID 2x2 = " +
              std::to_string(id_value) + " (want ~0.81448)");
}

// ---- criteria 6-8: the training grid on the reference corpus --------------

struct GridRun {
  train::TrainConfig cfg;
  double r1 = 0.0;
  double promotion = std::numeric_limits<double>::quiet_NaN();
  report::RunArtifacts artifacts;
};

GridRun run_leg(const data::Corpus& corpus, const train::TrainConfig& base, bool boosting,
                int k, double exp_alpha, std::uint64_t seed) {
  train::TrainConfig cfg = base;
  cfg.boosting = boosting;
  cfg.boost.k = k;
  cfg.boost.exp_alpha = exp_alpha;
  cfg.seed = seed;
  const train::TrainState state = train::run(cfg, corpus);

  GridRun out;
  out.cfg = cfg;
  out.artifacts.dir = "mem_seed" + std::to_string(seed);
  out.artifacts.config = cfg;
  out.artifacts.test_row = state.history.back();
  out.artifacts.boost_log = state.refresh_log;
  out.r1 = out.artifacts.test_row.r1;
  out.promotion = out.artifacts.promotion_fraction();
  return out;
}

void criteria_grid() {
  note("generating reference corpus (200 identities, 4 images/id)");
  data::CorpusConfig cc;  // defaults are the reference synthetic config
  cc.name = "acceptance";
  const data::Corpus corpus = data::generate_corpus(cc);

  train::TrainConfig base;
  base.epochs = 10;
  base.batch_size = 64;
  base.lr = 1e-3;
  base.hidden = 64;
  base.embed_dim = 32;
  base.eval_every = 8;
  base.losses = {{"itc", 1.0}, {"id", 1.0}};
  base.boost.warmup_epochs = 2;

  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const std::vector<double> alphas = {1.0, 1.2, 1.6, 2.0};
  const std::vector<int> ks = {2, 3, 4, 5};

  // key: (boosting, k, alpha) -> seed -> run
  std::map<std::tuple<bool, int, double>, std::map<std::uint64_t, GridRun>> grid;
  auto ensure = [&](bool boosting, int k, double alpha) {
    for (std::uint64_t seed : seeds) {
      auto& slot = grid[{boosting, k, alpha}];
      if (slot.count(seed) == 0) {
        std::ostringstream label;
        label << (boosting ? "boosted" : "baseline") << " k=" << k << " alpha=" << alpha
              << " seed=" << seed;
        note("training " + label.str());
        slot.emplace(seed, run_leg(corpus, base, boosting, k, alpha, seed));
      }
    }
  };

  ensure(false, 2, 1.6);  // unboosted baseline
  for (double alpha : alphas) {
    ensure(true, 2, alpha);
  }
  for (int k : ks) {
    ensure(true, k, 1.6);
  }

  const auto& baseline = grid.at({false, 2, 1.6});
  const auto& boosted = grid.at({true, 2, 1.6});
  const auto& control = grid.at({true, 2, 1.0});

  // criterion 6: directional claim
  double base_mean = 0.0;
  double boost_mean = 0.0;
  int wins_ties = 0;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    const double b = baseline.at(seed).r1;
    const double r = boosted.at(seed).r1;
    base_mean += b / static_cast<double>(seeds.size());
    boost_mean += r / static_cast<double>(seeds.size());
    if (r >= b) {
      ++wins_ties;
    }
    per_seed += (per_seed.empty() ? "" : " ") + fmt(r) + (r > b ? ">" : (r == b ? "=" : "<")) +
                fmt(b);
  }
  verdict(6, boost_mean >= base_mean && wins_ties >= 4,
          "boosted mean R@1 " + fmt(boost_mean) + " vs baseline " + fmt(base_mean) +
              "; wins+ties " + std::to_string(wins_ties) + "/5 [" + per_seed + "]");

  // criterion 7: promotion fraction vs the alpha=1 control
  int higher = 0;
  std::string fractions;
  for (std::uint64_t seed : seeds) {
    const double fb = boosted.at(seed).promotion;
    const double fc = control.at(seed).promotion;
    if (std::isfinite(fb) && std::isfinite(fc) && fb > fc) {
      ++higher;
    }
    fractions += (fractions.empty() ? "" : " ") + fmt(fb) + ">" + fmt(fc);
  }
  verdict(7, higher >= 3,
          "boosted promotion fraction higher on " + std::to_string(higher) +
              "/5 seeds [" + fractions + "]");

  // criterion 8 (soft): complete ablation series + per-seed drop recording
  std::vector<report::RunArtifacts> all_runs;
  for (const auto& [key, by_seed] : grid) {
    for (const auto& [seed, run] : by_seed) {
      all_runs.push_back(run.artifacts);
    }
  }
  const report::Report rep = report::build_report(all_runs);
  report::write_report(rep, "acceptance_report");

  auto series_complete = [&](const std::string& axis, const std::vector<double>& values) {
    if (rep.series.count(axis) == 0) {
      return false;
    }
    std::map<double, std::set<std::uint64_t>> seen;
    std::istringstream is(rep.series.at(axis));
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      if (line.empty()) {
        continue;
      }
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      seen[std::stod(line.substr(0, c1))].insert(
          std::stoull(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    if (seen.size() != values.size()) {
      return false;
    }
    for (double v : values) {
      if (seen.count(v) == 0 || seen.at(v).size() != seeds.size()) {
        return false;
      }
    }
    return true;
  };

  const bool k_ok = series_complete("k", {2, 3, 4, 5});
  const bool alpha_ok = series_complete("exp_alpha", {1.0, 1.2, 1.6, 2.0});
  bool drops_recorded = rep.markdown.find("### Sensitivity beyond k=2") != std::string::npos;
  int drop_lines = 0;
  for (std::uint64_t seed : seeds) {
    const std::string obs = "- seed " + std::to_string(seed) + ": drop observed";
    const std::string not_obs = "- seed " + std::to_string(seed) + ": drop not observed";
    if (rep.markdown.find(obs) != std::string::npos ||
        rep.markdown.find(not_obs) != std::string::npos) {
      ++drop_lines;
    }
  }
  drops_recorded = drops_recorded && drop_lines == static_cast<int>(seeds.size());

  std::string tally = "no drop summary";
  const auto pos = rep.markdown.find("Drop beyond k=2 observed on ");
  if (pos != std::string::npos) {
    tally = rep.markdown.substr(pos, rep.markdown.find('\n', pos) - pos);
  }
  verdict(8, k_ok && alpha_ok && drops_recorded,
          std::string("series k ") + (k_ok ? "complete" : "INCOMPLETE") + ", exp_alpha " +
              (alpha_ok ? "complete" : "INCOMPLETE") + ", per-seed drop lines " +
              std::to_string(drop_lines) + "/5; " + tally);
}

// ---- criterion 9: distractors never help any query ------------------------

void criterion_distractors() {
  data::CorpusConfig ca;
  ca.base.n_identities = 30;
  ca.base.images_per_id = 2;
  ca.base.p_latent = 8;
  ca.base.p_img = 24;
  ca.base.p_txt = 24;
  ca.base.seed = 21;
  ca.n_val_identities = 6;
  ca.n_test_identities = 8;
  ca.name = "alpha";
  data::CorpusConfig cb = ca;
  cb.base.seed = 22;
  cb.name = "beta";
  const data::Corpus first = data::generate_corpus(ca);
  const data::Corpus second = data::generate_corpus(cb);

  Rng rng(7);
  const enc::EncoderParams params = enc::EncoderParams::init(24, 24, 16, 8, 30, 0.05, rng);

  int violations = 0;
  int queries = 0;
  const auto check_direction = [&](const data::Dataset& primary,
                                   const data::Dataset& foreign) {
    const eval::RetrievalRun run = eval::make_run(params, primary);
    const VectorXd before = eval::per_query_ap(run);
    const eval::RetrievalRun grown =
        eval::with_distractors(run, {eval::make_distractor_gallery(params, foreign)});
    const VectorXd after = eval::per_query_ap(grown);
    for (int q = 0; q < before.size(); ++q) {
      ++queries;
      if (after[q] > before[q] + 1e-15) {
        ++violations;
      }
    }
    const eval::Metrics m = eval::evaluate(grown);
    if (!(m.map >= 0.0 && m.map <= 1.0)) {
      ++violations;
    }
  };
  check_direction(first.test, second.test);
  check_direction(second.test, first.test);

  verdict(9, violations == 0,
          std::to_string(queries) + " queries across two datasets, " +
              std::to_string(violations) + " AP increases");
}

}  // namespace

int main() {
  criterion_reduction();
  criterion_gradients();
  criterion_mining();
  criterion_metrics();
  criterion_hand_values();
  criteria_grid();
  criterion_distractors();
  if (g_failures == 0) {
    std::printf("all acceptance criteria satisfied\n");
  } else {
    std::printf("%d acceptance criteria failing\n", g_failures);
  }
  return g_failures;
}
