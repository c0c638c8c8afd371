#include "retboost/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "retboost/io.hpp"

namespace retboost::report {

namespace {

std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string mean_std(const std::vector<double>& v) {
  if (v.size() < 2) {
    return fmt4(mean(v));
  }
  return fmt4(mean(v)) + " +/- " + fmt4(sample_std(v));
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) {
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str()) {
    throw std::runtime_error("report: unparsable number '" + text + "' in " + where);
  }
  return v;
}

std::string losses_label(const train::TrainConfig& c) {
  std::string out;
  for (const auto& term : c.losses) {
    if (!out.empty()) {
      out += "+";
    }
    out += term.name;
    if (term.coefficient != 1.0) {
      out += ":" + fmtg(term.coefficient);
    }
  }
  return out;
}

std::string display_label(const train::TrainConfig& c) {
  std::string out = "losses=" + losses_label(c);
  if (!c.boosting) {
    return out + " boosting=off";
  }
  out += " k=" + std::to_string(c.boost.k);
  out += " alpha=" + fmtg(c.boost.exp_alpha);
  out += " refresh=" + std::to_string(c.boost.refresh_period);
  out += " augmented=" + std::string(c.boost.augmented ? "on" : "off");
  return out;
}

std::string shape_label(const train::TrainConfig& c) {
  return "epochs=" + std::to_string(c.epochs) + " bs=" + std::to_string(c.batch_size) +
         " lr=" + fmtg(c.lr) + " hidden=" + std::to_string(c.hidden) +
         " dim=" + std::to_string(c.embed_dim) + " tau=" + fmtg(c.tau) +
         " warmup=" + std::to_string(c.boost.warmup_epochs) +
         " i2t=" + (c.boost.mine_i2t ? "1" : "0") +
         " sdmbi=" + (c.sdm_bidirectional ? "1" : "0") +
         " eval=" + std::to_string(c.eval_every);
}

std::string group_key(const train::TrainConfig& c) {
  return display_label(c) + " | " + shape_label(c);
}

struct Group {
  std::string key;
  std::string display;
  train::TrainConfig config;
  std::map<std::uint64_t, const RunArtifacts*> by_seed;

  bool is_baseline() const { return !config.boosting || config.boost.exp_alpha == 1.0; }
  bool is_control() const { return config.boosting && config.boost.exp_alpha == 1.0; }

  std::vector<double> column(double train::EpochRecord::* field) const {
    std::vector<double> out;
    for (const auto& [seed, run] : by_seed) {
      out.push_back(run->test_row.*field);
    }
    return out;
  }
};

// Masks one boost axis out of the group key so runs differing only along
// that axis land in the same family.
std::string rest_key(const Group& g, const std::string& axis) {
  train::TrainConfig c = g.config;
  if (axis == "k") {
    c.boost.k = -1;
  } else if (axis == "exp_alpha") {
    c.boost.exp_alpha = -1.0;
  } else if (axis == "refresh_period") {
    c.boost.refresh_period = -1;
  }
  return group_key(c);
}

double axis_value(const Group& g, const std::string& axis) {
  if (axis == "k") {
    return g.config.boost.k;
  }
  if (axis == "exp_alpha") {
    return g.config.boost.exp_alpha;
  }
  return g.config.boost.refresh_period;
}

}  // namespace

std::size_t RunArtifacts::promotion_observed() const {
  std::size_t n = 0;
  for (const auto& rec : boost_log) {
    n += rec.prev_mined;
  }
  return n;
}

std::size_t RunArtifacts::promotion_promoted() const {
  std::size_t n = 0;
  for (const auto& rec : boost_log) {
    n += rec.prev_mined_now_rank1;
  }
  return n;
}

double RunArtifacts::promotion_fraction() const {
  const std::size_t observed = promotion_observed();
  if (observed == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return static_cast<double>(promotion_promoted()) / static_cast<double>(observed);
}

RunArtifacts load_run(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("report: run directory not found: " + dir.string());
  }
  RunArtifacts run;
  run.dir = dir.string();
  run.config = train::config_from_json(io::read_text_file(dir / "config.json"));

  const std::string csv = io::read_text_file(dir / "metrics.csv");
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("epoch,split,", 0) != 0) {
    throw std::runtime_error("report: malformed metrics.csv header in " + dir.string());
  }
  bool found_test = false;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    const auto cells = split_line(line, ',');
    if (cells.size() != 8) {
      throw std::runtime_error("report: malformed metrics.csv row in " + dir.string());
    }
    if (cells[1] != "test") {
      continue;
    }
    run.test_row.epoch = static_cast<int>(parse_double(cells[0], "metrics.csv"));
    run.test_row.split = cells[1];
    run.test_row.r1 = parse_double(cells[2], "metrics.csv");
    run.test_row.r5 = parse_double(cells[3], "metrics.csv");
    run.test_row.r10 = parse_double(cells[4], "metrics.csv");
    run.test_row.map = parse_double(cells[5], "metrics.csv");
    run.test_row.loss = parse_double(cells[6], "metrics.csv");
    run.test_row.n_boosted = static_cast<std::size_t>(parse_double(cells[7], "metrics.csv"));
    found_test = true;
  }
  if (!found_test) {
    throw std::runtime_error("report: no test row in metrics.csv under " + dir.string());
  }

  const auto log_path = dir / "boost_log.csv";
  if (std::filesystem::exists(log_path)) {
    std::istringstream ls(io::read_text_file(log_path));
    if (!std::getline(ls, line) || line.rfind("epoch,", 0) != 0) {
      throw std::runtime_error("report: malformed boost_log.csv header in " + dir.string());
    }
    while (std::getline(ls, line)) {
      if (line.empty()) {
        continue;
      }
      const auto cells = split_line(line, ',');
      if (cells.size() != 6) {
        throw std::runtime_error("report: malformed boost_log.csv row in " + dir.string());
      }
      train::RefreshRecord rec;
      rec.epoch = static_cast<int>(parse_double(cells[0], "boost_log.csv"));
      rec.n_mined = static_cast<std::size_t>(parse_double(cells[1], "boost_log.csv"));
      rec.n_rank1 = static_cast<std::size_t>(parse_double(cells[2], "boost_log.csv"));
      rec.n_boosted = static_cast<std::size_t>(parse_double(cells[3], "boost_log.csv"));
      rec.prev_mined = static_cast<std::size_t>(parse_double(cells[4], "boost_log.csv"));
      rec.prev_mined_now_rank1 =
          static_cast<std::size_t>(parse_double(cells[5], "boost_log.csv"));
      run.boost_log.push_back(rec);
    }
  }
  return run;
}

std::vector<std::filesystem::path> scan_runs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw std::runtime_error("report: scan root not found: " + root.string());
  }
  std::vector<std::filesystem::path> out;
  auto is_run = [](const std::filesystem::path& d) {
    return std::filesystem::exists(d / "config.json") &&
           std::filesystem::exists(d / "metrics.csv");
  };
  if (is_run(root)) {
    out.push_back(root);
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_directory() && is_run(entry.path())) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Report build_report(const std::vector<RunArtifacts>& runs) {
  if (runs.empty()) {
    throw std::runtime_error("report: no runs given");
  }

  std::map<std::string, Group> groups;
  for (const auto& run : runs) {
    const std::string key = group_key(run.config);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      it->second.key = key;
      it->second.display = display_label(run.config);
      it->second.config = run.config;
    }
    it->second.by_seed.emplace(run.config.seed, &run);  // first run wins on dupes
  }

  std::vector<const Group*> ordered;
  for (const auto& [key, g] : groups) {
    ordered.push_back(&g);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const Group* a, const Group* b) {
    if (a->is_baseline() != b->is_baseline()) {
      return a->is_baseline();
    }
    return a->key < b->key;
  });

  const Group* baseline = ordered.front()->is_baseline() ? ordered.front() : nullptr;

  std::ostringstream md;
  md << "# Training run report\n\n";
  md << runs.size() << " runs across " << ordered.size() << " configurations.\n\n";

  md << "## Test metrics by configuration\n\n";
  md << "| configuration | seeds | R@1 | R@5 | R@10 | mAP | dR@1 | dmAP |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  const double base_r1 = baseline ? mean(baseline->column(&train::EpochRecord::r1)) : 0.0;
  const double base_map = baseline ? mean(baseline->column(&train::EpochRecord::map)) : 0.0;
  for (const Group* g : ordered) {
    md << "| " << g->display << (g == baseline ? " (baseline)" : "") << " | "
       << g->by_seed.size() << " | " << mean_std(g->column(&train::EpochRecord::r1)) << " | "
       << mean_std(g->column(&train::EpochRecord::r5)) << " | "
       << mean_std(g->column(&train::EpochRecord::r10)) << " | "
       << mean_std(g->column(&train::EpochRecord::map)) << " | ";
    if (baseline == nullptr) {
      md << "- | - |\n";
    } else {
      // The baseline row shows its (zero) delta against itself.
      md << fmt4(mean(g->column(&train::EpochRecord::r1)) - base_r1) << " | "
         << fmt4(mean(g->column(&train::EpochRecord::map)) - base_map) << " |\n";
    }
  }
  md << "\n";

  if (baseline != nullptr && ordered.size() > 1) {
    md << "## Per-seed test R@1 vs baseline\n\n";
    for (const Group* g : ordered) {
      if (g == baseline) {
        continue;
      }
      md << "### " << g->display << "\n\n";
      md << "| seed | baseline R@1 | R@1 | outcome |\n|---|---|---|---|\n";
      int wins = 0;
      int ties = 0;
      int losses = 0;
      int shared = 0;
      for (const auto& [seed, run] : g->by_seed) {
        const auto base_it = baseline->by_seed.find(seed);
        if (base_it == baseline->by_seed.end()) {
          continue;
        }
        ++shared;
        const double b = base_it->second->test_row.r1;
        const double r = run->test_row.r1;
        std::string outcome;
        if (r > b) {
          outcome = "win";
          ++wins;
        } else if (r == b) {
          outcome = "tie";
          ++ties;
        } else {
          outcome = "loss";
          ++losses;
        }
        md << "| " << seed << " | " << fmt4(b) << " | " << fmt4(r) << " | " << outcome
           << " |\n";
      }
      md << "\nwins+ties: " << (wins + ties) << " of " << shared << " shared seeds (" << wins
         << " wins, " << ties << " ties, " << losses << " losses)\n\n";
    }
  }

  std::vector<const Group*> promoting;
  for (const Group* g : ordered) {
    bool any = false;
    for (const auto& [seed, run] : g->by_seed) {
      any = any || run->has_promotion();
    }
    if (any) {
      promoting.push_back(g);
    }
  }
  if (!promoting.empty()) {
    md << "## Promotion diagnostic\n\n";
    md << "Of the pairs mined into the weak-positive set at a refresh, the fraction ranked "
          "first by the time of the next look.\n\n";
    md << "| configuration | seed | mined | promoted | fraction |\n|---|---|---|---|---|\n";
    for (const Group* g : promoting) {
      for (const auto& [seed, run] : g->by_seed) {
        if (!run->has_promotion()) {
          continue;
        }
        md << "| " << g->display << " | " << seed << " | " << run->promotion_observed()
           << " | " << run->promotion_promoted() << " | " << fmt4(run->promotion_fraction())
           << " |\n";
      }
    }
    md << "\n";

    const Group* control = nullptr;
    for (const Group* g : promoting) {
      if (g->is_control()) {
        control = g;
        break;
      }
    }
    if (control != nullptr) {
      for (const Group* g : promoting) {
        if (g == control || g->is_baseline()) {
          continue;
        }
        int higher = 0;
        int shared = 0;
        for (const auto& [seed, run] : g->by_seed) {
          const auto it = control->by_seed.find(seed);
          if (it == control->by_seed.end() || !run->has_promotion() ||
              !it->second->has_promotion()) {
            continue;
          }
          ++shared;
          if (run->promotion_fraction() > it->second->promotion_fraction()) {
            ++higher;
          }
        }
        if (shared > 0) {
          md << "- " << g->display << ": promotion fraction higher than the alpha=1 control on "
             << higher << " of " << shared << " shared seeds.\n";
        }
      }
      md << "\n";
    }
  }

  Report out;

  const std::vector<std::string> axes = {"k", "exp_alpha", "refresh_period"};
  std::map<std::string, std::map<double, const Group*>> families;
  for (const auto& axis : axes) {
    std::map<std::string, std::map<double, const Group*>> candidates;
    for (const Group* g : ordered) {
      if (!g->config.boosting) {
        continue;
      }
      candidates[rest_key(*g, axis)].emplace(axis_value(*g, axis), g);
    }
    const std::map<double, const Group*>* best = nullptr;
    for (const auto& [rest, family] : candidates) {
      if (best == nullptr || family.size() > best->size()) {
        best = &family;
      }
    }
    if (best != nullptr && best->size() >= 2) {
      families[axis] = *best;
    }
  }

  if (!families.empty()) {
    md << "## Ablation series\n\n";
    for (const auto& [axis, family] : families) {
      std::string csv = "value,seed,r1,r5,r10,map,promotion_fraction\n";
      md << "### axis: " << axis << "\n\n";
      md << "| " << axis << " | seeds | R@1 | mAP |\n|---|---|---|---|\n";
      for (const auto& [value, g] : family) {
        for (const auto& [seed, run] : g->by_seed) {
          csv += fmtg(value) + "," + std::to_string(seed) + "," + fmt17(run->test_row.r1) +
                 "," + fmt17(run->test_row.r5) + "," + fmt17(run->test_row.r10) + "," +
                 fmt17(run->test_row.map) + "," + fmt17(run->promotion_fraction()) + "\n";
        }
        md << "| " << fmtg(value) << " | " << g->by_seed.size() << " | "
           << mean_std(g->column(&train::EpochRecord::r1)) << " | "
           << mean_std(g->column(&train::EpochRecord::map)) << " |\n";
      }
      md << "\n(series_" << axis << ".csv holds the per-seed rows.)\n\n";
      out.series[axis] = csv;
    }

    const auto k_family = families.find("k");
    if (k_family != families.end() && k_family->second.count(2.0) > 0 &&
        k_family->second.size() >= 2) {
      md << "### Sensitivity beyond k=2\n\n";
      const Group* at2 = k_family->second.at(2.0);
      std::set<std::uint64_t> seeds;
      for (const auto& [seed, run] : at2->by_seed) {
        seeds.insert(seed);
      }
      int observed = 0;
      int counted = 0;
      for (std::uint64_t seed : seeds) {
        double best_beyond = -1.0;
        bool have_beyond = false;
        for (const auto& [value, g] : k_family->second) {
          if (value <= 2.0) {
            continue;
          }
          const auto it = g->by_seed.find(seed);
          if (it != g->by_seed.end()) {
            best_beyond = std::max(best_beyond, it->second->test_row.r1);
            have_beyond = true;
          }
        }
        if (!have_beyond) {
          continue;
        }
        ++counted;
        const double at2_r1 = at2->by_seed.at(seed)->test_row.r1;
        const bool drop = best_beyond < at2_r1;
        if (drop) {
          ++observed;
        }
        md << "- seed " << seed << ": " << (drop ? "drop observed" : "drop not observed")
           << " (R@1 at k=2: " << fmt4(at2_r1) << ", best R@1 at k>2: " << fmt4(best_beyond)
           << ")\n";
      }
      md << "\nDrop beyond k=2 observed on " << observed << " of " << counted << " seeds.\n\n";
    }
  }

  out.markdown = md.str();
  return out;
}

void write_report(const Report& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  io::write_text_file(out_dir / "report.md", report.markdown);
  for (const auto& [axis, csv] : report.series) {
    io::write_text_file(out_dir / ("series_" + axis + ".csv"), csv);
  }
}

}  // namespace retboost::report
