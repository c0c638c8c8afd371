#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "retboost/trainer.hpp"

namespace retboost::report {

// One finished training run, reloaded from its artifact directory.
struct RunArtifacts {
  std::string dir;
  train::TrainConfig config;
  train::EpochRecord test_row;
  std::vector<train::RefreshRecord> boost_log;

  // Promotion accounting: of the pairs mined at each refresh, how many were
  // at rank 1 when the next refresh (or the closing probe) looked again.
  std::size_t promotion_observed() const;
  std::size_t promotion_promoted() const;
  bool has_promotion() const { return promotion_observed() > 0; }
  double promotion_fraction() const;
};

RunArtifacts load_run(const std::filesystem::path& dir);

// Directories under root (any depth, sorted) holding config.json+metrics.csv.
std::vector<std::filesystem::path> scan_runs(const std::filesystem::path& root);

struct Report {
  std::string markdown;                       // report.md body
  std::map<std::string, std::string> series;  // axis name -> CSV text
};

Report build_report(const std::vector<RunArtifacts>& runs);

// Writes report.md plus series_<axis>.csv files.
void write_report(const Report& report, const std::filesystem::path& out_dir);

}  // namespace retboost::report
