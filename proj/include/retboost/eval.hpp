#pragma once

#include <string>
#include <vector>

#include "retboost/dataset.hpp"
#include "retboost/encoder.hpp"
#include "retboost/types.hpp"

namespace retboost::eval {

struct Metrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double map = 0.0;
};

// Text queries against an image gallery. Gallery items carry a provenance tag
// so distractor runs can report where each block came from.
struct RetrievalRun {
  MatrixXd query_emb;
  std::vector<IdentityLabel> query_identities;
  MatrixXd gallery_emb;
  std::vector<IdentityLabel> gallery_identities;
  std::vector<std::string> gallery_sources;

  int n_queries() const { return static_cast<int>(query_emb.rows()); }
  int n_gallery() const { return static_cast<int>(gallery_emb.rows()); }
  void validate() const;
};

struct DistractorGallery {
  MatrixXd emb;
  std::vector<IdentityLabel> identities;
  std::string source;
};

Metrics evaluate(const RetrievalRun& run);

// Average precision per query (the mAP summands), exposed so gallery-growth
// monotonicity can be asserted query by query.
VectorXd per_query_ap(const RetrievalRun& run);

// Appends distractor galleries to the run. With remap_identities, distractor
// labels are shifted into fresh ranges so they can never count as relevant;
// without it the caller's labels are trusted but checked for collisions.
RetrievalRun with_distractors(const RetrievalRun& primary,
                              const std::vector<DistractorGallery>& distractors,
                              bool remap_identities = true);

Metrics evaluate_with_distractors(const RetrievalRun& primary,
                                  const std::vector<DistractorGallery>& distractors,
                                  bool remap_identities = true);

// Embeds every text sample (queries, in sample order) and every distinct
// image row (gallery) of a dataset with the given encoder.
RetrievalRun make_run(const enc::EncoderParams& params, const data::Dataset& data);

DistractorGallery make_distractor_gallery(const enc::EncoderParams& params,
                                          const data::Dataset& data);

// Evaluate a frozen encoder on another dataset's samples (typically its test
// split); feature widths must match the encoder's.
Metrics cross_dataset_eval(const enc::EncoderParams& params, const data::Dataset& data);

}  // namespace retboost::eval
