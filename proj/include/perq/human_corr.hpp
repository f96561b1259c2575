#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "perq/aggregate.hpp"
#include "perq/metrics.hpp"
#include "perq/prediction.hpp"
#include "perq/rubric.hpp"

namespace perq {

/// sample_id -> scores from k annotators (k may vary per sample).
struct ExternalLabelSet {
  std::map<std::string, std::vector<int>> scores;
  int num_levels = 4;

  void validate() const;
};

/// Rows {sample_id, scores: [int]}.
ExternalLabelSet load_external_labels(const std::filesystem::path& path, const Rubric& rubric);

/// The k-annotator majority rule of majority_vote() applied per sample.
std::map<std::string, MajorityLabel> human_majority(const ExternalLabelSet& labels);

struct ExternalCorrelation {
  MetricReport report;
  std::size_t intersection = 0;
};

/// Metrics on the ids present in both inputs with a non-NA human label.
/// Errors: ValidationError codes InsufficientOverlap (< 2 shared ids) and
/// ConstantInput (Spearman undefined).
ExternalCorrelation correlate_external(const std::vector<Prediction>& predictions,
                                       const std::map<std::string, MajorityLabel>& human, int num_labels);

}  // namespace perq
