#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace perq {

struct Prediction {
  std::string sample_id;
  int predicted_label = 0;
  /// Empty when the producer emits labels only.
  std::vector<double> probabilities;

  bool operator==(const Prediction&) const = default;
};

/// Rows {"id", "predicted_label", "probabilities"?}, in the given order.
std::string predictions_to_jsonl(const std::vector<Prediction>& preds);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);

/// Parses and validates rows: labels in [0, num_labels), probability rows of
/// length num_labels, nonnegative, summing to 1 within `prob_tolerance`.
/// Throws SchemaViolation (a ValidationError) naming the row.
std::vector<Prediction> read_predictions(const std::filesystem::path& path, int num_labels,
                                         double prob_tolerance = 1e-5);

}  // namespace perq
