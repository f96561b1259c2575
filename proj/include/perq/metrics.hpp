#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perq/io.hpp"

namespace perq {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [gold][pred]

/// Errors: ValidationError codes LengthMismatch, EmptyInput.
double accuracy(std::span<const int> pred, std::span<const int> gold);

/// Unweighted mean of per-label F1 over all num_labels labels. A label with
/// precision + recall = 0 (including one absent from both vectors) counts as 0.
double macro_f1(std::span<const int> pred, std::span<const int> gold, int num_labels);
std::vector<double> per_label_f1(std::span<const int> pred, std::span<const int> gold, int num_labels);

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> gold, int num_labels);

/// Average ranks, 1-based; ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> v);

/// Pearson correlation of fractional ranks. Throws ValidationError
/// "ConstantInput" when either vector is constant, "LengthMismatch" on
/// unequal lengths, and requires at least 2 points.
double spearman(std::span<const double> x, std::span<const double> y);

struct MetricReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> spearman;  // undefined when either side is constant
  ConfusionMatrix confusion;
  std::size_t n = 0;
};

MetricReport evaluate(std::span<const int> pred, std::span<const int> gold, int num_labels);

json to_json(const MetricReport& r);
std::string report_table(const MetricReport& r);

}  // namespace perq
