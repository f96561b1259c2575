#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "perq/dataset.hpp"
#include "perq/prediction.hpp"

namespace perq {

/// Sorted (bucket, value) pairs with unique buckets.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

struct FeatureConfig {
  int ngram_min = 1;
  int ngram_max = 3;
  std::uint32_t hash_dim = 1u << 18;

  void validate() const;
};

/// Character n-gram counts over the lowercased, whitespace-normalized text,
/// hashed into hash_dim buckets with 64-bit FNV-1a of each n-gram's UTF-8
/// bytes, then L2-normalized. Empty text gives the zero vector.
SparseVector featurize(std::string_view text, const FeatureConfig& cfg);

struct Hyperparams {
  double lr = 0.1;
  double l2 = 1e-4;
  int epochs = 20;
  int batch = 32;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

/// Linear softmax classifier over hashed features.
struct BaselineModel {
  static constexpr std::uint32_t kFormatVersion = 1;

  FeatureConfig features;
  int label_count = 0;
  int trained_epochs = 0;
  std::vector<double> weights;  // label_count x hash_dim, row-major
  std::vector<double> bias;     // label_count

  static BaselineModel zeros(const FeatureConfig& features, int label_count);

  double& w(int label, std::uint32_t bucket) {
    return weights[static_cast<std::size_t>(label) * features.hash_dim + bucket];
  }
  double w(int label, std::uint32_t bucket) const {
    return weights[static_cast<std::size_t>(label) * features.hash_dim + bucket];
  }
  bool finite() const;
};

/// Softmax probabilities for one feature vector.
std::vector<double> class_probabilities(const BaselineModel& model, const SparseVector& x);

/// Dense gradient with the model's shape.
struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Mean cross-entropy over (xs, ys) plus (l2/2)*||W||^2 (bias unpenalized).
/// When `grad` is non-null it receives the exact gradient of that objective.
double objective(const BaselineModel& model, std::span<const SparseVector> xs, std::span<const int> ys, double l2,
                 Gradient* grad = nullptr);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  BaselineModel model;
  std::vector<EpochLog> log;  // epoch 0 is the zero-initialized model
};

/// Mini-batch gradient descent from all-zero weights. Epoch e visits the
/// training rows in the order of a Fisher-Yates shuffle by
/// Rng::keyed(shuffle_seed, "epoch:<e>"). Bit-reproducible.
TrainResult train_baseline(const std::vector<SplitRow>& train, const std::vector<SplitRow>& val, int num_labels,
                           const Hyperparams& hp, const FeatureConfig& features = {});

/// Argmax with the lowest label winning ties.
std::vector<Prediction> predict(const BaselineModel& model, const std::vector<SplitRow>& rows);
Prediction predict_one(const BaselineModel& model, std::string id, std::string_view text);

std::string epoch_log_csv(const std::vector<EpochLog>& log);

/// Binary model file: magic, format_version, JSON header (feature config,
/// label_count, trained_epochs), little-endian float64 weights and bias, and
/// a trailing SHA-256 of everything before it.
void save_model(const std::filesystem::path& path, const BaselineModel& model);
BaselineModel load_model(const std::filesystem::path& path);

}  // namespace perq
