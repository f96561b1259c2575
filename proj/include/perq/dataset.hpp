#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perq/corpus.hpp"
#include "perq/error.hpp"
#include "perq/io.hpp"

namespace perq {

struct SplitConfig {
  int per_label_train = 1300;
  int per_label_val = 500;
  int per_label_test = 1000;
  std::uint64_t seed = 0;
  /// Use every non-NA sample, divided in the train:val:test ratio of the
  /// counts above, with no per-label quota.
  bool allow_imbalanced = false;

  void validate() const;
  int per_label_total() const { return per_label_train + per_label_val + per_label_test; }
};

json to_json(const SplitConfig& cfg);
SplitConfig split_config_from_json(const json& j);

enum class SplitRole { Train, Val, Test, Unused };
std::string_view to_string(SplitRole r);

using SplitAssignment = std::map<std::string, SplitRole>;

struct LabeledSample {
  TextSample sample;
  std::optional<int> label;  // nullopt = NA
};

class InsufficientLabel : public DataError {
 public:
  InsufficientLabel(int label, std::size_t have, std::size_t need)
      : DataError("InsufficientLabel", "label " + std::to_string(label) + ": have " + std::to_string(have) +
                                           " samples, need " + std::to_string(need)),
        label(label),
        have(have),
        need(need) {}

  int label;
  std::size_t have;
  std::size_t need;
};

/// Label-balanced seeded split. For each label, sample ids are sorted,
/// shuffled by Fisher-Yates with Rng::keyed(seed, "label:<l>"), and the
/// first train/val/test quota taken in that order. NA samples are Unused.
SplitAssignment make_split(std::span<const LabeledSample> labeled, const SplitConfig& cfg, int num_levels);

/// Row of train.jsonl / val.jsonl / test.jsonl: {"id", "text", "label"}.
struct SplitRow {
  std::string id;
  std::string text;
  int label = 0;

  bool operator==(const SplitRow&) const = default;
};

struct SplitFiles {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
  std::filesystem::path manifest;

  static SplitFiles in(const std::filesystem::path& dir);
};

/// Writes the three split files (rows sorted by id) and manifest.json with
/// {seed, config, counts_per_label_per_split, sha256s}.
SplitFiles export_split(std::span<const LabeledSample> labeled, const SplitAssignment& assignment,
                        const SplitConfig& cfg, int num_levels, const std::filesystem::path& out_dir);

std::vector<SplitRow> read_split_rows(const std::filesystem::path& path);
std::string split_rows_to_jsonl(const std::vector<SplitRow>& rows);

}  // namespace perq
