#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "perq/baseline.hpp"
#include "perq/bridge.hpp"
#include "perq/corpus.hpp"
#include "perq/dataset.hpp"
#include "perq/judge.hpp"
#include "perq/parse.hpp"
#include "perq/rubric.hpp"

namespace perq {

struct BuiltinTrainer {
  Hyperparams hyperparams;
  FeatureConfig features;
  bool shuffle_seed_set = false;
};

struct CorpusConfig {
  enum class Source { Synthetic, File } source = Source::Synthetic;
  std::filesystem::path path;  // Source::File
  MatrixAxes axes = default_axes();
  QualityProfile quality_profile;
};

/// Project configuration (JSON). Relative paths inside it are resolved
/// against the config file's directory; output_dir against the working
/// directory.
struct ProjectConfig {
  std::optional<std::filesystem::path> rubric_path;  // bundled rubric when absent
  CorpusConfig corpus;
  std::vector<JudgeSpec> judges;
  std::vector<bool> judge_seed_set;  // index-aligned with judges
  SplitConfig split;
  bool split_seed_set = false;
  std::variant<BuiltinTrainer, BackendDescriptor> trainer = BuiltinTrainer{};
  ParserConfig parser;
  std::filesystem::path output_dir = "perq_out";
  std::optional<std::filesystem::path> cost_fixture;
  std::uint64_t seed = 0;

  /// Replaces the global seed and every seed derived from it.
  void override_seed(std::uint64_t s);
};

ProjectConfig load_project_config(const std::filesystem::path& path);
ProjectConfig parse_project_config(const json& doc, const std::filesystem::path& base_dir);

/// Artifact locations inside output_dir.
struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path matrix() const { return root / "matrix.jsonl"; }
  std::filesystem::path corpus() const { return root / "corpus.jsonl"; }
  std::filesystem::path truth() const { return root / "truth.jsonl"; }
  std::filesystem::path verdicts() const { return root / "verdicts.jsonl"; }
  std::filesystem::path parsed() const { return root / "parsed.jsonl"; }
  std::filesystem::path resolutions() const { return root / "resolutions.jsonl"; }
  std::filesystem::path labels() const { return root / "labels.jsonl"; }
  std::filesystem::path label_stats() const { return root / "label_stats.json"; }
  std::filesystem::path manual_queue() const { return root / "manual_queue.jsonl"; }
  std::filesystem::path split_dir() const { return root / "split"; }
  std::filesystem::path model() const { return root / "model.bin"; }
  std::filesystem::path train_log() const { return root / "train_log.csv"; }
  std::filesystem::path predictions() const { return root / "predictions.jsonl"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path human_report() const { return root / "human_report.json"; }
  std::filesystem::path analysis_dir() const { return root / "analysis"; }
  std::filesystem::path stages_dir() const { return root / "stages"; }
  std::filesystem::path run_manifest() const { return root / "run_manifest.json"; }
  std::filesystem::path lock() const { return root / ".perq.lock"; }
};

/// Exclusive ownership of an output directory for one pipeline run.
/// A lock left by a dead process is taken over.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& lock_path);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

enum class AnalysisScope { Test, All, Both };

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  double wall_s = 0.0;
};

/// The artifact pipeline. Each stage reads and writes only files under
/// output_dir and leaves a stamp in stages/<name>.json recording the digest of
/// its inputs and parameters and of its outputs.
class Pipeline {
 public:
  Pipeline(ProjectConfig cfg, std::ostream& log);

  const ProjectConfig& config() const { return cfg_; }
  const Rubric& rubric() const { return rubric_; }
  const ArtifactPaths& paths() const { return paths_; }

  void matrix();
  void synth();
  void judge(std::optional<int> max_parallel = std::nullopt);
  void parse();
  /// Merges an edited manual queue into resolutions.jsonl and re-parses.
  void resolve(const std::filesystem::path& edited_queue);
  void aggregate();
  void split();
  void train();
  /// Predicts the test split into predictions.jsonl, or `input` into `out`.
  void predict(const std::optional<std::filesystem::path>& input = std::nullopt,
               const std::optional<std::filesystem::path>& out = std::nullopt);
  void evaluate(const std::optional<std::filesystem::path>& external_labels = std::nullopt);
  void analyze(AnalysisScope scope = AnalysisScope::Both);

  /// Chains every stage, skipping those whose stamp is up to date.
  std::vector<StageOutcome> run_all(std::optional<int> max_parallel = std::nullopt);

  /// Stage names in run-all order.
  static const std::vector<std::string>& stage_names();

 private:
  struct StageSpec {
    std::vector<std::filesystem::path> inputs;
    json params;
    std::vector<std::filesystem::path> outputs;
  };
  StageSpec stage_spec(const std::string& stage) const;
  std::string stage_key(const StageSpec& spec) const;
  bool up_to_date(const std::string& stage) const;
  void stamp(const std::string& stage) const;
  void run_stage(const std::string& stage, std::optional<int> max_parallel);

  ProjectConfig cfg_;
  Rubric rubric_;
  ArtifactPaths paths_;
  std::ostream& log_;
};

/// In-process entry point of the `baseline-backend` subcommand: trains on
/// train/val, predicts test, writes predictions and cost.json beside `out`.
void run_baseline_backend(const std::filesystem::path& train, const std::filesystem::path& val,
                          const std::filesystem::path& test, const std::filesystem::path& out, int num_labels,
                          const Hyperparams& hp, const FeatureConfig& features);

std::filesystem::path default_cost_fixture();

}  // namespace perq
