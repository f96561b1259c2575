#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace perq {

enum class PType { Generate, Modify };

std::string_view to_string(PType p);
/// Accepts "generate"/"modify" in any case.
PType parse_ptype(std::string_view s);

/// One cell-sample of the generation matrix.
struct GenerationTask {
  std::string task_id;
  std::string language;  // ISO-639-1
  PType ptype = PType::Generate;
  std::string platform;
  std::string generator_id;
  int seed_index = 0;
  std::string source_title;
  std::optional<std::string> source_content;

  bool operator==(const GenerationTask&) const = default;
};

/// Deterministic id, e.g. "en:gen:twitter-x:gemma3-large:0007".
std::string make_task_id(std::string_view language, PType ptype, std::string_view platform,
                         std::string_view generator_id, int seed_index);

struct TextSample {
  std::string sample_id;  // equals task.task_id for generated corpora
  std::string text;
  GenerationTask task;
  std::chrono::system_clock::time_point created_at{};
};

struct MatrixAxes {
  std::vector<std::string> languages;
  std::vector<PType> ptypes;
  std::vector<std::string> platforms;
  std::vector<std::string> generators;
  int samples_per_cell = 1;
};

/// Seven languages, both types, three platforms, six generators, 100 per cell.
MatrixAxes default_axes();

/// Every axis combination times samples_per_cell, sorted by
/// (language, ptype, platform, generator, seed_index).
/// Throws ValidationError("EmptyAxis") on an empty axis.
std::vector<GenerationTask> build_matrix(const MatrixAxes& axes);

/// generator_id -> nonnegative weight per rubric level.
using QualityProfile = std::map<std::string, std::vector<double>>;

struct SynthCorpus {
  std::vector<TextSample> samples;
  /// sample_id -> latent quality level; for tests only, never used in training.
  std::vector<std::pair<std::string, int>> truth;
};

/// Deterministic stand-in for LLM generation. The latent level q of each text
/// is drawn from its generator's weights with Rng::keyed(seed, task_id); q
/// controls how many platform-marker families the text carries (all of them
/// at the top level).
SynthCorpus synth_corpus(const std::vector<GenerationTask>& tasks, const QualityProfile& profile,
                         std::uint64_t seed, int num_levels = 4);

/// Platform-marker families, counted by the mock judge.
enum class MarkerFamily { Hashtag, Emoji, EngagementCue, Concise };
inline constexpr int kMarkerFamilyCount = 4;

/// Engagement phrases recognized as the EngagementCue family (lowercase).
const std::vector<std::string>& engagement_cues();

/// Texts of at most this many whitespace-separated words count as Concise.
inline constexpr int kConciseMaxWords = 40;

/// Distinct marker families present in `text`.
std::vector<MarkerFamily> detect_marker_families(std::string_view text);

std::vector<TextSample> load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<TextSample>& samples);
void write_truth(const std::filesystem::path& path, const std::vector<std::pair<std::string, int>>& truth);
std::vector<std::pair<std::string, int>> load_truth(const std::filesystem::path& path);

struct HttpGeneratorConfig {
  std::string endpoint;
  std::string model;
  /// Placeholders: {title} {content} {platform} {language} {ptype}.
  std::string prompt_template;
  int max_tokens = 512;
  double temperature = 0.0;
  double timeout_s = 60.0;
  int max_retries = 2;
  std::optional<std::string> api_key;
};

/// Generates one text per task through a single-turn completion endpoint.
std::vector<TextSample> http_generate(const std::vector<GenerationTask>& tasks, const HttpGeneratorConfig& cfg);

}  // namespace perq
