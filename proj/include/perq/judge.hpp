#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "perq/corpus.hpp"
#include "perq/rubric.hpp"

namespace perq {

enum class JudgeKind { Mock, HttpCompletion };

struct JudgeSpec {
  std::string judge_id;
  JudgeKind kind = JudgeKind::Mock;
  std::optional<std::string> endpoint;
  std::string model;  // sent as "model" to HttpCompletion endpoints
  int max_parallel = 1;
  int max_retries = 2;
  double timeout_s = 60.0;
  int max_tokens = 512;
  double temperature = 0.0;
  double noise_p = 0.0;  // Mock only
  std::uint64_t seed = 0;  // Mock only
  /// Backoff before retry k (0-based) is uniform in [0, min(cap, base * 2^k)].
  double backoff_base_s = 0.5;
  double backoff_cap_s = 30.0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// One judge's raw answer for one sample, or a failure after retries ran out.
struct RawVerdict {
  std::string sample_id;
  std::string judge_id;
  std::string raw_output;
  double latency_s = 0.0;
  int attempt_count = 0;
  bool failed = false;

  bool operator==(const RawVerdict&) const = default;
};

/// Anything that can answer a rendered prompt for a sample. Implementations
/// must be callable concurrently; throwing TransientError requests a retry.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string evaluate(const TextSample& sample, const std::string& prompt) = 0;
  /// Whether latency should be measured. Mock judges report 0 so their
  /// verdict files stay byte-reproducible.
  virtual bool measures_latency() const { return true; }
};

/// Deterministic test double: the score is the number of marker families in
/// the text (clamped to the rubric range), shifted by +-1 with probability
/// noise_p using Rng::keyed(seed, sample_id + "|" + judge_id).
std::string mock_verdict(const TextSample& sample, const JudgeSpec& spec, const Rubric& rubric);

/// Environment variable holding the API key for a judge: upper-cased id with
/// non-alphanumerics replaced by '_', plus "_API_KEY".
std::string api_key_env_var(const std::string& judge_id);

std::unique_ptr<JudgeClient> make_judge_client(const JudgeSpec& spec, const Rubric& rubric);

struct JudgeRunOptions {
  /// Overrides every spec's max_parallel when set (CLI --max-parallel).
  std::optional<int> max_parallel;
  /// Invoked after each finished pair; may be called from worker threads.
  std::function<void(const RawVerdict&)> on_verdict;
};

/// Exactly one RawVerdict per (sample, judge), sorted by (sample_id, judge_id).
/// Failures after max_retries+1 attempts are recorded inline with failed=true.
std::vector<RawVerdict> judge_corpus(const std::vector<TextSample>& samples, const Rubric& rubric,
                                     const std::vector<JudgeSpec>& judges, const JudgeRunOptions& options = {});

/// Same, with caller-supplied clients (one per spec, index-aligned).
std::vector<RawVerdict> judge_corpus(const std::vector<TextSample>& samples, const Rubric& rubric,
                                     const std::vector<JudgeSpec>& judges,
                                     const std::vector<JudgeClient*>& clients, const JudgeRunOptions& options = {});

void write_verdicts(const std::filesystem::path& path, const std::vector<RawVerdict>& verdicts);
std::vector<RawVerdict> load_verdicts(const std::filesystem::path& path);

}  // namespace perq
