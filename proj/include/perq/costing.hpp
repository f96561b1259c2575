#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "perq/error.hpp"

namespace perq {

enum class CostSource { Measured, Fixture };

/// Resources spent evaluating n_samples texts. gpu_gb = 0 means CPU-only or
/// unknown.
struct CostRecord {
  std::string subject_id;
  double gpu_gb = 0.0;
  double wall_s = 0.0;
  std::size_t n_samples = 1;
  CostSource source = CostSource::Measured;
  std::optional<std::chrono::steady_clock::time_point> started;
  std::optional<std::chrono::steady_clock::time_point> finished;

  void validate() const;
};

/// Same record scaled to a single sample.
CostRecord per_sample(const CostRecord& r);

struct Speedup {
  double time_ratio = 0.0;
  /// nullopt when the fast side reports no GPU memory.
  std::optional<double> memory_ratio;
};

/// slow.wall_s / fast.wall_s and slow.gpu_gb / fast.gpu_gb.
/// Throws ValidationError("SampleCountMismatch") when n_samples differ.
Speedup speedup(const CostRecord& slow, const CostRecord& fast);

/// A quorum evaluated one judge after another on shared hardware:
/// time is the sum of wall times, memory the maximum.
Speedup speedup(const std::vector<CostRecord>& slow_quorum, const CostRecord& fast);

class StepFailed : public Error {
 public:
  explicit StepFailed(const std::string& message) : Error(ErrorKind::Data, "StepFailed", message) {}
};

/// Runs `step` and times it on the monotonic clock. Any exception from the
/// step is rethrown as StepFailed and no record is produced.
CostRecord measure(const std::string& subject_id, std::size_t n_samples, const std::function<void()>& step);

struct CostFixture {
  std::vector<CostRecord> metric_inference;  // trained-metric backends
  std::vector<CostRecord> judge_inference;   // LLM judges
};

CostFixture load_cost_fixture(const std::filesystem::path& path);

struct HeadlineRatios {
  std::string fastest_judge;
  std::string slowest_metric;
  Speedup single;  // fastest judge vs slowest metric
  Speedup quorum;  // all judges vs slowest metric
};

HeadlineRatios headline_ratios(const CostFixture& fixture);

/// Fixed-width comparison table followed by the headline ratios.
std::string cost_report_table(const CostFixture& fixture);

}  // namespace perq
