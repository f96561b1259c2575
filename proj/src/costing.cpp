#include "perq/costing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "perq/io.hpp"

namespace perq {

void CostRecord::validate() const {
  if (!(wall_s > 0) || !std::isfinite(wall_s)) throw ValidationError(subject_id + ": wall_s must be > 0");
  if (!(gpu_gb >= 0) || !std::isfinite(gpu_gb)) throw ValidationError(subject_id + ": gpu_gb must be >= 0");
  if (n_samples < 1) throw ValidationError(subject_id + ": n_samples must be >= 1");
}

CostRecord per_sample(const CostRecord& r) {
  r.validate();
  CostRecord out = r;
  out.wall_s = r.wall_s / static_cast<double>(r.n_samples);
  out.n_samples = 1;
  return out;
}

Speedup speedup(const CostRecord& slow, const CostRecord& fast) { return speedup(std::vector<CostRecord>{slow}, fast); }

Speedup speedup(const std::vector<CostRecord>& slow_quorum, const CostRecord& fast) {
  if (slow_quorum.empty()) throw ValidationError("speedup: empty quorum");
  if (!(fast.wall_s > 0)) throw ValidationError("ZeroDenominator", fast.subject_id + ": wall_s is zero");
  fast.validate();
  double time = 0.0;
  double memory = 0.0;
  for (const auto& r : slow_quorum) {
    r.validate();
    if (r.n_samples != fast.n_samples) {
      throw ValidationError("SampleCountMismatch", r.subject_id + " covers " + std::to_string(r.n_samples) +
                                                       " samples, " + fast.subject_id + " covers " +
                                                       std::to_string(fast.n_samples) + "; normalize with per_sample()");
    }
    time += r.wall_s;
    memory = std::max(memory, r.gpu_gb);
  }
  Speedup s;
  s.time_ratio = time / fast.wall_s;
  if (fast.gpu_gb > 0) s.memory_ratio = memory / fast.gpu_gb;
  return s;
}

CostRecord measure(const std::string& subject_id, std::size_t n_samples, const std::function<void()>& step) {
  CostRecord r;
  r.subject_id = subject_id;
  r.n_samples = n_samples;
  r.source = CostSource::Measured;
  const auto start = std::chrono::steady_clock::now();
  try {
    step();
  } catch (const std::exception& e) {
    throw StepFailed(subject_id + ": " + e.what());
  }
  const auto end = std::chrono::steady_clock::now();
  r.started = start;
  r.finished = end;
  // A step can finish within one clock tick; keep wall_s strictly positive.
  r.wall_s = std::max(std::chrono::duration<double>(end - start).count(), 1e-9);
  return r;
}

namespace {

std::vector<CostRecord> fixture_records(const json& arr, std::string_view ctx) {
  if (!arr.is_array()) throw ParseError(std::string(ctx) + ": expected a list");
  std::vector<CostRecord> out;
  for (const auto& e : arr) {
    CostRecord r;
    r.subject_id = require_string(e, "subject_id", ctx);
    r.gpu_gb = require_field(e, "gpu_gb", ctx).get<double>();
    r.wall_s = require_field(e, "wall_s", ctx).get<double>();
    r.n_samples = static_cast<std::size_t>(require_int(e, "n_samples", ctx));
    r.source = CostSource::Fixture;
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

CostFixture load_cost_fixture(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  CostFixture f;
  f.metric_inference = fixture_records(require_field(doc, "metric_inference", path.string()), path.string());
  f.judge_inference = fixture_records(require_field(doc, "judge_inference", path.string()), path.string());
  if (f.metric_inference.empty() || f.judge_inference.empty()) {
    throw ValidationError(path.string() + ": both record lists must be nonempty");
  }
  return f;
}

HeadlineRatios headline_ratios(const CostFixture& fixture) {
  auto by_time = [](const CostRecord& a, const CostRecord& b) { return a.wall_s < b.wall_s; };
  const auto& fastest_judge = *std::min_element(fixture.judge_inference.begin(), fixture.judge_inference.end(), by_time);
  const auto& slowest_metric =
      *std::max_element(fixture.metric_inference.begin(), fixture.metric_inference.end(), by_time);
  return HeadlineRatios{fastest_judge.subject_id, slowest_metric.subject_id, speedup(fastest_judge, slowest_metric),
                        speedup(fixture.judge_inference, slowest_metric)};
}

std::string cost_report_table(const CostFixture& fixture) {
  std::string out;
  char line[160];
  auto rows = [&](const char* title, const std::vector<CostRecord>& records) {
    std::snprintf(line, sizeof line, "%s\n%-40s %10s %10s %10s\n", title, "subject", "GPU [GB]", "time [s]", "samples");
    out += line;
    for (const auto& r : records) {
      std::snprintf(line, sizeof line, "%-40s %10.2f %10.1f %10zu\n", r.subject_id.c_str(), r.gpu_gb, r.wall_s,
                    r.n_samples);
      out += line;
    }
    out += '\n';
  };
  rows("Trained metric inference", fixture.metric_inference);
  rows("LLM judge inference", fixture.judge_inference);

  const auto h = headline_ratios(fixture);
  auto mem = [](const Speedup& s) { return s.memory_ratio ? *s.memory_ratio : std::nan(""); };
  std::snprintf(line, sizeof line, "%s vs %s: %.1fx time, %.1fx GPU memory\n", h.fastest_judge.c_str(),
                h.slowest_metric.c_str(), h.single.time_ratio, mem(h.single));
  out += line;
  std::snprintf(line, sizeof line, "judge quorum (sequential) vs %s: %.1fx time, %.1fx GPU memory\n",
                h.slowest_metric.c_str(), h.quorum.time_ratio, mem(h.quorum));
  out += line;
  return out;
}

}  // namespace perq
