#include "perq/judge.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

#include "perq/error.hpp"
#include "perq/http_client.hpp"
#include "perq/io.hpp"
#include "perq/rng.hpp"

namespace perq {

void JudgeSpec::validate() const {
  const std::string ctx = "judge '" + judge_id + "'";
  if (judge_id.empty()) throw ValidationError("judge_id: must be nonempty");
  if (kind == JudgeKind::HttpCompletion && (!endpoint || endpoint->empty())) {
    throw ValidationError(ctx + ": endpoint: required for http judges");
  }
  if (max_parallel < 1) throw ValidationError(ctx + ": max_parallel: must be >= 1");
  if (max_retries < 0) throw ValidationError(ctx + ": max_retries: must be >= 0");
  if (!(timeout_s > 0)) throw ValidationError(ctx + ": timeout: must be > 0");
  if (!(noise_p >= 0.0 && noise_p <= 1.0)) throw ValidationError(ctx + ": noise_p: must be in [0, 1]");
  if (backoff_base_s < 0 || backoff_cap_s < 0) throw ValidationError(ctx + ": backoff: must be >= 0");
}

std::string mock_verdict(const TextSample& sample, const JudgeSpec& spec, const Rubric& rubric) {
  const int families = static_cast<int>(detect_marker_families(sample.text).size());
  int score = std::clamp(families, rubric.min_score(), rubric.max_score());

  Rng rng = Rng::keyed(spec.seed, sample.sample_id + "|" + spec.judge_id);
  if (rng.uniform() < spec.noise_p) {
    score = std::clamp(score + (rng.below(2) ? 1 : -1), rubric.min_score(), rubric.max_score());
  }
  const auto s = std::to_string(score);
  switch (rng.below(3)) {
    case 0:
      return "The post uses " + std::to_string(families) + " of the platform features I checked for.\nScore: " + s;
    case 1:
      return "Assessment complete.\nScore: " + s;
    default:
      return "Reasoning: tone, format and native features were compared with each level of the schema.\nFinal Score: " + s;
  }
}

std::string api_key_env_var(const std::string& judge_id) {
  std::string out;
  for (char c : judge_id) {
    if (c >= 'a' && c <= 'z') {
      out.push_back(static_cast<char>(c - 32));
    } else if ((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')) {
      out.push_back(c);
    } else {
      out.push_back('_');
    }
  }
  return out + "_API_KEY";
}

namespace {

class MockJudge final : public JudgeClient {
 public:
  MockJudge(JudgeSpec spec, const Rubric& rubric) : spec_(std::move(spec)), rubric_(rubric) {}
  std::string evaluate(const TextSample& sample, const std::string&) override {
    return mock_verdict(sample, spec_, rubric_);
  }
  bool measures_latency() const override { return false; }

 private:
  JudgeSpec spec_;
  const Rubric& rubric_;
};

class HttpJudge final : public JudgeClient {
 public:
  explicit HttpJudge(const JudgeSpec& spec)
      : endpoint_(parse_endpoint(*spec.endpoint)),
        model_(spec.model.empty() ? spec.judge_id : spec.model),
        max_tokens_(spec.max_tokens),
        temperature_(spec.temperature),
        timeout_s_(spec.timeout_s) {
    if (const char* key = std::getenv(api_key_env_var(spec.judge_id).c_str())) api_key_ = key;
  }
  std::string evaluate(const TextSample&, const std::string& prompt) override {
    return post_completion(endpoint_, CompletionRequest{model_, prompt, max_tokens_, temperature_}, api_key_,
                           timeout_s_);
  }

 private:
  Endpoint endpoint_;
  std::string model_;
  int max_tokens_;
  double temperature_;
  double timeout_s_;
  std::optional<std::string> api_key_;
};

RawVerdict judge_one(const TextSample& sample, const Rubric& rubric, const JudgeSpec& spec, JudgeClient& client) {
  RawVerdict v;
  v.sample_id = sample.sample_id;
  v.judge_id = spec.judge_id;
  const std::string prompt = render_prompt(rubric, sample.text, sample.task.platform);
  Rng jitter = Rng::keyed(spec.seed, "backoff|" + sample.sample_id + "|" + spec.judge_id);

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
    v.attempt_count = attempt + 1;
    try {
      v.raw_output = client.evaluate(sample, prompt);
      v.failed = false;
      last_error.clear();
      break;
    } catch (const TransientError& e) {
      last_error = e.what();
    } catch (const std::exception& e) {
      // Not retryable: configuration or programming error inside the client.
      last_error = e.what();
      break;
    }
    if (attempt < spec.max_retries) {
      const double ceiling = std::min(spec.backoff_cap_s, spec.backoff_base_s * std::ldexp(1.0, attempt));
      std::this_thread::sleep_for(std::chrono::duration<double>(jitter.uniform() * ceiling));
    }
  }
  if (!last_error.empty()) {
    v.failed = true;
    v.raw_output = "JudgeUnavailable: " + last_error;
  }
  if (client.measures_latency()) {
    v.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return v;
}

}  // namespace

std::unique_ptr<JudgeClient> make_judge_client(const JudgeSpec& spec, const Rubric& rubric) {
  spec.validate();
  if (spec.kind == JudgeKind::Mock) return std::make_unique<MockJudge>(spec, rubric);
  return std::make_unique<HttpJudge>(spec);
}

std::vector<RawVerdict> judge_corpus(const std::vector<TextSample>& samples, const Rubric& rubric,
                                     const std::vector<JudgeSpec>& judges, const JudgeRunOptions& options) {
  std::vector<std::unique_ptr<JudgeClient>> owned;
  std::vector<JudgeClient*> clients;
  for (const auto& spec : judges) {
    owned.push_back(make_judge_client(spec, rubric));
    clients.push_back(owned.back().get());
  }
  return judge_corpus(samples, rubric, judges, clients, options);
}

std::vector<RawVerdict> judge_corpus(const std::vector<TextSample>& samples, const Rubric& rubric,
                                     const std::vector<JudgeSpec>& judges,
                                     const std::vector<JudgeClient*>& clients, const JudgeRunOptions& options) {
  if (judges.empty()) throw ValidationError("judges: need at least one judge");
  if (samples.empty()) throw ValidationError("samples: need at least one sample");
  if (clients.size() != judges.size()) throw ValidationError("clients: one client per judge required");
  std::set<std::string> judge_ids;
  for (const auto& spec : judges) {
    spec.validate();
    if (!judge_ids.insert(spec.judge_id).second) {
      throw ValidationError("DuplicateId", "judge_id '" + spec.judge_id + "' repeated");
    }
  }
  std::set<std::string> sample_ids;
  for (const auto& s : samples) {
    if (!sample_ids.insert(s.sample_id).second) {
      throw ValidationError("DuplicateId", "sample_id '" + s.sample_id + "' repeated");
    }
  }
  if (options.max_parallel && *options.max_parallel < 1) throw ValidationError("--max-parallel: must be >= 1");

  const std::size_t n = samples.size();
  const std::size_t k = judges.size();
  // Slot (i, j) is written by exactly one worker; assembly below is single-threaded.
  std::vector<RawVerdict> slots(n * k);
  std::vector<std::atomic<std::size_t>> cursors(k);
  for (auto& c : cursors) c.store(0);

  {
    std::vector<std::jthread> workers;
    for (std::size_t j = 0; j < k; ++j) {
      const int parallel = options.max_parallel.value_or(judges[j].max_parallel);
      const auto threads = std::min<std::size_t>(static_cast<std::size_t>(parallel), n);
      for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&, j] {
          for (;;) {
            const std::size_t i = cursors[j].fetch_add(1);
            if (i >= n) return;
            slots[i * k + j] = judge_one(samples[i], rubric, judges[j], *clients[j]);
            if (options.on_verdict) options.on_verdict(slots[i * k + j]);
          }
        });
      }
    }
  }

  std::sort(slots.begin(), slots.end(), [](const RawVerdict& a, const RawVerdict& b) {
    return std::tie(a.sample_id, a.judge_id) < std::tie(b.sample_id, b.judge_id);
  });
  return slots;
}

void write_verdicts(const std::filesystem::path& path, const std::vector<RawVerdict>& verdicts) {
  std::vector<json> rows;
  rows.reserve(verdicts.size());
  for (const auto& v : verdicts) {
    rows.push_back(json{{"sample_id", v.sample_id},
                        {"judge_id", v.judge_id},
                        {"raw_output", v.raw_output},
                        {"latency_s", v.latency_s},
                        {"attempt_count", v.attempt_count},
                        {"failed", v.failed}});
  }
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<RawVerdict> load_verdicts(const std::filesystem::path& path) {
  std::vector<RawVerdict> out;
  const auto rows = read_jsonl(path);
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    RawVerdict v;
    v.sample_id = require_string(row, "sample_id", ctx);
    v.judge_id = require_string(row, "judge_id", ctx);
    v.raw_output = require_string(row, "raw_output", ctx);
    const auto& lat = require_field(row, "latency_s", ctx);
    if (!lat.is_number()) throw ParseError(ctx + ": field 'latency_s' must be a number");
    v.latency_s = lat.get<double>();
    v.attempt_count = static_cast<int>(require_int(row, "attempt_count", ctx));
    const auto& failed = require_field(row, "failed", ctx);
    if (!failed.is_boolean()) throw ParseError(ctx + ": field 'failed' must be a boolean");
    v.failed = failed.get<bool>();
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace perq
