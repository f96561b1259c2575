#include "perq/bridge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <set>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "perq/io.hpp"

namespace perq {

std::string predictions_to_jsonl(const std::vector<Prediction>& preds) {
  std::vector<json> rows;
  rows.reserve(preds.size());
  for (const auto& p : preds) {
    json row{{"id", p.sample_id}, {"predicted_label", p.predicted_label}};
    if (!p.probabilities.empty()) row["probabilities"] = p.probabilities;
    rows.push_back(std::move(row));
  }
  return to_jsonl(rows);
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  write_file_atomic(path, predictions_to_jsonl(preds));
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path, int num_labels, double prob_tolerance) {
  std::vector<json> rows;
  try {
    rows = read_jsonl(path);
  } catch (const ParseError& e) {
    throw SchemaViolation(std::string("malformed predictions: ") + e.what());
  }
  std::vector<Prediction> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    if (!row.contains("id") || !row["id"].is_string()) throw SchemaViolation(ctx + ": 'id' must be a string");
    if (!row.contains("predicted_label") || !row["predicted_label"].is_number_integer()) {
      throw SchemaViolation(ctx + ": 'predicted_label' must be an integer");
    }
    Prediction p;
    p.sample_id = row["id"].get<std::string>();
    p.predicted_label = row["predicted_label"].get<int>();
    if (p.predicted_label < 0 || p.predicted_label >= num_labels) {
      throw SchemaViolation(ctx + ": predicted_label " + std::to_string(p.predicted_label) + " out of range");
    }
    if (row.contains("probabilities") && !row["probabilities"].is_null()) {
      const auto& probs = row["probabilities"];
      if (!probs.is_array() || static_cast<int>(probs.size()) != num_labels) {
        throw SchemaViolation(ctx + ": 'probabilities' must list " + std::to_string(num_labels) + " numbers");
      }
      double sum = 0.0;
      for (const auto& v : probs) {
        if (!v.is_number()) throw SchemaViolation(ctx + ": 'probabilities' must be numbers");
        const double d = v.get<double>();
        if (!std::isfinite(d) || d < 0) throw SchemaViolation(ctx + ": negative or non-finite probability");
        p.probabilities.push_back(d);
        sum += d;
      }
      if (std::abs(sum - 1.0) > prob_tolerance) throw SchemaViolation(ctx + ": probabilities do not sum to 1");
    }
    out.push_back(std::move(p));
  }
  return out;
}

void BackendDescriptor::validate() const {
  if (backend_id.empty()) throw ValidationError("backend_id: must be nonempty");
  if (!(timeout_s > 0)) throw ValidationError("backend '" + backend_id + "': timeout must be > 0");
  for (std::string_view ph : {"{train}", "{val}", "{test}", "{out}"}) {
    std::size_t n = 0;
    for (auto pos = invoke.find(ph); pos != std::string::npos; pos = invoke.find(ph, pos + ph.size())) ++n;
    if (n != 1) {
      throw ValidationError("backend '" + backend_id + "': invoke must contain " + std::string(ph) +
                            " exactly once, found " + std::to_string(n));
    }
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  return out + "'";
}

std::string render_invocation(const BackendDescriptor& desc, const SplitFiles& splits,
                              const std::filesystem::path& out) {
  desc.validate();
  std::string cmd;
  const auto& t = desc.invoke;
  for (std::size_t pos = 0; pos < t.size();) {
    const auto rest = std::string_view(t).substr(pos);
    auto sub = [&](std::string_view key, const std::filesystem::path& p) {
      if (!rest.starts_with(key)) return false;
      cmd += shell_quote(p.string());
      pos += key.size();
      return true;
    };
    if (sub("{train}", splits.train) || sub("{val}", splits.val) || sub("{test}", splits.test) || sub("{out}", out)) {
      continue;
    }
    cmd += t[pos++];
  }
  return cmd;
}

void validate_prediction_ids(const std::vector<Prediction>& preds, const std::vector<std::string>& expected_ids) {
  std::set<std::string> expected(expected_ids.begin(), expected_ids.end());
  std::set<std::string> seen;
  std::vector<std::string> extra, dup;
  for (const auto& p : preds) {
    if (!seen.insert(p.sample_id).second) dup.push_back(p.sample_id);
    if (!expected.count(p.sample_id)) extra.push_back(p.sample_id);
  }
  std::vector<std::string> missing;
  for (const auto& id : expected) {
    if (!seen.count(id)) missing.push_back(id);
  }
  if (missing.empty() && extra.empty() && dup.empty()) return;
  auto list = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < 10; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > 10) s += ", ... (" + std::to_string(ids.size()) + " total)";
    return s;
  };
  std::string msg = "predictions do not match the test split:";
  if (!missing.empty()) msg += " missing ids [" + list(missing) + "]";
  if (!extra.empty()) msg += " extra ids [" + list(extra) + "]";
  if (!dup.empty()) msg += " duplicate ids [" + list(dup) + "]";
  throw SchemaViolation(msg);
}

BackendResult run_backend(const BackendDescriptor& desc, const SplitFiles& splits, const std::filesystem::path& out,
                          int num_labels) {
  const auto cmd = render_invocation(desc, splits, out);
  // Inputs must satisfy the row schema before anything is launched.
  read_split_rows(splits.train);
  read_split_rows(splits.val);
  const auto test_rows = read_split_rows(splits.test);
  for (const auto& r : test_rows) {
    if (r.label < 0 || r.label >= num_labels) throw SchemaViolation("test row '" + r.id + "': label out of range");
  }

  const auto cost_json = out.parent_path() / "cost.json";
  std::error_code ec;
  std::filesystem::remove(out, ec);
  std::filesystem::remove(cost_json, ec);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path(), ec);

  int status = 0;
  const auto started = std::chrono::steady_clock::now();
  {
    const pid_t pid = ::fork();
    if (pid < 0) throw BackendError("BackendSpawnFailed", "fork failed");
    if (pid == 0) {
      ::setpgid(0, 0);
      ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid, pid);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(desc.timeout_s);
    for (;;) {
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) break;
      if (r < 0) throw BackendError("BackendSpawnFailed", "waitpid failed");
      if (std::chrono::steady_clock::now() >= deadline) {
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        std::error_code rm;
        std::filesystem::remove(out, rm);
        std::filesystem::remove(cost_json, rm);
        throw BackendError("BackendTimeout", desc.backend_id + " exceeded " + std::to_string(desc.timeout_s) + " s");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  const auto finished = std::chrono::steady_clock::now();

  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    throw BackendError("BackendNonZeroExit", desc.backend_id + " exited with status " + std::to_string(code));
  }
  if (!std::filesystem::exists(out)) throw SchemaViolation(desc.backend_id + " produced no predictions file");

  BackendResult result;
  result.predictions = read_predictions(out, num_labels);
  std::vector<std::string> ids;
  ids.reserve(test_rows.size());
  for (const auto& r : test_rows) ids.push_back(r.id);
  validate_prediction_ids(result.predictions, ids);

  result.cost.subject_id = desc.backend_id;
  result.cost.n_samples = std::max<std::size_t>(test_rows.size(), 1);
  result.cost.source = CostSource::Measured;
  result.cost.started = started;
  result.cost.finished = finished;
  result.cost.wall_s = std::max(std::chrono::duration<double>(finished - started).count(), 1e-9);
  if (std::filesystem::exists(cost_json)) {
    const auto doc = read_json(cost_json);
    if (doc.contains("peak_gpu_gb") && doc["peak_gpu_gb"].is_number()) result.cost.gpu_gb = doc["peak_gpu_gb"].get<double>();
  }
  return result;
}

}  // namespace perq
