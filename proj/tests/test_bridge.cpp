#include <gtest/gtest.h>

#include <cstdlib>

#include "perq/baseline.hpp"
#include "perq/bridge.hpp"
#include "perq/io.hpp"
#include "perq/pipeline.hpp"
#include "support.hpp"

using namespace perq;
using perq::test::error_code;
using perq::test::TempDir;

namespace {

std::vector<SplitRow> rows(const std::string& prefix, int n) {
  const char* texts[] = {"plain text about the town", "Share this! #news", "\U0001F525 #wow comment below", "#a #b \U0001F600"};
  std::vector<SplitRow> out;
  for (int i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), texts[i % 4], i % 4});
  return out;
}

/// Split files in a directory whose name needs quoting.
SplitFiles make_splits(const TempDir& dir) {
  const auto d = dir / "split dir 'x'";
  std::filesystem::create_directories(d);
  auto files = SplitFiles::in(d);
  write_file_atomic(files.train, split_rows_to_jsonl(rows("tr", 12)));
  write_file_atomic(files.val, split_rows_to_jsonl(rows("va", 4)));
  write_file_atomic(files.test, split_rows_to_jsonl(rows("te", 4)));
  return files;
}

BackendDescriptor script(const TempDir& dir, const std::string& body, double timeout = 30) {
  const auto path = dir / "backend.sh";
  write_file_atomic(path, "#!/bin/sh\n" + body + "\n");
  BackendDescriptor d;
  d.backend_id = "script";
  d.invoke = "sh " + shell_quote(path.string()) + " {train} {val} {test} {out}";
  d.timeout_s = timeout;
  return d;
}

// Emits one prediction per test row: label = row index mod 4.
const char* kEcho =
    "i=0; while IFS= read -r line; do\n"
    "  id=$(printf '%s' \"$line\" | sed 's/.*\"id\": *\"\\([^\"]*\\)\".*/\\1/')\n"
    "  printf '{\"id\": \"%s\", \"predicted_label\": %d}\\n' \"$id\" $((i % 4)) >> \"$4\"; i=$((i+1))\n"
    "done < \"$3\"\n"
    "echo '{\"peak_gpu_gb\": 1.5}' > \"$(dirname \"$4\")/cost.json\"";

}  // namespace

TEST(Bridge, ShellQuote) {
  EXPECT_EQ(shell_quote("a b"), "'a b'");
  EXPECT_EQ(shell_quote("it's"), "'it'\\''s'");
  EXPECT_EQ(shell_quote(""), "''");
}

TEST(Bridge, DescriptorValidation) {
  BackendDescriptor d{"x", "run {train} {val} {test}", 1.0};
  EXPECT_THROW(d.validate(), ValidationError);
  d.invoke = "run {train} {val} {test} {out} {out}";
  EXPECT_THROW(d.validate(), ValidationError);
  d.invoke = "run {train} {val} {test} {out}";
  EXPECT_NO_THROW(d.validate());
  d.timeout_s = 0;
  EXPECT_THROW(d.validate(), ValidationError);
}

TEST(Bridge, RenderInvocationQuotesPaths) {
  TempDir dir;
  const auto files = make_splits(dir);
  BackendDescriptor d{"x", "run --train {train} --val {val} --test {test} --out {out}", 1.0};
  const auto cmd = render_invocation(d, files, dir / "o.jsonl");
  EXPECT_NE(cmd.find("--train " + shell_quote(files.train.string())), std::string::npos);
  EXPECT_NE(cmd.find("'\\''x'\\''"), std::string::npos);
  EXPECT_EQ(cmd.find("{"), std::string::npos);
}

TEST(Bridge, EchoBackend) {
  TempDir dir;
  const auto files = make_splits(dir);
  const auto out = dir / "out" / "preds.jsonl";
  std::filesystem::create_directories(out.parent_path());
  const auto r = run_backend(script(dir, kEcho), files, out, 4);
  ASSERT_EQ(r.predictions.size(), 4u);
  EXPECT_EQ(r.predictions[0].sample_id, "te0");
  EXPECT_EQ(r.predictions[3].predicted_label, 3);
  EXPECT_DOUBLE_EQ(r.cost.gpu_gb, 1.5);
  EXPECT_EQ(r.cost.subject_id, "script");
  EXPECT_EQ(r.cost.n_samples, 4u);
  EXPECT_GT(r.cost.wall_s, 0.0);
}

TEST(Bridge, NonZeroExit) {
  TempDir dir;
  const auto files = make_splits(dir);
  EXPECT_EQ(error_code([&] { run_backend(script(dir, "exit 3"), files, dir / "p.jsonl", 4); }), "BackendNonZeroExit");
}

TEST(Bridge, TimeoutKillsAndCleansUp) {
  TempDir dir;
  const auto files = make_splits(dir);
  const auto out = dir / "p.jsonl";
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(error_code([&] { run_backend(script(dir, "echo partial > \"$4\"; sleep 30", 0.5), files, out, 4); }),
            "BackendTimeout");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Bridge, SchemaViolations) {
  TempDir dir;
  const auto files = make_splits(dir);
  const auto out = dir / "p.jsonl";
  auto run = [&](const std::string& body) {
    std::filesystem::remove(out);
    return error_code([&] { run_backend(script(dir, body), files, out, 4); });
  };
  EXPECT_EQ(run("true"), "SchemaViolation");
  EXPECT_EQ(run("echo 'not json' > \"$4\""), "SchemaViolation");
  EXPECT_EQ(run("echo '{\"id\": \"te0\", \"predicted_label\": 0}' > \"$4\""), "SchemaViolation");
  EXPECT_EQ(run("for i in 0 1 2 3; do echo \"{\\\"id\\\": \\\"te$i\\\", \\\"predicted_label\\\": 7}\" >> \"$4\"; done"),
            "SchemaViolation");
  EXPECT_EQ(run("for i in 0 1 2 3; do echo \"{\\\"id\\\": \\\"te$i\\\", \\\"predicted_label\\\": 1, "
                "\\\"probabilities\\\": [0.5, 0.2, 0.2, 0.2]}\" >> \"$4\"; done"),
            "SchemaViolation");
  EXPECT_EQ(run("for i in 0 1 2 3; do echo \"{\\\"id\\\": \\\"te$i\\\", \\\"predicted_label\\\": 1, "
                "\\\"probabilities\\\": [0.1, 0.7, 0.1, 0.1]}\" >> \"$4\"; done"),
            "");
}

TEST(Bridge, PredictionIdCoverage) {
  const std::vector<std::string> ids{"a", "b"};
  EXPECT_NO_THROW(validate_prediction_ids({{"b", 0, {}}, {"a", 1, {}}}, ids));
  EXPECT_THROW(validate_prediction_ids({{"a", 0, {}}}, ids), SchemaViolation);
  EXPECT_THROW(validate_prediction_ids({{"a", 0, {}}, {"b", 0, {}}, {"c", 0, {}}}, ids), SchemaViolation);
  EXPECT_THROW(validate_prediction_ids({{"a", 0, {}}, {"a", 0, {}}, {"b", 0, {}}}, ids), SchemaViolation);
}

TEST(Bridge, BuiltinBackendMatchesInProcessTraining) {
  TempDir dir;
  const auto files = make_splits(dir);
  Hyperparams hp;
  hp.epochs = 4;
  hp.shuffle_seed = 9;
  FeatureConfig fc;
  fc.hash_dim = 4096;

  BackendDescriptor d;
  d.backend_id = "baseline";
  d.invoke = shell_quote(PERQ_CLI_PATH) +
             " baseline-backend --train {train} --val {val} --test {test} --out {out} --num-labels 4"
             " --epochs 4 --shuffle-seed 9 --hash-dim 4096";
  const auto out = dir / "ext" / "preds.jsonl";
  std::filesystem::create_directories(out.parent_path());
  const auto ext = run_backend(d, files, out, 4);

  const auto model = train_baseline(read_split_rows(files.train), read_split_rows(files.val), 4, hp, fc).model;
  const auto inproc = predict(model, read_split_rows(files.test));
  EXPECT_EQ(read_file(out), predictions_to_jsonl(inproc));
  EXPECT_EQ(ext.predictions, read_predictions(out, 4));
  EXPECT_TRUE(std::filesystem::exists(out.parent_path() / "cost.json"));
}
