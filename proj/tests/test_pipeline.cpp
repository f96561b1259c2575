#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

#include "perq/io.hpp"
#include "perq/pipeline.hpp"
#include "perq/prediction.hpp"
#include "support.hpp"

using namespace perq;
using perq::test::error_code;
using perq::test::TempDir;
namespace fs = std::filesystem;

namespace {

json small_config(const fs::path& out_dir) {
  auto doc = json::parse(R"({
    "seed": 3,
    "corpus": {
      "source": "synthetic",
      "axes": {"languages": ["en", "de"], "ptypes": ["generate", "modify"], "platforms": ["Telegram", "Facebook"],
               "generators": ["g1", "g2"], "samples_per_cell": 20}
    },
    "judges": [
      {"judge_id": "j1", "kind": "mock", "noise_p": 0.1},
      {"judge_id": "j2", "kind": "mock", "noise_p": 0.1},
      {"judge_id": "j3", "kind": "mock", "noise_p": 0.1}
    ],
    "split": {"per_label_train": 30, "per_label_val": 10, "per_label_test": 20},
    "trainer": {"kind": "builtin", "epochs": 5, "lr": 1.0, "hash_dim": 4096}
  })");
  doc["output_dir"] = out_dir.string();
  return doc;
}

ProjectConfig parse(const json& doc) { return parse_project_config(doc, fs::current_path()); }

int run_cli(const std::string& args) {
  const int status = std::system((std::string(PERQ_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Every regular file under root (run_manifest excluded) with its contents.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

int count_skipped(const std::vector<StageOutcome>& outcomes) {
  int n = 0;
  for (const auto& o : outcomes) n += o.skipped;
  return n;
}

}  // namespace

TEST(Config, DemoConfigLoads) {
  const auto cfg = load_project_config(std::string(PERQ_TEST_DATA_DIR) + "/demo_config.json");
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.judges.size(), 3u);
  EXPECT_EQ(cfg.corpus.axes.samples_per_cell, 20);
  EXPECT_EQ(cfg.split.seed, 7u);
  EXPECT_EQ(cfg.judges[1].seed, 7u);
  const auto& b = std::get<BuiltinTrainer>(cfg.trainer);
  EXPECT_DOUBLE_EQ(b.hyperparams.lr, 1.0);
  EXPECT_EQ(b.hyperparams.shuffle_seed, 7u);
}

TEST(Config, RelativePathsFollowConfigDir) {
  TempDir dir;
  auto doc = small_config(dir / "out");
  doc["rubric_path"] = "rubrics/r.rubric";
  doc["corpus"] = json{{"source", "file"}, {"path", "c.jsonl"}};
  const auto cfg = parse_project_config(doc, dir.path());
  EXPECT_EQ(*cfg.rubric_path, dir / "rubrics/r.rubric");
  EXPECT_EQ(cfg.corpus.path, dir / "c.jsonl");
  EXPECT_EQ(cfg.corpus.source, CorpusConfig::Source::File);
}

TEST(Config, Errors) {
  TempDir dir;
  auto doc = small_config(dir.path());
  auto no_judges = doc;
  no_judges["judges"] = json::array();
  EXPECT_THROW(parse(no_judges), ValidationError);
  auto dup = doc;
  dup["judges"][1]["judge_id"] = "j1";
  EXPECT_EQ(error_code([&] { parse(dup); }), "DuplicateJudge");
  auto bad_source = doc;
  bad_source["corpus"]["source"] = "web";
  EXPECT_THROW(parse(bad_source), ParseError);
  auto bad_kind = doc;
  bad_kind["judges"][0]["kind"] = "oracle";
  EXPECT_THROW(parse(bad_kind), ParseError);
  auto bad_backend = doc;
  bad_backend["trainer"] = json{{"kind", "backend"}, {"backend_id", "b"}, {"invoke", "run {train} {test} {out}"}};
  EXPECT_THROW(parse(bad_backend), ValidationError);
  auto bad_noise = doc;
  bad_noise["judges"][0]["noise_p"] = 1.5;
  EXPECT_THROW(parse(bad_noise), ValidationError);
}

TEST(Config, SeedOverrideKeepsExplicitSeeds) {
  TempDir dir;
  auto doc = small_config(dir.path());
  doc["split"]["seed"] = 99;
  doc["judges"][2]["seed"] = 55;
  auto cfg = parse(doc);
  EXPECT_EQ(cfg.judges[0].seed, 3u);
  cfg.override_seed(11);
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.split.seed, 99u);
  EXPECT_EQ(cfg.judges[0].seed, 11u);
  EXPECT_EQ(cfg.judges[2].seed, 55u);
  EXPECT_EQ(std::get<BuiltinTrainer>(cfg.trainer).hyperparams.shuffle_seed, 11u);
}

TEST(Config, MarkersLowercased) {
  TempDir dir;
  auto doc = small_config(dir.path());
  doc["parser"] = json{{"markers", {"Bewertung", "SCORE"}}};
  EXPECT_EQ(parse(doc).parser.markers, (std::vector<std::string>{"bewertung", "score"}));
}

TEST(Lock, ExclusiveAndStaleTakeover) {
  TempDir dir;
  const auto path = dir / ".perq.lock";
  {
    OutputLock a(path);
    EXPECT_TRUE(fs::exists(path));
    EXPECT_EQ(error_code([&] { OutputLock b(path); }), "OutputLocked");
  }
  EXPECT_FALSE(fs::exists(path));

  const pid_t child = ::fork();
  if (child == 0) ::_exit(0);
  ::waitpid(child, nullptr, 0);
  write_file_atomic(path, std::to_string(child));
  EXPECT_NO_THROW(OutputLock c(path));
}

class PipelineRun : public ::testing::Test {
 protected:
  TempDir dir;
  std::ostringstream log;

  Pipeline make(const json& doc) { return Pipeline(parse(doc), log); }
};

TEST_F(PipelineRun, EndToEndArtifactsAndSkipping) {
  auto doc = small_config(dir / "out");
  auto p = make(doc);
  const auto first = p.run_all();
  ASSERT_EQ(first.size(), Pipeline::stage_names().size());
  EXPECT_EQ(count_skipped(first), 0);

  const auto& paths = p.paths();
  for (const auto& f : {paths.corpus(), paths.verdicts(), paths.parsed(), paths.labels(), paths.label_stats(),
                        paths.model(), paths.train_log(), paths.predictions(), paths.report(), paths.run_manifest(),
                        paths.split_dir() / "manifest.json", paths.analysis_dir() / "report.html",
                        paths.analysis_dir() / "divergence.json"}) {
    EXPECT_TRUE(fs::exists(f)) << f;
  }
  for (const auto& s : Pipeline::stage_names()) EXPECT_TRUE(fs::exists(paths.stages_dir() / (s + ".json"))) << s;

  const auto report = read_json(paths.report());
  EXPECT_EQ(report.at("n"), 80);
  EXPECT_GT(report.at("accuracy").get<double>(), 0.25);
  EXPECT_EQ(report.at("per_label_f1").size(), 4u);
  const auto verdicts = read_jsonl(paths.verdicts());
  EXPECT_EQ(verdicts.size(), 320u * 3u);

  auto again = make(doc);
  EXPECT_EQ(count_skipped(again.run_all()), static_cast<int>(Pipeline::stage_names().size()));

  // Changing trainer parameters reruns train and everything after it.
  doc["trainer"]["epochs"] = 6;
  auto changed = make(doc);
  const auto third = changed.run_all();
  for (const auto& o : third) {
    const bool downstream = o.stage == "train" || o.stage == "predict" || o.stage == "evaluate" || o.stage == "analyze";
    EXPECT_EQ(o.skipped, !downstream) << o.stage;
  }

  // A tampered output invalidates its stage.
  write_file_atomic(paths.labels(), "");
  auto tampered = make(doc);
  const auto fourth = tampered.run_all();
  EXPECT_FALSE(fourth[4].skipped);
  EXPECT_EQ(fourth[4].stage, "aggregate");
  EXPECT_TRUE(fourth[3].skipped);
}

TEST_F(PipelineRun, Deterministic) {
  auto a = make(small_config(dir / "a"));
  auto b = make(small_config(dir / "b"));
  a.run_all();
  b.run_all(2);
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));

  auto doc = small_config(dir / "c");
  doc["seed"] = 4;
  auto c = make(doc);
  c.run_all();
  EXPECT_NE(read_file(dir / "a" / "corpus.jsonl"), read_file(dir / "c" / "corpus.jsonl"));
}

TEST_F(PipelineRun, ManualResolutionFlow) {
  auto p = make(small_config(dir / "out"));
  p.matrix();
  p.synth();
  p.judge();
  // Two judges on the first sample emit unusable text, so it becomes NA.
  auto rows = read_jsonl(p.paths().verdicts());
  const auto target = rows[0]["sample_id"].get<std::string>();
  int broken = 0;
  for (auto& r : rows) {
    if (r["sample_id"] == target && broken < 2) {
      r["raw_output"] = "I cannot rate this.";
      ++broken;
    }
  }
  write_file_atomic(p.paths().verdicts(), to_jsonl(rows));
  p.parse();
  p.aggregate();
  auto queue = read_jsonl(p.paths().manual_queue());
  ASSERT_EQ(queue.size(), 2u);
  for (const auto& l : read_jsonl(p.paths().labels())) {
    if (l["sample_id"] == target) {
      EXPECT_EQ(l["label"], "NA");
    }
  }

  for (auto& q : queue) q["score"] = 1;
  const auto edited = dir / "edited.jsonl";
  write_file_atomic(edited, to_jsonl(queue));
  p.resolve(edited);
  p.aggregate();
  EXPECT_TRUE(read_jsonl(p.paths().manual_queue()).empty());
  for (const auto& l : read_jsonl(p.paths().labels())) {
    if (l["sample_id"] == target) {
      EXPECT_EQ(l["label"], 1);
    }
  }
  // Resolutions survive a re-parse.
  p.parse();
  p.aggregate();
  EXPECT_TRUE(read_jsonl(p.paths().manual_queue()).empty());

  // A bad score leaves the record untouched.
  queue[0]["score"] = 9;
  write_file_atomic(edited, to_jsonl(queue));
  const auto before = read_file(p.paths().resolutions());
  EXPECT_THROW(p.resolve(edited), Error);
  EXPECT_EQ(read_file(p.paths().resolutions()), before);
}

TEST_F(PipelineRun, PredictArbitraryInput) {
  auto p = make(small_config(dir / "out"));
  p.run_all();
  const auto input = dir / "texts.jsonl";
  write_file_atomic(input, "{\"id\": \"x\", \"text\": \"#a #b hello\"}\n{\"sample_id\": \"y\", \"text\": \"plain\"}\n");
  p.predict(input, dir / "preds.jsonl");
  const auto preds = read_predictions(dir / "preds.jsonl", 4);
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[1].sample_id, "y");
  EXPECT_EQ(preds[0].probabilities.size(), 4u);
}

TEST_F(PipelineRun, ExternalBackendTrainer) {
  auto doc = small_config(dir / "out");
  doc["trainer"] = json{{"kind", "backend"},
                        {"backend_id", "builtin-subprocess"},
                        {"invoke", std::string(PERQ_CLI_PATH) +
                                       " baseline-backend --train {train} --val {val} --test {test} --out {out}"
                                       " --num-labels 4 --epochs 3 --hash-dim 2048"},
                        {"timeout_s", 120}};
  auto p = make(doc);
  p.run_all();
  EXPECT_EQ(read_predictions(p.paths().predictions(), 4).size(), 80u);
  EXPECT_FALSE(fs::exists(p.paths().model()));
  EXPECT_TRUE(fs::exists(p.paths().report()));
}

TEST_F(PipelineRun, InsufficientLabelSurfaces) {
  auto doc = small_config(dir / "out");
  doc["split"]["per_label_train"] = 500;
  auto p = make(doc);
  EXPECT_EQ(error_code([&] { p.run_all(); }), "InsufficientLabel");
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const auto cfg = dir / "cfg.json";
  write_file_atomic(cfg, small_config(dir / "out").dump());
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run-all"), 2);
  EXPECT_EQ(run_cli("run-all --config " + (dir / "missing.json").string()), 2);
  write_file_atomic(dir / "bad.json", "{not json");
  EXPECT_EQ(run_cli("run-all --config " + (dir / "bad.json").string()), 3);
  EXPECT_EQ(run_cli("train --config " + cfg.string()), 5);
  EXPECT_EQ(run_cli("run-all --config " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
  EXPECT_EQ(run_cli("run-all --config " + cfg.string() + " --seed 5 --output-dir " + (dir / "o5").string()), 0);
  EXPECT_EQ(read_json(dir / "o5" / "run_manifest.json").at("seed"), 5);
  EXPECT_EQ(run_cli("split --config " + cfg.string() + " --output-dir " + (dir / "o5").string() + " --seed 5"), 0);
  EXPECT_EQ(run_cli("cost-report"), 0);

  auto big = small_config(dir / "o6");
  big["split"]["per_label_train"] = 500;
  write_file_atomic(dir / "big.json", big.dump());
  EXPECT_EQ(run_cli("run-all --config " + (dir / "big.json").string()), 8);

  OutputLock held(dir / "out" / ".perq.lock");
  EXPECT_EQ(run_cli("run-all --config " + cfg.string()), 5);
}
