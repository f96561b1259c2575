// perq: command-line driver for the judge-distillation pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "perq/costing.hpp"
#include "perq/error.hpp"
#include "perq/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Project configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Replace the global seed and every seed derived from it");
  cmd->add_option("--output-dir", c.output_dir, "Artifact directory (overrides the config)");
}

perq::ProjectConfig load(const Common& c) {
  auto cfg = perq::load_project_config(c.config);
  if (c.seed) cfg.override_seed(*c.seed);
  if (c.output_dir) cfg.output_dir = *c.output_dir;
  return cfg;
}

perq::AnalysisScope parse_scope(const std::string& s) {
  if (s == "test") return perq::AnalysisScope::Test;
  if (s == "all") return perq::AnalysisScope::All;
  return perq::AnalysisScope::Both;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distill an LLM-judge quorum into a cheap trained metric"};
  app.require_subcommand(1);

  Common common;
  std::optional<int> max_parallel;
  std::string queue, input, out, external, scope = "both", fixture;

  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"matrix", "Build the generation matrix"},
           {"synth", "Produce the corpus (synthetic, or load the configured file)"},
           {"judge", "Collect one verdict per sample and judge"},
           {"parse", "Extract scores from verdicts"},
           {"resolve", "Merge hand-resolved queue rows and re-parse"},
           {"aggregate", "Majority-vote labels and label statistics"},
           {"split", "Label-balanced train/val/test split"},
           {"train", "Train the metric on the split"},
           {"predict", "Predict the test split or a JSONL file of texts"},
           {"evaluate", "Score predictions against the majority labels"},
           {"analyze", "Facet breakdowns and divergence report"},
           {"run-all", "Run every stage that is out of date"}}) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    stage_cmds[name] = cmd;
  }
  for (const char* name : {"judge", "run-all"}) {
    stage_cmds[name]->add_option("--max-parallel", max_parallel, "In-flight requests per judge")
        ->check(CLI::PositiveNumber);
  }
  stage_cmds["resolve"]->add_option("--queue", queue, "Edited manual queue")->required()->check(CLI::ExistingFile);
  stage_cmds["predict"]->add_option("--input", input, "JSONL rows {id, text}")->check(CLI::ExistingFile);
  stage_cmds["predict"]->add_option("--out", out, "Where to write predictions");
  stage_cmds["evaluate"]->add_option("--external", external, "Human labels {sample_id, scores}")
      ->check(CLI::ExistingFile);
  stage_cmds["analyze"]->add_option("--scope", scope, "test, all or both")
      ->check(CLI::IsMember({"test", "all", "both"}));

  auto* cost = app.add_subcommand("cost-report", "Compare judge and metric inference costs");
  cost->add_option("--fixture", fixture, "Cost fixture (JSON)")->check(CLI::ExistingFile);

  auto* backend = app.add_subcommand("baseline-backend", "Builtin trainer behind the external-backend contract");
  std::string b_train, b_val, b_test, b_out;
  int num_labels = 4;
  perq::Hyperparams hp;
  perq::FeatureConfig fc;
  backend->add_option("--train", b_train)->required()->check(CLI::ExistingFile);
  backend->add_option("--val", b_val)->required()->check(CLI::ExistingFile);
  backend->add_option("--test", b_test)->required()->check(CLI::ExistingFile);
  backend->add_option("--out", b_out)->required();
  backend->add_option("--num-labels", num_labels)->check(CLI::Range(2, 1000));
  backend->add_option("--lr", hp.lr);
  backend->add_option("--l2", hp.l2);
  backend->add_option("--epochs", hp.epochs);
  backend->add_option("--batch", hp.batch);
  backend->add_option("--shuffle-seed", hp.shuffle_seed);
  backend->add_option("--hash-dim", fc.hash_dim);
  backend->add_option("--ngram-min", fc.ngram_min);
  backend->add_option("--ngram-max", fc.ngram_max);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(perq::ErrorKind::Usage);
  }

  try {
    if (cost->parsed()) {
      const auto path = fixture.empty() ? perq::default_cost_fixture() : fs::path(fixture);
      std::cout << perq::cost_report_table(perq::load_cost_fixture(path));
      return 0;
    }
    if (backend->parsed()) {
      hp.validate();
      fc.validate();
      perq::run_baseline_backend(b_train, b_val, b_test, b_out, num_labels, hp, fc);
      return 0;
    }

    perq::Pipeline pipeline(load(common), std::cerr);
    perq::OutputLock lock(pipeline.paths().lock());
    if (stage_cmds["matrix"]->parsed()) pipeline.matrix();
    else if (stage_cmds["synth"]->parsed()) pipeline.synth();
    else if (stage_cmds["judge"]->parsed()) pipeline.judge(max_parallel);
    else if (stage_cmds["parse"]->parsed()) pipeline.parse();
    else if (stage_cmds["resolve"]->parsed()) pipeline.resolve(queue);
    else if (stage_cmds["aggregate"]->parsed()) pipeline.aggregate();
    else if (stage_cmds["split"]->parsed()) pipeline.split();
    else if (stage_cmds["train"]->parsed()) pipeline.train();
    else if (stage_cmds["predict"]->parsed()) {
      pipeline.predict(input.empty() ? std::nullopt : std::optional<fs::path>(input),
                       out.empty() ? std::nullopt : std::optional<fs::path>(out));
    } else if (stage_cmds["evaluate"]->parsed()) {
      pipeline.evaluate(external.empty() ? std::nullopt : std::optional<fs::path>(external));
    } else if (stage_cmds["analyze"]->parsed()) pipeline.analyze(parse_scope(scope));
    else if (stage_cmds["run-all"]->parsed()) pipeline.run_all(max_parallel);
    return 0;
  } catch (const perq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
