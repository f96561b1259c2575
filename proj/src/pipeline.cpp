#include "perq/pipeline.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <fcntl.h>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <unistd.h>

#include "perq/aggregate.hpp"
#include "perq/analysis.hpp"
#include "perq/digest.hpp"
#include "perq/human_corr.hpp"
#include "perq/io.hpp"
#include "perq/metrics.hpp"
#include "perq/text.hpp"

#ifndef PERQ_DATA_DIR
#define PERQ_DATA_DIR "data"
#endif

namespace perq {

namespace fs = std::filesystem;

std::filesystem::path default_cost_fixture() { return fs::path(PERQ_DATA_DIR) / "costs_fixture.json"; }

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::vector<std::string> string_list(const json& j, std::string_view ctx) {
  if (!j.is_array()) throw ParseError(std::string(ctx) + ": expected a list of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ParseError(std::string(ctx) + ": expected a list of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

JudgeSpec judge_from_json(const json& j, std::uint64_t default_seed, bool& seed_set) {
  JudgeSpec s;
  s.judge_id = require_string(j, "judge_id", "judges[]");
  const auto kind = j.value("kind", std::string("mock"));
  if (kind == "mock") {
    s.kind = JudgeKind::Mock;
  } else if (kind == "http") {
    s.kind = JudgeKind::HttpCompletion;
  } else {
    throw ParseError("judges[" + s.judge_id + "].kind: expected 'mock' or 'http', got '" + kind + "'");
  }
  if (j.contains("endpoint")) s.endpoint = j["endpoint"].get<std::string>();
  s.model = j.value("model", s.model);
  s.max_parallel = j.value("max_parallel", s.max_parallel);
  s.max_retries = j.value("max_retries", s.max_retries);
  s.timeout_s = j.value("timeout_s", s.timeout_s);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.temperature = j.value("temperature", s.temperature);
  s.noise_p = j.value("noise_p", s.noise_p);
  s.backoff_base_s = j.value("backoff_base_s", s.backoff_base_s);
  s.backoff_cap_s = j.value("backoff_cap_s", s.backoff_cap_s);
  seed_set = j.contains("seed");
  s.seed = seed_set ? j["seed"].get<std::uint64_t>() : default_seed;
  s.validate();
  return s;
}

json judge_to_json(const JudgeSpec& s) {
  json j{{"judge_id", s.judge_id},
         {"kind", s.kind == JudgeKind::Mock ? "mock" : "http"},
         {"model", s.model},
         {"max_retries", s.max_retries},
         {"timeout_s", s.timeout_s},
         {"max_tokens", s.max_tokens},
         {"temperature", s.temperature},
         {"noise_p", s.noise_p},
         {"seed", s.seed}};
  if (s.endpoint) j["endpoint"] = *s.endpoint;
  return j;
}

json axes_to_json(const MatrixAxes& a) {
  std::vector<std::string> ptypes;
  for (auto p : a.ptypes) ptypes.emplace_back(to_string(p));
  return json{{"languages", a.languages},
              {"ptypes", ptypes},
              {"platforms", a.platforms},
              {"generators", a.generators},
              {"samples_per_cell", a.samples_per_cell}};
}

json hyperparams_to_json(const Hyperparams& hp, const FeatureConfig& fc) {
  return json{{"lr", hp.lr},           {"l2", hp.l2},
              {"epochs", hp.epochs},   {"batch", hp.batch},
              {"shuffle_seed", hp.shuffle_seed}, {"hash_dim", fc.hash_dim},
              {"ngram_min", fc.ngram_min},       {"ngram_max", fc.ngram_max}};
}

}  // namespace

ProjectConfig parse_project_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ParseError("config: top level must be an object");
  ProjectConfig cfg;
  cfg.seed = doc.value("seed", std::uint64_t{0});
  if (doc.contains("rubric_path") && !doc["rubric_path"].is_null()) {
    cfg.rubric_path = resolve(base_dir, doc["rubric_path"].get<std::string>());
  }
  if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
  if (doc.contains("cost_fixture")) cfg.cost_fixture = resolve(base_dir, doc["cost_fixture"].get<std::string>());

  if (doc.contains("corpus")) {
    const auto& c = doc["corpus"];
    const auto source = c.value("source", std::string("synthetic"));
    if (source == "file") {
      cfg.corpus.source = CorpusConfig::Source::File;
      cfg.corpus.path = resolve(base_dir, require_string(c, "path", "corpus"));
    } else if (source != "synthetic") {
      throw ParseError("corpus.source: expected 'synthetic' or 'file', got '" + source + "'");
    }
    if (c.contains("axes")) {
      const auto& a = c["axes"];
      auto& axes = cfg.corpus.axes;
      if (a.contains("languages")) axes.languages = string_list(a["languages"], "corpus.axes.languages");
      if (a.contains("ptypes")) {
        axes.ptypes.clear();
        for (const auto& p : string_list(a["ptypes"], "corpus.axes.ptypes")) axes.ptypes.push_back(parse_ptype(p));
      }
      if (a.contains("platforms")) axes.platforms = string_list(a["platforms"], "corpus.axes.platforms");
      if (a.contains("generators")) axes.generators = string_list(a["generators"], "corpus.axes.generators");
      axes.samples_per_cell = a.value("samples_per_cell", axes.samples_per_cell);
    }
    if (c.contains("quality_profile")) {
      for (const auto& [gen, w] : c["quality_profile"].items()) {
        cfg.corpus.quality_profile[gen] = w.get<std::vector<double>>();
      }
    }
  }

  if (doc.contains("judges")) {
    std::set<std::string> ids;
    for (const auto& j : doc["judges"]) {
      bool explicit_seed = false;
      cfg.judges.push_back(judge_from_json(j, cfg.seed, explicit_seed));
      cfg.judge_seed_set.push_back(explicit_seed);
      if (!ids.insert(cfg.judges.back().judge_id).second) {
        throw ValidationError("DuplicateJudge", "judges: judge_id '" + cfg.judges.back().judge_id + "' repeated");
      }
    }
  }

  if (doc.contains("split")) {
    cfg.split = split_config_from_json(doc["split"]);
    cfg.split_seed_set = doc["split"].contains("seed");
  }
  if (!cfg.split_seed_set) cfg.split.seed = cfg.seed;

  if (doc.contains("trainer")) {
    const auto& t = doc["trainer"];
    const auto kind = t.value("kind", std::string("builtin"));
    if (kind == "builtin") {
      BuiltinTrainer b;
      b.hyperparams.lr = t.value("lr", b.hyperparams.lr);
      b.hyperparams.l2 = t.value("l2", b.hyperparams.l2);
      b.hyperparams.epochs = t.value("epochs", b.hyperparams.epochs);
      b.hyperparams.batch = t.value("batch", b.hyperparams.batch);
      b.shuffle_seed_set = t.contains("shuffle_seed");
      b.hyperparams.shuffle_seed = t.value("shuffle_seed", cfg.seed);
      b.features.hash_dim = t.value("hash_dim", b.features.hash_dim);
      b.features.ngram_min = t.value("ngram_min", b.features.ngram_min);
      b.features.ngram_max = t.value("ngram_max", b.features.ngram_max);
      b.hyperparams.validate();
      b.features.validate();
      cfg.trainer = b;
    } else if (kind == "backend") {
      BackendDescriptor d;
      d.backend_id = require_string(t, "backend_id", "trainer");
      d.invoke = require_string(t, "invoke", "trainer");
      d.timeout_s = t.value("timeout_s", d.timeout_s);
      d.validate();
      cfg.trainer = d;
    } else {
      throw ParseError("trainer.kind: expected 'builtin' or 'backend', got '" + kind + "'");
    }
  } else {
    std::get<BuiltinTrainer>(cfg.trainer).hyperparams.shuffle_seed = cfg.seed;
  }

  if (doc.contains("parser") && doc["parser"].contains("markers")) {
    cfg.parser.markers = string_list(doc["parser"]["markers"], "parser.markers");
    for (auto& m : cfg.parser.markers) m = ascii_lower(m);
  }

  if (cfg.judges.empty()) throw ValidationError("judges: config must list at least one judge");
  return cfg;
}

void ProjectConfig::override_seed(std::uint64_t s) {
  seed = s;
  if (!split_seed_set) split.seed = s;
  for (std::size_t i = 0; i < judges.size(); ++i) {
    if (i >= judge_seed_set.size() || !judge_seed_set[i]) judges[i].seed = s;
  }
  if (auto* b = std::get_if<BuiltinTrainer>(&trainer); b && !b->shuffle_seed_set) b->hyperparams.shuffle_seed = s;
}

ProjectConfig load_project_config(const fs::path& path) {
  const auto doc = read_json(path);
  return parse_project_config(doc, path.parent_path());
}

// ---------------------------------------------------------------------------
// Output lock

OutputLock::OutputLock(const fs::path& lock_path) : path_(lock_path) {
  fs::create_directories(path_.parent_path());
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create lock " + path_.string());
    long holder = 0;
    try {
      holder = std::stol(read_file(path_));
    } catch (const std::exception&) {
      holder = 0;
    }
    const bool alive = holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM);
    if (alive) {
      throw Error(ErrorKind::Io, "OutputLocked",
                  path_.parent_path().string() + " is in use by process " + std::to_string(holder));
    }
    std::error_code ec;
    fs::remove(path_, ec);
  }
  throw Error(ErrorKind::Io, "OutputLocked", "cannot take over stale lock " + path_.string());
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

Rubric load_configured_rubric(const ProjectConfig& cfg) {
  return cfg.rubric_path ? load_rubric(*cfg.rubric_path) : bundled_perq_rubric();
}

json rubric_fingerprint(const Rubric& r) {
  return json{{"metric_name", r.metric_name()}, {"levels", render_levels(r)}, {"template", r.prompt_template()}};
}

std::string file_digest(const fs::path& p) { return fs::exists(p) ? sha256_file(p) : std::string("absent"); }

std::vector<std::string> analysis_stems(AnalysisScope scope) {
  std::vector<std::string> stems;
  for (auto f : kAllFacets) {
    const std::string facet(to_string(f));
    if (scope != AnalysisScope::All) {
      stems.push_back(facet + "_majority_test");
      stems.push_back(facet + "_metric_test");
    }
    if (scope != AnalysisScope::Test) stems.push_back(facet + "_majority_all");
  }
  return stems;
}

std::vector<std::string> ids_of(const std::vector<SplitRow>& rows) {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (const auto& r : rows) ids.push_back(r.id);
  return ids;
}

json divergence_json(const DivergenceTable& t, std::string_view comparison) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back(json{{"value", r.value},
                        {"tv", r.tv ? json(*r.tv) : json(nullptr)},
                        {"members_a", r.members_a},
                        {"members_b", r.members_b}});
  }
  return json{{"facet", to_string(t.facet)}, {"comparison", comparison}, {"mean_tv", t.mean_tv}, {"rows", rows}};
}

}  // namespace

Pipeline::Pipeline(ProjectConfig cfg, std::ostream& log)
    : cfg_(std::move(cfg)), rubric_(load_configured_rubric(cfg_)), paths_{cfg_.output_dir}, log_(log) {
  auto& profile = cfg_.corpus.quality_profile;
  if (cfg_.corpus.source == CorpusConfig::Source::Synthetic && profile.empty()) {
    for (const auto& g : cfg_.corpus.axes.generators) {
      profile[g] = std::vector<double>(static_cast<std::size_t>(rubric_.num_levels()), 1.0);
    }
  }
}

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names = {"matrix", "synth", "judge",    "parse",    "aggregate",
                                                 "split",  "train", "predict", "evaluate", "analyze"};
  return names;
}

Pipeline::StageSpec Pipeline::stage_spec(const std::string& stage) const {
  const auto split = SplitFiles::in(paths_.split_dir());
  const bool synthetic = cfg_.corpus.source == CorpusConfig::Source::Synthetic;
  const auto* builtin = std::get_if<BuiltinTrainer>(&cfg_.trainer);
  StageSpec s;
  if (stage == "matrix") {
    s.params = json{{"axes", axes_to_json(cfg_.corpus.axes)}};
    if (synthetic) s.outputs = {paths_.matrix()};
  } else if (stage == "synth") {
    if (synthetic) {
      s.inputs = {paths_.matrix()};
      s.params = json{{"profile", cfg_.corpus.quality_profile}, {"seed", cfg_.seed}, {"levels", rubric_.num_levels()}};
      s.outputs = {paths_.corpus(), paths_.truth()};
    } else {
      s.inputs = {cfg_.corpus.path};
      s.outputs = {paths_.corpus()};
    }
  } else if (stage == "judge") {
    json judges = json::array();
    for (const auto& j : cfg_.judges) judges.push_back(judge_to_json(j));
    s.inputs = {paths_.corpus()};
    s.params = json{{"judges", judges}, {"rubric", rubric_fingerprint(rubric_)}};
    s.outputs = {paths_.verdicts()};
  } else if (stage == "parse") {
    s.inputs = {paths_.verdicts(), paths_.resolutions()};
    s.params = json{{"markers", cfg_.parser.markers}, {"levels", rubric_.num_levels()}};
    s.outputs = {paths_.parsed()};
  } else if (stage == "aggregate") {
    s.inputs = {paths_.parsed()};
    s.params = json{{"levels", rubric_.num_levels()}};
    s.outputs = {paths_.labels(), paths_.label_stats(), paths_.manual_queue()};
  } else if (stage == "split") {
    s.inputs = {paths_.corpus(), paths_.labels()};
    s.params = json{{"split", to_json(cfg_.split)}, {"levels", rubric_.num_levels()}};
    s.outputs = {split.train, split.val, split.test, split.manifest};
  } else if (stage == "train") {
    if (builtin) {
      s.inputs = {split.train, split.val};
      s.params = hyperparams_to_json(builtin->hyperparams, builtin->features);
      s.outputs = {paths_.model(), paths_.train_log()};
    } else {
      const auto& d = std::get<BackendDescriptor>(cfg_.trainer);
      s.inputs = {split.train, split.val, split.test};
      s.params = json{{"backend_id", d.backend_id}, {"invoke", d.invoke}};
      s.outputs = {paths_.predictions()};
    }
  } else if (stage == "predict") {
    s.inputs = {split.test};
    if (builtin) {
      s.inputs.push_back(paths_.model());
      s.outputs = {paths_.predictions()};
    } else {
      s.inputs.push_back(paths_.predictions());
    }
  } else if (stage == "evaluate") {
    s.inputs = {split.test, paths_.predictions()};
    s.params = json{{"levels", rubric_.num_levels()}};
    s.outputs = {paths_.report()};
  } else if (stage == "analyze") {
    s.inputs = {paths_.corpus(), paths_.labels(), split.train, split.val, split.test, paths_.predictions()};
    s.params = json{{"scope", "both"}, {"levels", rubric_.num_levels()}};
    for (const auto& stem : analysis_stems(AnalysisScope::Both)) {
      s.outputs.push_back(paths_.analysis_dir() / (stem + ".csv"));
      s.outputs.push_back(paths_.analysis_dir() / (stem + ".svg"));
    }
    s.outputs.push_back(paths_.analysis_dir() / "report.html");
    s.outputs.push_back(paths_.analysis_dir() / "divergence.json");
  } else {
    throw ValidationError("UnknownStage", "no stage named '" + stage + "'");
  }
  return s;
}

std::string Pipeline::stage_key(const StageSpec& spec) const {
  json doc{{"params", spec.params}, {"inputs", json::array()}};
  for (const auto& in : spec.inputs) doc["inputs"].push_back(json{in.filename().string(), file_digest(in)});
  return sha256_hex(doc.dump());
}

bool Pipeline::up_to_date(const std::string& stage) const {
  const auto stamp_path = paths_.stages_dir() / (stage + ".json");
  if (!fs::exists(stamp_path)) return false;
  const auto spec = stage_spec(stage);
  for (const auto& in : spec.inputs) {
    if (in != paths_.resolutions() && !fs::exists(in)) return false;
  }
  json doc;
  try {
    doc = read_json(stamp_path);
  } catch (const Error&) {
    return false;
  }
  if (doc.value("key", std::string()) != stage_key(spec)) return false;
  const auto& outs = doc.contains("outputs") ? doc["outputs"] : json::object();
  if (outs.size() != spec.outputs.size()) return false;
  for (const auto& out : spec.outputs) {
    const auto rel = fs::relative(out, paths_.root).generic_string();
    if (!outs.contains(rel) || !fs::exists(out) || outs[rel].get<std::string>() != sha256_file(out)) return false;
  }
  return true;
}

void Pipeline::stamp(const std::string& stage) const {
  const auto spec = stage_spec(stage);
  json outs = json::object();
  for (const auto& out : spec.outputs) outs[fs::relative(out, paths_.root).generic_string()] = sha256_file(out);
  write_file_atomic(paths_.stages_dir() / (stage + ".json"),
                    pretty(json{{"stage", stage}, {"key", stage_key(spec)}, {"outputs", outs}}));
}

void Pipeline::matrix() {
  if (cfg_.corpus.source != CorpusConfig::Source::Synthetic) {
    log_ << "[matrix] corpus comes from " << cfg_.corpus.path.string() << "; nothing to build\n";
    stamp("matrix");
    return;
  }
  const auto tasks = build_matrix(cfg_.corpus.axes);
  std::vector<json> rows;
  rows.reserve(tasks.size());
  for (const auto& t : tasks) {
    rows.push_back(json{{"task_id", t.task_id},
                        {"language", t.language},
                        {"ptype", to_string(t.ptype)},
                        {"platform", t.platform},
                        {"generator_id", t.generator_id},
                        {"seed_index", t.seed_index},
                        {"source_title", t.source_title},
                        {"source_content", t.source_content ? json(*t.source_content) : json(nullptr)}});
  }
  write_file_atomic(paths_.matrix(), to_jsonl(rows));
  log_ << "[matrix] " << tasks.size() << " tasks\n";
  stamp("matrix");
}

void Pipeline::synth() {
  if (cfg_.corpus.source == CorpusConfig::Source::File) {
    const auto samples = load_corpus(cfg_.corpus.path);
    write_corpus(paths_.corpus(), samples);
    log_ << "[synth] loaded " << samples.size() << " samples from " << cfg_.corpus.path.string() << "\n";
    stamp("synth");
    return;
  }
  if (!fs::exists(paths_.matrix())) throw IoError("missing " + paths_.matrix().string() + "; run the matrix stage");
  std::vector<GenerationTask> tasks;
  for (const auto& row : read_jsonl(paths_.matrix())) {
    GenerationTask t;
    t.task_id = require_string(row, "task_id", "matrix");
    t.language = require_string(row, "language", "matrix");
    t.ptype = parse_ptype(require_string(row, "ptype", "matrix"));
    t.platform = require_string(row, "platform", "matrix");
    t.generator_id = require_string(row, "generator_id", "matrix");
    t.seed_index = static_cast<int>(require_int(row, "seed_index", "matrix"));
    t.source_title = row.value("source_title", std::string());
    if (row.contains("source_content") && row["source_content"].is_string()) {
      t.source_content = row["source_content"].get<std::string>();
    }
    tasks.push_back(std::move(t));
  }
  const auto corpus = synth_corpus(tasks, cfg_.corpus.quality_profile, cfg_.seed, rubric_.num_levels());
  write_corpus(paths_.corpus(), corpus.samples);
  write_truth(paths_.truth(), corpus.truth);
  log_ << "[synth] " << corpus.samples.size() << " samples\n";
  stamp("synth");
}

void Pipeline::judge(std::optional<int> max_parallel) {
  const auto samples = load_corpus(paths_.corpus());
  JudgeRunOptions opts;
  opts.max_parallel = max_parallel;
  const auto verdicts = judge_corpus(samples, rubric_, cfg_.judges, opts);
  write_verdicts(paths_.verdicts(), verdicts);
  std::size_t failed = 0;
  for (const auto& v : verdicts) failed += v.failed ? 1 : 0;
  log_ << "[judge] " << verdicts.size() << " verdicts from " << cfg_.judges.size() << " judges, " << failed
       << " failed\n";
  stamp("judge");
}

void Pipeline::parse() {
  auto parsed = parse_verdicts(load_verdicts(paths_.verdicts()), rubric_, cfg_.parser);
  std::size_t applied = 0;
  if (fs::exists(paths_.resolutions())) applied = apply_manual_resolutions(parsed, paths_.resolutions(), rubric_);
  std::map<std::string, std::size_t> by_kind;
  for (const auto& v : parsed) ++by_kind[std::string(v.outcome.kind())];
  write_parsed(paths_.parsed(), parsed);
  log_ << "[parse] valid " << by_kind["valid"] << ", ambiguous " << by_kind["ambiguous"] << ", unparsable "
       << by_kind["unparsable"];
  if (applied) log_ << ", " << applied << " resolved by hand";
  log_ << "\n";
  stamp("parse");
}

void Pipeline::resolve(const fs::path& edited_queue) {
  std::map<std::pair<std::string, std::string>, json> merged;
  auto absorb = [&](const fs::path& p) {
    for (auto& row : read_jsonl(p)) {
      if (!row.contains("score") || row["score"].is_null()) continue;
      const auto key = std::make_pair(require_string(row, "sample_id", p.string()),
                                      require_string(row, "judge_id", p.string()));
      merged[key] = std::move(row);
    }
  };
  if (fs::exists(paths_.resolutions())) absorb(paths_.resolutions());
  absorb(edited_queue);
  // Validate against the current verdicts before persisting anything.
  auto parsed = parse_verdicts(load_verdicts(paths_.verdicts()), rubric_, cfg_.parser);
  std::vector<json> rows;
  for (auto& [_, row] : merged) rows.push_back(std::move(row));
  const auto tmp = paths_.root / "resolutions.pending.jsonl";
  write_file_atomic(tmp, to_jsonl(rows));
  try {
    apply_manual_resolutions(parsed, tmp, rubric_);
  } catch (...) {
    fs::remove(tmp);
    throw;
  }
  fs::rename(tmp, paths_.resolutions());
  log_ << "[resolve] " << rows.size() << " hand resolutions on record\n";
  parse();
}

void Pipeline::aggregate() {
  const auto labels = aggregate_verdicts(load_parsed(paths_.parsed()));
  write_labels(paths_.labels(), labels);
  const auto dist = distribution(labels, rubric_.num_levels());
  const auto agree = agreement_stats(labels);
  json relative = json::array();
  for (int s = 0; s < dist.num_levels(); ++s) relative.push_back(dist.relative(s));
  json unanimous = json::object();
  for (const auto& [score, n] : agree.per_score_unanimous) unanimous[std::to_string(score)] = n;
  std::map<std::string, std::size_t> decided;
  for (const auto& l : labels) ++decided[std::string(to_string(l.decided_by))];
  const json stats{{"num_levels", rubric_.num_levels()},
                   {"total", dist.total},
                   {"absolute", dist.absolute},
                   {"na", dist.na},
                   {"relative", relative},
                   {"relative_na", dist.relative_na()},
                   {"total_agreement_rate", agree.total_agreement_rate},
                   {"unanimous", agree.unanimous},
                   {"unanimous_per_score", unanimous},
                   {"decided_by", decided}};
  write_file_atomic(paths_.label_stats(), pretty(stats));

  // Non-Valid verdicts of samples that ended up NA go to the manual queue.
  std::vector<JudgeVerdict> pending;
  for (const auto& l : labels) {
    if (l.label) continue;
    for (const auto& [judge_id, outcome] : l.votes) {
      if (outcome.is_valid()) continue;
      JudgeVerdict v;
      v.sample_id = l.sample_id;
      v.judge_id = judge_id;
      v.outcome = outcome;
      pending.push_back(std::move(v));
    }
  }
  if (!pending.empty()) {
    std::map<std::pair<std::string, std::string>, RawVerdict> raw;
    for (const auto& v : load_parsed(paths_.parsed())) raw[{v.sample_id, v.judge_id}] = v.raw;
    for (auto& v : pending) v.raw = raw[{v.sample_id, v.judge_id}];
  }
  write_manual_queue(paths_.manual_queue(), pending);
  log_ << "[aggregate] " << labels.size() << " samples, " << dist.na << " NA, agreement "
       << agree.total_agreement_rate << "; " << pending.size() << " verdicts queued for review\n";
  stamp("aggregate");
}

void Pipeline::split() {
  const auto samples = load_corpus(paths_.corpus());
  std::map<std::string, std::optional<int>> label_of;
  for (const auto& l : load_labels(paths_.labels())) label_of[l.sample_id] = l.label;
  std::vector<LabeledSample> labeled;
  labeled.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = label_of.find(s.sample_id);
    labeled.push_back(LabeledSample{s, it == label_of.end() ? std::nullopt : it->second});
  }
  const auto assignment = make_split(labeled, cfg_.split, rubric_.num_levels());
  export_split(labeled, assignment, cfg_.split, rubric_.num_levels(), paths_.split_dir());
  std::map<SplitRole, std::size_t> counts;
  for (const auto& [_, role] : assignment) ++counts[role];
  log_ << "[split] train " << counts[SplitRole::Train] << ", val " << counts[SplitRole::Val] << ", test "
       << counts[SplitRole::Test] << ", unused " << counts[SplitRole::Unused] << "\n";
  stamp("split");
}

void Pipeline::train() {
  const auto split = SplitFiles::in(paths_.split_dir());
  if (const auto* b = std::get_if<BuiltinTrainer>(&cfg_.trainer)) {
    const auto result = train_baseline(read_split_rows(split.train), read_split_rows(split.val),
                                       rubric_.num_levels(), b->hyperparams, b->features);
    save_model(paths_.model(), result.model);
    write_file_atomic(paths_.train_log(), epoch_log_csv(result.log));
    const auto& last = result.log.back();
    log_ << "[train] " << result.model.trained_epochs << " epochs, val accuracy " << last.val_accuracy << "\n";
  } else {
    const auto& d = std::get<BackendDescriptor>(cfg_.trainer);
    const auto result = run_backend(d, split, paths_.predictions(), rubric_.num_levels());
    log_ << "[train] backend " << d.backend_id << " produced " << result.predictions.size() << " predictions in "
         << result.cost.wall_s << " s\n";
  }
  stamp("train");
}

void Pipeline::predict(const std::optional<fs::path>& input, const std::optional<fs::path>& out) {
  const bool builtin = std::holds_alternative<BuiltinTrainer>(cfg_.trainer);
  if (!input) {
    const auto test = read_split_rows(SplitFiles::in(paths_.split_dir()).test);
    const auto target = out.value_or(paths_.predictions());
    if (builtin) {
      write_predictions(target, perq::predict(load_model(paths_.model()), test));
    } else {
      // The backend already wrote predictions during training; check them.
      const auto preds = read_predictions(paths_.predictions(), rubric_.num_levels());
      validate_prediction_ids(preds, ids_of(test));
      if (target != paths_.predictions()) write_predictions(target, preds);
    }
    log_ << "[predict] " << test.size() << " test samples -> " << target.string() << "\n";
    if (!out) stamp("predict");
    return;
  }
  if (!builtin) throw ValidationError("UnsupportedForBackend", "predict --input needs the builtin trainer");
  const auto model = load_model(paths_.model());
  std::vector<Prediction> preds;
  std::set<std::string> seen;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(*input)) {
    ++line;
    const auto ctx = input->string() + ":" + std::to_string(line);
    std::string id = row.contains("id") ? require_string(row, "id", ctx) : require_string(row, "sample_id", ctx);
    if (!seen.insert(id).second) throw ValidationError("DuplicateId", ctx + ": id '" + id + "' repeated");
    preds.push_back(predict_one(model, std::move(id), require_string(row, "text", ctx)));
  }
  const auto target = out.value_or(input->parent_path() / (input->stem().string() + ".predictions.jsonl"));
  write_predictions(target, preds);
  log_ << "[predict] " << preds.size() << " texts -> " << target.string() << "\n";
}

void Pipeline::evaluate(const std::optional<fs::path>& external_labels) {
  const auto test = read_split_rows(SplitFiles::in(paths_.split_dir()).test);
  const auto preds = read_predictions(paths_.predictions(), rubric_.num_levels());
  validate_prediction_ids(preds, ids_of(test));
  std::map<std::string, int> predicted;
  for (const auto& p : preds) predicted[p.sample_id] = p.predicted_label;
  std::vector<int> pred, gold;
  for (const auto& r : test) {
    gold.push_back(r.label);
    pred.push_back(predicted.at(r.id));
  }
  const auto report = perq::evaluate(pred, gold, rubric_.num_levels());
  auto doc = to_json(report);
  doc["per_label_f1"] = per_label_f1(pred, gold, rubric_.num_levels());
  write_file_atomic(paths_.report(), pretty(doc));
  log_ << "[evaluate] test split\n" << report_table(report);
  if (external_labels) {
    const auto ext = load_external_labels(*external_labels, rubric_);
    const auto corr = correlate_external(preds, human_majority(ext), rubric_.num_levels());
    auto hdoc = to_json(corr.report);
    hdoc["intersection"] = corr.intersection;
    hdoc["labels_file"] = external_labels->string();
    write_file_atomic(paths_.human_report(), pretty(hdoc));
    log_ << "[evaluate] external labels (" << corr.intersection << " shared samples)\n" << report_table(corr.report);
  }
  stamp("evaluate");
}

void Pipeline::analyze(AnalysisScope scope) {
  const int levels = rubric_.num_levels();
  const auto samples = load_corpus(paths_.corpus());
  const auto split = SplitFiles::in(paths_.split_dir());
  std::map<std::string, SplitRole> role;
  for (const auto& r : read_split_rows(split.train)) role[r.id] = SplitRole::Train;
  for (const auto& r : read_split_rows(split.val)) role[r.id] = SplitRole::Val;
  for (const auto& r : read_split_rows(split.test)) role[r.id] = SplitRole::Test;
  std::map<std::string, std::optional<int>> label_of;
  for (const auto& l : load_labels(paths_.labels())) label_of[l.sample_id] = l.label;

  std::vector<ScoredSample> majority, metric;
  majority.reserve(samples.size());
  for (const auto& s : samples) {
    const auto r = role.find(s.sample_id);
    const auto l = label_of.find(s.sample_id);
    majority.push_back(ScoredSample{s.task, l == label_of.end() ? std::nullopt : l->second,
                                    r == role.end() ? SplitRole::Unused : r->second});
  }
  const bool want_test = scope != AnalysisScope::All;
  if (want_test) {
    std::map<std::string, const TextSample*> by_id;
    for (const auto& s : samples) by_id[s.sample_id] = &s;
    const auto preds = read_predictions(paths_.predictions(), levels);
    validate_prediction_ids(preds, ids_of(read_split_rows(split.test)));
    for (const auto& p : preds) metric.push_back(ScoredSample{by_id.at(p.sample_id)->task, p.predicted_label, SplitRole::Test});
  }

  std::vector<FacetBreakdown> breakdowns;
  std::vector<DivergenceTable> tables;
  json divergence = json::array();
  for (auto f : kAllFacets) {
    std::optional<FacetBreakdown> maj_test;
    if (want_test) {
      maj_test = facet_breakdown(majority, f, Scope::TestSplit, LabelSource::MajorityLabels, levels);
      auto met_test = facet_breakdown(metric, f, Scope::TestSplit, LabelSource::MetricPredictions, levels);
      tables.push_back(compare_breakdowns(*maj_test, met_test));
      divergence.push_back(divergence_json(tables.back(), "majority_test_vs_metric_test"));
      breakdowns.push_back(*maj_test);
      breakdowns.push_back(std::move(met_test));
    }
    if (scope != AnalysisScope::Test) {
      auto maj_all = facet_breakdown(majority, f, Scope::AllData, LabelSource::MajorityLabels, levels);
      if (maj_test) {
        tables.push_back(compare_breakdowns(*maj_test, maj_all));
        divergence.push_back(divergence_json(tables.back(), "majority_test_vs_majority_all"));
      }
      breakdowns.push_back(std::move(maj_all));
    }
  }
  const auto written = emit_report(breakdowns, paths_.analysis_dir(), tables);
  write_file_atomic(paths_.analysis_dir() / "divergence.json", pretty(divergence));
  log_ << "[analyze] " << written.size() + 1 << " files in " << paths_.analysis_dir().string() << "\n";
  if (scope == AnalysisScope::Both) stamp("analyze");
}

void Pipeline::run_stage(const std::string& stage, std::optional<int> max_parallel) {
  if (stage == "matrix") matrix();
  else if (stage == "synth") synth();
  else if (stage == "judge") judge(max_parallel);
  else if (stage == "parse") parse();
  else if (stage == "aggregate") aggregate();
  else if (stage == "split") split();
  else if (stage == "train") train();
  else if (stage == "predict") predict();
  else if (stage == "evaluate") evaluate();
  else if (stage == "analyze") analyze();
  else throw ValidationError("UnknownStage", "no stage named '" + stage + "'");
}

std::vector<StageOutcome> Pipeline::run_all(std::optional<int> max_parallel) {
  std::vector<StageOutcome> outcomes;
  const auto started = std::chrono::system_clock::now();
  for (const auto& stage : stage_names()) {
    StageOutcome o{stage};
    if (up_to_date(stage)) {
      o.skipped = true;
      log_ << "[" << stage << "] up to date\n";
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      run_stage(stage, max_parallel);
      o.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    outcomes.push_back(o);
  }
  json stages = json::array();
  for (const auto& o : outcomes) stages.push_back(json{{"stage", o.stage}, {"skipped", o.skipped}, {"wall_s", o.wall_s}});
  const auto to_epoch = [](auto tp) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
  };
  write_file_atomic(paths_.run_manifest(), pretty(json{{"seed", cfg_.seed},
                                                       {"started_ms", to_epoch(started)},
                                                       {"finished_ms", to_epoch(std::chrono::system_clock::now())},
                                                       {"stages", stages}}));
  return outcomes;
}

void run_baseline_backend(const fs::path& train, const fs::path& val, const fs::path& test, const fs::path& out,
                          int num_labels, const Hyperparams& hp, const FeatureConfig& features) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train_baseline(read_split_rows(train), read_split_rows(val), num_labels, hp, features);
  write_predictions(out, predict(result.model, read_split_rows(test)));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic(out.parent_path() / "cost.json", pretty(json{{"peak_gpu_gb", 0.0}, {"wall_s", wall}}));
}

}  // namespace perq
