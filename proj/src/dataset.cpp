#include "perq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "perq/digest.hpp"
#include "perq/rng.hpp"

namespace perq {

void SplitConfig::validate() const {
  if (per_label_train < 0 || per_label_val < 0 || per_label_test < 0) {
    throw ValidationError("split: per-label counts must be >= 0");
  }
  if (per_label_total() == 0) throw ValidationError("split: per-label counts must not all be zero");
}

json to_json(const SplitConfig& cfg) {
  return json{{"per_label_train", cfg.per_label_train},
              {"per_label_val", cfg.per_label_val},
              {"per_label_test", cfg.per_label_test},
              {"seed", cfg.seed},
              {"allow_imbalanced", cfg.allow_imbalanced}};
}

SplitConfig split_config_from_json(const json& j) {
  SplitConfig cfg;
  cfg.per_label_train = j.value("per_label_train", cfg.per_label_train);
  cfg.per_label_val = j.value("per_label_val", cfg.per_label_val);
  cfg.per_label_test = j.value("per_label_test", cfg.per_label_test);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.allow_imbalanced = j.value("allow_imbalanced", cfg.allow_imbalanced);
  cfg.validate();
  return cfg;
}

std::string_view to_string(SplitRole r) {
  switch (r) {
    case SplitRole::Train:
      return "train";
    case SplitRole::Val:
      return "val";
    case SplitRole::Test:
      return "test";
    case SplitRole::Unused:
      break;
  }
  return "unused";
}

SplitAssignment make_split(std::span<const LabeledSample> labeled, const SplitConfig& cfg, int num_levels) {
  cfg.validate();
  SplitAssignment out;
  std::vector<std::vector<std::string>> by_label(static_cast<std::size_t>(num_levels));
  for (const auto& ls : labeled) {
    if (!out.emplace(ls.sample.sample_id, SplitRole::Unused).second) {
      throw ValidationError("DuplicateId", "sample_id '" + ls.sample.sample_id + "' repeated");
    }
    if (!ls.label) continue;
    if (*ls.label < 0 || *ls.label >= num_levels) {
      throw ValidationError("LabelOutOfRange", ls.sample.sample_id + ": label " + std::to_string(*ls.label));
    }
    by_label[static_cast<std::size_t>(*ls.label)].push_back(ls.sample.sample_id);
  }
  for (auto& ids : by_label) std::sort(ids.begin(), ids.end());

  if (cfg.allow_imbalanced) {
    std::vector<std::string> ids;
    for (const auto& group : by_label) ids.insert(ids.end(), group.begin(), group.end());
    std::sort(ids.begin(), ids.end());
    Rng rng = Rng::keyed(cfg.seed, "imbalanced");
    rng.shuffle(ids);
    const double total = cfg.per_label_total();
    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * cfg.per_label_train / total));
    const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(n * cfg.per_label_val / total)));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out[ids[i]] = i < n_train ? SplitRole::Train : (i < n_train + n_val ? SplitRole::Val : SplitRole::Test);
    }
    return out;
  }

  const auto need = static_cast<std::size_t>(cfg.per_label_total());
  for (int label = 0; label < num_levels; ++label) {
    const auto have = by_label[static_cast<std::size_t>(label)].size();
    if (have < need) throw InsufficientLabel(label, have, need);
  }
  const auto n_train = static_cast<std::size_t>(cfg.per_label_train);
  const auto n_val = static_cast<std::size_t>(cfg.per_label_val);
  for (int label = 0; label < num_levels; ++label) {
    auto ids = by_label[static_cast<std::size_t>(label)];
    Rng rng = Rng::keyed(cfg.seed, "label:" + std::to_string(label));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < need; ++i) {
      out[ids[i]] = i < n_train ? SplitRole::Train : (i < n_train + n_val ? SplitRole::Val : SplitRole::Test);
    }
  }
  return out;
}

SplitFiles SplitFiles::in(const std::filesystem::path& dir) {
  return SplitFiles{dir / "train.jsonl", dir / "val.jsonl", dir / "test.jsonl", dir / "manifest.json"};
}

std::string split_rows_to_jsonl(const std::vector<SplitRow>& rows) {
  std::vector<json> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(json{{"id", r.id}, {"text", r.text}, {"label", r.label}});
  return to_jsonl(out);
}

SplitFiles export_split(std::span<const LabeledSample> labeled, const SplitAssignment& assignment,
                        const SplitConfig& cfg, int num_levels, const std::filesystem::path& out_dir) {
  std::vector<SplitRow> train, val, test;
  std::map<std::string, std::vector<std::size_t>> counts = {
      {"train", std::vector<std::size_t>(static_cast<std::size_t>(num_levels), 0)},
      {"val", std::vector<std::size_t>(static_cast<std::size_t>(num_levels), 0)},
      {"test", std::vector<std::size_t>(static_cast<std::size_t>(num_levels), 0)}};
  for (const auto& ls : labeled) {
    const auto it = assignment.find(ls.sample.sample_id);
    if (it == assignment.end()) throw ValidationError("assignment: no entry for '" + ls.sample.sample_id + "'");
    if (it->second == SplitRole::Unused) continue;
    if (!ls.label) throw ValidationError("assignment: NA sample '" + ls.sample.sample_id + "' assigned to a split");
    SplitRow row{ls.sample.sample_id, ls.sample.text, *ls.label};
    ++counts[std::string(to_string(it->second))][static_cast<std::size_t>(*ls.label)];
    (it->second == SplitRole::Train ? train : it->second == SplitRole::Val ? val : test).push_back(std::move(row));
  }
  auto by_id = [](const SplitRow& a, const SplitRow& b) { return a.id < b.id; };
  std::sort(train.begin(), train.end(), by_id);
  std::sort(val.begin(), val.end(), by_id);
  std::sort(test.begin(), test.end(), by_id);

  const auto files = SplitFiles::in(out_dir);
  const auto train_body = split_rows_to_jsonl(train);
  const auto val_body = split_rows_to_jsonl(val);
  const auto test_body = split_rows_to_jsonl(test);
  write_file_atomic(files.train, train_body);
  write_file_atomic(files.val, val_body);
  write_file_atomic(files.test, test_body);

  json manifest{{"seed", cfg.seed},
                {"config", to_json(cfg)},
                {"counts_per_label_per_split", counts},
                {"sha256s",
                 {{"train.jsonl", sha256_hex(train_body)},
                  {"val.jsonl", sha256_hex(val_body)},
                  {"test.jsonl", sha256_hex(test_body)}}}};
  write_file_atomic(files.manifest, pretty(manifest));
  return files;
}

std::vector<SplitRow> read_split_rows(const std::filesystem::path& path) {
  std::vector<SplitRow> out;
  std::set<std::string> ids;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    SplitRow r{require_string(rows[i], "id", ctx), require_string(rows[i], "text", ctx),
               static_cast<int>(require_int(rows[i], "label", ctx))};
    if (!ids.insert(r.id).second) throw ValidationError("DuplicateId", ctx + ": id '" + r.id + "' repeated");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace perq
