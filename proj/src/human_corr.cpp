#include "perq/human_corr.hpp"

#include "perq/error.hpp"
#include "perq/io.hpp"

namespace perq {

void ExternalLabelSet::validate() const {
  if (scores.empty()) throw ValidationError("EmptyInput", "external labels: no samples");
  for (const auto& [id, s] : scores) {
    if (s.empty()) throw ValidationError("external labels: '" + id + "' has no annotator scores");
    for (int v : s) {
      if (v < 0 || v >= num_levels) {
        throw ValidationError("OutOfRange", "external labels: '" + id + "' score " + std::to_string(v));
      }
    }
  }
}

ExternalLabelSet load_external_labels(const std::filesystem::path& path, const Rubric& rubric) {
  ExternalLabelSet set;
  set.num_levels = rubric.num_levels();
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    auto id = require_string(rows[i], "sample_id", ctx);
    const auto& s = require_field(rows[i], "scores", ctx);
    if (!s.is_array()) throw ParseError(ctx + ": scores must be a list of integers");
    std::vector<int> scores;
    for (const auto& v : s) {
      if (!v.is_number_integer()) throw ParseError(ctx + ": scores must be a list of integers");
      scores.push_back(v.get<int>());
    }
    if (!set.scores.emplace(id, std::move(scores)).second) {
      throw ValidationError("DuplicateId", ctx + ": sample_id '" + id + "' repeated");
    }
  }
  set.validate();
  return set;
}

std::map<std::string, MajorityLabel> human_majority(const ExternalLabelSet& labels) {
  labels.validate();
  std::map<std::string, MajorityLabel> out;
  for (const auto& [id, scores] : labels.scores) {
    MajorityLabel m;
    m.sample_id = id;
    std::vector<ParseOutcome> votes;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      auto o = ParseOutcome::valid(scores[k], "human");
      m.votes.emplace_back("annotator_" + std::to_string(k + 1), o);
      votes.push_back(std::move(o));
    }
    const auto d = majority_vote(votes);
    m.label = d.label;
    m.decided_by = d.decided_by;
    m.unanimous = d.decided_by == DecidedBy::Unanimous;
    out.emplace(id, std::move(m));
  }
  return out;
}

ExternalCorrelation correlate_external(const std::vector<Prediction>& predictions,
                                       const std::map<std::string, MajorityLabel>& human, int num_labels) {
  std::vector<int> pred, gold;
  for (const auto& p : predictions) {
    const auto it = human.find(p.sample_id);
    if (it == human.end() || !it->second.label) continue;
    pred.push_back(p.predicted_label);
    gold.push_back(*it->second.label);
  }
  if (pred.size() < 2) {
    throw ValidationError("InsufficientOverlap", "only " + std::to_string(pred.size()) + " shared labeled ids");
  }
  ExternalCorrelation out;
  out.intersection = pred.size();
  out.report = evaluate(pred, gold, num_labels);
  if (!out.report.spearman) throw ValidationError("ConstantInput", "Spearman undefined: a side is constant");
  return out;
}

}  // namespace perq
