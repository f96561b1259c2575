#include "perq/aggregate.hpp"

#include <algorithm>

#include "perq/error.hpp"

namespace perq {

std::string_view to_string(DecidedBy d) {
  switch (d) {
    case DecidedBy::Unanimous:
      return "Unanimous";
    case DecidedBy::Plurality:
      return "Plurality";
    case DecidedBy::LowestFallback:
      return "LowestFallback";
    case DecidedBy::NA:
      break;
  }
  return "NA";
}

DecidedBy parse_decided_by(std::string_view s) {
  if (s == "Unanimous") return DecidedBy::Unanimous;
  if (s == "Plurality") return DecidedBy::Plurality;
  if (s == "LowestFallback") return DecidedBy::LowestFallback;
  if (s == "NA") return DecidedBy::NA;
  throw ParseError("decided_by: unknown value '" + std::string(s) + "'");
}

VoteDecision majority_vote(const std::vector<ParseOutcome>& votes) {
  if (votes.empty()) throw ValidationError("EmptyVotes", "majority_vote: no votes");

  std::map<int, std::size_t> counts;
  std::size_t valid = 0;
  for (const auto& v : votes) {
    if (auto s = v.score()) {
      ++counts[*s];
      ++valid;
    }
  }
  if (valid <= 1) return {std::nullopt, DecidedBy::NA};

  std::size_t top = 0;
  for (const auto& [score, n] : counts) top = std::max(top, n);
  std::vector<int> leaders;
  for (const auto& [score, n] : counts) {
    if (n == top) leaders.push_back(score);
  }
  if (leaders.size() == 1) {
    const bool unanimous = counts.size() == 1 && valid == votes.size();
    return {leaders.front(), unanimous ? DecidedBy::Unanimous : DecidedBy::Plurality};
  }
  return {counts.begin()->first, DecidedBy::LowestFallback};
}

std::vector<MajorityLabel> aggregate_verdicts(const std::vector<JudgeVerdict>& verdicts) {
  std::map<std::string, std::vector<const JudgeVerdict*>> by_sample;
  for (const auto& v : verdicts) by_sample[v.sample_id].push_back(&v);

  std::vector<MajorityLabel> out;
  out.reserve(by_sample.size());
  for (auto& [id, group] : by_sample) {
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->judge_id < b->judge_id; });
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (group[i]->judge_id == group[i - 1]->judge_id) {
        throw ValidationError("DuplicateId", "sample '" + id + "' judged twice by '" + group[i]->judge_id + "'");
      }
    }
    MajorityLabel label;
    label.sample_id = id;
    std::vector<ParseOutcome> outcomes;
    for (const auto* v : group) {
      label.votes.emplace_back(v->judge_id, v->outcome);
      outcomes.push_back(v->outcome);
    }
    const auto decision = majority_vote(outcomes);
    label.label = decision.label;
    label.decided_by = decision.decided_by;
    label.unanimous = decision.decided_by == DecidedBy::Unanimous;
    out.push_back(std::move(label));
  }
  return out;
}

AgreementStats agreement_stats(const std::vector<MajorityLabel>& labels) {
  if (labels.empty()) throw ValidationError("EmptyInput", "agreement_stats: no labels");
  AgreementStats stats;
  stats.total = labels.size();
  for (const auto& l : labels) {
    if (l.unanimous && l.label) {
      ++stats.unanimous;
      ++stats.per_score_unanimous[*l.label];
    }
  }
  stats.total_agreement_rate = static_cast<double>(stats.unanimous) / static_cast<double>(stats.total);
  return stats;
}

ScoreDistribution ScoreDistribution::from_counts(std::vector<std::size_t> per_score, std::size_t na_count) {
  ScoreDistribution d;
  d.absolute = std::move(per_score);
  d.na = na_count;
  d.total = na_count;
  for (auto c : d.absolute) d.total += c;
  return d;
}

double ScoreDistribution::relative(int score) const {
  if (total == 0 || score < 0 || score >= num_levels()) return 0.0;
  return static_cast<double>(absolute[static_cast<std::size_t>(score)]) / static_cast<double>(total);
}

double ScoreDistribution::relative_na() const {
  return total == 0 ? 0.0 : static_cast<double>(na) / static_cast<double>(total);
}

ScoreDistribution distribution(const std::vector<MajorityLabel>& labels, int num_levels) {
  if (labels.empty()) throw ValidationError("EmptyInput", "distribution: no labels");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_levels), 0);
  std::size_t na = 0;
  for (const auto& l : labels) {
    if (!l.label) {
      ++na;
    } else if (*l.label < 0 || *l.label >= num_levels) {
      throw ValidationError("LabelOutOfRange", l.sample_id + ": label " + std::to_string(*l.label));
    } else {
      ++counts[static_cast<std::size_t>(*l.label)];
    }
  }
  return ScoreDistribution::from_counts(std::move(counts), na);
}

void write_labels(const std::filesystem::path& path, const std::vector<MajorityLabel>& labels) {
  std::vector<json> rows;
  rows.reserve(labels.size());
  for (const auto& l : labels) {
    json votes = json::array();
    for (const auto& [judge, outcome] : l.votes) {
      json v{{"judge_id", judge}};
      v.update(outcome_to_json(outcome));
      votes.push_back(std::move(v));
    }
    rows.push_back(json{{"sample_id", l.sample_id},
                        {"label", l.label ? json(*l.label) : json("NA")},
                        {"unanimous", l.unanimous},
                        {"decided_by", std::string(to_string(l.decided_by))},
                        {"votes", std::move(votes)}});
  }
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<MajorityLabel> load_labels(const std::filesystem::path& path) {
  std::vector<MajorityLabel> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    MajorityLabel l;
    l.sample_id = require_string(row, "sample_id", ctx);
    const auto& label = require_field(row, "label", ctx);
    if (label.is_number_integer()) {
      l.label = label.get<int>();
    } else if (!(label.is_string() && label.get<std::string>() == "NA")) {
      throw ParseError(ctx + ": label must be an integer or \"NA\"");
    }
    l.unanimous = row.value("unanimous", false);
    l.decided_by = parse_decided_by(require_string(row, "decided_by", ctx));
    if (row.contains("votes")) {
      for (const auto& v : row["votes"]) l.votes.emplace_back(require_string(v, "judge_id", ctx), outcome_from_json(v, ctx));
    }
    if (l.label.has_value() == (l.decided_by == DecidedBy::NA)) {
      throw ValidationError(ctx + ": label NA must coincide with decided_by NA");
    }
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace perq
