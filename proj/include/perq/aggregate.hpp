#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "perq/parse.hpp"

namespace perq {

enum class DecidedBy { Unanimous, Plurality, LowestFallback, NA };

std::string_view to_string(DecidedBy d);
DecidedBy parse_decided_by(std::string_view s);

struct VoteDecision {
  std::optional<int> label;  // nullopt is NA
  DecidedBy decided_by = DecidedBy::NA;

  bool operator==(const VoteDecision&) const = default;
};

/// k-judge majority rule over the Valid votes V:
///  - |V| <= 1: NA;
///  - a strict plurality score wins (Unanimous when every vote is Valid and equal);
///  - otherwise min(V) (LowestFallback).
/// For three judges that is two-of-three, else the lowest score.
/// Throws ValidationError("EmptyVotes") on an empty list.
VoteDecision majority_vote(const std::vector<ParseOutcome>& votes);

struct MajorityLabel {
  std::string sample_id;
  std::optional<int> label;
  std::vector<std::pair<std::string, ParseOutcome>> votes;  // (judge_id, outcome)
  bool unanimous = false;
  DecidedBy decided_by = DecidedBy::NA;
};

/// Groups verdicts by sample (sorted by sample_id, votes by judge_id).
std::vector<MajorityLabel> aggregate_verdicts(const std::vector<JudgeVerdict>& verdicts);

struct AgreementStats {
  double total_agreement_rate = 0.0;
  std::map<int, std::size_t> per_score_unanimous;
  std::size_t unanimous = 0;
  std::size_t total = 0;
};

AgreementStats agreement_stats(const std::vector<MajorityLabel>& labels);

/// Counts per rubric score plus NA. Relative values are exact ratios;
/// rounding happens only when displaying.
struct ScoreDistribution {
  std::vector<std::size_t> absolute;  // index = score
  std::size_t na = 0;
  std::size_t total = 0;

  static ScoreDistribution from_counts(std::vector<std::size_t> per_score, std::size_t na_count);

  double relative(int score) const;
  double relative_na() const;
  int num_levels() const { return static_cast<int>(absolute.size()); }
};

ScoreDistribution distribution(const std::vector<MajorityLabel>& labels, int num_levels);

void write_labels(const std::filesystem::path& path, const std::vector<MajorityLabel>& labels);
std::vector<MajorityLabel> load_labels(const std::filesystem::path& path);

}  // namespace perq
