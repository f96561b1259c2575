#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "perq/io.hpp"
#include "perq/judge.hpp"
#include "perq/rubric.hpp"

namespace perq {

struct Valid {
  int score = 0;
  bool operator==(const Valid&) const = default;
};
struct Ambiguous {
  std::set<int> candidates;  // >= 2 distinct in-range scores
  bool operator==(const Ambiguous&) const = default;
};
struct Unparsable {
  bool operator==(const Unparsable&) const = default;
};

/// Result of reading one judge answer. `rule` names the cascade step that
/// decided it: labeled, fraction, bare_integer, none, judge_failed, manual.
struct ParseOutcome {
  std::variant<Valid, Ambiguous, Unparsable> value = Unparsable{};
  std::string rule = "none";

  bool is_valid() const noexcept { return std::holds_alternative<Valid>(value); }
  std::optional<int> score() const;
  /// "valid" | "ambiguous" | "unparsable"
  std::string_view kind() const noexcept;

  static ParseOutcome valid(int score, std::string rule) { return {Valid{score}, std::move(rule)}; }
  static ParseOutcome ambiguous(std::set<int> c, std::string rule) { return {Ambiguous{std::move(c)}, std::move(rule)}; }
  static ParseOutcome unparsable(std::string rule = "none") { return {Unparsable{}, std::move(rule)}; }

  bool operator==(const ParseOutcome&) const = default;
};

struct ParserConfig {
  /// Lowercase marker phrases for the labeled-field rule.
  std::vector<std::string> markers = {"final score", "score:", "rating:"};
};

/// Reads a rubric score out of free text with an ordered cascade:
///  1. labeled field: the last marker phrase followed by an in-range integer;
///  2. fraction: "<s>/<max>" or "<s> out of <max>" with max the rubric top
///     score (disagreeing fractions give Ambiguous);
///  3. bare integers: exactly one distinct in-range integer wins, several give
///     Ambiguous, none gives Unparsable.
/// Only standalone ASCII digit runs count as integers; decimals, negatives and
/// digits glued to letters are ignored.
ParseOutcome extract_score(std::string_view raw_output, const Rubric& rubric, const ParserConfig& cfg = {});

struct JudgeVerdict {
  std::string sample_id;
  std::string judge_id;
  RawVerdict raw;
  ParseOutcome outcome;
};

std::vector<JudgeVerdict> parse_verdicts(const std::vector<RawVerdict>& raw, const Rubric& rubric,
                                         const ParserConfig& cfg = {});

/// Overrides an Ambiguous or Unparsable outcome with a hand-read score.
/// Errors: ValidationError codes "AlreadyValid" and "OutOfRange".
JudgeVerdict resolve_manual(const JudgeVerdict& verdict, int score, const Rubric& rubric);

json outcome_to_json(const ParseOutcome& outcome);
ParseOutcome outcome_from_json(const json& obj, std::string_view context);

void write_parsed(const std::filesystem::path& path, const std::vector<JudgeVerdict>& verdicts);
std::vector<JudgeVerdict> load_parsed(const std::filesystem::path& path);

/// Queue rows {sample_id, judge_id, raw_output, candidates[]} for every
/// verdict that is not Valid.
void write_manual_queue(const std::filesystem::path& path, const std::vector<JudgeVerdict>& verdicts);

/// Applies an edited queue (rows carrying an added integer "score"); rows
/// without a score are left unresolved. Returns the number applied.
std::size_t apply_manual_resolutions(std::vector<JudgeVerdict>& verdicts, const std::filesystem::path& edited_queue,
                                     const Rubric& rubric);

}  // namespace perq
