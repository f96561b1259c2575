#include "perq/parse.hpp"

#include <algorithm>
#include <map>

#include "perq/error.hpp"
#include "perq/text.hpp"

namespace perq {

std::optional<int> ParseOutcome::score() const {
  if (const auto* v = std::get_if<Valid>(&value)) return v->score;
  return std::nullopt;
}

std::string_view ParseOutcome::kind() const noexcept {
  switch (value.index()) {
    case 0:
      return "valid";
    case 1:
      return "ambiguous";
    default:
      return "unparsable";
  }
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }

struct IntToken {
  std::size_t begin = 0;
  std::size_t end = 0;
  long long value = 0;
};

// Standalone nonnegative integer starting at `pos`, if any.
std::optional<IntToken> token_at(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || !is_digit(s[pos])) return std::nullopt;
  if (pos > 0) {
    const char prev = s[pos - 1];
    if (is_alnum(prev)) return std::nullopt;
    if ((prev == '.' || prev == ',') && pos >= 2 && is_digit(s[pos - 2])) return std::nullopt;
    if (prev == '-' && (pos < 2 || !is_alnum(s[pos - 2]))) return std::nullopt;  // negative number
  }
  std::size_t end = pos;
  long long value = 0;
  while (end < s.size() && is_digit(s[end])) {
    value = std::min<long long>(value * 10 + (s[end] - '0'), 1'000'000'000LL);
    ++end;
  }
  if (end < s.size()) {
    const char next = s[end];
    if (is_alpha(next)) return std::nullopt;
    if ((next == '.' || next == ',') && end + 1 < s.size() && is_digit(s[end + 1])) return std::nullopt;
  }
  return IntToken{pos, end, value};
}

std::vector<IntToken> scan_tokens(std::string_view s) {
  std::vector<IntToken> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    if (auto tok = token_at(s, i)) out.push_back(*tok);
    while (i < s.size() && is_digit(s[i])) ++i;
  }
  return out;
}

std::size_t skip_separators(std::string_view s, std::size_t pos) {
  static constexpr std::string_view kSep = " \t\r\n:=*_\"'`#>([";
  for (;;) {
    while (pos < s.size() && (kSep.find(s[pos]) != std::string_view::npos ||
                              (s[pos] == '-' && pos + 1 < s.size() && !is_digit(s[pos + 1])))) {
      ++pos;
    }
    if (s.substr(pos).starts_with("is ")) {
      pos += 3;
      continue;
    }
    if (s.substr(pos).starts_with("of ")) {
      pos += 3;
      continue;
    }
    return pos;
  }
}

std::optional<int> labeled_rule(std::string_view lower, const Rubric& rubric, const ParserConfig& cfg) {
  std::optional<std::pair<std::size_t, int>> best;
  for (const auto& marker : cfg.markers) {
    if (marker.empty()) continue;
    for (auto pos = lower.find(marker); pos != std::string_view::npos; pos = lower.find(marker, pos + 1)) {
      // Marker must start on a word boundary: "underscore:" is not "score:".
      if (pos > 0 && is_alpha(lower[pos - 1]) && is_alpha(marker.front())) continue;
      const auto at = skip_separators(lower, pos + marker.size());
      const auto tok = token_at(lower, at);
      if (!tok || !rubric.in_range(tok->value)) continue;
      if (!best || pos >= best->first) best = std::make_pair(pos, static_cast<int>(tok->value));
    }
  }
  if (best) return best->second;
  return std::nullopt;
}

std::optional<ParseOutcome> fraction_rule(std::string_view lower, const std::vector<IntToken>& tokens,
                                          const Rubric& rubric) {
  std::set<int> found;
  for (const auto& tok : tokens) {
    if (!rubric.in_range(tok.value)) continue;
    std::size_t p = tok.end;
    while (p < lower.size() && lower[p] == ' ') ++p;
    if (p < lower.size() && lower[p] == '/') {
      ++p;
    } else if (lower.substr(p).starts_with("out of")) {
      p += 6;
    } else {
      continue;
    }
    while (p < lower.size() && lower[p] == ' ') ++p;
    const auto denom = token_at(lower, p);
    if (denom && denom->value == rubric.max_score()) found.insert(static_cast<int>(tok.value));
  }
  if (found.empty()) return std::nullopt;
  if (found.size() == 1) return ParseOutcome::valid(*found.begin(), "fraction");
  return ParseOutcome::ambiguous(std::move(found), "fraction");
}

}  // namespace

ParseOutcome extract_score(std::string_view raw_output, const Rubric& rubric, const ParserConfig& cfg) {
  const std::string lower = ascii_lower(raw_output);
  if (auto s = labeled_rule(lower, rubric, cfg)) return ParseOutcome::valid(*s, "labeled");

  const auto tokens = scan_tokens(lower);
  if (auto f = fraction_rule(lower, tokens, rubric)) return *f;

  std::set<int> in_range;
  for (const auto& tok : tokens) {
    if (rubric.in_range(tok.value)) in_range.insert(static_cast<int>(tok.value));
  }
  if (in_range.size() == 1) return ParseOutcome::valid(*in_range.begin(), "bare_integer");
  if (in_range.size() > 1) return ParseOutcome::ambiguous(std::move(in_range), "bare_integer");
  return ParseOutcome::unparsable("none");
}

std::vector<JudgeVerdict> parse_verdicts(const std::vector<RawVerdict>& raw, const Rubric& rubric,
                                         const ParserConfig& cfg) {
  std::vector<JudgeVerdict> out;
  out.reserve(raw.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : raw) {
    if (!seen.emplace(r.sample_id, r.judge_id).second) {
      throw ValidationError("DuplicateId", "verdict repeated for (" + r.sample_id + ", " + r.judge_id + ")");
    }
    JudgeVerdict v{r.sample_id, r.judge_id, r,
                   r.failed ? ParseOutcome::unparsable("judge_failed") : extract_score(r.raw_output, rubric, cfg)};
    out.push_back(std::move(v));
  }
  return out;
}

JudgeVerdict resolve_manual(const JudgeVerdict& verdict, int score, const Rubric& rubric) {
  if (verdict.outcome.is_valid()) {
    throw ValidationError("AlreadyValid", "(" + verdict.sample_id + ", " + verdict.judge_id + ") already has a valid score");
  }
  if (!rubric.in_range(score)) {
    throw ValidationError("OutOfRange", "score " + std::to_string(score) + " outside 0.." +
                                            std::to_string(rubric.max_score()));
  }
  JudgeVerdict out = verdict;
  out.outcome = ParseOutcome::valid(score, "manual");
  return out;
}

json outcome_to_json(const ParseOutcome& outcome) {
  json j{{"outcome", std::string(outcome.kind())}};
  if (const auto* v = std::get_if<Valid>(&outcome.value)) j["score"] = v->score;
  if (const auto* a = std::get_if<Ambiguous>(&outcome.value)) j["candidates"] = a->candidates;
  j["rule"] = outcome.rule;
  return j;
}

ParseOutcome outcome_from_json(const json& obj, std::string_view context) {
  const auto kind = require_string(obj, "outcome", context);
  std::string rule = obj.contains("rule") && obj["rule"].is_string() ? obj["rule"].get<std::string>() : "none";
  if (kind == "valid") return ParseOutcome::valid(static_cast<int>(require_int(obj, "score", context)), rule);
  if (kind == "ambiguous") {
    const auto& c = require_field(obj, "candidates", context);
    if (!c.is_array()) throw ParseError(std::string(context) + ": candidates must be a list");
    return ParseOutcome::ambiguous(c.get<std::set<int>>(), rule);
  }
  if (kind == "unparsable") return ParseOutcome::unparsable(rule);
  throw ParseError(std::string(context) + ": unknown outcome '" + kind + "'");
}

void write_parsed(const std::filesystem::path& path, const std::vector<JudgeVerdict>& verdicts) {
  std::vector<json> rows;
  rows.reserve(verdicts.size());
  for (const auto& v : verdicts) {
    json row{{"sample_id", v.sample_id},
             {"judge_id", v.judge_id},
             {"raw_output", v.raw.raw_output},
             {"latency_s", v.raw.latency_s},
             {"attempt_count", v.raw.attempt_count},
             {"failed", v.raw.failed}};
    row.update(outcome_to_json(v.outcome));
    rows.push_back(std::move(row));
  }
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<JudgeVerdict> load_parsed(const std::filesystem::path& path) {
  std::vector<JudgeVerdict> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string ctx = path.string() + ": row " + std::to_string(i + 1);
    JudgeVerdict v;
    v.sample_id = require_string(row, "sample_id", ctx);
    v.judge_id = require_string(row, "judge_id", ctx);
    v.raw.sample_id = v.sample_id;
    v.raw.judge_id = v.judge_id;
    v.raw.raw_output = require_string(row, "raw_output", ctx);
    v.raw.latency_s = row.value("latency_s", 0.0);
    v.raw.attempt_count = row.value("attempt_count", 1);
    v.raw.failed = row.value("failed", false);
    v.outcome = outcome_from_json(row, ctx);
    out.push_back(std::move(v));
  }
  return out;
}

void write_manual_queue(const std::filesystem::path& path, const std::vector<JudgeVerdict>& verdicts) {
  std::vector<json> rows;
  for (const auto& v : verdicts) {
    if (v.outcome.is_valid()) continue;
    std::set<int> candidates;
    if (const auto* a = std::get_if<Ambiguous>(&v.outcome.value)) candidates = a->candidates;
    rows.push_back(json{{"sample_id", v.sample_id},
                        {"judge_id", v.judge_id},
                        {"raw_output", v.raw.raw_output},
                        {"candidates", candidates}});
  }
  write_file_atomic(path, to_jsonl(rows));
}

std::size_t apply_manual_resolutions(std::vector<JudgeVerdict>& verdicts, const std::filesystem::path& edited_queue,
                                     const Rubric& rubric) {
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < verdicts.size(); ++i) index[{verdicts[i].sample_id, verdicts[i].judge_id}] = i;

  std::size_t applied = 0;
  const auto rows = read_jsonl(edited_queue);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string ctx = edited_queue.string() + ": row " + std::to_string(r + 1);
    if (!row.contains("score") || row["score"].is_null()) continue;
    const auto key = std::make_pair(require_string(row, "sample_id", ctx), require_string(row, "judge_id", ctx));
    const auto it = index.find(key);
    if (it == index.end()) {
      throw ValidationError("UnknownVerdict", ctx + ": no verdict for (" + key.first + ", " + key.second + ")");
    }
    const auto score = require_int(row, "score", ctx);
    auto& v = verdicts[it->second];
    if (v.outcome.rule == "manual" && v.outcome.score() == score) continue;  // already applied
    v = resolve_manual(v, static_cast<int>(std::clamp<long long>(score, -1, 1'000'000)), rubric);
    ++applied;
  }
  return applied;
}

}  // namespace perq
