#include <gtest/gtest.h>

#include "perq/io.hpp"
#include "perq/parse.hpp"
#include "perq/rng.hpp"
#include "support.hpp"

using namespace perq;
using perq::test::error_code;
using perq::test::TempDir;

namespace {

const Rubric& rubric() { return bundled_perq_rubric(); }

JudgeVerdict verdict(std::string sample, std::string judge, std::string raw) {
  RawVerdict r{sample, judge, raw, 0.0, 1, false};
  return JudgeVerdict{sample, judge, r, extract_score(raw, rubric())};
}

}  // namespace

TEST(ExtractScore, SpecExamples) {
  EXPECT_EQ(extract_score("Score: 2", rubric()), ParseOutcome::valid(2, "labeled"));
  EXPECT_EQ(extract_score("Maybe a 1, possibly a 2.", rubric()), ParseOutcome::ambiguous({1, 2}, "bare_integer"));
  EXPECT_EQ(extract_score("The text reads naturally.", rubric()), ParseOutcome::unparsable());
  EXPECT_EQ(extract_score("I'd say 3 out of 3. Final score: 3", rubric()), ParseOutcome::valid(3, "labeled"));
}

TEST(ExtractScore, FixtureCorpus) {
  const auto rows = read_jsonl(std::string(PERQ_FIXTURE_DIR) + "/parser_cases.jsonl");
  ASSERT_GE(rows.size(), 60u);
  for (const auto& row : rows) {
    const auto input = row["input"].get<std::string>();
    const auto expected = outcome_from_json(row["expected"], "fixture");
    EXPECT_EQ(extract_score(input, rubric()), expected) << "input: " << input;
  }
}

TEST(ExtractScore, FuzzNeverLeavesRange) {
  static const std::string alphabet = "0123456789 /:-.,#*scoreSCOREfinalratingoutof\n3210 ";
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const auto len = rng.below(60);
    for (std::uint64_t k = 0; k < len; ++k) s.push_back(alphabet[rng.below(alphabet.size())]);
    const auto out = extract_score(s, rubric());
    if (auto v = out.score()) {
      ASSERT_TRUE(rubric().in_range(*v)) << s;
    }
    if (const auto* a = std::get_if<Ambiguous>(&out.value)) {
      ASSERT_GE(a->candidates.size(), 2u);
      for (int c : a->candidates) ASSERT_TRUE(rubric().in_range(c));
    }
    ASSERT_EQ(out, extract_score(s, rubric()));
  }
}

TEST(ExtractScore, LocalizedMarkers) {
  ParserConfig cfg;
  cfg.markers = {"bewertung:", "note :"};
  EXPECT_EQ(extract_score("Bewertung: 1, nicht 3", rubric(), cfg), ParseOutcome::valid(1, "labeled"));
  EXPECT_EQ(extract_score("Score: 1, nicht 3", rubric(), cfg).kind(), "ambiguous");
}

TEST(ExtractScore, SmallerRubricRange) {
  const auto two = parse_rubric(json{{"format_version", 1},
                                     {"metric_name", "binary"},
                                     {"prompt_template", "{text}{target}{rubric}"},
                                     {"levels", json::array({json{{"score", 0}, {"title", "no"}, {"criteria", {"a"}}},
                                                             json{{"score", 1}, {"title", "yes"}, {"criteria", {"b"}}}})}}
                                    .dump());
  EXPECT_EQ(extract_score("1/1", two), ParseOutcome::valid(1, "fraction"));
  EXPECT_EQ(extract_score("Score: 2", two), ParseOutcome::unparsable());
  EXPECT_EQ(extract_score("1/3", two), ParseOutcome::valid(1, "bare_integer"));
}

TEST(ResolveManual, SpecExamples) {
  const auto amb = verdict("s", "j", "Maybe a 1, possibly a 2.");
  const auto fixed = resolve_manual(amb, 1, rubric());
  EXPECT_EQ(fixed.outcome, ParseOutcome::valid(1, "manual"));
  EXPECT_EQ(fixed.raw.raw_output, "Maybe a 1, possibly a 2.");
  EXPECT_EQ(error_code([&] { resolve_manual(verdict("s", "j", "Score: 2"), 1, rubric()); }), "AlreadyValid");
  EXPECT_EQ(error_code([&] { resolve_manual(amb, 7, rubric()); }), "OutOfRange");
}

TEST(ParseVerdicts, DuplicatePairRejected) {
  RawVerdict r{"s", "j", "Score: 1", 0.0, 1, false};
  EXPECT_EQ(error_code([&] { parse_verdicts({r, r}, rubric()); }), "DuplicateId");
}

TEST(ParsedFiles, RoundTripAndManualQueue) {
  TempDir dir;
  std::vector<JudgeVerdict> vs = {verdict("a", "j1", "Score: 3"), verdict("a", "j2", "1 or 2"),
                                  verdict("b", "j1", "no idea")};
  write_parsed(dir / "p.jsonl", vs);
  const auto back = load_parsed(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    EXPECT_EQ(back[i].outcome, vs[i].outcome);
    EXPECT_EQ(back[i].raw, vs[i].raw);
  }

  write_manual_queue(dir / "q.jsonl", vs);
  auto queue = read_jsonl(dir / "q.jsonl");
  ASSERT_EQ(queue.size(), 2u);
  EXPECT_EQ(queue[0]["candidates"], json::array({1, 2}));
  EXPECT_EQ(queue[1]["candidates"], json::array());
  queue[0]["score"] = 2;
  write_file_atomic(dir / "edited.jsonl", to_jsonl(queue));
  EXPECT_EQ(apply_manual_resolutions(vs, dir / "edited.jsonl", rubric()), 1u);
  EXPECT_EQ(vs[1].outcome, ParseOutcome::valid(2, "manual"));
  EXPECT_EQ(vs[2].outcome.kind(), "unparsable");

  queue[1]["score"] = 9;
  write_file_atomic(dir / "bad.jsonl", to_jsonl({queue[1]}));
  EXPECT_EQ(error_code([&] { apply_manual_resolutions(vs, dir / "bad.jsonl", rubric()); }), "OutOfRange");
}
