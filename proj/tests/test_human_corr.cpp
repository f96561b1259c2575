#include <gtest/gtest.h>

#include "perq/human_corr.hpp"
#include "perq/io.hpp"
#include "perq/rng.hpp"
#include "perq/rubric.hpp"
#include "support.hpp"

using namespace perq;
using perq::test::error_code;
using perq::test::TempDir;

namespace {
std::map<std::string, MajorityLabel> humans(const std::vector<std::pair<std::string, int>>& labels) {
  std::map<std::string, MajorityLabel> out;
  for (const auto& [id, l] : labels) {
    MajorityLabel m;
    m.sample_id = id;
    m.label = l;
    out.emplace(id, m);
  }
  return out;
}
}  // namespace

TEST(HumanMajority, Examples) {
  ExternalLabelSet set;
  set.scores = {{"a", {2, 2, 2, 2, 3}}, {"b", {0, 1, 2, 3, 3}}, {"c", {0, 1, 2, 3}}, {"d", {1}}};
  const auto m = human_majority(set);
  EXPECT_EQ(m.at("a").label, 2);
  EXPECT_EQ(m.at("b").label, 3);
  EXPECT_EQ(m.at("c").label, 0);
  EXPECT_EQ(m.at("c").decided_by, DecidedBy::LowestFallback);
  EXPECT_FALSE(m.at("d").label.has_value());
  EXPECT_EQ(m.at("a").votes.size(), 5u);
}

TEST(HumanMajority, Errors) {
  ExternalLabelSet set;
  EXPECT_EQ(error_code([&] { human_majority(set); }), "EmptyInput");
  set.scores = {{"a", {4}}};
  EXPECT_EQ(error_code([&] { human_majority(set); }), "OutOfRange");
}

TEST(ExternalLabels, LoadFromFile) {
  TempDir dir;
  write_file_atomic(dir / "h.jsonl", "{\"sample_id\": \"x\", \"scores\": [1, 1, 2]}\n{\"sample_id\": \"y\", \"scores\": [3]}\n");
  const auto rubric = load_rubric(std::string(PERQ_TEST_DATA_DIR) + "/perq.rubric");
  const auto set = load_external_labels(dir / "h.jsonl", rubric);
  EXPECT_EQ(set.scores.at("x"), (std::vector<int>{1, 1, 2}));
  EXPECT_EQ(set.num_levels, 4);
  write_file_atomic(dir / "dup.jsonl", "{\"sample_id\": \"x\", \"scores\": [1]}\n{\"sample_id\": \"x\", \"scores\": [2]}\n");
  EXPECT_EQ(error_code([&] { load_external_labels(dir / "dup.jsonl", rubric); }), "DuplicateId");
  write_file_atomic(dir / "bad.jsonl", "{\"sample_id\": \"x\", \"scores\": [\"2\"]}\n");
  EXPECT_THROW(load_external_labels(dir / "bad.jsonl", rubric), ParseError);
}

TEST(CorrelateExternal, PerfectAndReversed) {
  const auto h = humans({{"a", 0}, {"b", 1}, {"c", 2}, {"d", 3}});
  std::vector<Prediction> same{{"a", 0, {}}, {"b", 1, {}}, {"c", 2, {}}, {"d", 3, {}}, {"z", 1, {}}};
  const auto r = correlate_external(same, h, 4);
  EXPECT_EQ(r.intersection, 4u);
  EXPECT_DOUBLE_EQ(r.report.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(*r.report.spearman, 1.0);
  std::vector<Prediction> rev{{"a", 3, {}}, {"b", 2, {}}, {"c", 1, {}}, {"d", 0, {}}};
  EXPECT_DOUBLE_EQ(*correlate_external(rev, h, 4).report.spearman, -1.0);
}

TEST(CorrelateExternal, MatchesOracleOnNoisySet) {
  Rng rng(109);
  std::vector<std::pair<std::string, int>> labels;
  std::vector<Prediction> preds;
  std::vector<double> x, y;
  std::vector<int> xi, yi;
  for (int i = 0; i < 109; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", i);
    const int gold = static_cast<int>(rng.below(4));
    int pred = gold;
    if (rng.below(3) == 0) pred = std::clamp(gold + static_cast<int>(rng.below(3)) - 1, 0, 3);
    labels.emplace_back(id, gold);
    preds.push_back({id, pred, {}});
    x.push_back(pred);
    y.push_back(gold);
    xi.push_back(pred);
    yi.push_back(gold);
  }
  // NA human labels drop out of the intersection.
  auto h = humans(labels);
  MajorityLabel na;
  na.sample_id = "zz";
  h.emplace("zz", na);
  preds.push_back({"zz", 2, {}});
  const auto r = correlate_external(preds, h, 4);
  EXPECT_EQ(r.intersection, 109u);
  EXPECT_NEAR(*r.report.spearman, *perq::test::oracle_spearman(x, y), 1e-12);
  const auto direct = evaluate(xi, yi, 4);
  EXPECT_EQ(r.report.accuracy, direct.accuracy);
  EXPECT_EQ(r.report.macro_f1, direct.macro_f1);
  EXPECT_EQ(r.report.confusion, direct.confusion);
}

TEST(CorrelateExternal, Errors) {
  const auto h = humans({{"a", 0}, {"b", 1}});
  EXPECT_EQ(error_code([&] { correlate_external({{"a", 0, {}}, {"q", 1, {}}}, h, 4); }), "InsufficientOverlap");
  EXPECT_EQ(error_code([&] { correlate_external({{"a", 2, {}}, {"b", 2, {}}}, h, 4); }), "ConstantInput");
}
