#include <gtest/gtest.h>

#include "perq/io.hpp"
#include "perq/rubric.hpp"
#include "support.hpp"

using namespace perq;
using perq::test::error_code;

namespace {

json minimal_doc() {
  return json{{"format_version", 1},
              {"metric_name", "toy"},
              {"prompt_template", "Rate {text} for {target}.\n{rubric}\nScore: <number>"},
              {"levels",
               json::array({json{{"score", 0}, {"title", "bad"}, {"criteria", {"nothing"}}},
                            json{{"score", 1}, {"title", "good"}, {"criteria", {"something", "more"}}}})}};
}

}  // namespace

TEST(Rubric, BundledRubricHasFourLevels) {
  const auto& r = bundled_perq_rubric();
  EXPECT_EQ(r.metric_name(), "perq");
  EXPECT_EQ(r.num_levels(), 4);
  EXPECT_EQ(r.max_score(), 3);
  EXPECT_TRUE(r.in_range(0));
  EXPECT_TRUE(r.in_range(3));
  EXPECT_FALSE(r.in_range(4));
  EXPECT_FALSE(r.in_range(-1));
}

TEST(Rubric, BundledMatchesDataFile) {
  EXPECT_EQ(load_rubric(std::string(PERQ_TEST_DATA_DIR) + "/perq.rubric"), bundled_perq_rubric());
}

TEST(Rubric, RenderLevelsLayout) {
  const auto r = parse_rubric(minimal_doc().dump());
  EXPECT_EQ(render_levels(r), "0 - bad\n   - nothing\n1 - good\n   - something\n   - more");
}

TEST(Rubric, RenderPromptSubstitutesOnce) {
  const auto r = parse_rubric(minimal_doc().dump());
  const auto p = render_prompt(r, "literal {rubric} inside", "Twitter/X");
  EXPECT_NE(p.find("Rate literal {rubric} inside for Twitter/X."), std::string::npos);
  EXPECT_NE(p.find("1 - good"), std::string::npos);
  EXPECT_EQ(p.find("{text}"), std::string::npos);
}

TEST(Rubric, EmptyTextRejected) {
  EXPECT_THROW(render_prompt(bundled_perq_rubric(), "", "Signal"), ValidationError);
}

TEST(Rubric, ValidationFailures) {
  auto doc = minimal_doc();
  doc["levels"][1]["score"] = 2;
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);

  doc = minimal_doc();
  doc["levels"].erase(1);
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);

  doc = minimal_doc();
  doc["prompt_template"] = "{text} {text} {rubric} {target}";
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);

  doc = minimal_doc();
  doc["prompt_template"] = "{text} {rubric}";
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);

  doc = minimal_doc();
  doc["levels"][0]["title"] = "";
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);

  doc = minimal_doc();
  doc["format_version"] = 2;
  EXPECT_THROW(parse_rubric(doc.dump()), Error);

  EXPECT_THROW(parse_rubric("{not json"), ParseError);
}

TEST(Rubric, LevelsOutOfOrderRejected) {
  auto doc = minimal_doc();
  std::swap(doc["levels"][0], doc["levels"][1]);
  EXPECT_THROW(parse_rubric(doc.dump()), ValidationError);
}
