#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace perq {

struct RubricLevel {
  int score = 0;
  std::string title;
  std::vector<std::string> criteria;

  bool operator==(const RubricLevel&) const = default;
};

/// An ordered single-axis scoring scheme and the judge prompt built from it.
///
/// Levels are consecutive integers starting at 0. The prompt template holds
/// each of {rubric}, {text} and {target} exactly once.
class Rubric {
 public:
  static constexpr int kFormatVersion = 1;

  Rubric(std::string metric_name, std::vector<RubricLevel> levels, std::string prompt_template);

  const std::string& metric_name() const noexcept { return metric_name_; }
  const std::vector<RubricLevel>& levels() const noexcept { return levels_; }
  const std::string& prompt_template() const noexcept { return prompt_template_; }

  int num_levels() const noexcept { return static_cast<int>(levels_.size()); }
  int min_score() const noexcept { return 0; }
  int max_score() const noexcept { return num_levels() - 1; }
  bool in_range(long long score) const noexcept { return score >= 0 && score <= max_score(); }

  bool operator==(const Rubric&) const = default;

 private:
  std::string metric_name_;
  std::vector<RubricLevel> levels_;
  std::string prompt_template_;
};

/// Parses a rubric document (JSON, format_version 1).
Rubric parse_rubric(std::string_view document, std::string_view origin = "<rubric>");
Rubric load_rubric(const std::filesystem::path& path);

/// The 4-level personalization-quality rubric compiled into the library.
const Rubric& bundled_perq_rubric();

/// Schema block as inserted for {rubric}: "<score> - <title>" followed by
/// one "   - <criterion>" line per criterion.
std::string render_levels(const Rubric& rubric);

/// Fills the template in a single pass, so placeholder-like strings inside
/// `text` or `target` are never expanded. `text` must be nonempty.
std::string render_prompt(const Rubric& rubric, std::string_view text, std::string_view target);

}  // namespace perq
