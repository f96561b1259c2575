#include "perq/rubric.hpp"

#include <array>

#include "bundled_rubric.hpp"
#include "perq/error.hpp"
#include "perq/io.hpp"

namespace perq {

namespace {

constexpr std::array<std::string_view, 3> kPlaceholders = {"{rubric}", "{text}", "{target}"};

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

Rubric::Rubric(std::string metric_name, std::vector<RubricLevel> levels, std::string prompt_template)
    : metric_name_(std::move(metric_name)),
      levels_(std::move(levels)),
      prompt_template_(std::move(prompt_template)) {
  if (metric_name_.empty()) throw ValidationError("metric_name: must be nonempty");
  if (levels_.size() < 2) {
    throw ValidationError("levels: need at least 2 levels, got " + std::to_string(levels_.size()));
  }
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const auto& level = levels_[i];
    const std::string where = "levels[" + std::to_string(i) + "]";
    if (level.score != static_cast<int>(i)) {
      throw ValidationError(where + ".score: expected " + std::to_string(i) + " (scores must be consecutive from 0), got " +
                            std::to_string(level.score));
    }
    if (level.title.empty()) throw ValidationError(where + ".title: must be nonempty");
    if (level.criteria.empty()) throw ValidationError(where + ".criteria: need at least one criterion");
    for (const auto& c : level.criteria) {
      if (c.empty()) throw ValidationError(where + ".criteria: empty criterion");
    }
  }
  for (auto placeholder : kPlaceholders) {
    const auto n = count_occurrences(prompt_template_, placeholder);
    if (n != 1) {
      throw ValidationError("prompt_template: placeholder " + std::string(placeholder) + " must appear exactly once, found " +
                            std::to_string(n));
    }
  }
}

Rubric parse_rubric(std::string_view document, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(origin) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(std::string(origin) + ": top level must be an object");

  const auto version = require_int(doc, "format_version", origin);
  if (version != Rubric::kFormatVersion) {
    throw ParseError(std::string(origin) + ": format_version: unsupported version " + std::to_string(version));
  }
  auto name = require_string(doc, "metric_name", origin);
  auto tmpl = require_string(doc, "prompt_template", origin);
  const auto& levels_json = require_field(doc, "levels", origin);
  if (!levels_json.is_array()) throw ParseError(std::string(origin) + ": levels: must be a list");

  std::vector<RubricLevel> levels;
  for (std::size_t i = 0; i < levels_json.size(); ++i) {
    const auto& lj = levels_json[i];
    const std::string ctx = std::string(origin) + ": levels[" + std::to_string(i) + "]";
    RubricLevel level;
    level.score = static_cast<int>(require_int(lj, "score", ctx));
    level.title = require_string(lj, "title", ctx);
    const auto& crit = require_field(lj, "criteria", ctx);
    if (!crit.is_array()) throw ParseError(ctx + ": criteria: must be a list");
    for (const auto& c : crit) {
      if (!c.is_string()) throw ParseError(ctx + ": criteria: entries must be strings");
      level.criteria.push_back(c.get<std::string>());
    }
    levels.push_back(std::move(level));
  }

  // Order is significant in the document; a shuffled or gapped list is rejected
  // by the constructor with the offending index.
  for (std::size_t i = 0; i < levels.size(); ++i) {
    for (std::size_t j = i + 1; j < levels.size(); ++j) {
      if (levels[i].score == levels[j].score) {
        throw ValidationError("levels[" + std::to_string(j) + "].score: duplicate score " +
                              std::to_string(levels[j].score));
      }
    }
  }
  return Rubric(std::move(name), std::move(levels), std::move(tmpl));
}

Rubric load_rubric(const std::filesystem::path& path) { return parse_rubric(read_file(path), path.string()); }

const Rubric& bundled_perq_rubric() {
  static const Rubric rubric = parse_rubric(detail::kBundledRubric, "bundled perq.rubric");
  return rubric;
}

std::string render_levels(const Rubric& rubric) {
  std::string out;
  for (const auto& level : rubric.levels()) {
    out += std::to_string(level.score);
    out += " - ";
    out += level.title;
    out += '\n';
    for (const auto& c : level.criteria) {
      out += "   - ";
      out += c;
      out += '\n';
    }
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string render_prompt(const Rubric& rubric, std::string_view text, std::string_view target) {
  if (text.empty()) throw ValidationError("render_prompt: text must be nonempty");
  const std::string levels = render_levels(rubric);
  const std::string& tmpl = rubric.prompt_template();

  std::string out;
  out.reserve(tmpl.size() + levels.size() + text.size() + target.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool replaced = false;
    if (tmpl[pos] == '{') {
      const std::string_view rest = std::string_view(tmpl).substr(pos);
      if (rest.starts_with("{rubric}")) {
        out += levels;
        pos += 8;
        replaced = true;
      } else if (rest.starts_with("{text}")) {
        out += text;
        pos += 6;
        replaced = true;
      } else if (rest.starts_with("{target}")) {
        out += target;
        pos += 8;
        replaced = true;
      }
    }
    if (!replaced) out += tmpl[pos++];
  }
  return out;
}

}  // namespace perq
