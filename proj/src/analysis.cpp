#include "perq/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "perq/error.hpp"
#include "perq/io.hpp"

namespace perq {

std::string_view to_string(Facet f) {
  switch (f) {
    case Facet::Generator:
      return "generator";
    case Facet::PType:
      return "ptype";
    case Facet::Language:
      return "language";
    case Facet::Platform:
      break;
  }
  return "platform";
}

std::string_view to_string(Scope s) { return s == Scope::TestSplit ? "test" : "all"; }
std::string_view to_string(LabelSource s) { return s == LabelSource::MajorityLabels ? "majority" : "metric"; }

Facet parse_facet(std::string_view s) {
  for (auto f : kAllFacets) {
    if (to_string(f) == s) return f;
  }
  throw ParseError("facet: unknown value '" + std::string(s) + "'");
}

Scope parse_scope(std::string_view s) {
  if (s == "test") return Scope::TestSplit;
  if (s == "all") return Scope::AllData;
  throw ParseError("scope: expected 'test' or 'all', got '" + std::string(s) + "'");
}

std::string facet_value(const GenerationTask& task, Facet facet) {
  switch (facet) {
    case Facet::Generator:
      return task.generator_id;
    case Facet::PType:
      return std::string(to_string(task.ptype));
    case Facet::Language:
      return task.language;
    case Facet::Platform:
      break;
  }
  return task.platform;
}

namespace {

bool in_scope(const ScoredSample& r, Scope scope) { return scope == Scope::AllData || r.role == SplitRole::Test; }

}  // namespace

FacetBreakdown facet_breakdown(std::span<const ScoredSample> rows, Facet facet, Scope scope, LabelSource source,
                               int num_levels) {
  std::map<std::string, std::pair<std::vector<std::size_t>, std::size_t>> groups;
  std::size_t members = 0;
  for (const auto& r : rows) {
    if (!in_scope(r, scope)) continue;
    auto value = facet_value(r.task, facet);
    if (value.empty()) {
      throw ValidationError("MissingFacet", "sample '" + r.task.task_id + "' has no " + std::string(to_string(facet)));
    }
    auto& [counts, na] = groups[value];
    counts.resize(static_cast<std::size_t>(num_levels), 0);
    ++members;
    if (!r.score) {
      ++na;
    } else if (*r.score < 0 || *r.score >= num_levels) {
      throw ValidationError("LabelOutOfRange", r.task.task_id + ": score " + std::to_string(*r.score));
    } else {
      ++counts[static_cast<std::size_t>(*r.score)];
    }
  }
  if (members == 0) throw ValidationError("EmptyScope", "no samples in scope '" + std::string(to_string(scope)) + "'");

  FacetBreakdown out{facet, scope, source, {}};
  for (auto& [value, cn] : groups) {
    out.groups.push_back(FacetGroup{value, ScoreDistribution::from_counts(std::move(cn.first), 0), cn.second});
  }
  return out;
}

ScoreDistribution scope_distribution(std::span<const ScoredSample> rows, Scope scope, int num_levels) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_levels), 0);
  for (const auto& r : rows) {
    if (in_scope(r, scope) && r.score) ++counts.at(static_cast<std::size_t>(*r.score));
  }
  return ScoreDistribution::from_counts(std::move(counts), 0);
}

double total_variation(const ScoreDistribution& p, const ScoreDistribution& q) {
  if (p.num_levels() != q.num_levels()) throw ValidationError("FacetMismatch", "distributions over different scales");
  double sum = 0.0;
  for (int s = 0; s < p.num_levels(); ++s) sum += std::abs(p.relative(s) - q.relative(s));
  return 0.5 * sum;
}

DivergenceTable compare_breakdowns(const FacetBreakdown& a, const FacetBreakdown& b) {
  if (a.facet != b.facet) throw ValidationError("FacetMismatch", "breakdowns over different facets");
  if (a.scope != b.scope && a.source != b.source) {
    throw ValidationError("FacetMismatch", "breakdowns differ in both scope and label source");
  }
  if (a.groups.size() != b.groups.size()) throw ValidationError("FacetMismatch", "facet value sets differ");
  DivergenceTable t;
  t.facet = a.facet;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    const auto& ga = a.groups[i];
    const auto& gb = b.groups[i];
    if (ga.value != gb.value) throw ValidationError("FacetMismatch", "facet value sets differ at '" + ga.value + "'");
    DivergenceRow row{ga.value, std::nullopt, ga.members(), gb.members()};
    if (ga.distribution.total > 0 && gb.distribution.total > 0) {
      row.tv = total_variation(ga.distribution, gb.distribution);
      sum += *row.tv;
      ++defined;
    }
    t.rows.push_back(std::move(row));
  }
  t.mean_tv = defined ? sum / static_cast<double>(defined) : 0.0;
  return t;
}

std::string breakdown_stem(const FacetBreakdown& b) {
  return std::string(to_string(b.facet)) + "_" + std::string(to_string(b.source)) + "_" + std::string(to_string(b.scope));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#d7191c", "#fdae61", "#a6d96a", "#1a9641", "#2b83ba", "#abdda4", "#5e3c99"};

}  // namespace

std::string breakdown_csv(const FacetBreakdown& b) {
  std::string out = "facet,facet_value,source,scope,score,count,fraction\n";
  char num[32];
  const std::string prefix_tail = "," + std::string(to_string(b.source)) + "," + std::string(to_string(b.scope)) + ",";
  for (const auto& g : b.groups) {
    const std::string prefix = std::string(to_string(b.facet)) + "," + csv_field(g.value) + prefix_tail;
    for (int s = 0; s < g.distribution.num_levels(); ++s) {
      std::snprintf(num, sizeof num, "%.6f", g.distribution.relative(s));
      out += prefix + std::to_string(s) + "," + std::to_string(g.distribution.absolute[static_cast<std::size_t>(s)]) +
             "," + num + "\n";
    }
    out += prefix + "NA," + std::to_string(g.na_count) + ",\n";
  }
  return out;
}

std::string breakdown_svg(const FacetBreakdown& b) {
  const int label_w = 140, bar_w = 480, row_h = 26, top = 40, legend_h = 30;
  const int levels = b.groups.empty() ? 0 : b.groups.front().distribution.num_levels();
  const int height = top + static_cast<int>(b.groups.size()) * row_h + legend_h + 10;
  const int width = label_w + bar_w + 80;
  char buf[512];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                width, height);
  svg += buf;
  svg += "<text x=\"10\" y=\"20\" font-size=\"14\">" +
         xml_escape(std::string(to_string(b.facet)) + " / " + std::string(to_string(b.source)) + " / " +
                    std::string(to_string(b.scope))) +
         "</text>\n";
  for (std::size_t i = 0; i < b.groups.size(); ++i) {
    const auto& g = b.groups[i];
    const int y = top + static_cast<int>(i) * row_h;
    std::snprintf(buf, sizeof buf, "<text x=\"10\" y=\"%d\">", y + 16);
    svg += buf + xml_escape(g.value) + "</text>\n";
    double x = label_w;
    for (int s = 0; s < levels; ++s) {
      const double w = g.distribution.relative(s) * bar_w;
      std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%d\" width=\"%.2f\" height=\"%d\" fill=\"%s\"/>\n", x, y + 3, w,
                    row_h - 6, kPalette[s % 7]);
      svg += buf;
      x += w;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\">n=%zu</text>\n", label_w + bar_w + 6, y + 16, g.members());
    svg += buf;
  }
  const int ly = top + static_cast<int>(b.groups.size()) * row_h + 10;
  for (int s = 0; s < levels; ++s) {
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%d\" width=\"12\" height=\"12\" fill=\"%s\"/><text x=\"%d\" y=\"%d\">%d</text>\n",
                  label_w + s * 60, ly, kPalette[s % 7], label_w + s * 60 + 16, ly + 11, s);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_report(const std::vector<FacetBreakdown>& breakdowns,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<DivergenceTable>& divergences) {
  if (breakdowns.empty()) throw ValidationError("emit_report: no breakdowns");
  std::vector<std::filesystem::path> written;
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Score distributions by facet</title>\n"
      "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
      "td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}</style></head><body>\n"
      "<h1>Score distributions by facet</h1>\n";
  char num[32];
  for (const auto& b : breakdowns) {
    const auto stem = breakdown_stem(b);
    const auto csv_path = out_dir / (stem + ".csv");
    const auto svg_path = out_dir / (stem + ".svg");
    const auto svg = breakdown_svg(b);
    write_file_atomic(csv_path, breakdown_csv(b));
    write_file_atomic(svg_path, svg);
    written.push_back(csv_path);
    written.push_back(svg_path);
    html += "<h2>" + xml_escape(stem) + "</h2>\n" + svg;
  }
  if (!divergences.empty()) {
    html += "<h2>Total variation distance</h2>\n";
    for (const auto& t : divergences) {
      html += "<h3>" + std::string(to_string(t.facet)) + "</h3>\n<table><tr><th>value</th><th>TV</th><th>n(a)</th><th>n(b)</th></tr>\n";
      for (const auto& r : t.rows) {
        if (r.tv) {
          std::snprintf(num, sizeof num, "%.4f", *r.tv);
        } else {
          std::snprintf(num, sizeof num, "n/a");
        }
        html += "<tr><td>" + xml_escape(r.value) + "</td><td>" + num + "</td><td>" + std::to_string(r.members_a) +
                "</td><td>" + std::to_string(r.members_b) + "</td></tr>\n";
      }
      std::snprintf(num, sizeof num, "%.4f", t.mean_tv);
      html += "<tr><th>mean</th><td>" + std::string(num) + "</td><td></td><td></td></tr></table>\n";
    }
  }
  html += "</body></html>\n";
  const auto html_path = out_dir / "report.html";
  write_file_atomic(html_path, html);
  written.push_back(html_path);
  return written;
}

}  // namespace perq
