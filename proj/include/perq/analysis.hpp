#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perq/aggregate.hpp"
#include "perq/corpus.hpp"
#include "perq/dataset.hpp"

namespace perq {

enum class Facet { Generator, PType, Language, Platform };
enum class Scope { TestSplit, AllData };
enum class LabelSource { MajorityLabels, MetricPredictions };

std::string_view to_string(Facet f);    // generator, ptype, language, platform
std::string_view to_string(Scope s);    // test, all
std::string_view to_string(LabelSource s);  // majority, metric
Facet parse_facet(std::string_view s);
Scope parse_scope(std::string_view s);

inline constexpr Facet kAllFacets[] = {Facet::Generator, Facet::PType, Facet::Language, Facet::Platform};

/// One sample's coordinates, its score (nullopt = NA) and split membership.
struct ScoredSample {
  GenerationTask task;
  std::optional<int> score;
  SplitRole role = SplitRole::Unused;
};

std::string facet_value(const GenerationTask& task, Facet facet);

struct FacetGroup {
  std::string value;
  ScoreDistribution distribution;  // NA excluded, so relative values sum to 1
  std::size_t na_count = 0;
  std::size_t members() const { return distribution.total + na_count; }
};

struct FacetBreakdown {
  Facet facet = Facet::Generator;
  Scope scope = Scope::AllData;
  LabelSource source = LabelSource::MajorityLabels;
  std::vector<FacetGroup> groups;  // sorted by value
};

/// Errors: ValidationError codes MissingFacet (empty coordinate) and
/// EmptyScope (no sample in scope).
FacetBreakdown facet_breakdown(std::span<const ScoredSample> rows, Facet facet, Scope scope, LabelSource source,
                               int num_levels);

/// Distribution over the whole scope, NA excluded.
ScoreDistribution scope_distribution(std::span<const ScoredSample> rows, Scope scope, int num_levels);

/// Half the L1 distance between two NA-free distributions.
double total_variation(const ScoreDistribution& p, const ScoreDistribution& q);

struct DivergenceRow {
  std::string value;
  std::optional<double> tv;  // undefined when either side has no scored sample
  std::size_t members_a = 0;
  std::size_t members_b = 0;
};

struct DivergenceTable {
  Facet facet = Facet::Generator;
  std::vector<DivergenceRow> rows;
  double mean_tv = 0.0;
};

/// Per facet value TV distance. Both breakdowns need the same facet and facet
/// values, and must share either scope (two label sources) or source (two
/// scopes, the full-data ablation). Otherwise ValidationError("FacetMismatch").
DivergenceTable compare_breakdowns(const FacetBreakdown& a, const FacetBreakdown& b);

/// CSV rows facet,facet_value,source,scope,score,count,fraction; one NA row
/// per value carries the excluded count with an empty fraction.
std::string breakdown_csv(const FacetBreakdown& b);
std::string breakdown_svg(const FacetBreakdown& b);
std::string breakdown_stem(const FacetBreakdown& b);  // e.g. "platform_metric_test"

/// Writes <stem>.csv and <stem>.svg per breakdown plus report.html.
/// Returns the written paths in order.
std::vector<std::filesystem::path> emit_report(const std::vector<FacetBreakdown>& breakdowns,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<DivergenceTable>& divergences = {});

}  // namespace perq
