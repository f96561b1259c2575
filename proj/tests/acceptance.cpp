// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "perq/aggregate.hpp"
#include "perq/corpus.hpp"
#include "perq/costing.hpp"
#include "perq/dataset.hpp"
#include "perq/io.hpp"
#include "perq/metrics.hpp"
#include "perq/parse.hpp"
#include "perq/pipeline.hpp"
#include "perq/rng.hpp"
#include "perq/rubric.hpp"
#include "support.hpp"

using namespace perq;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  std::string detail;
  void require(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      why = msg;
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.3f s", s);
  c.require(s < budget_s, "took " + std::string(timing) + ", budget " + std::to_string(budget_s) + " s");
  std::cout << (c.ok ? "PASS " : "FAIL ") << name << " [" << timing << "]";
  if (!c.ok) std::cout << ": " << c.why;
  if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
  std::cout << std::endl;
  failures += !c.ok;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

std::string first_difference(const std::map<std::string, std::string>& a, const std::map<std::string, std::string>& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) return k + " missing on one side";
    if (it->second != v) return k + " differs";
  }
  if (a.size() != b.size()) return "file sets differ";
  return "";
}

ProjectConfig demo_config(const fs::path& out) {
  auto cfg = load_project_config(std::string(PERQ_TEST_DATA_DIR) + "/demo_config.json");
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

int main() {
  perq::test::TempDir scratch;

  criterion("majority-vote rule matches brute force on all three-judge quorums", 1.0, [](Check& c) {
    int cases = 0;
    auto check = [&](const std::vector<ParseOutcome>& votes) {
      std::vector<std::optional<int>> plain;
      for (const auto& v : votes) plain.push_back(v.score());
      const auto want = perq::test::oracle_majority(plain, 3);
      const auto got = majority_vote(votes);
      c.require(got.label == want.label && std::string(to_string(got.decided_by)) == want.decided_by,
                "disagreement on case " + std::to_string(cases));
      ++cases;
    };
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int d = 0; d < 4; ++d)
          check({ParseOutcome::valid(a, "labeled"), ParseOutcome::valid(b, "labeled"), ParseOutcome::valid(d, "labeled")});
    for (int slot = 0; slot < 3; ++slot)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          std::vector<ParseOutcome> votes{ParseOutcome::valid(a, "labeled"), ParseOutcome::valid(b, "labeled")};
          votes.insert(votes.begin() + slot, ParseOutcome::unparsable());
          check(votes);
        }
    c.require(cases == 64 + 48, "case count " + std::to_string(cases));
    const auto lowest = majority_vote(
        {ParseOutcome::valid(0, "labeled"), ParseOutcome::valid(1, "labeled"), ParseOutcome::valid(2, "labeled")});
    c.require(lowest.label == 0 && lowest.decided_by == DecidedBy::LowestFallback, "(0,1,2) must give 0");
  });

  criterion("corpus label distribution from absolute counts", 1.0, [](Check& c) {
    const auto d = ScoreDistribution::from_counts({6874, 2813, 11360, 4135}, 18);
    c.require(d.total == 25200, "total " + std::to_string(d.total));
    const double want[] = {0.2728, 0.1116, 0.4508, 0.1641};
    for (int s = 0; s < 4; ++s) {
      c.require(std::abs(d.relative(s) - want[s]) <= 5e-5, "score " + std::to_string(s) + ": " + fmt(d.relative(s)));
    }
    c.require(std::abs(d.relative_na() - 0.0007) <= 5e-5, "NA: " + fmt(d.relative_na()));
  });

  criterion("inference cost ratios from the bundled fixture", 1.0, [](Check& c) {
    const auto h = headline_ratios(load_cost_fixture(default_cost_fixture()));
    c.require(std::abs(h.single.time_ratio - 5.97) < 0.005, "single time " + fmt(h.single.time_ratio));
    c.require(h.single.time_ratio >= 5.5 && h.single.time_ratio < 6.5, "single time outside [5.5, 6.5)");
    c.require(h.single.memory_ratio && std::abs(*h.single.memory_ratio - 12.28) < 0.005 && *h.single.memory_ratio >= 12,
              "memory ratio");
    c.require(h.quorum.time_ratio >= 96 && h.quorum.time_ratio < 97, "quorum " + fmt(h.quorum.time_ratio));
    c.require(std::abs(h.quorum.time_ratio - 96.5) < 0.05, "quorum " + fmt(h.quorum.time_ratio));
  });

  criterion("generation matrix cardinality", 1.0, [](Check& c) {
    const auto axes = default_axes();
    c.require(axes.languages.size() == 7 && axes.ptypes.size() == 2 && axes.platforms.size() == 3 &&
                  axes.generators.size() == 6 && axes.samples_per_cell == 100,
              "default axes");
    const auto tasks = build_matrix(axes);
    c.require(tasks.size() == 25200, "got " + std::to_string(tasks.size()));
    std::set<std::string> ids;
    for (const auto& t : tasks) ids.insert(t.task_id);
    c.require(ids.size() == 25200, "task ids not unique");
  });

  criterion("split quota feasibility against the smallest label", 10.0, [](Check& c) {
    std::vector<LabeledSample> data;
    const std::size_t counts[] = {6874, 2813, 11360, 4135};
    int n = 0;
    auto add = [&](std::optional<int> label) {
      LabeledSample ls;
      ls.sample.sample_id = "s" + std::to_string(100000 + n++);
      ls.sample.text = "t";
      ls.label = label;
      data.push_back(std::move(ls));
    };
    for (int l = 0; l < 4; ++l)
      for (std::size_t i = 0; i < counts[l]; ++i) add(l);
    for (int i = 0; i < 18; ++i) add(std::nullopt);

    SplitConfig cfg;
    c.require(cfg.per_label_total() == 2800, "default per-label total");
    const auto a = make_split(data, cfg, 4);
    std::map<SplitRole, std::size_t> roles;
    for (const auto& [_, r] : a) ++roles[r];
    c.require(roles[SplitRole::Train] == 5200 && roles[SplitRole::Val] == 2000 && roles[SplitRole::Test] == 4000,
              "split totals");
    cfg.per_label_test += 14;  // 2814
    try {
      make_split(data, cfg, 4);
      c.require(false, "quota 2814 accepted");
    } catch (const InsufficientLabel& e) {
      c.require(e.label == 1 && e.have == 2813 && e.need == 2814, e.what());
    }
  });

  criterion("rank correlation and macro-F1 match brute force", 1.0, [](Check& c) {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 2 + static_cast<int>(rng.below(7));
      std::vector<int> p(n), g(n);
      for (int i = 0; i < n; ++i) {
        p[i] = static_cast<int>(rng.below(4));
        g[i] = static_cast<int>(rng.below(4));
      }
      c.require(std::abs(macro_f1(p, g, 4) - perq::test::oracle_macro_f1(p, g, 4)) <= 1e-12, "macro-F1 trial");
      const std::vector<double> x(p.begin(), p.end()), y(g.begin(), g.end());
      const auto want = perq::test::oracle_spearman(x, y);
      if (want) c.require(std::abs(spearman(x, y) - *want) <= 1e-12, "spearman trial " + std::to_string(trial));
    }
    const double s = spearman(std::vector<double>{2, 2, 3, 0}, std::vector<double>{2, 3, 3, 0});
    c.require(std::abs(s - 5.0 / 6.0) <= 1e-12 && std::abs(s - 0.8333) < 5e-5, "worked spearman " + fmt(s));
    const double f = macro_f1(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 1, 2, 3}, 4);
    c.require(std::abs(f - 2.0 / 3.0) <= 1e-12 && std::abs(f - 0.6667) < 5e-5, "worked macro-F1 " + fmt(f));
  });

  criterion("classifier gradient matches central finite differences", 5.0, [](Check& c) {
    FeatureConfig fc;
    fc.hash_dim = 64;
    auto model = BaselineModel::zeros(fc, 4);
    Rng rng(1);
    for (auto& w : model.weights) w = rng.uniform() - 0.5;
    for (auto& b : model.bias) b = rng.uniform() - 0.5;
    std::vector<SparseVector> xs;
    std::vector<int> ys;
    const char* texts[] = {"Share this! #city", "a calm report", "\U0001F525\U0001F525 look", "ok", "Like and follow"};
    for (int i = 0; i < 5; ++i) {
      xs.push_back(featurize(texts[i], fc));
      ys.push_back((i * 3) % 4);
    }
    Gradient g;
    objective(model, xs, ys, 1e-2, &g);
    double diff = 0, norm = 0;
    auto probe = [&](double& param, double analytic) {
      const double keep = param, h = 1e-5;
      param = keep + h;
      const double up = objective(model, xs, ys, 1e-2);
      param = keep - h;
      const double down = objective(model, xs, ys, 1e-2);
      param = keep;
      const double num = (up - down) / (2 * h);
      diff += (num - analytic) * (num - analytic);
      norm += num * num + analytic * analytic;
    };
    for (std::size_t k = 0; k < model.weights.size(); ++k) probe(model.weights[k], g.weights[k]);
    for (std::size_t k = 0; k < model.bias.size(); ++k) probe(model.bias[k], g.bias[k]);
    const double rel = std::sqrt(diff) / std::sqrt(norm);
    c.require(rel < 1e-5, "relative error " + fmt(rel));
  });

  // The demo run feeds the remaining pipeline criteria.
  const auto run_a = scratch / "demo_a";
  const auto run_b = scratch / "demo_b";
  criterion("end-to-end synthetic run beats chance and ranks well", 300.0, [&](Check& c) {
    std::ostringstream log;
    Pipeline p(demo_config(run_a), log);
    for (const auto& j : p.config().judges) c.require(j.noise_p == 0.1, "judge noise_p");
    p.run_all();
    const auto stats = read_json(p.paths().label_stats());
    for (int l = 0; l < 4; ++l) {
      const auto n = stats.at("absolute").at(l).get<std::size_t>();
      c.require(n >= 400, "label " + std::to_string(l) + " has " + std::to_string(n) + " samples");
    }
    const auto report = read_json(p.paths().report());
    const double acc = report.at("accuracy").get<double>();
    c.require(acc > 0.60, "accuracy " + fmt(acc));
    c.require(!report.at("spearman").is_null() && report.at("spearman").get<double>() > 0.6,
              "spearman " + report.at("spearman").dump());
    std::ostringstream log_b;
    Pipeline q(demo_config(run_b), log_b);
    q.run_all();
    c.require(read_file(q.paths().report()) == read_file(p.paths().report()), "report differs across runs");
    c.require(read_file(q.paths().predictions()) == read_file(p.paths().predictions()), "predictions differ");
    c.detail = "accuracy " + fmt(acc) + ", spearman " + fmt(report.at("spearman").get<double>()) + ", macro-F1 " +
               fmt(report.at("macro_f1").get<double>());
  });

  criterion("score parser fixture suite and fuzzing", 10.0, [](Check& c) {
    const auto& rubric = bundled_perq_rubric();
    const auto rows = read_jsonl(std::string(PERQ_FIXTURE_DIR) + "/parser_cases.jsonl");
    c.require(rows.size() >= 60, "fixture has " + std::to_string(rows.size()) + " cases");
    std::size_t agree = 0;
    for (const auto& row : rows) agree += extract_score(row.at("input").get<std::string>(), rubric) ==
                                          outcome_from_json(row.at("expected"), "fixture");
    c.require(agree == rows.size(), std::to_string(agree) + "/" + std::to_string(rows.size()) + " fixture cases agree");
    Rng rng(4242);
    for (int i = 0; i < 10000; ++i) {
      std::string s;
      const auto len = rng.below(80);
      for (std::uint64_t k = 0; k < len; ++k) s.push_back(static_cast<char>(1 + rng.below(127)));
      if (const auto v = extract_score(s, rubric).score()) c.require(rubric.in_range(*v), "fuzz produced " + std::to_string(*v));
    }
  });

  criterion("rerunning the pipeline reproduces every artifact byte for byte", 300.0, [&](Check& c) {
    const auto before = snapshot(run_a);
    c.require(!before.empty(), "no artifacts from the end-to-end run");
    const auto d = first_difference(before, snapshot(run_b));
    c.require(d.empty(), "independent runs: " + d);
    // Drop the stage stamps so every stage recomputes in place.
    fs::remove_all(run_a / "stages");
    std::ostringstream log;
    Pipeline p(demo_config(run_a), log);
    const auto outcomes = p.run_all();
    for (const auto& o : outcomes) c.require(!o.skipped, o.stage + " skipped");
    const auto d2 = first_difference(before, snapshot(run_a));
    c.require(d2.empty(), "rerun: " + d2);
  });

  criterion("test-split and full-data label breakdowns agree per facet value", 5.0, [&](Check& c) {
    const auto tables = read_json(run_a / "analysis" / "divergence.json");
    int checked = 0;
    double worst = 0;
    for (const auto& t : tables) {
      if (t.at("comparison") != "majority_test_vs_majority_all") continue;
      for (const auto& r : t.at("rows")) {
        if (std::min(r.at("members_a").get<std::size_t>(), r.at("members_b").get<std::size_t>()) < 200) continue;
        ++checked;
        const double tv = r.at("tv").get<double>();
        worst = std::max(worst, tv);
        c.require(tv < 0.1, t.at("facet").get<std::string>() + "=" + r.at("value").get<std::string>() + " TV " + fmt(tv));
      }
    }
    c.require(checked > 0, "no facet value with at least 200 members");
    c.detail = std::to_string(checked) + " facet values checked, max TV " + fmt(worst);
  });

  return failures == 0 ? 0 : 1;
}
