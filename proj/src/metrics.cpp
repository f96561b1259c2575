#include "perq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "perq/error.hpp"

namespace perq {

namespace {

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ValidationError("LengthMismatch", "lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
  }
  if (a == 0) throw ValidationError("EmptyInput", "no observations");
}

void check_labels(std::span<const int> v, int num_labels) {
  for (int l : v) {
    if (l < 0 || l >= num_labels) {
      throw ValidationError("LabelOutOfRange", "label " + std::to_string(l) + " outside 0.." + std::to_string(num_labels - 1));
    }
  }
}

}  // namespace

double accuracy(std::span<const int> pred, std::span<const int> gold) {
  check_pair(pred.size(), gold.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> gold, int num_labels) {
  check_pair(pred.size(), gold.size());
  check_labels(pred, num_labels);
  check_labels(gold, num_labels);
  ConfusionMatrix m(static_cast<std::size_t>(num_labels), std::vector<std::size_t>(static_cast<std::size_t>(num_labels), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++m[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
  return m;
}

std::vector<double> per_label_f1(std::span<const int> pred, std::span<const int> gold, int num_labels) {
  const auto m = confusion(pred, gold, num_labels);
  std::vector<double> f1(static_cast<std::size_t>(num_labels), 0.0);
  for (std::size_t l = 0; l < m.size(); ++l) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      predicted += m[k][l];
      actual += m[l][k];
    }
    const double tp = static_cast<double>(m[l][l]);
    // F1 = 2TP / (|pred| + |gold|); zero when both are empty.
    if (predicted + actual > 0) f1[l] = 2.0 * tp / static_cast<double>(predicted + actual);
  }
  return f1;
}

double macro_f1(std::span<const int> pred, std::span<const int> gold, int num_labels) {
  const auto f1 = per_label_f1(pred, gold, num_labels);
  return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x.size(), y.size());
  if (x.size() < 2) throw ValidationError("EmptyInput", "spearman needs at least 2 points");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("ConstantInput", "spearman undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MetricReport evaluate(std::span<const int> pred, std::span<const int> gold, int num_labels) {
  MetricReport r;
  r.confusion = confusion(pred, gold, num_labels);
  r.n = pred.size();
  r.accuracy = accuracy(pred, gold);
  r.macro_f1 = macro_f1(pred, gold, num_labels);
  std::vector<double> px(pred.begin(), pred.end()), gy(gold.begin(), gold.end());
  try {
    r.spearman = spearman(px, gy);
  } catch (const ValidationError& e) {
    if (e.code() != "ConstantInput" && e.code() != "EmptyInput") throw;
  }
  return r;
}

json to_json(const MetricReport& r) {
  return json{{"accuracy", r.accuracy},
              {"macro_f1", r.macro_f1},
              {"spearman", r.spearman ? json(*r.spearman) : json(nullptr)},
              {"confusion", r.confusion},
              {"n", r.n}};
}

std::string report_table(const MetricReport& r) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10zu\n", "n", r.n);
  out += line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "accuracy", r.accuracy);
  out += line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "macro_f1", r.macro_f1);
  out += line;
  if (r.spearman) {
    std::snprintf(line, sizeof line, "%-12s %10.4f\n", "spearman", *r.spearman);
  } else {
    std::snprintf(line, sizeof line, "%-12s %10s\n", "spearman", "undefined");
  }
  out += line;
  out += "confusion (rows gold, cols pred)\n";
  for (const auto& row : r.confusion) {
    for (auto c : row) {
      std::snprintf(line, sizeof line, "%8zu", c);
      out += line;
    }
    out += '\n';
  }
  return out;
}

}  // namespace perq
