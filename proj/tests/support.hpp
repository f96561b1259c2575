#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "perq/error.hpp"

namespace perq::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("perq-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Code of the perq::Error thrown by `fn`, or "" when nothing is thrown.
inline std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Brute-force reference implementations, written independently of the
// library: no shared helpers, the most literal formula each time.

struct OracleVote {
  std::optional<int> label;
  std::string decided_by;  // Unanimous, Plurality, LowestFallback, NA
};

inline OracleVote oracle_majority(const std::vector<std::optional<int>>& votes, int max_score) {
  std::vector<int> valid;
  for (const auto& v : votes) {
    if (v) valid.push_back(*v);
  }
  if (valid.size() <= 1) return {std::nullopt, "NA"};
  auto count = [&](int s) { return std::count(valid.begin(), valid.end(), s); };
  for (int s = 0; s <= max_score; ++s) {
    bool strict = count(s) > 0;
    for (int t = 0; t <= max_score; ++t) {
      if (t != s && count(t) >= count(s)) strict = false;
    }
    if (strict) {
      const bool all_same = count(s) == static_cast<long>(valid.size());
      const bool all_valid = valid.size() == votes.size();
      return {s, all_same && all_valid ? "Unanimous" : "Plurality"};
    }
  }
  return {*std::min_element(valid.begin(), valid.end()), "LowestFallback"};
}

inline std::vector<long double> oracle_ranks(const std::vector<double>& v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

/// Spearman as Pearson over average ranks; nullopt when a side is constant.
inline std::optional<double> oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto constant = [](const std::vector<double>& v) { return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end(); };
  if (constant(x) || constant(y)) return std::nullopt;
  const auto rx = oracle_ranks(x), ry = oracle_ranks(y);
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline double oracle_macro_f1(const std::vector<int>& pred, const std::vector<int>& gold, int num_labels) {
  long double sum = 0;
  for (int l = 0; l < num_labels; ++l) {
    long double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == l && gold[i] == l) tp += 1;
      if (pred[i] == l && gold[i] != l) fp += 1;
      if (pred[i] != l && gold[i] == l) fn += 1;
    }
    const long double p = tp + fp > 0 ? tp / (tp + fp) : 0;
    const long double r = tp + fn > 0 ? tp / (tp + fn) : 0;
    sum += p + r > 0 ? 2 * p * r / (p + r) : 0;
  }
  return static_cast<double>(sum / num_labels);
}

}  // namespace perq::test
