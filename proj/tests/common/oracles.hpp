#pragma once

// Definitional reference evaluators, written without sharing code with the
// library: linear scans, exhaustive permutations, string sets.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gst/evalkit/metrics.hpp"
#include "gst/numkit/rng.hpp"

namespace testutil {

struct BruteMetrics {
  double ndcg = 0, mrr = 0, r1 = 0, r5 = 0, r10 = 0, mean_rank = 0;
  std::size_t excluded = 0;
};

inline int scan_rank(const std::vector<int>& perm, int gt) {
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (perm[i] == gt) return static_cast<int>(i) + 1;
  return -1;
}

inline double dcg_at(const std::vector<double>& rel, const std::vector<int>& order, std::size_t k) {
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += rel[order[i]] / std::log2(static_cast<double>(i) + 2.0);
  return s;
}

/// NDCG truncated at the number of positive relevances; the ideal DCG is the
/// maximum over every ordering (candidate counts must stay small).
inline BruteMetrics brute_metrics(const std::vector<gst::evalkit::RankResult>& results) {
  BruteMetrics m;
  double ndcg_sum = 0;
  std::size_t evaluated = 0;
  for (const auto& r : results) {
    const int rank = scan_rank(r.permutation, r.gt_index);
    m.mrr += 1.0 / rank;
    m.r1 += rank <= 1 ? 1 : 0;
    m.r5 += rank <= 5 ? 1 : 0;
    m.r10 += rank <= 10 ? 1 : 0;
    m.mean_rank += rank;
    std::size_t k = 0;
    for (double x : r.relevance) k += x > 0 ? 1 : 0;
    if (k == 0) {
      ++m.excluded;
      continue;
    }
    std::vector<int> order(r.relevance.size());
    std::iota(order.begin(), order.end(), 0);
    double ideal = 0;
    do {
      ideal = std::max(ideal, dcg_at(r.relevance, order, k));
    } while (std::next_permutation(order.begin(), order.end()));
    ndcg_sum += dcg_at(r.relevance, r.permutation, k) / ideal;
    ++evaluated;
  }
  const double n = static_cast<double>(results.size());
  m.mrr = 100 * m.mrr / n;
  m.r1 = 100 * m.r1 / n;
  m.r5 = 100 * m.r5 / n;
  m.r10 = 100 * m.r10 / n;
  m.mean_rank /= n;
  m.ndcg = evaluated ? 100 * ndcg_sum / static_cast<double>(evaluated) : 0.0;
  return m;
}

/// Random round: C in [1, 7], relevance from {0, 0.5, 1} with one 1.0.
inline gst::evalkit::RankResult random_round(gst::numkit::Rng& rng, int max_c = 7) {
  gst::evalkit::RankResult r;
  const int c = 1 + static_cast<int>(rng.uniform_int(max_c));
  r.permutation.resize(c);
  std::iota(r.permutation.begin(), r.permutation.end(), 0);
  rng.shuffle(std::span<int>(r.permutation));
  r.gt_index = static_cast<int>(rng.uniform_int(c));
  for (int i = 0; i < c; ++i) {
    const double u = rng.uniform();
    r.relevance.push_back(u < 0.6 ? 0.0 : (u < 0.85 ? 0.5 : 1.0));
  }
  // Occasionally all-zero relevance, which NDCG must exclude.
  if (!rng.bernoulli(0.05)) r.relevance[r.gt_index] = 1.0;
  else std::fill(r.relevance.begin(), r.relevance.end(), 0.0);
  return r;
}

inline std::string join_tokens(const std::vector<int>& t, std::size_t b, std::size_t e) {
  std::string s;
  for (std::size_t i = b; i < e; ++i) s += std::to_string(t[i]) + ",";
  return s;
}

/// Diversity and No-Match by explicit string set difference per image.
inline gst::evalkit::DiversityStats brute_diversity(
    const std::vector<std::vector<std::vector<int>>>& silver,
    const std::vector<std::vector<std::vector<int>>>& gold, int n) {
  auto grams = [n](const std::vector<std::vector<int>>& qs) {
    std::vector<std::string> out;
    for (const auto& q : qs)
      for (std::size_t i = 0; i + n <= q.size(); ++i) {
        const std::string g = join_tokens(q, i, i + n);
        if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
      }
    return out;
  };
  double div = 0;
  std::size_t images = 0, questions = 0, unmatched = 0;
  for (std::size_t i = 0; i < silver.size(); ++i) {
    const auto s = grams(silver[i]);
    const auto g = grams(gold[i]);
    if (!s.empty()) {
      std::size_t novel = 0;
      for (const auto& x : s) novel += std::find(g.begin(), g.end(), x) == g.end() ? 1 : 0;
      div += 100.0 * novel / s.size();
      ++images;
    }
    for (const auto& q : silver[i]) {
      ++questions;
      unmatched += std::find(gold[i].begin(), gold[i].end(), q) == gold[i].end() ? 1 : 0;
    }
  }
  gst::evalkit::DiversityStats st;
  st.diversity = images ? div / images : 0.0;
  st.no_match = 100.0 * unmatched / questions;
  return st;
}

/// Random question sets over a small alphabet so n-grams collide often.
inline std::vector<std::vector<int>> random_questions(gst::numkit::Rng& rng) {
  std::vector<std::vector<int>> qs(1 + rng.uniform_int(5));
  for (auto& q : qs) {
    q.resize(1 + rng.uniform_int(6));
    for (int& t : q) t = 5 + static_cast<int>(rng.uniform_int(4));
  }
  return qs;
}

}  // namespace testutil
