#include "gst/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gst/errors.hpp"
#include "gst/seq2seq/contexts.hpp"
#include "gst/seq2seq/decode.hpp"
#include "gst/toyworld/grammar.hpp"

namespace gst::evalkit {

using toyworld::Tokens;

const char* type_name(QuestionType type) {
  switch (type) {
    case QuestionType::YesNo: return "Yes/No";
    case QuestionType::Color: return "Color";
    case QuestionType::Objects: return "Objects";
    case QuestionType::Counting: return "Counting";
    case QuestionType::TimePlace: return "Time/Place";
    case QuestionType::Others: return "Others";
  }
  return "Others";
}

QuestionType question_type(std::span<const toyworld::Token> question) {
  using toyworld::QuestionKind;
  try {
    switch (toyworld::parse_question(question).kind) {
      case QuestionKind::Existence: return QuestionType::YesNo;
      case QuestionKind::ColorOf: return QuestionType::Color;
      case QuestionKind::NextTo: return QuestionType::Objects;
      case QuestionKind::Count: return QuestionType::Counting;
      case QuestionKind::Position: return QuestionType::TimePlace;
      case QuestionKind::SizeOf: return QuestionType::Others;
    }
  } catch (const GrammarError&) {
  }
  return QuestionType::Others;
}

int gt_rank(const RankResult& r) {
  const auto it = std::find(r.permutation.begin(), r.permutation.end(), r.gt_index);
  if (it == r.permutation.end()) throw ContractError("metrics: gt_index missing from permutation");
  return static_cast<int>(it - r.permutation.begin()) + 1;
}

RankStats mrr_r_mean(std::span<const RankResult> results) {
  RankStats s;
  if (results.empty()) return s;
  for (const auto& r : results) {
    const int rank = gt_rank(r);
    s.mrr += 1.0 / rank;
    s.r1 += rank <= 1;
    s.r5 += rank <= 5;
    s.r10 += rank <= 10;
    s.mean_rank += rank;
  }
  const double n = static_cast<double>(results.size());
  s.mrr = 100.0 * s.mrr / n;
  s.r1 = 100.0 * s.r1 / n;
  s.r5 = 100.0 * s.r5 / n;
  s.r10 = 100.0 * s.r10 / n;
  s.mean_rank /= n;
  return s;
}

NdcgStats ndcg(std::span<const RankResult> results) {
  NdcgStats s;
  double total = 0.0;
  for (const auto& r : results) {
    if (r.relevance.size() != r.permutation.size()) {
      throw DataError("ndcg: relevance and permutation differ in length");
    }
    std::size_t k = 0;
    for (double rel : r.relevance) {
      if (!(rel >= 0.0 && rel <= 1.0)) throw DataError("ndcg: relevance outside [0,1]");
      k += rel > 0.0;
    }
    if (k == 0) {
      ++s.excluded;
      continue;
    }
    std::vector<double> ideal = r.relevance;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double discount = std::log2(static_cast<double>(i) + 2.0);
      dcg += r.relevance[r.permutation[i]] / discount;
      idcg += ideal[i] / discount;
    }
    total += dcg / idcg;
    ++s.evaluated;
  }
  if (s.evaluated > 0) s.ndcg = 100.0 * total / static_cast<double>(s.evaluated);
  return s;
}

MetricsTable metrics(std::span<const RankResult> results) {
  const RankStats r = mrr_r_mean(results);
  MetricsTable t;
  const NdcgStats n = ndcg(results);
  t.ndcg = n.ndcg;
  t.ndcg_excluded = n.excluded;
  t.mrr = r.mrr;
  t.r1 = r.r1;
  t.r5 = r.r5;
  t.r10 = r.r10;
  t.mean_rank = r.mean_rank;
  t.rounds = results.size();
  return t;
}

std::map<QuestionType, MetricsTable> metrics_by_type(std::span<const RankResult> results) {
  std::map<QuestionType, std::vector<RankResult>> groups;
  for (const auto& r : results) groups[r.type].push_back(r);
  std::map<QuestionType, MetricsTable> out;
  for (const auto& [type, rs] : groups) out[type] = metrics(rs);
  return out;
}

std::vector<RankResult> evaluate(std::span<const seq2seq::ModelParams* const> models,
                                 const std::vector<toyworld::Dialog>& split,
                                 const ContextHook& hook, const RoundFilter& filter) {
  std::vector<RankResult> out;
  for (const auto& d : split) {
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      const auto& round = d.rounds[t];
      if (!round.candidates || (filter && !filter(d, t))) continue;
      seq2seq::Context ctx = seq2seq::answerer_context(d, t);
      if (hook) hook(d, t, ctx);
      RankResult r;
      r.permutation = seq2seq::rank_candidates(models, ctx, *round.candidates);
      r.gt_index = round.candidates->gt_index;
      r.relevance = round.candidates->relevance;
      r.type = question_type(round.question);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RankResult> evaluate(const seq2seq::ModelParams& model,
                                 const std::vector<toyworld::Dialog>& split) {
  const seq2seq::ModelParams* one[] = {&model};
  return evaluate(one, split);
}

double random_mrr(int candidates) {
  if (candidates < 1) throw ContractError("random_mrr: need at least one candidate");
  double h = 0.0;
  for (int r = 1; r <= candidates; ++r) h += 1.0 / r;
  return 100.0 * h / candidates;
}

DiversityStats ngram_diversity(const std::vector<std::vector<Tokens>>& silver,
                               const std::vector<std::vector<Tokens>>& gold, int n) {
  if (n < 1) throw ContractError("ngram_diversity: n must be positive");
  if (silver.size() != gold.size()) {
    throw ContractError("ngram_diversity: silver and gold must cover the same images");
  }
  const auto grams = [n](const std::vector<Tokens>& qs) {
    std::set<Tokens> out;
    for (const Tokens& q : qs) {
      for (std::size_t i = 0; i + n <= q.size(); ++i) out.emplace(q.begin() + i, q.begin() + i + n);
    }
    return out;
  };
  double div_sum = 0.0;
  std::size_t div_images = 0, questions = 0, unmatched = 0;
  for (std::size_t img = 0; img < silver.size(); ++img) {
    const std::set<Tokens> s = grams(silver[img]);
    const std::set<Tokens> g = grams(gold[img]);
    if (!s.empty()) {
      std::size_t novel = 0;
      for (const Tokens& x : s) novel += !g.count(x);
      div_sum += 100.0 * static_cast<double>(novel) / static_cast<double>(s.size());
      ++div_images;
    }
    const std::set<Tokens> gold_q(gold[img].begin(), gold[img].end());
    for (const Tokens& q : silver[img]) {
      ++questions;
      unmatched += !gold_q.count(q);
    }
  }
  if (questions == 0) throw ContractError("ngram_diversity: no silver questions");
  DiversityStats st;
  st.diversity = div_images == 0 ? 0.0 : div_sum / static_cast<double>(div_images);
  st.no_match = 100.0 * static_cast<double>(unmatched) / static_cast<double>(questions);
  return st;
}

std::map<QuestionType, std::size_t> type_distribution(const std::vector<std::vector<Tokens>>& qs) {
  std::map<QuestionType, std::size_t> out;
  for (QuestionType t : kQuestionTypes) out[t] = 0;
  for (const auto& dialog : qs) {
    for (const Tokens& q : dialog) ++out[question_type(q)];
  }
  return out;
}

}  // namespace gst::evalkit
