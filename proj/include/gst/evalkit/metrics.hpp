#pragma once

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gst/seq2seq/model.hpp"
#include "gst/toyworld/dialog.hpp"

namespace gst::evalkit {

enum class QuestionType { YesNo, Color, Objects, Counting, TimePlace, Others };
inline constexpr std::array<QuestionType, 6> kQuestionTypes = {
    QuestionType::YesNo,    QuestionType::Color,     QuestionType::Objects,
    QuestionType::Counting, QuestionType::TimePlace, QuestionType::Others};
const char* type_name(QuestionType type);

/// Total rule classifier; anything outside the grammar is Others.
QuestionType question_type(std::span<const toyworld::Token> question);

struct RankResult {
  std::vector<int> permutation;  // candidate indices, best first
  int gt_index = 0;
  std::vector<double> relevance;
  QuestionType type = QuestionType::Others;
};

struct RankStats {
  double mrr = 0, r1 = 0, r5 = 0, r10 = 0, mean_rank = 0;
};

struct NdcgStats {
  double ndcg = 0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // rounds whose relevance is all zero
};

struct MetricsTable {
  double ndcg = 0, mrr = 0, r1 = 0, r5 = 0, r10 = 0, mean_rank = 0;
  std::size_t rounds = 0;
  std::size_t ndcg_excluded = 0;  // rounds with all-zero relevance
  bool operator==(const MetricsTable&) const = default;
};

/// 1-based position of the ground truth within the permutation.
int gt_rank(const RankResult& r);

RankStats mrr_r_mean(std::span<const RankResult> results);
NdcgStats ndcg(std::span<const RankResult> results);
MetricsTable metrics(std::span<const RankResult> results);

/// Per-type metrics, keyed in kQuestionTypes order; absent types omitted.
std::map<QuestionType, MetricsTable> metrics_by_type(std::span<const RankResult> results);

/// Edits the answerer context of round t before ranking (attacks).
using ContextHook = std::function<void(const toyworld::Dialog&, std::size_t, seq2seq::Context&)>;
using RoundFilter = std::function<bool(const toyworld::Dialog&, std::size_t)>;

/// Ranks the candidates of every round carrying a candidate set.
std::vector<RankResult> evaluate(std::span<const seq2seq::ModelParams* const> models,
                                 const std::vector<toyworld::Dialog>& split,
                                 const ContextHook& hook = {}, const RoundFilter& filter = {});
std::vector<RankResult> evaluate(const seq2seq::ModelParams& model,
                                 const std::vector<toyworld::Dialog>& split);

/// Expected MRR (percent) of a uniformly random ranking over C candidates.
double random_mrr(int candidates);

struct DiversityStats {
  double diversity = 0;  // percent
  double no_match = 0;   // percent
};

/// Questions grouped per image; silver[i] and gold[i] describe the same image.
DiversityStats ngram_diversity(const std::vector<std::vector<toyworld::Tokens>>& silver,
                               const std::vector<std::vector<toyworld::Tokens>>& gold, int n);

/// Counts of each question type.
std::map<QuestionType, std::size_t> type_distribution(
    const std::vector<std::vector<toyworld::Tokens>>& questions);

}  // namespace gst::evalkit
