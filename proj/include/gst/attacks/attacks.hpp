#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gst/evalkit/metrics.hpp"
#include "gst/numkit/rng.hpp"
#include "gst/seq2seq/model.hpp"
#include "gst/toyworld/dialog.hpp"

namespace gst::attacks {

using toyworld::Dialog;
using toyworld::Tokens;

struct AttackConfig {
  std::vector<double> epsilons{0.01, 0.02, 0.05, 0.1};
  std::vector<double> mask_probs{0.10, 0.20, 0.30, 0.40};
  int seeds = 5;
  std::uint64_t seed = 0;
  bool relative_epsilon = true;  // epsilon in units of per-dimension feature std
  void validate() const;
};

/// Per-dimension standard deviation of region features over a split.
std::vector<double> feature_std(const std::vector<Dialog>& split);

/// Sum over candidates of r(a_c) * d nll(ctx, a_c) / d features, R x f row-major.
/// Zero-relevance candidates are skipped.
std::vector<double> weighted_feature_gradient(const seq2seq::ModelParams& model,
                                              const seq2seq::Context& ctx,
                                              const toyworld::CandidateSet& cands);

/// v + eps * scale_j * sign(g); sign(0) = 0; an empty scale means 1.
toyworld::SceneFeatures sign_step(const toyworld::SceneFeatures& v, std::span<const double> grad,
                                  double eps, std::span<const double> scale = {});

toyworld::SceneFeatures fgsm(const seq2seq::ModelParams& model, const seq2seq::Context& ctx,
                             const toyworld::CandidateSet& cands, double eps,
                             std::span<const double> scale = {});

/// Shape nouns and their ranked synonyms; rank 1 is the substitute.
struct SynonymTable {
  std::map<std::string, std::vector<std::string>> entries;
  static SynonymTable standard();
  std::optional<std::string> rank1(const std::string& word) const;
};

/// Rank-1 synonym substitution over caption, questions and answers of a
/// history; pronouns stay, binding is checked by resolution.
Tokens coref_attack(std::span<const toyworld::Token> history, const SynonymTable& table);

/// Each non-special history token becomes [MASK] with probability p.
Tokens random_token_attack(std::span<const toyworld::Token> history, double p, numkit::Rng& rng);

/// True iff every round of the attacked history of every prefix keeps its
/// pronoun binding and oracle answer.
bool coref_preserves_semantics(const Dialog& dialog, const SynonymTable& table);

/// History-dependent rounds: the question contains a pronoun.
bool history_dependent(const Dialog& dialog, std::size_t t);

struct CurveRow {
  std::string attack;  // none | fgsm | none_filtered | coref | random_token
  double setting = 0.0;
  int seed = 0;
  double ndcg = 0.0;
  double mrr = 0.0;
  bool operator==(const CurveRow&) const = default;
};

struct CurveSummary {
  std::string attack;
  double setting = 0.0;
  int seeds = 1;
  double ndcg_mean = 0.0, ndcg_std = 0.0;
  double mrr_mean = 0.0, mrr_std = 0.0;
  bool has_std = false;  // stochastic attacks only
};

struct AttackCurves {
  std::vector<CurveRow> rows;
  std::vector<CurveSummary> summary;
};

/// Mean and sample stddev per (attack, setting) in row order.
std::vector<CurveSummary> summarize(const std::vector<CurveRow>& rows);

AttackCurves attacked_eval(std::span<const seq2seq::ModelParams* const> models,
                           const std::vector<Dialog>& split, const AttackConfig& cfg,
                           std::span<const double> feature_scale,
                           bool run_fgsm = true, bool run_textual = true);

}  // namespace gst::attacks
