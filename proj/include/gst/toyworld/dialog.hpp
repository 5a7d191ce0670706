#pragma once

#include <optional>
#include <vector>

#include "gst/numkit/rng.hpp"
#include "gst/toyworld/grammar.hpp"
#include "gst/toyworld/scene.hpp"

namespace gst::toyworld {

struct CandidateSet {
  std::vector<Tokens> answers;
  std::vector<double> relevance;
  int gt_index = 0;
  bool operator==(const CandidateSet&) const = default;
};

struct Round {
  Tokens question;
  Tokens answer;
  std::optional<CandidateSet> candidates;
  // Silver rounds only.
  std::optional<double> teacher_ppl;
  bool selected = true;
  bool operator==(const Round&) const = default;
};

struct Dialog {
  std::uint64_t scene_id = 0;
  Scene scene;
  SceneFeatures features;
  Tokens caption;
  std::vector<Round> rounds;
  std::uint64_t seed = 0;
  bool operator==(const Dialog&) const = default;
};

struct DialogConfig {
  int rounds = 5;
  int max_len = 12;
  double pronoun_rate = 0.3;
  // Chance that a color/size/position/count question targets a present object.
  double present_subject_rate = 0.8;
};

Dialog gen_gold_dialog(const Scene& scene, numkit::Rng& rng, const DialogConfig& cfg);

/// Relevance by rule: 1.0 for the oracle answer, 0.5 for its alternate
/// surface form, 0 otherwise.
double relevance_rule(std::span<const Token> candidate, std::span<const Token> gt);

CandidateSet build_candidates(const Scene& scene, std::span<const Token> resolved_question,
                              numkit::Rng& rng, int count);

/// History d_{<t}: caption followed by "[SEP] q a" for each round before t.
Tokens history_before(const Dialog& dialog, std::size_t t);

/// Subject bound by round t's pronoun (caption subject for t == 0).
std::optional<int> antecedent_for(const Dialog& dialog, std::size_t t);

}  // namespace gst::toyworld
