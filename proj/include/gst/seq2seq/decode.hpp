#pragma once

#include <span>
#include <vector>

#include "gst/numkit/rng.hpp"
#include "gst/seq2seq/model.hpp"
#include "gst/toyworld/dialog.hpp"

namespace gst::seq2seq {

enum class DecodeMode { Greedy, TopK };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::TopK;
  int k = 7;
  double temperature = 0.7;
  int ngram_block = 0;  // 0 disables; questions use 4
  int max_len = 12;
};

void validate(const DecodeConfig& cfg);

/// Autoregressive decoding. `prior` holds the sequences already emitted in
/// the same dialog; an n-gram seen there or earlier in the prefix is never
/// completed again. The result excludes [EOS].
Tokens generate(const ModelParams& model, const Context& ctx, const DecodeConfig& cfg,
                numkit::Rng& rng, std::span<const Tokens> prior = {});

/// Mean per-token log-likelihood of each candidate (with [EOS]), averaged
/// over models.
std::vector<double> candidate_scores(std::span<const ModelParams* const> models, const Context& ctx,
                                     std::span<const Tokens> answers);

/// Candidate indices by descending score; ties by ascending index.
std::vector<int> rank_by_scores(std::span<const double> scores);

std::vector<int> rank_candidates(std::span<const ModelParams* const> models, const Context& ctx,
                                 const toyworld::CandidateSet& cands);
std::vector<int> rank_candidates(const ModelParams& model, const Context& ctx,
                                 const toyworld::CandidateSet& cands);

/// Every n-gram occurring twice within or across `sequences`.
std::vector<Tokens> repeated_ngrams(std::span<const Tokens> sequences, int n);

}  // namespace gst::seq2seq
