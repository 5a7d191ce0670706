#include "gst/seq2seq/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "gst/errors.hpp"

namespace gst::seq2seq {

namespace nk = numkit;

namespace {

using NgramSet = std::set<Tokens>;

void add_ngrams(NgramSet& seen, std::span<const int> seq, int n) {
  if (static_cast<int>(seq.size()) < n) return;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) seen.emplace(seq.begin() + i, seq.begin() + i + n);
}

// Tokens that would complete an already-seen n-gram after `prefix`.
std::vector<bool> blocked_tokens(const NgramSet& prior, std::span<const int> prefix, int n,
                                 std::size_t vocab) {
  std::vector<bool> blocked(vocab, false);
  if (n <= 0 || static_cast<int>(prefix.size()) < n - 1) return blocked;
  NgramSet seen = prior;
  add_ngrams(seen, prefix, n);
  Tokens key(prefix.end() - (n - 1), prefix.end());
  key.push_back(0);
  for (auto it = seen.lower_bound(key); it != seen.end(); ++it) {
    if (!std::equal(key.begin(), key.end() - 1, it->begin())) break;
    blocked[it->back()] = true;
  }
  return blocked;
}

}  // namespace

void validate(const DecodeConfig& cfg) {
  if (cfg.k < 1) throw ContractError("decode: k must be at least 1");
  if (!(cfg.temperature > 0.0)) throw ContractError("decode: temperature must be positive");
  if (cfg.max_len < 1) throw ContractError("decode: max_len must be at least 1");
  if (cfg.ngram_block < 0) throw ContractError("decode: ngram_block must be non-negative");
}

Tokens generate(const ModelParams& model, const Context& ctx, const DecodeConfig& cfg,
                nk::Rng& rng, std::span<const Tokens> prior) {
  validate(cfg);
  nk::NoGradGuard guard;
  const std::size_t V = static_cast<std::size_t>(model.config.vocab_size);
  const int max_len = std::min(cfg.max_len, model.config.max_target);
  const Encoded enc = encode(model, ctx);

  NgramSet prior_ngrams;
  for (const Tokens& s : prior) add_ngrams(prior_ngrams, s, cfg.ngram_block);

  std::vector<int> inputs{toyworld::kBos};
  Tokens out;
  while (static_cast<int>(out.size()) < max_len) {
    const Tensor logits = decoder_logits(model, enc, inputs);
    const auto row = logits.data().subspan((inputs.size() - 1) * V, V);

    std::vector<bool> blocked = blocked_tokens(prior_ngrams, out, cfg.ngram_block, V);

    std::vector<int> ids(V);
    std::iota(ids.begin(), ids.end(), 0);
    // Specials other than [EOS] are never candidates, blocked or not.
    std::erase_if(ids, [](int id) { return id != toyworld::kEos && id < toyworld::kNumSpecials; });
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return row[a] > row[b]; });

    int next = -1;
    if (cfg.mode == DecodeMode::Greedy || cfg.k == 1) {
      for (int id : ids) {
        if (!blocked[id]) {
          next = id;
          break;
        }
      }
    } else {
      std::vector<int> top(ids.begin(), ids.begin() + std::min<std::size_t>(cfg.k, ids.size()));
      std::erase_if(top, [&](int id) { return blocked[id]; });
      if (top.empty()) {
        for (int id : ids) {
          if (!blocked[id]) {
            next = id;
            break;
          }
        }
      } else {
        const double hi = row[top.front()] / cfg.temperature;
        std::vector<double> w;
        for (int id : top) w.push_back(std::exp(row[id] / cfg.temperature - hi));
        next = top[rng.categorical(w)];
      }
    }
    if (next < 0) throw DecodeError("decode: every vocabulary token is blocked");
    if (next == toyworld::kEos) break;
    out.push_back(next);
    inputs.push_back(next);
  }
  return out;
}

std::vector<double> candidate_scores(std::span<const ModelParams* const> models, const Context& ctx,
                                     std::span<const Tokens> answers) {
  if (models.empty()) throw ContractError("rank: need at least one model");
  nk::NoGradGuard guard;
  std::vector<double> scores(answers.size(), 0.0);
  for (const ModelParams* m : models) {
    const Encoded enc = encode(*m, ctx);
    for (std::size_t c = 0; c < answers.size(); ++c) {
      scores[c] -= nll_value(*m, enc, with_eos(answers[c]));
    }
  }
  for (double& s : scores) s /= static_cast<double>(models.size());
  return scores;
}

std::vector<int> rank_by_scores(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<int> rank_candidates(std::span<const ModelParams* const> models, const Context& ctx,
                                 const toyworld::CandidateSet& cands) {
  if (cands.answers.empty()) throw ContractError("rank: empty candidate set");
  return rank_by_scores(candidate_scores(models, ctx, cands.answers));
}

std::vector<int> rank_candidates(const ModelParams& model, const Context& ctx,
                                 const toyworld::CandidateSet& cands) {
  const ModelParams* one[] = {&model};
  return rank_candidates(one, ctx, cands);
}

std::vector<Tokens> repeated_ngrams(std::span<const Tokens> sequences, int n) {
  std::map<Tokens, int> counts;
  for (const Tokens& s : sequences) {
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Tokens(s.begin() + i, s.begin() + i + n)];
  }
  std::vector<Tokens> out;
  for (const auto& [g, c] : counts) {
    if (c > 1) out.push_back(g);
  }
  return out;
}

}  // namespace gst::seq2seq
