#include "gst/attacks/attacks.hpp"

#include <cmath>
#include <map>

#include "gst/errors.hpp"
#include "gst/seq2seq/contexts.hpp"
#include "gst/toyworld/grammar.hpp"

namespace gst::attacks {

namespace nk = numkit;
using toyworld::Token;

void AttackConfig::validate() const {
  for (double e : epsilons) {
    if (!(e >= 0.0)) throw ConfigError("attack: epsilon must be non-negative");
  }
  for (double p : mask_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("attack: mask probability outside [0,1]");
  }
  if (seeds < 1) throw ConfigError("attack: seeds must be at least 1");
}

std::vector<double> feature_std(const std::vector<Dialog>& split) {
  if (split.empty()) throw ContractError("feature_std: empty split");
  const std::size_t dim = split.front().features.dim;
  std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
  std::size_t n = 0;
  for (const auto& d : split) {
    const auto& f = d.features;
    if (f.dim != dim) throw DimensionError("feature_std: mixed feature dimensions");
    for (std::size_t r = 0; r < f.regions; ++r) {
      for (std::size_t j = 0; j < dim; ++j) mean[j] += f.at(r, j);
    }
    n += f.regions;
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (const auto& d : split) {
    for (std::size_t r = 0; r < d.features.regions; ++r) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double c = d.features.at(r, j) - mean[j];
        sq[j] += c * c;
      }
    }
  }
  for (double& s : sq) s = std::sqrt(s / static_cast<double>(n));
  return sq;
}

std::vector<double> weighted_feature_gradient(const seq2seq::ModelParams& model,
                                              const seq2seq::Context& ctx,
                                              const toyworld::CandidateSet& cands) {
  if (cands.relevance.size() != cands.answers.size()) {
    throw ContractError("fgsm: relevance and candidates differ in length");
  }
  std::vector<std::size_t> relevant;
  for (std::size_t c = 0; c < cands.answers.size(); ++c) {
    const double r = cands.relevance[c];
    if (!(r >= 0.0 && r <= 1.0)) throw ContractError("fgsm: relevance outside [0,1]");
    if (r > 0.0) relevant.push_back(c);
  }
  if (relevant.empty()) throw ContractError("fgsm: no candidate with positive relevance");

  // Parameters are frozen so only the features collect gradient.
  const seq2seq::ModelParams frozen =
      model.token_embedding.requires_grad() ? model.clone(false) : model;
  const auto& f = ctx.features;
  const nk::Tensor v = nk::Tensor::from_data({f.regions, f.dim}, f.values, true);
  const seq2seq::Encoded enc = seq2seq::encode(frozen, ctx, v);
  std::vector<nk::Tensor> terms;
  for (std::size_t c : relevant) {
    const nk::Tensor l = seq2seq::nll(frozen, enc, seq2seq::with_eos(cands.answers[c]));
    terms.push_back(nk::scale(l, cands.relevance[c]));
  }
  nk::backward(nk::add_n(terms));
  const auto g = v.grad();
  return {g.begin(), g.end()};
}

toyworld::SceneFeatures sign_step(const toyworld::SceneFeatures& v, std::span<const double> grad,
                                  double eps, std::span<const double> scale) {
  if (grad.size() != v.values.size()) throw DimensionError("fgsm: gradient shape mismatch");
  if (!scale.empty() && scale.size() != v.dim) throw DimensionError("fgsm: scale length mismatch");
  toyworld::SceneFeatures out = v;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double g = grad[i];
    const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    const double step = scale.empty() ? eps : eps * scale[i % v.dim];
    out.values[i] += step * s;
  }
  return out;
}

toyworld::SceneFeatures fgsm(const seq2seq::ModelParams& model, const seq2seq::Context& ctx,
                             const toyworld::CandidateSet& cands, double eps,
                             std::span<const double> scale) {
  if (!(eps >= 0.0)) throw ContractError("fgsm: epsilon must be non-negative");
  return sign_step(ctx.features, weighted_feature_gradient(model, ctx, cands), eps, scale);
}

SynonymTable SynonymTable::standard() {
  SynonymTable t;
  for (std::size_t i = 0; i < toyworld::kShapeWords.size(); ++i) {
    t.entries[toyworld::kShapeWords[i]] = {toyworld::kShapeSynonyms[i]};
  }
  return t;
}

std::optional<std::string> SynonymTable::rank1(const std::string& word) const {
  const auto it = entries.find(word);
  if (it == entries.end() || it->second.empty()) return std::nullopt;
  return it->second.front();
}

namespace {

Tokens substitute(std::span<const Token> seq, const SynonymTable& table) {
  const auto& vocab = toyworld::Vocab::standard();
  Tokens out;
  for (Token t : seq) {
    if (vocab.is_special(t)) {
      out.push_back(t);
      continue;
    }
    const auto syn = table.rank1(vocab.word(t));
    out.push_back(syn ? vocab.id(*syn) : t);
  }
  return out;
}

}  // namespace

Tokens coref_attack(std::span<const Token> history, const SynonymTable& table) {
  // Nothing to substitute: the history is returned as is, parsed or not.
  if (substitute(history, table) == Tokens(history.begin(), history.end())) {
    return Tokens(history.begin(), history.end());
  }
  const toyworld::ParsedHistory h = toyworld::split_history(history);
  toyworld::history_subjects(h);  // GrammarError unless every binding resolves
  std::vector<std::pair<Tokens, Tokens>> rounds;
  for (const auto& [q, a] : h.rounds) rounds.emplace_back(substitute(q, table), substitute(a, table));
  return toyworld::join_history(substitute(h.caption, table), rounds);
}

Tokens random_token_attack(std::span<const Token> history, double p, nk::Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("random_token_attack: p outside [0,1]");
  Tokens out(history.begin(), history.end());
  for (Token& t : out) {
    if (t >= toyworld::kNumSpecials && rng.bernoulli(p)) t = toyworld::kMask;
  }
  return out;
}

bool coref_preserves_semantics(const Dialog& dialog, const SynonymTable& table) {
  const Tokens full = toyworld::history_before(dialog, dialog.rounds.size());
  const toyworld::ParsedHistory original = toyworld::split_history(full);
  const toyworld::ParsedHistory attacked = toyworld::split_history(coref_attack(full, table));
  if (toyworld::history_subjects(original) != toyworld::history_subjects(attacked)) return false;
  const auto subjects = toyworld::history_subjects(attacked);
  for (std::size_t t = 0; t < attacked.rounds.size(); ++t) {
    const Tokens& q = attacked.rounds[t].first;
    if (toyworld::answer_oracle(dialog.scene, q, subjects[t]) != dialog.rounds[t].answer) return false;
  }
  return true;
}

bool history_dependent(const Dialog& dialog, std::size_t t) {
  return toyworld::has_pronoun(dialog.rounds.at(t).question);
}

std::vector<CurveSummary> summarize(const std::vector<CurveRow>& rows) {
  std::vector<CurveSummary> out;
  std::vector<std::vector<const CurveRow*>> groups;
  for (const auto& r : rows) {
    std::size_t g = 0;
    while (g < out.size() && !(out[g].attack == r.attack && out[g].setting == r.setting)) ++g;
    if (g == out.size()) {
      CurveSummary s;
      s.attack = r.attack;
      s.setting = r.setting;
      out.push_back(s);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& rs = groups[g];
    const double n = static_cast<double>(rs.size());
    CurveSummary& s = out[g];
    s.seeds = static_cast<int>(rs.size());
    for (const auto* r : rs) {
      s.ndcg_mean += r->ndcg;
      s.mrr_mean += r->mrr;
    }
    s.ndcg_mean /= n;
    s.mrr_mean /= n;
    s.has_std = rs.size() > 1;
    if (s.has_std) {
      for (const auto* r : rs) {
        s.ndcg_std += (r->ndcg - s.ndcg_mean) * (r->ndcg - s.ndcg_mean);
        s.mrr_std += (r->mrr - s.mrr_mean) * (r->mrr - s.mrr_mean);
      }
      s.ndcg_std = std::sqrt(s.ndcg_std / (n - 1.0));
      s.mrr_std = std::sqrt(s.mrr_std / (n - 1.0));
    }
  }
  return out;
}

AttackCurves attacked_eval(std::span<const seq2seq::ModelParams* const> models,
                           const std::vector<Dialog>& split, const AttackConfig& cfg,
                           std::span<const double> feature_scale, bool run_fgsm,
                           bool run_textual) {
  cfg.validate();
  if (models.empty()) throw ContractError("attacked_eval: need at least one model");
  AttackCurves out;
  const auto row = [&](const std::string& attack, double setting, int seed,
                       const std::vector<evalkit::RankResult>& res) {
    const evalkit::MetricsTable m = evalkit::metrics(res);
    out.rows.push_back({attack, setting, seed, m.ndcg, m.mrr});
  };
  row("none", 0.0, 0, evalkit::evaluate(models, split));

  if (run_fgsm) {
    // The sign direction does not depend on epsilon: one gradient per round.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> grads;
    std::vector<seq2seq::ModelParams> frozen;
    for (const auto* m : models) frozen.push_back(m->clone(false));
    for (std::size_t i = 0; i < split.size(); ++i) {
      for (std::size_t t = 0; t < split[i].rounds.size(); ++t) {
        const auto& round = split[i].rounds[t];
        if (!round.candidates) continue;
        const seq2seq::Context ctx = seq2seq::answerer_context(split[i], t);
        std::vector<double> g(ctx.features.values.size(), 0.0);
        for (const auto& m : frozen) {
          const auto gm = weighted_feature_gradient(m, ctx, *round.candidates);
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += gm[k];
        }
        grads[{i, t}] = std::move(g);
      }
    }
    const std::span<const double> scale =
        cfg.relative_epsilon ? feature_scale : std::span<const double>{};
    std::vector<double> eps{0.0};
    eps.insert(eps.end(), cfg.epsilons.begin(), cfg.epsilons.end());
    for (double e : eps) {
      const evalkit::ContextHook hook = [&](const Dialog& d, std::size_t t, seq2seq::Context& ctx) {
        const std::size_t i = static_cast<std::size_t>(&d - split.data());
        ctx.features = sign_step(ctx.features, grads.at({i, t}), e, scale);
      };
      row("fgsm", e, 0, evalkit::evaluate(models, split, hook));
    }
  }

  if (run_textual) {
    const evalkit::RoundFilter filter = history_dependent;
    bool any = false;
    for (const auto& d : split) {
      for (std::size_t t = 0; t < d.rounds.size() && !any; ++t) any = d.rounds[t].candidates && filter(d, t);
    }
    if (!any) throw ContractError("attacked_eval: no history-dependent rounds to attack");
    row("none_filtered", 0.0, 0, evalkit::evaluate(models, split, {}, filter));
    const SynonymTable table = SynonymTable::standard();
    row("coref", 0.0, 0,
        evalkit::evaluate(models, split,
                          [&](const Dialog&, std::size_t, seq2seq::Context& ctx) {
                            ctx.history = coref_attack(ctx.history, table);
                          },
                          filter));
    for (double p : cfg.mask_probs) {
      for (int s = 0; s < cfg.seeds; ++s) {
        const nk::Rng base = nk::Rng(cfg.seed).fork(static_cast<std::uint64_t>(s));
        row("random_token", p, s,
            evalkit::evaluate(models, split,
                              [&](const Dialog& d, std::size_t t, seq2seq::Context& ctx) {
                                nk::Rng r = base.fork(d.scene_id).fork(t);
                                ctx.history = random_token_attack(ctx.history, p, r);
                              },
                              filter));
      }
    }
  }
  out.summary = summarize(out.rows);
  return out;
}

}  // namespace gst::attacks
