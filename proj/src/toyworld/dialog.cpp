#include "gst/toyworld/dialog.hpp"

#include <algorithm>
#include <set>

#include "gst/errors.hpp"

namespace gst::toyworld {

namespace {

constexpr int kMaxQuestionAttempts = 200;

constexpr QuestionKind kPronounKinds[] = {QuestionKind::ColorOf, QuestionKind::SizeOf,
                                          QuestionKind::Position};

int pick_subject(const Scene& scene, numkit::Rng& rng, double present_rate) {
  if (!scene.objects.empty() && rng.bernoulli(present_rate)) {
    return scene.objects[rng.uniform_int(scene.objects.size())].shape;
  }
  return static_cast<int>(rng.uniform_int(kNumShapes));
}

}  // namespace

Dialog gen_gold_dialog(const Scene& scene, numkit::Rng& rng, const DialogConfig& cfg) {
  if (cfg.rounds < 1) throw ContractError("gen_gold_dialog: need at least one round");
  Dialog d;
  d.scene_id = scene.id;
  d.scene = scene;
  d.caption = caption_for(scene);
  int prev_subject = salient_object(scene).shape;
  std::set<Tokens> used;

  for (int t = 0; t < cfg.rounds; ++t) {
    Tokens question;
    int subject = prev_subject;
    bool found = false;
    for (int attempt = 0; attempt < kMaxQuestionAttempts && !found; ++attempt) {
      if (rng.bernoulli(cfg.pronoun_rate)) {
        const QuestionKind kind = kPronounKinds[rng.uniform_int(3)];
        const auto form = rng.bernoulli(0.5) ? PronounForm::It : PronounForm::ThatOne;
        question = render_question(kind, std::nullopt, form);
        subject = prev_subject;
      } else {
        const auto kind = static_cast<QuestionKind>(rng.uniform_int(kNumQuestionKinds));
        if (kind == QuestionKind::NextTo) {
          subject = caption_subject(d.caption);
        } else if (kind == QuestionKind::Existence) {
          subject = pick_subject(scene, rng, 0.5);
        } else {
          subject = pick_subject(scene, rng, cfg.present_subject_rate);
        }
        question = render_question(kind, subject, PronounForm::None);
      }
      found = used.insert(question).second;
    }
    if (!found) {
      throw CapacityError("gen_gold_dialog: grammar cannot produce " + std::to_string(cfg.rounds) +
                          " distinct questions");
    }
    if (static_cast<int>(question.size()) > cfg.max_len) {
      throw CapacityError("gen_gold_dialog: question longer than max_len");
    }
    Round r;
    r.question = question;
    r.answer = answer_oracle(scene, question, prev_subject);
    d.rounds.push_back(std::move(r));
    prev_subject = subject;
  }
  return d;
}

double relevance_rule(std::span<const Token> candidate, std::span<const Token> gt) {
  if (std::equal(candidate.begin(), candidate.end(), gt.begin(), gt.end())) return 1.0;
  if (auto alt = alternate_answer(gt)) {
    if (std::equal(candidate.begin(), candidate.end(), alt->begin(), alt->end())) return 0.5;
  }
  return 0.0;
}

CandidateSet build_candidates(const Scene& scene, std::span<const Token> resolved_question,
                              numkit::Rng& rng, int count) {
  if (count < 2) throw ContractError("build_candidates: need at least two candidates");
  const std::vector<Tokens>& global = global_answer_space();
  if (static_cast<std::size_t>(count) > global.size()) {
    throw CapacityError("build_candidates: answer space of " + std::to_string(global.size()) +
                        " answers is smaller than " + std::to_string(count));
  }
  const ParsedQuestion pq = parse_question(resolved_question);
  const Tokens gt = answer_oracle(scene, resolved_question);

  // Same-type answers first, then the rest of the answer space as filler.
  std::vector<Tokens> typed, filler;
  std::set<Tokens> typed_set;
  for (auto& a : answer_space(pq.kind)) {
    if (a != gt) typed.push_back(a);
    typed_set.insert(a);
  }
  for (const auto& a : global) {
    if (a != gt && !typed_set.count(a)) filler.push_back(a);
  }
  rng.shuffle(std::span<Tokens>(typed));
  rng.shuffle(std::span<Tokens>(filler));

  CandidateSet set;
  set.answers.push_back(gt);
  for (auto* pool : {&typed, &filler}) {
    for (auto& a : *pool) {
      if (static_cast<int>(set.answers.size()) == count) break;
      set.answers.push_back(a);
    }
  }
  rng.shuffle(std::span<Tokens>(set.answers));
  for (std::size_t i = 0; i < set.answers.size(); ++i) {
    set.relevance.push_back(relevance_rule(set.answers[i], gt));
    if (set.answers[i] == gt) set.gt_index = static_cast<int>(i);
  }
  return set;
}

Tokens history_before(const Dialog& dialog, std::size_t t) {
  if (t > dialog.rounds.size()) throw ContractError("history_before: round out of range");
  std::vector<std::pair<Tokens, Tokens>> rounds;
  for (std::size_t i = 0; i < t; ++i) {
    rounds.emplace_back(dialog.rounds[i].question, dialog.rounds[i].answer);
  }
  return join_history(dialog.caption, rounds);
}

std::optional<int> antecedent_for(const Dialog& dialog, std::size_t t) {
  ParsedHistory h;
  h.caption = dialog.caption;
  for (std::size_t i = 0; i < t; ++i) {
    h.rounds.emplace_back(dialog.rounds[i].question, dialog.rounds[i].answer);
  }
  return history_subjects(h).back();
}

}  // namespace gst::toyworld
