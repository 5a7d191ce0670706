#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gst/toyworld/scene.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::toyworld {

inline constexpr int kGrammarVersion = 1;

enum class QuestionKind { Existence, ColorOf, Count, SizeOf, Position, NextTo };
inline constexpr int kNumQuestionKinds = 6;
const char* kind_name(QuestionKind kind);

// 0: plain noun phrase, 1: "it", 2: "that one".
enum class PronounForm { None = 0, It = 1, ThatOne = 2 };

struct ParsedQuestion {
  QuestionKind kind = QuestionKind::Existence;
  // Canonical shape index; empty when the question uses a pronoun.
  std::optional<int> shape;
  PronounForm pronoun = PronounForm::None;
};

// Word tables of the closed grammar. Index i of a synonym table is the
// rank-1 alternate surface form of index i of the canonical table.
extern const std::array<const char*, kNumShapes> kShapeWords;
extern const std::array<const char*, kNumShapes> kShapeSynonyms;
extern const std::array<const char*, kNumColors> kColorWords;
extern const std::array<const char*, kNumColors> kColorSynonyms;
extern const std::array<const char*, kNumSizes> kSizeWords;
extern const std::array<const char*, kNumSizes> kSizeSynonyms;
extern const std::array<const char*, 3> kRowWords;
extern const std::array<const char*, 3> kRowSynonyms;
extern const std::array<const char*, 3> kColWords;
extern const std::array<const char*, 7> kDigitWords;
extern const std::array<const char*, 7> kNumberWords;

/// Every word of the grammar in vocabulary order (without specials).
std::vector<std::string> grammar_words();

/// Shape index for a canonical shape noun or one of its synonyms.
std::optional<int> shape_of_word(const std::string& word);

Tokens render_question(QuestionKind kind, std::optional<int> shape, PronounForm pronoun);
/// GrammarError if the tokens are not a question of the grammar. Synonym
/// shape nouns are accepted and normalized.
ParsedQuestion parse_question(std::span<const Token> question);
bool has_pronoun(std::span<const Token> question);

/// Replaces a pronoun by "the <shape>"; plain questions are returned as is.
Tokens resolve_question(std::span<const Token> question, std::optional<int> antecedent);

/// Unique correct answer for a resolved question. A pronoun question needs
/// the antecedent; GrammarError otherwise.
Tokens answer_oracle(const Scene& scene, std::span<const Token> question,
                     std::optional<int> antecedent = std::nullopt);

/// Salient object: large before small, then reading order.
const Object& salient_object(const Scene& scene);
Tokens caption_for(const Scene& scene);
/// Shape mentioned by a templated caption; GrammarError if none.
int caption_subject(std::span<const Token> caption);

/// Rank-1 alternate surface form of an answer, if the answer has one.
std::optional<Tokens> alternate_answer(std::span<const Token> answer);

/// Answers a question of `kind` can receive, canonical and alternate forms.
std::vector<Tokens> answer_space(QuestionKind kind);
/// Every answer of the grammar plus "<color> <shape>" fillers, deduplicated.
const std::vector<Tokens>& global_answer_space();

/// A history split back into caption and (question, answer) rounds.
struct ParsedHistory {
  Tokens caption;
  std::vector<std::pair<Tokens, Tokens>> rounds;
};
Tokens join_history(std::span<const Token> caption,
                    std::span<const std::pair<Tokens, Tokens>> rounds);
ParsedHistory split_history(std::span<const Token> history);

/// Subject shape of every history round after pronoun binding (index 0 is
/// the caption subject, index t the subject of round t).
std::vector<std::optional<int>> history_subjects(const ParsedHistory& history);

}  // namespace gst::toyworld
