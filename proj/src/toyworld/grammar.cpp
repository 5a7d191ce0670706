#include "gst/toyworld/grammar.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "gst/errors.hpp"

namespace gst::toyworld {

const std::array<const char*, kNumShapes> kShapeWords = {"ball", "cube", "cone",
                                                         "cylinder", "ring", "star"};
const std::array<const char*, kNumShapes> kShapeSynonyms = {"sphere", "block", "spike",
                                                            "tube", "hoop", "spark"};
const std::array<const char*, kNumColors> kColorWords = {"red", "blue", "green",
                                                         "yellow", "purple", "orange"};
const std::array<const char*, kNumColors> kColorSynonyms = {"crimson", "navy", "lime",
                                                            "gold", "violet", "amber"};
const std::array<const char*, kNumSizes> kSizeWords = {"small", "large"};
const std::array<const char*, kNumSizes> kSizeSynonyms = {"little", "big"};
const std::array<const char*, 3> kRowWords = {"top", "middle", "bottom"};
const std::array<const char*, 3> kRowSynonyms = {"upper", "central", "lower"};
const std::array<const char*, 3> kColWords = {"left", "center", "right"};
const std::array<const char*, 7> kDigitWords = {"0", "1", "2", "3", "4", "5", "6"};
const std::array<const char*, 7> kNumberWords = {"zero", "one", "two", "three",
                                                 "four", "five", "six"};

namespace {

const char* kFunctionWords[] = {"?",    ".",  "is",    "there", "a",  "what", "color",
                                "size", "the", "how",  "many",  "where", "it", "that", "one",
                                "next", "to"};
const char* kAnswerWords[] = {"yes", "yeah", "no", "nope", "none", "nothing"};

const Vocab& V() { return Vocab::standard(); }
Token T(const char* w) { return V().id(w); }

std::vector<std::string> words_of(std::span<const Token> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (Token t : tokens) out.push_back(V().word(t));
  return out;
}

template <std::size_t N>
std::optional<int> index_in(const std::array<const char*, N>& table, const std::string& w) {
  for (std::size_t i = 0; i < N; ++i) {
    if (w == table[i]) return static_cast<int>(i);
  }
  return std::nullopt;
}

bool reading_before(const Object& a, const Object& b) {
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

const Object* first_with_shape(const Scene& scene, int shape) {
  const Object* best = nullptr;
  for (const Object& o : scene.objects) {
    if (o.shape == shape && (!best || reading_before(o, *best))) best = &o;
  }
  return best;
}

Tokens words_to_tokens(std::initializer_list<const char*> words) {
  Tokens out;
  for (const char* w : words) out.push_back(T(w));
  return out;
}

void append_np(Tokens& out, std::optional<int> shape, PronounForm pronoun) {
  switch (pronoun) {
    case PronounForm::It:
      out.push_back(T("it"));
      return;
    case PronounForm::ThatOne:
      out.push_back(T("that"));
      out.push_back(T("one"));
      return;
    case PronounForm::None:
      if (!shape) throw GrammarError("render_question: plain noun phrase needs a shape");
      out.push_back(T("the"));
      out.push_back(T(kShapeWords.at(*shape)));
      return;
  }
}

// Parses a noun phrase occupying words[begin, end).
bool parse_np(const std::vector<std::string>& w, std::size_t begin, std::size_t end,
              ParsedQuestion& q) {
  const std::size_t n = end - begin;
  if (n == 1 && w[begin] == "it") {
    q.pronoun = PronounForm::It;
    return true;
  }
  if (n == 2 && w[begin] == "that" && w[begin + 1] == "one") {
    q.pronoun = PronounForm::ThatOne;
    return true;
  }
  if (n == 2 && w[begin] == "the") {
    q.shape = shape_of_word(w[begin + 1]);
    return q.shape.has_value();
  }
  return false;
}

}  // namespace

const char* kind_name(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::Existence: return "existence";
    case QuestionKind::ColorOf: return "color";
    case QuestionKind::Count: return "count";
    case QuestionKind::SizeOf: return "size";
    case QuestionKind::Position: return "position";
    case QuestionKind::NextTo: return "next_to";
  }
  return "?";
}

std::vector<std::string> grammar_words() {
  std::vector<std::string> out;
  for (const char* w : kFunctionWords) out.emplace_back(w);
  for (const char* w : kAnswerWords) out.emplace_back(w);
  for (auto* table : {&kShapeWords, &kShapeSynonyms}) {
    for (const char* w : *table) out.emplace_back(w);
  }
  for (auto* table : {&kColorWords, &kColorSynonyms}) {
    for (const char* w : *table) out.emplace_back(w);
  }
  for (auto* table : {&kSizeWords, &kSizeSynonyms}) {
    for (const char* w : *table) out.emplace_back(w);
  }
  for (auto* table : {&kDigitWords, &kNumberWords}) {
    for (const char* w : *table) {
      // "one" already appears as a function word ("that one").
      if (std::find(out.begin(), out.end(), w) == out.end()) out.emplace_back(w);
    }
  }
  for (auto* table : {&kRowWords, &kRowSynonyms, &kColWords}) {
    for (const char* w : *table) out.emplace_back(w);
  }
  return out;
}

std::optional<int> shape_of_word(const std::string& word) {
  if (auto s = index_in(kShapeWords, word)) return s;
  return index_in(kShapeSynonyms, word);
}

Tokens render_question(QuestionKind kind, std::optional<int> shape, PronounForm pronoun) {
  if (shape && (*shape < 0 || *shape >= kNumShapes)) {
    throw GrammarError("render_question: shape out of range");
  }
  Tokens out;
  switch (kind) {
    case QuestionKind::Existence:
    case QuestionKind::Count:
      if (pronoun != PronounForm::None || !shape) {
        throw GrammarError("render_question: existence/count questions need a noun");
      }
      out = kind == QuestionKind::Existence ? words_to_tokens({"is", "there", "a"})
                                            : words_to_tokens({"how", "many"});
      out.push_back(T(kShapeWords.at(*shape)));
      break;
    case QuestionKind::ColorOf:
      out = words_to_tokens({"what", "color", "is"});
      append_np(out, shape, pronoun);
      break;
    case QuestionKind::SizeOf:
      out = words_to_tokens({"what", "size", "is"});
      append_np(out, shape, pronoun);
      break;
    case QuestionKind::Position:
      out = words_to_tokens({"where", "is"});
      append_np(out, shape, pronoun);
      break;
    case QuestionKind::NextTo:
      out = words_to_tokens({"what", "is", "next", "to"});
      append_np(out, shape, pronoun);
      break;
  }
  out.push_back(T("?"));
  return out;
}

ParsedQuestion parse_question(std::span<const Token> question) {
  std::vector<std::string> w;
  try {
    w = words_of(question);
  } catch (const VocabError&) {
    throw GrammarError("parse_question: out-of-vocabulary token");
  }
  const auto fail = [&]() -> ParsedQuestion {
    std::string text;
    for (const auto& s : w) text += s + " ";
    throw GrammarError("parse_question: not a grammar question: '" + text + "'");
  };
  const std::size_t n = w.size();
  if (n < 3 || w.back() != "?") return fail();
  ParsedQuestion q;
  if (n == 5 && w[0] == "is" && w[1] == "there" && w[2] == "a") {
    q.kind = QuestionKind::Existence;
    q.shape = shape_of_word(w[3]);
    return q.shape ? q : fail();
  }
  if (n == 4 && w[0] == "how" && w[1] == "many") {
    q.kind = QuestionKind::Count;
    q.shape = shape_of_word(w[2]);
    return q.shape ? q : fail();
  }
  if (n >= 5 && w[0] == "what" && w[1] == "color" && w[2] == "is") {
    q.kind = QuestionKind::ColorOf;
    return parse_np(w, 3, n - 1, q) ? q : fail();
  }
  if (n >= 5 && w[0] == "what" && w[1] == "size" && w[2] == "is") {
    q.kind = QuestionKind::SizeOf;
    return parse_np(w, 3, n - 1, q) ? q : fail();
  }
  if (n >= 4 && w[0] == "where" && w[1] == "is") {
    q.kind = QuestionKind::Position;
    return parse_np(w, 2, n - 1, q) ? q : fail();
  }
  if (n >= 6 && w[0] == "what" && w[1] == "is" && w[2] == "next" && w[3] == "to") {
    q.kind = QuestionKind::NextTo;
    return parse_np(w, 4, n - 1, q) ? q : fail();
  }
  return fail();
}

bool has_pronoun(std::span<const Token> question) {
  const Token it = T("it"), that = T("that");
  return std::find(question.begin(), question.end(), it) != question.end() ||
         std::find(question.begin(), question.end(), that) != question.end();
}

Tokens resolve_question(std::span<const Token> question, std::optional<int> antecedent) {
  const ParsedQuestion q = parse_question(question);
  if (q.pronoun == PronounForm::None) return render_question(q.kind, q.shape, PronounForm::None);
  if (!antecedent) throw GrammarError("resolve_question: pronoun without antecedent");
  return render_question(q.kind, antecedent, PronounForm::None);
}

Tokens answer_oracle(const Scene& scene, std::span<const Token> question,
                     std::optional<int> antecedent) {
  const ParsedQuestion q = parse_question(question);
  std::optional<int> shape = q.shape;
  if (q.pronoun != PronounForm::None) {
    if (!antecedent) throw GrammarError("answer_oracle: unresolved pronoun");
    shape = antecedent;
  }
  const int s = *shape;
  switch (q.kind) {
    case QuestionKind::Existence:
      return {T(first_with_shape(scene, s) ? "yes" : "no")};
    case QuestionKind::Count: {
      const auto c = std::count_if(scene.objects.begin(), scene.objects.end(),
                                   [s](const Object& o) { return o.shape == s; });
      if (c >= static_cast<long>(kDigitWords.size())) {
        throw GrammarError("answer_oracle: count exceeds the grammar's numerals");
      }
      return {T(kDigitWords[c])};
    }
    case QuestionKind::ColorOf: {
      const Object* o = first_with_shape(scene, s);
      return {T(o ? kColorWords.at(o->color) : "none")};
    }
    case QuestionKind::SizeOf: {
      const Object* o = first_with_shape(scene, s);
      return {T(o ? kSizeWords.at(o->size) : "none")};
    }
    case QuestionKind::Position: {
      const Object* o = first_with_shape(scene, s);
      if (!o) return {T("none")};
      return {T(kRowWords.at(o->row)), T(kColWords.at(o->col))};
    }
    case QuestionKind::NextTo: {
      const Object* anchor = first_with_shape(scene, s);
      if (!anchor) return {T("none")};
      const Object* best = nullptr;
      int best_d = 0;
      for (const Object& o : scene.objects) {
        if (&o == anchor) continue;
        const int d = std::abs(o.row - anchor->row) + std::abs(o.col - anchor->col);
        if (!best || d < best_d || (d == best_d && reading_before(o, *best))) {
          best = &o;
          best_d = d;
        }
      }
      return {T(best ? kShapeWords.at(best->shape) : "nothing")};
    }
  }
  throw GrammarError("answer_oracle: unknown question kind");
}

const Object& salient_object(const Scene& scene) {
  if (scene.objects.empty()) throw GrammarError("salient_object: empty scene");
  const Object* best = &scene.objects.front();
  for (const Object& o : scene.objects) {
    if (o.size > best->size || (o.size == best->size && reading_before(o, *best))) best = &o;
  }
  return *best;
}

Tokens caption_for(const Scene& scene) {
  const Object& o = salient_object(scene);
  return {T("there"),
          T("is"),
          T("a"),
          T(kSizeWords.at(o.size)),
          T(kColorWords.at(o.color)),
          T(kShapeWords.at(o.shape)),
          T(".")};
}

int caption_subject(std::span<const Token> caption) {
  for (Token t : caption) {
    if (t < kNumSpecials) continue;
    if (auto s = shape_of_word(V().word(t))) return *s;
  }
  throw GrammarError("caption_subject: caption names no shape");
}

std::optional<Tokens> alternate_answer(std::span<const Token> answer) {
  const std::vector<std::string> w = words_of(answer);
  if (w.size() == 1) {
    const std::string& a = w[0];
    if (a == "yes") return Tokens{T("yeah")};
    if (a == "no") return Tokens{T("nope")};
    if (a == "none") return Tokens{T("nothing")};
    if (a == "nothing") return Tokens{T("none")};
    if (auto i = index_in(kDigitWords, a)) return Tokens{T(kNumberWords[*i])};
    if (auto i = index_in(kColorWords, a)) return Tokens{T(kColorSynonyms[*i])};
    if (auto i = index_in(kSizeWords, a)) return Tokens{T(kSizeSynonyms[*i])};
    if (auto i = index_in(kShapeWords, a)) return Tokens{T(kShapeSynonyms[*i])};
    return std::nullopt;
  }
  if (w.size() == 2) {
    const auto r = index_in(kRowWords, w[0]);
    if (r && index_in(kColWords, w[1])) return Tokens{T(kRowSynonyms[*r]), answer[1]};
  }
  return std::nullopt;
}

std::vector<Tokens> answer_space(QuestionKind kind) {
  std::vector<Tokens> out;
  const auto add_pair = [&](const char* canonical, const char* alternate) {
    out.push_back({T(canonical)});
    out.push_back({T(alternate)});
  };
  switch (kind) {
    case QuestionKind::Existence:
      add_pair("yes", "yeah");
      add_pair("no", "nope");
      return out;
    case QuestionKind::Count:
      for (std::size_t i = 0; i < kDigitWords.size(); ++i) add_pair(kDigitWords[i], kNumberWords[i]);
      return out;
    case QuestionKind::ColorOf:
      for (int i = 0; i < kNumColors; ++i) add_pair(kColorWords[i], kColorSynonyms[i]);
      break;
    case QuestionKind::SizeOf:
      for (int i = 0; i < kNumSizes; ++i) add_pair(kSizeWords[i], kSizeSynonyms[i]);
      break;
    case QuestionKind::Position:
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          out.push_back({T(kRowWords[r]), T(kColWords[c])});
          out.push_back({T(kRowSynonyms[r]), T(kColWords[c])});
        }
      }
      break;
    case QuestionKind::NextTo:
      for (int i = 0; i < kNumShapes; ++i) add_pair(kShapeWords[i], kShapeSynonyms[i]);
      break;
  }
  add_pair("none", "nothing");
  return out;
}

const std::vector<Tokens>& global_answer_space() {
  static const std::vector<Tokens> space = [] {
    std::vector<Tokens> out;
    std::set<Tokens> seen;
    for (int k = 0; k < kNumQuestionKinds; ++k) {
      for (auto& a : answer_space(static_cast<QuestionKind>(k))) {
        if (seen.insert(a).second) out.push_back(a);
      }
    }
    for (int c = 0; c < kNumColors; ++c) {
      for (int s = 0; s < kNumShapes; ++s) out.push_back({T(kColorWords[c]), T(kShapeWords[s])});
    }
    return out;
  }();
  return space;
}

Tokens join_history(std::span<const Token> caption,
                    std::span<const std::pair<Tokens, Tokens>> rounds) {
  Tokens out(caption.begin(), caption.end());
  for (const auto& [q, a] : rounds) {
    out.push_back(kSep);
    out.insert(out.end(), q.begin(), q.end());
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

ParsedHistory split_history(std::span<const Token> history) {
  ParsedHistory out;
  std::vector<Tokens> segments(1);
  for (Token t : history) {
    if (t == kSep) {
      segments.emplace_back();
    } else {
      segments.back().push_back(t);
    }
  }
  out.caption = segments[0];
  const Token qmark = T("?");
  for (std::size_t i = 1; i < segments.size(); ++i) {
    const Tokens& seg = segments[i];
    auto it = std::find(seg.begin(), seg.end(), qmark);
    if (it == seg.end()) throw GrammarError("split_history: round without a question mark");
    out.rounds.emplace_back(Tokens(seg.begin(), it + 1), Tokens(it + 1, seg.end()));
  }
  return out;
}

std::vector<std::optional<int>> history_subjects(const ParsedHistory& history) {
  std::vector<std::optional<int>> subjects;
  subjects.push_back(caption_subject(history.caption));
  for (const auto& [q, a] : history.rounds) {
    const ParsedQuestion pq = parse_question(q);
    subjects.push_back(pq.pronoun == PronounForm::None ? pq.shape : subjects.back());
  }
  return subjects;
}

}  // namespace gst::toyworld
