#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gst/errors.hpp"
#include "gst/toyworld/dataset.hpp"
#include "gst/toyworld/grammar.hpp"
#include "helpers.hpp"

using namespace gst::toyworld;
using gst::numkit::Rng;
using testutil::words;

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

int index_of(const auto& table, const std::string& w) {
  for (std::size_t i = 0; i < table.size(); ++i)
    if (w == table[i]) return static_cast<int>(i);
  return -1;
}

int shape_index(const std::string& w) {
  const int c = index_of(kShapeWords, w);
  return c >= 0 ? c : index_of(kShapeSynonyms, w);
}

// Independent answer oracle working on words and enumerating objects.
std::string enum_oracle(const Scene& scene, const std::string& question) {
  const auto w = split_words(question);
  const int shape = shape_index(w[w.size() - 2]);
  std::vector<const Object*> hits;
  for (const Object& o : scene.objects)
    if (o.shape == shape) hits.push_back(&o);
  std::sort(hits.begin(), hits.end(), [](const Object* a, const Object* b) {
    return a->row != b->row ? a->row < b->row : a->col < b->col;
  });
  if (w[0] == "is") return hits.empty() ? "no" : "yes";
  if (w[0] == "how") return std::to_string(hits.size());
  if (hits.empty()) return "none";
  const Object& o = *hits.front();
  if (w[0] == "where") return std::string(kRowWords[o.row]) + " " + kColWords[o.col];
  if (w[1] == "color") return kColorWords[o.color];
  if (w[1] == "size") return kSizeWords[o.size];
  // next to: nearest other object by Manhattan distance, reading order on ties
  const Object* best = nullptr;
  int best_d = 1 << 30;
  for (const Object& p : scene.objects) {
    if (&p == &o) continue;
    const int d = std::abs(p.row - o.row) + std::abs(p.col - o.col);
    const bool earlier = best && (p.row != best->row ? p.row < best->row : p.col < best->col);
    if (d < best_d || (d == best_d && earlier)) {
      best = &p;
      best_d = d;
    }
  }
  return best ? kShapeWords[best->shape] : "nothing";
}

// Rule table for graded relevance, written from the word tables.
double table_relevance(const std::string& cand, const std::string& gt) {
  if (cand == gt) return 1.0;
  std::map<std::string, std::string> alt{
      {"yes", "yeah"}, {"no", "nope"}, {"none", "nothing"}, {"nothing", "none"}};
  for (std::size_t i = 0; i < kDigitWords.size(); ++i) alt[kDigitWords[i]] = kNumberWords[i];
  for (std::size_t i = 0; i < kColorWords.size(); ++i) alt[kColorWords[i]] = kColorSynonyms[i];
  for (std::size_t i = 0; i < kSizeWords.size(); ++i) alt[kSizeWords[i]] = kSizeSynonyms[i];
  for (std::size_t i = 0; i < kShapeWords.size(); ++i) alt[kShapeWords[i]] = kShapeSynonyms[i];
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      alt[std::string(kRowWords[r]) + " " + kColWords[c]] =
          std::string(kRowSynonyms[r]) + " " + kColWords[c];
  auto it = alt.find(gt);
  return it != alt.end() && it->second == cand ? 0.5 : 0.0;
}

std::string text(const Tokens& t) { return Vocab::standard().decode(t); }

Scene make_scene(std::vector<Object> objects) {
  Scene s;
  s.objects = std::move(objects);
  return s;
}

}  // namespace

TEST_CASE("vocab is a bijection with fixed specials") {
  const Vocab& v = Vocab::standard();
  CHECK(v.word(kPad) == "[PAD]");
  CHECK(v.word(kMask) == "[MASK]");
  std::set<std::string> seen;
  for (Token i = 0; i < static_cast<Token>(v.size()); ++i) {
    CHECK(v.id(v.word(i)) == i);
    seen.insert(v.word(i));
  }
  CHECK(seen.size() == v.size());
  CHECK_THROWS_AS(v.id("zebra"), gst::VocabError);
  CHECK_THROWS_AS(v.word(static_cast<Token>(v.size())), gst::VocabError);
  CHECK(v.decode(v.encode("what color is the ball ?")) == "what color is the ball ?");
}

TEST_CASE("questions render and parse back") {
  for (int k = 0; k < kNumQuestionKinds; ++k) {
    const auto kind = static_cast<QuestionKind>(k);
    for (int s = 0; s < kNumShapes; ++s) {
      const Tokens q = render_question(kind, s, PronounForm::None);
      const ParsedQuestion p = parse_question(q);
      CHECK(p.kind == kind);
      CHECK(p.shape == s);
      CHECK(q.back() == Vocab::standard().id("?"));
    }
  }
  const ParsedQuestion p = parse_question(words("what color is that one ?"));
  CHECK(p.pronoun == PronounForm::ThatOne);
  CHECK_FALSE(p.shape.has_value());
  CHECK(parse_question(words("where is the sphere ?")).shape == 0);
  CHECK_THROWS_AS(parse_question(words("color what ?")), gst::GrammarError);
  CHECK_THROWS_AS(render_question(QuestionKind::Count, std::nullopt, PronounForm::It),
                  gst::GrammarError);
}

TEST_CASE("answer oracle hand cases") {
  const Scene s = make_scene({{0, 1, 1, 0, 0}, {2, 0, 0, 2, 2}});
  CHECK(text(answer_oracle(s, words("is there a ball ?"))) == "yes");
  CHECK(text(answer_oracle(s, words("how many cube ?"))) == "0");
  CHECK(text(answer_oracle(s, words("what color is the ball ?"))) == "blue");
  CHECK(text(answer_oracle(s, words("where is the cone ?"))) == "bottom right");
  CHECK(text(answer_oracle(s, words("what size is it ?"), 2)) == "small");
  CHECK_THROWS_AS(answer_oracle(s, words("what size is it ?")), gst::GrammarError);
}

TEST_CASE("answer oracle agrees with object enumeration") {
  WorldConfig world;
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const Scene scene = gen_scene(world, rng, rng.bernoulli(0.5) ? Style::Shifted : Style::InDomain);
    const auto kind = static_cast<QuestionKind>(rng.uniform_int(kNumQuestionKinds));
    const int shape = static_cast<int>(rng.uniform_int(kNumShapes));
    const Tokens q = render_question(kind, shape, PronounForm::None);
    CHECK(text(answer_oracle(scene, q)) == enum_oracle(scene, text(q)));
  }
}

TEST_CASE("scene generation") {
  WorldConfig world;
  SUBCASE("determinism and invariants") {
    Rng a(5), b(5);
    for (int i = 0; i < 200; ++i) {
      const Scene s = gen_scene(world, a, Style::InDomain, i);
      CHECK(s == gen_scene(world, b, Style::InDomain, i));
      CHECK(!s.objects.empty());
      CHECK(static_cast<int>(s.objects.size()) <= world.max_objects);
      std::set<std::pair<int, int>> cells;
      for (const Object& o : s.objects) cells.insert({o.row, o.col});
      CHECK(cells.size() == s.objects.size());
    }
  }
  SUBCASE("attribute frequencies follow the weights") {
    Rng rng(6);
    std::vector<double> shape(kNumShapes, 0), color(kNumColors, 0), size(kNumSizes, 0);
    double objects = 0, shifted_objects = 0;
    for (int i = 0; i < 10000; ++i) {
      const Scene s = gen_scene(world, rng, Style::InDomain);
      for (const Object& o : s.objects) {
        ++shape[o.shape];
        ++color[o.color];
        ++size[o.size];
      }
      objects += s.objects.size();
      shifted_objects += gen_scene(world, rng, Style::Shifted).objects.size();
    }
    for (int i = 0; i < kNumShapes; ++i) CHECK(std::abs(shape[i] / objects - world.in_domain.shape[i]) < 0.02);
    for (int i = 0; i < kNumColors; ++i) CHECK(std::abs(color[i] / objects - world.in_domain.color[i]) < 0.02);
    for (int i = 0; i < kNumSizes; ++i) CHECK(std::abs(size[i] / objects - world.in_domain.size[i]) < 0.02);
    CHECK((shifted_objects - objects) / 10000 >= 0.8);
  }
}

TEST_CASE("region features") {
  WorldConfig world;
  const Scene s = make_scene({{1, 2, 1, 0, 1}, {3, 4, 0, 2, 0}});
  Rng r1(1), r2(2);
  const SceneFeatures f = render_features(s, r1, 9, 16, 0.0);
  CHECK(f == render_features(s, r2, 9, 16, 0.0));
  // Empty region: background flag only.
  for (std::size_t j = 0; j < 16; ++j) CHECK(f.at(0, j) == (j == kBackgroundDim ? 1.0 : 0.0));
  CHECK(f.at(1, 1) == 1.0);
  CHECK(f.at(1, 6 + 2) == 1.0);
  CHECK(f.at(1, kObjectDim) == 1.0);

  Scene recolored = s;
  recolored.objects[1].color = 5;
  const SceneFeatures g = render_features(recolored, r1, 9, 16, 0.0);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t j = 0; j < 16; ++j)
      if (r != 6) CHECK(f.at(r, j) == g.at(r, j));
  CHECK(f.values != g.values);

  const SceneFeatures noisy = render_features(s, r1, 9, 20, 0.05);
  CHECK(noisy.dim == 20);
  for (double v : noisy.values) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(render_features(s, r1, 8, 16, 0.0), gst::ContractError);
}

TEST_CASE("gold dialogs replay through the oracle") {
  WorldConfig world;
  DialogConfig dc;
  Rng rng(31);
  int pronouns = 0, total = 0;
  for (int i = 0; i < 500; ++i) {
    const Scene scene = gen_scene(world, rng, Style::InDomain);
    const Dialog d = gen_gold_dialog(scene, rng, dc);
    REQUIRE(d.rounds.size() == 5u);
    std::set<Tokens> questions;
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      const Round& r = d.rounds[t];
      const Tokens resolved = resolve_question(r.question, antecedent_for(d, t));
      CHECK(text(r.answer) == enum_oracle(scene, text(resolved)));
      CHECK(static_cast<int>(r.question.size()) <= dc.max_len);
      questions.insert(r.question);
      pronouns += has_pronoun(r.question);
      ++total;
    }
    CHECK(questions.size() == d.rounds.size());
  }
  CHECK(std::abs(static_cast<double>(pronouns) / total - dc.pronoun_rate) < 0.05);

  DialogConfig one = dc;
  one.rounds = 1;
  Rng a(8), b(8);
  const Scene scene = gen_scene(world, a, Style::InDomain);
  b = a;
  const Dialog d1 = gen_gold_dialog(scene, a, one);
  CHECK(d1.rounds.size() == 1u);
  CHECK(d1 == gen_gold_dialog(scene, b, one));
}

TEST_CASE("history helpers") {
  const Tokens cap = words("there is a ball .");
  const std::vector<std::pair<Tokens, Tokens>> rounds{{words("what color is it ?"), words("red")},
                                                      {words("how many cube ?"), words("2")}};
  const Tokens h = join_history(cap, rounds);
  const ParsedHistory p = split_history(h);
  CHECK(p.caption == cap);
  CHECK(p.rounds == rounds);
  const auto subj = history_subjects(p);
  REQUIRE(subj.size() == 3u);
  CHECK(subj[0] == 0);
  CHECK(subj[1] == 0);
  CHECK(subj[2] == 1);
}

TEST_CASE("candidate sets") {
  WorldConfig world;
  Rng rng(12);
  SUBCASE("two candidates") {
    const Scene s = gen_scene(world, rng, Style::InDomain);
    const CandidateSet c = build_candidates(s, words("is there a ball ?"), rng, 2);
    REQUIRE(c.answers.size() == 2u);
    CHECK(c.relevance[c.gt_index] == 1.0);
    const double other = c.relevance[1 - c.gt_index];
    CHECK((other == 0.0 || other == 0.5));
  }
  SUBCASE("rule table and soundness") {
    for (int i = 0; i < 500; ++i) {
      const Scene s = gen_scene(world, rng, Style::InDomain);
      const auto kind = static_cast<QuestionKind>(rng.uniform_int(kNumQuestionKinds));
      const Tokens q = render_question(kind, static_cast<int>(rng.uniform_int(kNumShapes)),
                                       PronounForm::None);
      const CandidateSet c = build_candidates(s, q, rng, 16);
      REQUIRE(c.answers.size() == 16u);
      const std::string gt = enum_oracle(s, text(q));
      CHECK(text(c.answers[c.gt_index]) == gt);
      int ones = 0;
      std::set<Tokens> distinct(c.answers.begin(), c.answers.end());
      CHECK(distinct.size() == c.answers.size());
      for (std::size_t k = 0; k < c.answers.size(); ++k) {
        CHECK(c.relevance[k] == table_relevance(text(c.answers[k]), gt));
        ones += c.relevance[k] == 1.0;
      }
      CHECK(ones == 1);
    }
  }
}

TEST_CASE("dataset generation and serialization") {
  const DatasetConfig cfg = testutil::small_data(20, 30);
  const Splits a = generate_splits(cfg, 9);
  const Splits b = generate_splits(cfg, 9);
  CHECK(a.train == b.train);
  CHECK(a.pool == b.pool);
  CHECK(a.train != generate_splits(cfg, 10).train);

  std::set<std::uint64_t> ids;
  for (const auto* split : {&a.train, &a.val, &a.test, &a.pool})
    for (const Dialog& d : *split) ids.insert(d.scene_id);
  CHECK(ids.size() == 20u + 10 + 10 + 30);
  for (const Dialog& d : a.test)
    for (const Round& r : d.rounds) CHECK(r.candidates.has_value());
  for (const Dialog& d : a.pool) CHECK(d.rounds.empty());

  for (const Dialog& d : a.test) {
    const std::string line = dialog_to_json(d);
    CHECK(dialog_from_json(line) == d);
    CHECK(dialog_to_json(dialog_from_json(line)) == line);
  }
  Dialog silver = a.train[0];
  silver.rounds[0].teacher_ppl = 1.25;
  silver.rounds[0].selected = false;
  CHECK(dialog_from_json(dialog_to_json(silver)) == silver);

  const auto dir = std::filesystem::temp_directory_path() / "gst_toyworld_test";
  std::filesystem::create_directories(dir);
  write_jsonl(dir / "train.jsonl", a.train);
  CHECK(read_jsonl(dir / "train.jsonl") == a.train);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(dialog_from_json("{not json"), gst::Error);
}
