#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "gst/curate/curate.hpp"
#include "gst/errors.hpp"
#include "gst/evalkit/metrics.hpp"
#include "gst/pipeline/gst.hpp"
#include "gst/seq2seq/contexts.hpp"
#include "gst/seq2seq/model.hpp"
#include "gst/toyworld/grammar.hpp"
#include "helpers.hpp"

using namespace gst::pipeline;
using gst::numkit::Rng;
using gst::toyworld::Dialog;

namespace {

const gst::toyworld::Splits& splits() {
  static const auto s = gst::toyworld::generate_splits(testutil::small_data(60, 90), 11);
  return s;
}

GstConfig tiny_gst() {
  GstConfig c;
  c.model = testutil::small_model();
  c.rounds = 3;
  c.retrieve_m = 12;
  c.iterations = 2;
  c.max_skip_fraction = 1.0;  // barely trained questioners may emit empty questions
  for (auto* t : {&c.teacher_train, &c.questioner_train, &c.student_train}) {
    t->lr = 3e-3;
    t->example_budget = 1500;
  }
  return c;
}

/// Lightly trained pair, shared by the generation tests.
const IterationState& base() {
  static const IterationState st = [] {
    const auto& s = splits();
    return bootstrap(RunData{&s.train, &s.val, nullptr, &s.pool}, tiny_gst(), 3);
  }();
  return st;
}

std::vector<double> flat(const ModelParams& m) {
  std::vector<double> out;
  for (const auto& [name, t] : m.named()) out.insert(out.end(), t->data().begin(), t->data().end());
  return out;
}

std::vector<Dialog> first(const std::vector<Dialog>& d, std::size_t n) { return {d.begin(), d.begin() + n}; }

}  // namespace

TEST_CASE("MCR masking") {
  const auto& d = splits().train[0];
  const auto ctx = gst::seq2seq::answerer_context(d, 4);
  Rng rng(1);
  const auto same = mcr_mask(ctx, rng, 0.0);
  CHECK(same.history == ctx.history);
  CHECK(same.question == ctx.question);
  CHECK(same.features == ctx.features);

  std::size_t tokens = 0, masked = 0, regions = 0, zeroed = 0;
  for (int rep = 0; tokens < 100000; ++rep) {
    const auto out = mcr_mask(ctx, rng, 0.15);
    REQUIRE(out.history.size() == ctx.history.size());
    REQUIRE(out.question.size() == ctx.question.size());
    for (const auto* pair : {&ctx.history, &ctx.question}) {
      const auto& after = pair == &ctx.history ? out.history : out.question;
      for (std::size_t i = 0; i < pair->size(); ++i) {
        const auto t = (*pair)[i];
        if (t < gst::toyworld::kNumSpecials) {
          CHECK(after[i] == t);
          continue;
        }
        ++tokens;
        if (after[i] != t) {
          CHECK(after[i] == gst::toyworld::kMask);
          ++masked;
        }
      }
    }
    const auto& f = out.features;
    for (std::size_t r = 0; r < f.regions; ++r) {
      ++regions;
      const auto b = f.values.begin() + r * f.dim, e = b + f.dim;
      const bool all_zero = std::all_of(b, e, [](double v) { return v == 0.0; });
      const bool same = std::equal(b, e, ctx.features.values.begin() + r * f.dim);
      // A region is either untouched or exactly zero.
      CHECK((all_zero || same));
      zeroed += all_zero && !same;
    }
  }
  CHECK(std::abs(static_cast<double>(masked) / tokens - 0.15) < 0.005);
  CHECK(std::abs(static_cast<double>(zeroed) / regions - 0.15) < 0.02);
  CHECK_THROWS_AS(mcr_mask(ctx, rng, 1.0), gst::ContractError);
}

TEST_CASE("gold subsets") {
  const auto& gold = splits().train;  // 60 dialogs
  CHECK_THROWS_AS(gold_subset(gold, 0.05, 1), gst::CapacityError);
  CHECK(gold_subset(gold, 5.0 / 60, 1).size() == 5u);
  CHECK(gold_subset(gold, 0.1, 1).size() == 6u);
  CHECK(gold_subset(gold, 0.101, 1).size() == 7u);
  CHECK(gold_subset(gold, 1.0, 1) == gold);
  CHECK_THROWS_AS(gold_subset(gold, 0.0, 1), gst::ContractError);

  const auto a = gold_subset(gold, 0.3, 7);
  CHECK(a == gold_subset(gold, 0.3, 7));
  CHECK_FALSE(a == gold_subset(gold, 0.3, 8));
  // Original order is kept.
  std::size_t pos = 0;
  for (const auto& d : a) {
    while (pos < gold.size() && gold[pos].scene_id != d.scene_id) ++pos;
    REQUIRE(pos < gold.size());
    CHECK(gold[pos] == d);
    ++pos;
  }
}

TEST_CASE("pool partitions and selection modes") {
  const auto& pool = splits().pool;  // 90 scenes
  for (int parts : {1, 3, 4, 7}) {
    std::vector<std::uint64_t> seen;
    for (int p = 0; p < parts; ++p)
      for (const auto& d : pool_partition(pool, p, parts)) seen.push_back(d.scene_id);
    std::vector<std::uint64_t> all;
    for (const auto& d : pool) all.push_back(d.scene_id);
    CHECK(seen == all);
  }
  CHECK_THROWS_AS(pool_partition(pool, 3, 3), gst::ContractError);

  GstConfig cfg = tiny_gst();
  const auto& gold = splits().train;
  const auto iir = select_pool(gold, pool, 20, cfg, 5);
  REQUIRE(iir.size() == 20u);
  // Same set as ranking the summary rows by hand.
  const auto g = gst::curate::fit_gaussian(gst::curate::summary_matrix(gold), cfg.shrinkage);
  const auto x = gst::curate::summary_matrix(pool);
  std::vector<double> scores;
  for (std::size_t r = 0; r < x.rows; ++r) scores.push_back(gst::curate::log_density(g, x.row(r)));
  const auto top = gst::curate::top_m_by_score(scores, x.ids, 20);
  std::set<std::uint64_t> want(top.begin(), top.end()), got;
  for (const auto& d : iir) got.insert(d.scene_id);
  CHECK(got == want);
  // Retrieval does not consume the seed.
  CHECK(select_pool(gold, pool, 20, cfg, 99) == iir);

  cfg.ablations.use_iir = false;
  const auto rnd = select_pool(gold, pool, 20, cfg, 5);
  CHECK(rnd.size() == 20u);
  CHECK(rnd == select_pool(gold, pool, 20, cfg, 5));
  CHECK_FALSE(rnd == select_pool(gold, pool, 20, cfg, 6));
  std::set<std::uint64_t> ids;
  for (const auto& d : rnd) ids.insert(d.scene_id);
  CHECK(ids.size() == 20u);

  cfg.ablations.full_pool = true;
  CHECK(select_pool(gold, pool, 20, cfg, 5) == pool);
  cfg.ablations.full_pool = false;
  CHECK_THROWS_AS(select_pool(gold, pool, pool.size() + 1, cfg, 5), gst::ContractError);
}

TEST_CASE("silver generation") {
  const auto& st = base();
  GstConfig cfg = tiny_gst();
  const auto scenes = first(splits().pool, 7);
  const Rng stream = silver_stream(3, 0);

  const auto one = generate_silver(st.questioner, st.teacher, scenes, cfg, stream);
  CHECK(one.dialogs.size() + one.skipped.size() == scenes.size());
  cfg.threads = 3;
  const auto three = generate_silver(st.questioner, st.teacher, scenes, cfg, stream);
  CHECK(three.dialogs == one.dialogs);
  CHECK(three.skipped == one.skipped);

  for (const auto& d : one.dialogs) {
    CHECK(d.rounds.size() == static_cast<std::size_t>(cfg.rounds));
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      const auto& r = d.rounds[t];
      REQUIRE(r.teacher_ppl.has_value());
      // The stored PPL is taken on the unmasked context.
      CHECK(*r.teacher_ppl == gst::seq2seq::perplexity(st.teacher, gst::seq2seq::answerer_context(d, t),
                                                      gst::seq2seq::with_eos(r.answer)));
      CHECK_FALSE(r.question.empty());
    }
  }

  cfg.rounds = 1;
  cfg.threads = 1;
  const auto single = generate_silver(st.questioner, st.teacher, scenes, cfg, stream);
  for (const auto& d : single.dialogs) {
    REQUIRE(d.rounds.size() == 1u);
    gst::seq2seq::Context ctx;
    ctx.features = d.features;
    ctx.history = gst::toyworld::join_history(d.caption, {});
    ctx.question = d.rounds[0].question;
    CHECK(*d.rounds[0].teacher_ppl ==
          gst::seq2seq::perplexity(st.teacher, ctx, gst::seq2seq::with_eos(d.rounds[0].answer)));
  }

  CHECK_THROWS_AS(generate_silver(st.teacher, st.teacher, scenes, cfg, stream), gst::ContractError);
}

TEST_CASE("student objective") {
  const auto& gold = splits().train;
  GstConfig cfg = tiny_gst();
  const auto init = ModelParams::init(cfg.model, gst::seq2seq::Role::Answerer, 4);

  SUBCASE("no silver reduces to teacher training") {
    cfg.student_train.example_budget = 600;
    const auto student = train_student(gold, {}, cfg, init);
    const auto plain = gst::seq2seq::train(init, gst::seq2seq::answerer_examples(gold), cfg.student_train);
    CHECK(student.batch_loss == plain.batch_loss);
    CHECK(flat(student.params) == flat(plain.params));
  }
  SUBCASE("duplicated gold doubles the loss") {
    cfg.ablations.use_ppl = false;
    cfg.ablations.use_mcr = false;
    const double once = gst::seq2seq::objective(init, gst::seq2seq::answerer_examples(gold));
    const double twice = gst::seq2seq::objective(init, student_examples(gold, gold, cfg));
    CHECK(twice == doctest::Approx(2 * once).epsilon(1e-12));
  }
  SUBCASE("unselected rounds do not contribute") {
    auto silver = first(splits().val, 6);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < silver.size(); ++i)
      for (std::size_t t = 0; t < silver[i].rounds.size(); ++t) {
        auto& r = silver[i].rounds[t];
        r.teacher_ppl = 1.0 + t;
        r.selected = (i + t) % 3 != 0;
        kept += r.selected;
      }
    const auto ex = student_examples(gold, silver, cfg);
    std::size_t gold_rounds = 0;
    for (const auto& d : gold) gold_rounds += d.rounds.size();
    CHECK(ex.size() == gold_rounds + kept);
    for (const auto& e : ex) CHECK(e.perturb == (e.group == 1));

    auto altered = silver;
    // Only last rounds: earlier answers feed later histories.
    int changed = 0;
    for (auto& d : altered)
      if (!d.rounds.back().selected) {
        d.rounds.back().answer = testutil::words("no");
        ++changed;
      }
    REQUIRE(changed > 0);
    CHECK(gst::seq2seq::objective(init, student_examples(gold, altered, cfg)) ==
          gst::seq2seq::objective(init, ex));

    // Without selection every round is used.
    cfg.ablations.use_ppl = false;
    std::size_t all = 0;
    for (const auto& d : silver) all += d.rounds.size();
    CHECK(student_examples(gold, silver, cfg).size() == gold_rounds + all);

    cfg.ablations.use_ppl = true;
    silver[0].rounds[0].teacher_ppl.reset();
    CHECK_THROWS_AS(train_student(gold, silver, cfg, init), gst::DataError);
  }
}

TEST_CASE("iterations accumulate silver") {
  const auto& s = splits();
  const GstConfig cfg = tiny_gst();
  const RunData data{&s.train, &s.val, nullptr, &s.pool};
  int hooks = 0;
  const auto two = iterate(base(), data, cfg, 3, 2, {}, [&](const IterationArtifacts& a) {
    ++hooks;
    CHECK(a.scenes.size() == cfg.retrieve_m);
    CHECK(a.silver.size() + a.skipped.size() == a.scenes.size());
  });
  CHECK(hooks == 2);
  REQUIRE(two.silver.size() == 2u);
  REQUIRE(two.records.size() == 2u);
  std::size_t rounds = 0;
  for (int i = 0; i < 2; ++i) {
    for (const auto& d : two.silver[i]) rounds += d.rounds.size();
    CHECK(two.records[i].accumulated_rounds == rounds);
    CHECK(two.records[i].retrieved == cfg.retrieve_m);
  }
  // Partitions differ between iterations.
  std::set<std::uint64_t> a, b;
  for (const auto& d : two.silver[0]) a.insert(d.scene_id);
  for (const auto& d : two.silver[1]) b.insert(d.scene_id);
  for (auto id : a) CHECK(b.count(id) == 0u);

  // One step at a time gives the same state.
  const auto stepped = iterate(iterate(base(), data, cfg, 3, 1), data, cfg, 3, 1);
  CHECK(flat(stepped.teacher) == flat(two.teacher));
  CHECK(stepped.silver == two.silver);
}

TEST_CASE("trained questioner follows the grammar") {
  const auto& s = splits();
  GstConfig cfg = tiny_gst();
  cfg.questioner_train.example_budget = 12000;
  const auto q = train_questioner(s.train, cfg, 5);
  Rng rng(6);
  int ok = 0, total = 0;
  for (const auto& d : s.test) {
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      const auto out = gst::seq2seq::generate(q, gst::seq2seq::questioner_context(d, t), cfg.question_decode, rng);
      ++total;
      try {
        gst::toyworld::parse_question(out);
        ++ok;
      } catch (const gst::GrammarError&) {
      }
    }
  }
  CHECK(ok >= 0.9 * total);
}
