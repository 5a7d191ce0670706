#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gst/errors.hpp"
#include "gst/evalkit/metrics.hpp"
#include "gst/evalkit/report.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gst::evalkit;
using gst::numkit::Rng;
using testutil::words;

namespace {

RankResult round_with_rank(int c, int rank) {
  RankResult r;
  r.gt_index = 0;
  r.permutation.resize(c);
  std::iota(r.permutation.begin(), r.permutation.end(), 1);
  r.permutation[c - 1] = 0;
  std::swap(r.permutation[rank - 1], r.permutation[c - 1]);
  r.relevance.assign(c, 0.0);
  r.relevance[0] = 1.0;
  return r;
}

MetricsTable sample_table(Rng& rng) {
  MetricsTable t;
  t.ndcg = 100 * rng.uniform();
  t.mrr = 100 * rng.uniform();
  t.r1 = 100.0 / 3;
  t.r5 = 0.1 + 0.2;
  t.r10 = 100;
  t.mean_rank = 1 + 15 * rng.uniform();
  t.rounds = 1000;
  t.ndcg_excluded = 3;
  return t;
}

}  // namespace

TEST_CASE("rank metrics hand cases") {
  std::vector<RankResult> first{round_with_rank(5, 1), round_with_rank(8, 1)};
  const RankStats s = mrr_r_mean(first);
  CHECK(s.mrr == 100.0);
  CHECK(s.r1 == 100.0);
  CHECK(s.mean_rank == 1.0);

  std::vector<RankResult> two{round_with_rank(10, 1), round_with_rank(10, 4)};
  CHECK(gt_rank(two[1]) == 4);
  const RankStats t = mrr_r_mean(two);
  CHECK(t.mrr == 62.5);
  CHECK(t.r1 == 50.0);
  CHECK(t.r5 == 100.0);
  CHECK(t.mean_rank == 2.5);
}

TEST_CASE("NDCG hand cases") {
  RankResult ideal;
  ideal.relevance = {0.5, 1.0, 0.0, 0.5};
  ideal.permutation = {1, 0, 3, 2};
  ideal.gt_index = 1;
  const RankResult ideal_rounds[] = {ideal};
  CHECK(ndcg(ideal_rounds).ndcg == 100.0);

  RankResult second;
  second.relevance = {1, 0, 0, 0};
  second.permutation = {1, 0, 2, 3};
  const RankResult second_rounds[] = {second};
  CHECK(ndcg(second_rounds).ndcg == 0.0);

  RankResult none;
  none.relevance = {0, 0};
  none.permutation = {0, 1};
  const RankResult with_zero[] = {ideal, none};
  const NdcgStats st = ndcg(with_zero);
  CHECK(st.excluded == 1u);
  CHECK(st.evaluated == 1u);
  CHECK(st.ndcg == 100.0);
}

TEST_CASE("metrics match brute-force evaluators") {
  Rng rng(17);
  for (int batch = 0; batch < 50; ++batch) {
    std::vector<RankResult> rounds;
    for (int i = 0; i < 20; ++i) rounds.push_back(testutil::random_round(rng));
    const MetricsTable m = metrics(rounds);
    const auto b = testutil::brute_metrics(rounds);
    CHECK(std::abs(m.ndcg - b.ndcg) <= 1e-12);
    CHECK(std::abs(m.mrr - b.mrr) <= 1e-12);
    CHECK(std::abs(m.r1 - b.r1) <= 1e-12);
    CHECK(std::abs(m.r5 - b.r5) <= 1e-12);
    CHECK(std::abs(m.r10 - b.r10) <= 1e-12);
    CHECK(std::abs(m.mean_rank - b.mean_rank) <= 1e-12);
    CHECK(m.ndcg_excluded == b.excluded);
    CHECK(m.rounds == rounds.size());
  }
}

TEST_CASE("metric properties") {
  Rng rng(18);
  for (int i = 0; i < 300; ++i) {
    RankResult r = testutil::random_round(rng, 10);
    const std::size_t c = r.permutation.size();
    const RankResult one[] = {r};
    const MetricsTable base = metrics(one);
    CHECK(base.ndcg >= 0.0);
    CHECK(base.ndcg <= 100.0 + 1e-12);
    CHECK(base.mean_rank >= 1.0);

    // Swapping two equally relevant candidates leaves NDCG unchanged.
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = a + 1; b < c; ++b)
        if (r.relevance[r.permutation[a]] == r.relevance[r.permutation[b]]) {
          RankResult s = r;
          std::swap(s.permutation[a], s.permutation[b]);
          const RankResult sw[] = {s};
          CHECK(ndcg(sw).ndcg == doctest::Approx(base.ndcg).epsilon(1e-12));
        }

    // Rank metrics see only the gt position; relabel the others freely.
    RankResult relabeled = r;
    for (double& x : relabeled.relevance) x = 0.25;
    const RankResult rl[] = {relabeled};
    const RankStats rs = mrr_r_mean(rl);
    CHECK(rs.mrr == base.mrr);
    CHECK(rs.mean_rank == base.mean_rank);

    // Moving gt up one slot never hurts.
    const int rank = gt_rank(r);
    if (rank > 1) {
      RankResult up = r;
      std::swap(up.permutation[rank - 1], up.permutation[rank - 2]);
      const RankResult u[] = {up};
      const MetricsTable m = metrics(u);
      CHECK(m.mrr > base.mrr);
      CHECK(m.r1 >= base.r1);
      CHECK(m.r5 >= base.r5);
      CHECK(m.r10 >= base.r10);
      CHECK(m.mean_rank < base.mean_rank);
    }
  }
}

TEST_CASE("random ranking expectation") {
  // Enumerate every gt position of a uniform permutation.
  for (int c : {1, 2, 5, 16}) {
    double want = 0;
    for (int r = 1; r <= c; ++r) want += 100.0 / r / c;
    CHECK(random_mrr(c) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(random_mrr(1) == 100.0);
  CHECK_THROWS_AS(random_mrr(0), gst::ContractError);
}

TEST_CASE("question types") {
  CHECK(question_type(words("is there a ball ?")) == QuestionType::YesNo);
  CHECK(question_type(words("how many cube ?")) == QuestionType::Counting);
  CHECK(question_type(words("what color is it ?")) == QuestionType::Color);
  CHECK(question_type(words("where is the cone ?")) == QuestionType::TimePlace);
  CHECK(question_type(words("what is next to the ball ?")) == QuestionType::Objects);
  CHECK(question_type(words("what size is that one ?")) == QuestionType::Others);
  CHECK(question_type(words("ball ball ball")) == QuestionType::Others);
  const auto dist = type_distribution({{words("is there a ball ?"), words("ball ?")}});
  CHECK(dist.at(QuestionType::YesNo) == 1u);
  CHECK(dist.at(QuestionType::Others) == 1u);
  CHECK(dist.size() == kQuestionTypes.size());
}

TEST_CASE("diversity") {
  using Q = std::vector<std::vector<int>>;
  const std::vector<Q> same{{words("is there a ball ?"), words("how many cube ?")}};
  for (int n = 1; n <= 4; ++n) {
    const DiversityStats s = ngram_diversity(same, same, n);
    CHECK(s.diversity == 0.0);
    CHECK(s.no_match == 0.0);
  }
  const std::vector<Q> a{{{5, 6, 7}}}, b{{{8, 9, 10}}};
  CHECK(ngram_diversity(a, b, 2).diversity == 100.0);
  CHECK(ngram_diversity(a, b, 2).no_match == 100.0);

  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    std::vector<Q> silver, gold;
    for (int img = 0; img < 3; ++img) {
      silver.push_back(testutil::random_questions(rng));
      gold.push_back(testutil::random_questions(rng));
    }
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    const DiversityStats got = ngram_diversity(silver, gold, n);
    const DiversityStats want = testutil::brute_diversity(silver, gold, n);
    CHECK(got.diversity == doctest::Approx(want.diversity).epsilon(1e-12));
    CHECK(got.no_match == doctest::Approx(want.no_match).epsilon(1e-12));
    CHECK(got.diversity >= 0.0);
    CHECK(got.diversity <= 100.0);
  }
  CHECK_THROWS_AS(ngram_diversity(a, {}, 1), gst::ContractError);
}

TEST_CASE("CSV round trips") {
  Rng rng(20);
  std::vector<MetricsRow> rows;
  for (const char* name : {"teacher", "iter1/student", "ensemble"})
    rows.push_back({name, sample_table(rng)});
  const std::string csv = metrics_csv(rows);
  CHECK(csv.rfind(kCsvSchema, 0) == 0);
  // Schema line, header, one line per configuration.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 3);
  CHECK(parse_metrics_csv(csv) == rows);

  std::vector<TypeRow> types{{"teacher", QuestionType::Color, sample_table(rng)},
                             {"teacher", QuestionType::Others, sample_table(rng)}};
  CHECK(parse_per_type_csv(per_type_csv(types)) == types);

  std::vector<TypeShareRow> share{{"gold", QuestionType::YesNo, 12, 100.0 / 7}};
  CHECK(parse_type_share_csv(type_share_csv(share)) == share);

  std::vector<DiversityRow> div{{"iter1", 2, 33.3, 12.5}, {"iter1", 3, 0.1, 1e-9}};
  CHECK(parse_diversity_csv(diversity_csv(div)) == div);

  std::vector<UtilizationRow> util{{1, 50.0, gst::curate::TauMode::Absolute, 10, 7, 0.7},
                                   {2, 90.0, gst::curate::TauMode::Percentile, 9, 8, 8.0 / 9}};
  CHECK(parse_utilization_csv(utilization_csv(util)) == util);

  std::vector<gst::attacks::CurveRow> curves{{"fgsm", 0.01, 0, 50.5, 60.25},
                                             {"random_token", 0.2, 3, 1.0 / 3, 2.0 / 3}};
  CHECK(parse_attack_csv(attack_csv(curves)) == curves);

  gst::pipeline::LowDataRow ld;
  ld.fraction = 0.1;
  ld.gold_dialogs = 200;
  ld.silver_dialogs = 1000;
  ld.utilization = 0.995;
  ld.teacher = sample_table(rng);
  ld.student = sample_table(rng);
  CHECK(parse_low_data_csv(low_data_csv({ld})) == std::vector<gst::pipeline::LowDataRow>{ld});

  CHECK_THROWS_AS(metrics_csv({{"a,b", sample_table(rng)}}), gst::ContractError);
  std::string broken = csv;
  broken[2] = 'X';
  CHECK_THROWS_AS(parse_metrics_csv(broken), gst::FormatError);
  CHECK_THROWS_AS(parse_metrics_csv(diversity_csv(div)), gst::FormatError);
  CHECK(parse_type_name(type_name(QuestionType::TimePlace)) == QuestionType::TimePlace);
}

TEST_CASE("report rendering") {
  ReportInputs in;
  const ReportDocs empty = render_report(in);
  CHECK(empty.markdown.find("not run") != std::string::npos);
  CHECK(empty.csv.empty());

  Rng rng(21);
  in.metrics = std::vector<MetricsRow>{{"teacher", sample_table(rng)}, {"student", sample_table(rng)}};
  const ReportDocs docs = render_report(in);
  CHECK(docs.csv.size() == 1u);
  CHECK(docs.csv[0].first == "metrics.csv");
  CHECK(parse_metrics_csv(docs.csv[0].second) == *in.metrics);
  // Attack section is still absent.
  CHECK(docs.markdown.find("not run") != std::string::npos);
  CHECK(render_report(in).markdown == docs.markdown);
}
