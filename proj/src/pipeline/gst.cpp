#include "gst/pipeline/gst.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "gst/errors.hpp"
#include "gst/seq2seq/contexts.hpp"
#include "gst/toyworld/grammar.hpp"

namespace gst::pipeline {

namespace {

// Stream tags under the run seed.
enum : std::uint64_t {
  kTeacherTrain = 1,
  kQuestionerTrain = 2,
  kStudentTrain = 3,
  kSilver = 4,
  kPoolDraw = 5,
  kGoldSubset = 6,
  kStudentInit = 7,
  kTeacherInit = 8,
  kQuestionerInit = 9,
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return numkit::Rng(seed).fork(tag).fork(index).next_u64();
}

std::vector<Dialog> flatten(const std::vector<std::vector<Dialog>>& parts) {
  std::vector<Dialog> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

void GstConfig::validate() const {
  if (rounds < 1) throw ConfigError("gst: rounds must be at least 1");
  if (!(mcr_rate >= 0.0 && mcr_rate < 1.0)) throw ConfigError("gst: mcr_rate must be in [0,1)");
  if (iterations < 1) throw ConfigError("gst: iterations must be at least 1");
  if (!(tau > 0.0)) throw ConfigError("gst: tau must be positive");
  if (tau_mode == curate::TauMode::Percentile && tau > 100.0) {
    throw ConfigError("gst: percentile tau must be in (0,100]");
  }
  if (!(gold_fraction > 0.0 && gold_fraction <= 1.0)) {
    throw ConfigError("gst: gold_fraction must be in (0,1]");
  }
  if (silver_multiplier < 1) throw ConfigError("gst: silver_multiplier must be at least 1");
  if (retrieve_m < 1) throw ConfigError("gst: retrieve_m must be at least 1");
  if (threads < 1) throw ConfigError("gst: threads must be at least 1");
  seq2seq::validate(question_decode);
  seq2seq::validate(answer_decode);
}

ModelParams train_teacher(const std::vector<Dialog>& gold, const GstConfig& cfg,
                          std::uint64_t seed) {
  if (gold.empty()) throw ContractError("train_teacher: no gold dialogs");
  seq2seq::TrainConfig tc = cfg.teacher_train;
  tc.seed = derive(seed, kTeacherTrain);
  const ModelParams init =
      ModelParams::init(cfg.model, seq2seq::Role::Answerer, derive(seed, kTeacherInit));
  return seq2seq::train(init, seq2seq::answerer_examples(gold), tc).params;
}

ModelParams train_questioner(const std::vector<Dialog>& gold, const GstConfig& cfg,
                             std::uint64_t seed) {
  if (gold.empty()) throw ContractError("train_questioner: no gold dialogs");
  seq2seq::TrainConfig tc = cfg.questioner_train;
  tc.seed = derive(seed, kQuestionerTrain);
  const ModelParams init =
      ModelParams::init(cfg.model, seq2seq::Role::Questioner, derive(seed, kQuestionerInit));
  return seq2seq::train(init, seq2seq::questioner_examples(gold), tc).params;
}

seq2seq::Context mcr_mask(const seq2seq::Context& ctx, numkit::Rng& rng, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("mcr_mask: rate must be in [0,1)");
  seq2seq::Context out = ctx;
  if (rate == 0.0) return out;
  auto& f = out.features;
  for (std::size_t r = 0; r < f.regions; ++r) {
    if (rng.bernoulli(rate)) {
      std::fill(f.values.begin() + r * f.dim, f.values.begin() + (r + 1) * f.dim, 0.0);
    }
  }
  for (auto* seq : {&out.history, &out.question}) {
    for (toyworld::Token& t : *seq) {
      if (t >= toyworld::kNumSpecials && rng.bernoulli(rate)) t = toyworld::kMask;
    }
  }
  return out;
}

namespace {

Dialog silver_dialog(const ModelParams& questioner, const ModelParams& teacher, const Dialog& scene,
                     const GstConfig& cfg, numkit::Rng rng) {
  Dialog d;
  d.scene_id = scene.scene_id;
  d.scene = scene.scene;
  d.features = scene.features;
  d.caption = scene.caption.empty() ? toyworld::caption_for(scene.scene) : scene.caption;
  d.seed = scene.seed;
  std::vector<std::pair<toyworld::Tokens, toyworld::Tokens>> history;
  std::vector<toyworld::Tokens> prior_questions;
  for (int t = 0; t < cfg.rounds; ++t) {
    seq2seq::Context qctx;
    qctx.features = d.features;
    qctx.history = toyworld::join_history(d.caption, history);
    toyworld::Tokens q = seq2seq::generate(questioner, qctx, cfg.question_decode, rng,
                                           prior_questions);
    if (q.empty()) throw DecodeError("questioner produced an empty question");
    seq2seq::Context actx = qctx;
    actx.question = q;
    // Teacher inputs are never masked.
    toyworld::Tokens a = seq2seq::generate(teacher, actx, cfg.answer_decode, rng);
    toyworld::Round r;
    r.question = q;
    r.answer = a;
    r.teacher_ppl = seq2seq::perplexity(teacher, actx, seq2seq::with_eos(a));
    r.selected = true;
    d.rounds.push_back(r);
    history.emplace_back(q, a);
    prior_questions.push_back(std::move(q));
  }
  return d;
}

}  // namespace

SilverResult generate_silver(const ModelParams& questioner, const ModelParams& teacher,
                             const std::vector<Dialog>& scenes, const GstConfig& cfg,
                             const numkit::Rng& base, const LogFn& log) {
  if (questioner.role != seq2seq::Role::Questioner || teacher.role != seq2seq::Role::Answerer) {
    throw ContractError("generate_silver: expected a questioner and an answerer");
  }
  if (questioner.config.vocab_size != teacher.config.vocab_size) {
    throw HashMismatchError("generate_silver: questioner and teacher vocabularies differ");
  }
  const std::size_t n = scenes.size();
  std::vector<std::optional<Dialog>> slots(n);
  std::vector<std::string> errors(n);
  std::exception_ptr fatal;
  const auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      try {
        slots[i] = silver_dialog(questioner, teacher, scenes[i], cfg, base.fork(scenes[i].scene_id));
      } catch (const DecodeError& e) {
        errors[i] = e.what();
      } catch (...) {
        fatal = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(std::max(1, cfg.threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
    for (auto& th : pool) th.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  SilverResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.dialogs.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back(scenes[i].scene_id);
      if (log) log("gen-silver: skipped scene " + std::to_string(scenes[i].scene_id) + ": " + errors[i]);
    }
  }
  if (n > 0 && static_cast<double>(out.skipped.size()) > cfg.max_skip_fraction * static_cast<double>(n)) {
    throw DataError("generate_silver: " + std::to_string(out.skipped.size()) + " of " +
                    std::to_string(n) + " scenes failed to decode");
  }
  return out;
}

double resolve_tau(const GstConfig& cfg, const ModelParams& teacher,
                   const std::vector<Dialog>& heldout) {
  if (cfg.tau_mode == curate::TauMode::Absolute) return cfg.tau;
  std::vector<double> ppl;
  for (const auto& d : heldout) {
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      ppl.push_back(seq2seq::perplexity(teacher, seq2seq::answerer_context(d, t),
                                        seq2seq::with_eos(d.rounds[t].answer)));
    }
  }
  if (ppl.empty()) throw ContractError("resolve_tau: percentile mode needs held-out gold rounds");
  return curate::percentile(std::move(ppl), cfg.tau);
}

std::vector<seq2seq::Example> student_examples(const std::vector<Dialog>& gold,
                                               const std::vector<Dialog>& silver,
                                               const GstConfig& cfg) {
  std::vector<seq2seq::Example> data = seq2seq::answerer_examples(gold, 0);
  const auto s = seq2seq::answerer_examples(silver, 1, cfg.ablations.use_ppl,
                                            cfg.ablations.use_mcr && cfg.mcr_rate > 0.0);
  data.insert(data.end(), s.begin(), s.end());
  return data;
}

seq2seq::TrainResult train_student(const std::vector<Dialog>& gold,
                                   const std::vector<Dialog>& silver, const GstConfig& cfg,
                                   const ModelParams& init) {
  if (cfg.ablations.use_ppl) {
    for (const auto& d : silver) {
      for (const auto& r : d.rounds) {
        if (!r.teacher_ppl) throw DataError("train_student: silver round without selection data");
      }
    }
  }
  const auto data = student_examples(gold, silver, cfg);
  if (data.empty()) throw ContractError("train_student: no gold and no selected silver rounds");
  const double rate = cfg.mcr_rate;
  const seq2seq::AugmentFn augment = [rate](const seq2seq::Context& c, numkit::Rng& rng) {
    return mcr_mask(c, rng, rate);
  };
  return seq2seq::train(init, data, cfg.student_train, augment);
}

std::vector<Dialog> pool_partition(const std::vector<Dialog>& pool, int part, int parts) {
  if (parts < 1 || part < 0 || part >= parts) throw ContractError("pool_partition: bad partition");
  const std::size_t n = pool.size();
  const std::size_t begin = n * part / parts, end = n * (part + 1) / parts;
  return {pool.begin() + begin, pool.begin() + end};
}

std::vector<Dialog> select_pool(const std::vector<Dialog>& gold, const std::vector<Dialog>& pool,
                                std::size_t m, const GstConfig& cfg, std::uint64_t seed) {
  if (cfg.ablations.full_pool) return pool;
  if (m > pool.size()) {
    throw ContractError("select_pool: M=" + std::to_string(m) + " exceeds pool size " +
                        std::to_string(pool.size()));
  }
  std::vector<std::size_t> picked;
  if (!cfg.ablations.use_iir) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    numkit::Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
    picked.assign(idx.begin(), idx.begin() + m);
    std::sort(picked.begin(), picked.end());
  } else {
    const curate::GaussianModel g = curate::fit_gaussian(curate::summary_matrix(gold), cfg.shrinkage);
    const curate::FeatureMatrix x = curate::summary_matrix(pool);
    std::vector<double> scores(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) scores[r] = curate::log_density(g, x.row(r));
    // Row indices stand in for ids so duplicate scene ids cannot collide.
    std::vector<std::uint64_t> rows(x.rows);
    std::iota(rows.begin(), rows.end(), 0);
    for (std::uint64_t r : curate::top_m_by_score(scores, rows, m)) picked.push_back(r);
  }
  std::vector<Dialog> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(pool[i]);
  return out;
}

IterationState bootstrap(const RunData& data, const GstConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  IterationState st;
  st.teacher = train_teacher(*data.gold, cfg, seed);
  st.questioner = train_questioner(*data.gold, cfg, seed);
  return st;
}

std::vector<Dialog> retrieve_scenes(const RunData& data, const GstConfig& cfg, std::uint64_t seed,
                                    int iteration) {
  const std::vector<Dialog> part =
      cfg.reuse_pool ? *data.pool
                     : pool_partition(*data.pool, iteration % cfg.iterations, cfg.iterations);
  const std::size_t m = std::min(cfg.retrieve_m, part.size());
  return select_pool(*data.gold, part, m, cfg,
                     derive(seed, kPoolDraw, static_cast<std::uint64_t>(iteration)));
}

numkit::Rng silver_stream(std::uint64_t seed, int iteration) {
  return numkit::Rng(seed).fork(kSilver).fork(static_cast<std::uint64_t>(iteration));
}

GstConfig student_config(const GstConfig& cfg, std::uint64_t seed, int iteration) {
  GstConfig out = cfg;
  out.student_train.seed = derive(seed, kStudentTrain, static_cast<std::uint64_t>(iteration));
  return out;
}

ModelParams student_init(const GstConfig& cfg, const ModelParams& teacher, std::uint64_t seed,
                         int iteration) {
  if (cfg.init_from_teacher) return teacher;
  return ModelParams::init(cfg.model, seq2seq::Role::Answerer,
                           derive(seed, kStudentInit, static_cast<std::uint64_t>(iteration)));
}

IterationState iterate(IterationState state, const RunData& data, const GstConfig& cfg,
                       std::uint64_t seed, int k, const LogFn& log, const IterationHook& hook) {
  cfg.validate();
  if (k < 1) throw ContractError("iterate: k must be at least 1");
  for (int step = 0; step < k; ++step) {
    const int i = state.iteration;
    const std::vector<Dialog> scenes = retrieve_scenes(data, cfg, seed, i);
    SilverResult silver =
        generate_silver(state.questioner, state.teacher, scenes, cfg, silver_stream(seed, i), log);
    IterationRecord rec;
    rec.iteration = i + 1;
    rec.retrieved = scenes.size();
    rec.skipped = silver.skipped.size();
    rec.tau = resolve_tau(cfg, state.teacher, *data.val);
    rec.selection = curate::ppl_select(silver.dialogs, rec.tau, cfg.tau_mode);
    state.silver.push_back(std::move(silver.dialogs));

    const std::vector<Dialog> all_silver = flatten(state.silver);
    for (const auto& d : all_silver) rec.accumulated_rounds += d.rounds.size();
    seq2seq::TrainResult student = train_student(*data.gold, all_silver, student_config(cfg, seed, i),
                                                 student_init(cfg, state.teacher, seed, i));

    if (data.test) {
      rec.teacher_metrics = evalkit::metrics(evalkit::evaluate(state.teacher, *data.test));
      rec.student_metrics = evalkit::metrics(evalkit::evaluate(student.params, *data.test));
    }
    if (log) {
      std::string msg = "iteration " + std::to_string(rec.iteration) + ": utilization " +
                        std::to_string(rec.selection.utilization);
      if (data.test) {
        msg += ", teacher NDCG " + std::to_string(rec.teacher_metrics.ndcg) + ", student NDCG " +
               std::to_string(rec.student_metrics.ndcg);
      }
      log(msg);
    }
    state.records.push_back(rec);
    if (hook) hook({scenes, silver.skipped, state.silver.back(), state.records.back(), state.teacher,
                 student});
    state.teacher = std::move(student.params);
    ++state.iteration;
  }
  return state;
}

std::vector<Dialog> gold_subset(const std::vector<Dialog>& gold, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("gold_subset: fraction in (0,1]");
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(gold.size())));
  if (n < kMinGoldDialogs) {
    throw CapacityError("gold fraction " + std::to_string(fraction) + " leaves " +
                        std::to_string(n) + " gold dialogs; at least " +
                        std::to_string(kMinGoldDialogs) + " are required");
  }
  if (n == gold.size()) return gold;
  std::vector<std::size_t> idx(gold.size());
  std::iota(idx.begin(), idx.end(), 0);
  numkit::Rng rng(derive(seed, kGoldSubset));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<Dialog> out;
  for (std::size_t i : idx) out.push_back(gold[i]);
  return out;
}

LowDataRow low_data_run(double fraction, const RunData& data, const GstConfig& cfg,
                        std::uint64_t seed, const LogFn& log) {
  const std::vector<Dialog> subset = gold_subset(*data.gold, fraction, seed);
  const std::size_t n = subset.size();
  GstConfig c = cfg;
  c.iterations = 1;
  c.ablations.use_ppl = true;
  c.ablations.use_mcr = true;
  c.retrieve_m = std::min(cfg.retrieve_m, static_cast<std::size_t>(cfg.silver_multiplier) * n);
  RunData sub = data;
  sub.gold = &subset;

  IterationState st = bootstrap(sub, c, seed);
  st = iterate(std::move(st), sub, c, seed, 1, log);
  LowDataRow row;
  row.fraction = fraction;
  row.gold_dialogs = n;
  row.silver_dialogs = st.silver.front().size();
  row.utilization = st.records.front().selection.utilization;
  row.teacher = st.records.front().teacher_metrics;
  row.student = st.records.front().student_metrics;
  return row;
}

}  // namespace gst::pipeline
