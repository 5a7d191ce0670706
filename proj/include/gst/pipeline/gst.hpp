#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gst/curate/curate.hpp"
#include "gst/evalkit/metrics.hpp"
#include "gst/seq2seq/decode.hpp"
#include "gst/seq2seq/train.hpp"
#include "gst/toyworld/dataset.hpp"

namespace gst::pipeline {

using seq2seq::ModelParams;
using toyworld::Dialog;

struct Ablations {
  bool use_ppl = true;
  bool use_mcr = true;
  bool use_iir = true;     // false: M pool scenes drawn at random
  bool full_pool = false;  // true: the whole partition, no retrieval
};

struct GstConfig {
  int rounds = 5;
  std::size_t retrieve_m = 2000;
  double shrinkage = curate::kDefaultShrinkage;
  double tau = 50.0;  // a percentile in [0,100] when tau_mode is Percentile
  curate::TauMode tau_mode = curate::TauMode::Absolute;
  double mcr_rate = 0.15;
  seq2seq::DecodeConfig question_decode{seq2seq::DecodeMode::TopK, 7, 0.7, 4, 12};
  seq2seq::DecodeConfig answer_decode{seq2seq::DecodeMode::TopK, 7, 0.7, 0, 12};
  int iterations = 3;
  Ablations ablations;
  bool init_from_teacher = false;
  bool reuse_pool = false;  // regenerate on the same scenes with new seeds
  double gold_fraction = 1.0;
  int silver_multiplier = 5;
  double max_skip_fraction = 0.1;
  int threads = 1;

  seq2seq::ModelConfig model;
  seq2seq::TrainConfig teacher_train;
  seq2seq::TrainConfig questioner_train;
  seq2seq::TrainConfig student_train;

  void validate() const;
};

/// Logger for skipped scenes and stage progress; may be empty.
using LogFn = std::function<void(const std::string&)>;

ModelParams train_teacher(const std::vector<Dialog>& gold, const GstConfig& cfg,
                          std::uint64_t seed);
ModelParams train_questioner(const std::vector<Dialog>& gold, const GstConfig& cfg,
                             std::uint64_t seed);

/// Region zeroing and [MASK] substitution at `rate`; specials are kept.
seq2seq::Context mcr_mask(const seq2seq::Context& ctx, numkit::Rng& rng, double rate);

struct SilverResult {
  std::vector<Dialog> dialogs;
  std::vector<std::uint64_t> skipped;
};

/// Rounds are generated in order per scene; the stream of scene s is
/// base.fork(s), so results do not depend on `threads`.
SilverResult generate_silver(const ModelParams& questioner, const ModelParams& teacher,
                             const std::vector<Dialog>& scenes, const GstConfig& cfg,
                             const numkit::Rng& base, const LogFn& log = {});

/// Resolves the PPL threshold: the configured value, or the configured
/// percentile of teacher PPL on `heldout` gold rounds.
double resolve_tau(const GstConfig& cfg, const ModelParams& teacher,
                   const std::vector<Dialog>& heldout);

/// Student loss: group 0 is gold, group 1 is (selected) silver under MCR.
std::vector<seq2seq::Example> student_examples(const std::vector<Dialog>& gold,
                                               const std::vector<Dialog>& silver,
                                               const GstConfig& cfg);
seq2seq::TrainResult train_student(const std::vector<Dialog>& gold,
                                   const std::vector<Dialog>& silver, const GstConfig& cfg,
                                   const ModelParams& init);

/// Pool scenes to annotate: IIR top-M, random M, or the whole partition.
std::vector<Dialog> select_pool(const std::vector<Dialog>& gold, const std::vector<Dialog>& pool,
                                std::size_t m, const GstConfig& cfg, std::uint64_t seed);

/// Partition `part` of `parts` contiguous slices of the pool.
std::vector<Dialog> pool_partition(const std::vector<Dialog>& pool, int part, int parts);

struct IterationRecord {
  int iteration = 0;
  std::size_t retrieved = 0;
  std::size_t skipped = 0;
  double tau = 0.0;
  curate::SelectionReport selection;
  std::size_t accumulated_rounds = 0;
  evalkit::MetricsTable teacher_metrics;
  evalkit::MetricsTable student_metrics;
};

struct IterationState {
  int iteration = 0;
  ModelParams teacher;
  ModelParams questioner;
  std::vector<std::vector<Dialog>> silver;  // one entry per finished iteration
  std::vector<IterationRecord> records;
};

struct RunData {
  const std::vector<Dialog>* gold = nullptr;
  const std::vector<Dialog>* val = nullptr;
  const std::vector<Dialog>* test = nullptr;
  const std::vector<Dialog>* pool = nullptr;
};

/// Gold dialogs kept at `fraction`: ceil(fraction * N) chosen by a seeded
/// shuffle, in original order. CapacityError below kMinGoldDialogs.
std::vector<Dialog> gold_subset(const std::vector<Dialog>& gold, double fraction,
                                std::uint64_t seed);

// Per-iteration pieces of `iterate`, exposed so a staged run reproduces it.
// `iteration` is 0-based.
std::vector<Dialog> retrieve_scenes(const RunData& data, const GstConfig& cfg, std::uint64_t seed,
                                    int iteration);
numkit::Rng silver_stream(std::uint64_t seed, int iteration);
GstConfig student_config(const GstConfig& cfg, std::uint64_t seed, int iteration);
ModelParams student_init(const GstConfig& cfg, const ModelParams& teacher, std::uint64_t seed,
                         int iteration);

struct IterationArtifacts {
  const std::vector<Dialog>& scenes;
  const std::vector<std::uint64_t>& skipped;
  const std::vector<Dialog>& silver;  // this iteration, selection flags set
  const IterationRecord& record;
  const ModelParams& teacher;
  const seq2seq::TrainResult& student;
};
using IterationHook = std::function<void(const IterationArtifacts&)>;

/// Initial state: teacher and questioner trained on gold.
IterationState bootstrap(const RunData& data, const GstConfig& cfg, std::uint64_t seed);

/// Runs k further iterations; each student becomes the next teacher.
IterationState iterate(IterationState state, const RunData& data, const GstConfig& cfg,
                       std::uint64_t seed, int k, const LogFn& log = {},
                       const IterationHook& hook = {});

inline constexpr std::size_t kMinGoldDialogs = 5;

struct LowDataRow {
  double fraction = 0.0;
  std::size_t gold_dialogs = 0;
  std::size_t silver_dialogs = 0;
  double utilization = 0.0;
  evalkit::MetricsTable teacher;
  evalkit::MetricsTable student;
  bool operator==(const LowDataRow&) const = default;
};

/// Gold subsampled by dialog; silver of silver_multiplier x subset size
/// (capped at retrieve_m); one iteration with PPL and MCR on.
LowDataRow low_data_run(double fraction, const RunData& data, const GstConfig& cfg,
                        std::uint64_t seed, const LogFn& log = {});

}  // namespace gst::pipeline
