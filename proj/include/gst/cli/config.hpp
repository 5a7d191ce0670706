#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gst/attacks/attacks.hpp"
#include "gst/pipeline/gst.hpp"
#include "gst/toyworld/dataset.hpp"

namespace gst::cli {

/// Everything a run needs. Defaults are the desk-scale preset.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  toyworld::DatasetConfig data;
  pipeline::GstConfig gst;
  std::vector<double> low_data_fractions{0.05, 0.1, 0.3};
  attacks::AttackConfig attack;
  int transcripts = 3;
  std::vector<int> diversity_n{1, 2, 3, 4};

  RunConfig();
  /// Fills the fields derived from others (model sizes, rounds, threads).
  void resolve();
  void validate() const;
};

/// Strict: unknown keys and wrongly typed values raise ConfigError.
RunConfig config_from_json(const std::string& text);
/// Every field, defaults included, in a fixed key order.
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

/// GST_SEED and GST_THREADS, when set, replace the configured values.
void apply_env_overrides(RunConfig& cfg);

}  // namespace gst::cli
