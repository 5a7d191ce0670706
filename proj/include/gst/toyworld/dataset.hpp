#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gst/toyworld/dialog.hpp"

namespace gst::toyworld {

struct DatasetConfig {
  WorldConfig world;
  DialogConfig dialog;
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  int pool_size = 8000;
  double pool_shifted_fraction = 0.25;
  int candidates = 16;
};

/// Gold splits carry dialogs; pool entries carry a scene, features and a
/// templated caption with no rounds. Val and test rounds carry candidates.
struct Splits {
  std::vector<Dialog> train;
  std::vector<Dialog> val;
  std::vector<Dialog> test;
  std::vector<Dialog> pool;
};

/// Pure function of (config, seed). Scene ids are unique across splits.
Splits generate_splits(const DatasetConfig& cfg, std::uint64_t seed);

/// Gold dialog for any scene; the per-scene stream is forked from `seed`.
Dialog make_gold_dialog(const DatasetConfig& cfg, const Scene& scene, std::uint64_t seed,
                        bool with_candidates);
Dialog make_pool_entry(const DatasetConfig& cfg, const Scene& scene, std::uint64_t seed);

// JSON-lines serialization, one dialog per line; byte-stable.
std::string dialog_to_json(const Dialog& dialog);
Dialog dialog_from_json(const std::string& line);
void write_jsonl(const std::filesystem::path& path, const std::vector<Dialog>& dialogs);
std::vector<Dialog> read_jsonl(const std::filesystem::path& path);

}  // namespace gst::toyworld
