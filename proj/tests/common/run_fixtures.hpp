#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gst/cli/config.hpp"
#include "gst/cli/run.hpp"

namespace testutil {

/// Seconds-scale run: tiny splits, a d16 model, small budgets.
inline gst::cli::RunConfig tiny_run_config() {
  gst::cli::RunConfig c;
  c.data.n_train = 40;
  c.data.n_val = 10;
  c.data.n_test = 10;
  c.data.pool_size = 60;
  c.gst.model.d_model = 16;
  c.gst.model.ffn = 32;
  for (auto* t : {&c.gst.teacher_train, &c.gst.questioner_train, &c.gst.student_train}) {
    t->lr = 3e-3;
    t->example_budget = 1000;
  }
  c.gst.retrieve_m = 10;
  c.gst.iterations = 2;
  c.gst.max_skip_fraction = 1.0;
  c.attack.seeds = 1;
  c.attack.epsilons = {0.05};
  c.attack.mask_probs = {0.2};
  c.resolve();
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("gst_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

struct CliResult {
  int code = 0;
  std::string out, err;
};

/// In-process invocation: `--run <dir>` followed by `args`.
inline CliResult cli(const std::filesystem::path& dir, std::vector<std::string> args) {
  args.insert(args.begin(), {"--run", dir.string()});
  std::ostringstream out, err;
  CliResult r;
  r.code = gst::cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Every regular file under `dir` except timings, relative path to bytes.
inline std::vector<std::pair<std::string, std::string>> tree(const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(e.path(), dir).string();
    if (rel == "timings.json") continue;
    out.emplace_back(rel, slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace testutil
