#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "doctest.h"
#include "gst/cli/config.hpp"
#include "gst/cli/run.hpp"
#include "gst/errors.hpp"
#include "gst/evalkit/metrics.hpp"
#include "gst/evalkit/report.hpp"
#include "gst/seq2seq/checkpoint.hpp"
#include "run_fixtures.hpp"

namespace fs = std::filesystem;
using namespace gst::cli;
using testutil::cli;

namespace {

fs::path tiny_run(const std::string& name) {
  const fs::path dir = testutil::scratch_dir(name);
  testutil::write_text(dir / "config.json", config_to_json(testutil::tiny_run_config()));
  return dir;
}

nlohmann::json error_record(const testutil::CliResult& r) {
  REQUIRE_FALSE(r.err.empty());
  return nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  const RunConfig c = testutil::tiny_run_config();
  const std::string text = config_to_json(c);
  CHECK(config_to_json(config_from_json(text)) == text);
  CHECK(config_from_json("{}").seed == RunConfig().seed);

  CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), gst::ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"n_trian": 5}})"), gst::ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"seed": "one"})"), gst::ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"model": {"d_model": 30, "heads": 4}})"), gst::ConfigError);
  CHECK_THROWS_AS(config_from_json("{"), gst::ConfigError);
}

TEST_CASE("environment overrides") {
  RunConfig c = testutil::tiny_run_config();
  ::setenv("GST_SEED", "42", 1);
  ::setenv("GST_THREADS", "3", 1);
  apply_env_overrides(c);
  CHECK(c.seed == 42u);
  CHECK(c.threads == 3);
  CHECK(c.gst.threads == 3);
  ::setenv("GST_SEED", "x1", 1);
  CHECK_THROWS_AS(apply_env_overrides(c), gst::ConfigError);
  ::unsetenv("GST_SEED");
  ::unsetenv("GST_THREADS");

  const fs::path dir = tiny_run("env");
  CHECK(shell("GST_SEED=9 " + std::string(GST_CLI_PATH) + " --run " + dir.string() + " gen-data") == 0);
  CHECK(load_config(dir / "config.json").seed == 9u);
}

TEST_CASE("errors and exit codes") {
  const fs::path dir = tiny_run("errors");
  const auto usage = cli(dir, {"no-such-command"});
  CHECK(usage.code == 2);
  CHECK(error_record(usage)["kind"] == "usage");
  CHECK(shell(std::string(GST_CLI_PATH) + " --run " + dir.string() + " no-such-command") == 2);
  CHECK(shell(std::string(GST_CLI_PATH) + " gen-data") == 2);

  const auto missing = cli(dir, {"train-base"});
  CHECK(missing.code == 1);
  const auto rec = error_record(missing);
  CHECK(rec["status"] == "error");
  CHECK(rec["kind"] == "missing_artifact");
  CHECK(rec["command"] == "train-base");
  CHECK(rec["message"].get<std::string>().find("gst_cli gen-data") != std::string::npos);

  const auto later = cli(dir, {"select", "--iteration", "2"});
  CHECK(later.code == 1);
  CHECK(error_record(later)["message"].get<std::string>().find("gst_cli gen-silver --iteration 2") !=
        std::string::npos);

  testutil::write_text(dir / "config.json", R"({"gst": {"tau": -1}})");
  const auto bad = cli(dir, {"gen-data"});
  CHECK(bad.code == 1);
  CHECK(error_record(bad)["kind"] == "config");
}

TEST_CASE("stages are idempotent and verify inputs") {
  const fs::path dir = tiny_run("stamps");
  CHECK(cli(dir, {"gen-data"}).out.find("gen-data: done") != std::string::npos);
  const std::string train = testutil::slurp(dir / "data/train.jsonl");
  CHECK(cli(dir, {"gen-data"}).out.find("gen-data: up to date") != std::string::npos);
  CHECK(cli(dir, {"--force", "gen-data"}).out.find("gen-data: done") != std::string::npos);
  CHECK(testutil::slurp(dir / "data/train.jsonl") == train);
  CHECK(fs::exists(dir / "manifest.json"));

  // Tampering with a produced file is caught by the consumer.
  testutil::write_text(dir / "data/train.jsonl", train + "\n");
  const auto r = cli(dir, {"train-base"});
  CHECK(r.code == 1);
  CHECK(error_record(r)["kind"] == "hash_mismatch");
  CHECK(cli(dir, {"--force", "gen-data"}).code == 0);
  CHECK(cli(dir, {"train-base"}).code == 0);
  CHECK(cli(dir, {"train-base"}).out.find("up to date") != std::string::npos);

  // A changed config section invalidates downstream artifacts.
  auto cfg = testutil::tiny_run_config();
  cfg.data.world.noise_sigma = 0.06;
  testutil::write_text(dir / "config.json", config_to_json(cfg));
  CHECK(error_record(cli(dir, {"train-base"}))["kind"] == "hash_mismatch");
}

TEST_CASE("staged commands reproduce iterate") {
  const fs::path a = tiny_run("iterate");
  const fs::path b = tiny_run("staged");
  REQUIRE(cli(a, {"iterate", "--iterations", "1"}).code == 0);
  for (const auto& cmd : std::vector<std::vector<std::string>>{{"gen-data"},
                                                              {"train-base"},
                                                              {"retrieve", "--iteration", "1"},
                                                              {"gen-silver", "--iteration", "1"},
                                                              {"select", "--iteration", "1"},
                                                              {"train-student", "--iteration", "1"}})
    REQUIRE(cli(b, cmd).code == 0);
  const auto ta = testutil::tree(a), tb = testutil::tree(b);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].first == tb[i].first);
    CHECK_MESSAGE(ta[i].second == tb[i].second, ta[i].first);
  }
  CHECK(cli(a, {"iterate", "--iterations", "1"}).out.find("iteration 1: up to date") != std::string::npos);

  const auto metrics = gst::evalkit::parse_metrics_csv(testutil::slurp(a / "iter_1/metrics.csv"));
  REQUIRE(metrics.size() == 2u);
  CHECK(metrics[0].config == "teacher");
  CHECK(metrics[1].config == "student");

  REQUIRE(cli(a, {"report"}).code == 0);
  const std::string md = testutil::slurp(a / "report/report.md");
  CHECK(md.find("not run") != std::string::npos);
  CHECK(gst::evalkit::parse_metrics_csv(testutil::slurp(a / "report/metrics.csv")).size() == 2u);
}

TEST_CASE("evaluating an untrained checkpoint") {
  const fs::path dir = testutil::scratch_dir("untrained");
  auto cfg = testutil::tiny_run_config();
  cfg.data.n_test = 80;
  cfg.resolve();
  testutil::write_text(dir / "config.json", config_to_json(cfg));
  REQUIRE(cli(dir, {"gen-data"}).code == 0);
  fs::create_directories(dir / "models");
  const auto init = gst::seq2seq::ModelParams::init(cfg.gst.model, gst::seq2seq::Role::Answerer, 77);
  gst::seq2seq::save_checkpoint(dir / "models/untrained.ckpt", {init, 77});
  const auto r = cli(dir, {"eval", "--checkpoint", "models/untrained.ckpt"});
  REQUIRE(r.code == 0);
  const auto rows = gst::evalkit::parse_metrics_csv(testutil::slurp(dir / "eval/models_untrained/metrics.csv"));
  REQUIRE(rows.size() == 1u);
  CHECK(rows[0].table.rounds == 400u);
  const double chance = gst::evalkit::random_mrr(cfg.data.candidates);
  CHECK(std::abs(rows[0].table.mrr - chance) < 8.0);

  const auto q = gst::seq2seq::ModelParams::init(cfg.gst.model, gst::seq2seq::Role::Questioner, 1);
  gst::seq2seq::save_checkpoint(dir / "models/q.ckpt", {q, 1});
  CHECK(error_record(cli(dir, {"eval", "--checkpoint", "models/q.ckpt"}))["kind"] == "contract");
}
