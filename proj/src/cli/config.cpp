#include "gst/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gst/errors.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::cli {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig::RunConfig() {
  // Example passes per training run; epochs follow from the dataset size.
  gst.teacher_train.example_budget = 60000;
  gst.questioner_train.example_budget = 15000;
  gst.student_train.example_budget = 120000;
  resolve();
}

void RunConfig::resolve() {
  gst.model.vocab_size = static_cast<int>(toyworld::Vocab::standard().size());
  gst.model.feature_dim = data.world.feature_dim;
  gst.model.regions = data.world.regions();
  gst.rounds = data.dialog.rounds;
  gst.threads = threads;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (data.n_train < 1 || data.n_val < 1 || data.n_test < 1 || data.pool_size < 1) {
    throw ConfigError("data: split sizes must be positive");
  }
  if (data.candidates < 2) throw ConfigError("data.candidates must be at least 2");
  if (data.world.grid < 1 || data.world.max_objects < 1 ||
      data.world.max_objects > data.world.regions()) {
    throw ConfigError("data: max_objects must be in [1, grid*grid]");
  }
  if (data.world.feature_dim < 16) throw ConfigError("data.feature_dim must be at least 16");
  if (data.dialog.rounds < 1) throw ConfigError("data.rounds must be at least 1");
  if (gst.model.d_model < 1 || gst.model.heads < 1 || gst.model.d_model % gst.model.heads != 0) {
    throw ConfigError("model: d_model must be a positive multiple of heads");
  }
  if (gst.model.max_target < data.dialog.max_len + 1) {
    throw ConfigError("model.max_target must exceed data.max_len");
  }
  for (double f : low_data_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("low_data.fractions must lie in (0,1]");
  }
  for (int n : diversity_n) {
    if (n < 1) throw ConfigError("report.diversity_n entries must be positive");
  }
  if (transcripts < 0) throw ConfigError("report.transcripts must be non-negative");
  gst.validate();
  attack.validate();
}

namespace {

/// Reads the keys of one object; finish() rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && !it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  template <class T>
  void get_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw ConfigError(where() + "." + key + " must be an array");
    std::vector<T> v;
    for (const auto& e : *it) {
      if (!e.is_number() || (std::is_integral_v<T> && !e.is_number_integer())) {
        throw ConfigError(where() + "." + key + " has a non-numeric entry");
      }
      v.push_back(e.template get<T>());
    }
    out = std::move(v);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section s, seq2seq::TrainConfig& t) {
  s.get("lr", t.lr);
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("example_budget", t.example_budget);
  s.get("clip_norm", t.clip_norm);
  s.get("beta1", t.adam.beta1);
  s.get("beta2", t.adam.beta2);
  s.get("eps", t.adam.eps);
  s.finish();
  if (!(t.lr > 0.0) || t.batch_size < 1 || t.epochs < 1) {
    throw ConfigError("train: lr, batch_size and epochs must be positive");
  }
}

ordered_json write_train(const seq2seq::TrainConfig& t) {
  ordered_json j;
  j["lr"] = t.lr;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["example_budget"] = t.example_budget;
  j["clip_norm"] = t.clip_norm;
  j["beta1"] = t.adam.beta1;
  j["beta2"] = t.adam.beta2;
  j["eps"] = t.adam.eps;
  return j;
}

void read_decode(Section s, seq2seq::DecodeConfig& d) {
  std::string mode = d.mode == seq2seq::DecodeMode::Greedy ? "greedy" : "topk";
  s.get("mode", mode);
  if (mode == "greedy") {
    d.mode = seq2seq::DecodeMode::Greedy;
  } else if (mode == "topk") {
    d.mode = seq2seq::DecodeMode::TopK;
  } else {
    throw ConfigError("decode mode must be 'greedy' or 'topk'");
  }
  s.get("k", d.k);
  s.get("temperature", d.temperature);
  s.get("ngram_block", d.ngram_block);
  s.get("max_len", d.max_len);
  s.finish();
}

ordered_json write_decode(const seq2seq::DecodeConfig& d) {
  ordered_json j;
  j["mode"] = d.mode == seq2seq::DecodeMode::Greedy ? "greedy" : "topk";
  j["k"] = d.k;
  j["temperature"] = d.temperature;
  j["ngram_block"] = d.ngram_block;
  j["max_len"] = d.max_len;
  return j;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  {
    Section s = root.sub("data");
    s.get("n_train", c.data.n_train);
    s.get("n_val", c.data.n_val);
    s.get("n_test", c.data.n_test);
    s.get("pool_size", c.data.pool_size);
    s.get("pool_shifted_fraction", c.data.pool_shifted_fraction);
    s.get("candidates", c.data.candidates);
    s.get("grid", c.data.world.grid);
    s.get("max_objects", c.data.world.max_objects);
    s.get("feature_dim", c.data.world.feature_dim);
    s.get("noise_sigma", c.data.world.noise_sigma);
    s.get("rounds", c.data.dialog.rounds);
    s.get("max_len", c.data.dialog.max_len);
    s.get("pronoun_rate", c.data.dialog.pronoun_rate);
    s.get("present_subject_rate", c.data.dialog.present_subject_rate);
    s.finish();
  }
  {
    Section s = root.sub("model");
    s.get("d_model", c.gst.model.d_model);
    s.get("heads", c.gst.model.heads);
    s.get("ffn", c.gst.model.ffn);
    s.get("max_ctx", c.gst.model.max_ctx);
    s.get("max_target", c.gst.model.max_target);
    s.finish();
  }
  {
    Section s = root.sub("train");
    read_train(s.sub("teacher"), c.gst.teacher_train);
    read_train(s.sub("questioner"), c.gst.questioner_train);
    read_train(s.sub("student"), c.gst.student_train);
    s.finish();
  }
  {
    Section s = root.sub("gst");
    s.get("iterations", c.gst.iterations);
    s.get("retrieve_m", c.gst.retrieve_m);
    s.get("shrinkage", c.gst.shrinkage);
    s.get("tau", c.gst.tau);
    std::string mode = curate::tau_mode_name(c.gst.tau_mode);
    s.get("tau_mode", mode);
    c.gst.tau_mode = curate::parse_tau_mode(mode);
    s.get("mcr_rate", c.gst.mcr_rate);
    s.get("init_from_teacher", c.gst.init_from_teacher);
    s.get("reuse_pool", c.gst.reuse_pool);
    s.get("gold_fraction", c.gst.gold_fraction);
    s.get("max_skip_fraction", c.gst.max_skip_fraction);
    read_decode(s.sub("question_decode"), c.gst.question_decode);
    read_decode(s.sub("answer_decode"), c.gst.answer_decode);
    s.finish();
  }
  {
    Section s = root.sub("ablations");
    s.get("use_ppl", c.gst.ablations.use_ppl);
    s.get("use_mcr", c.gst.ablations.use_mcr);
    s.get("use_iir", c.gst.ablations.use_iir);
    s.get("full_pool", c.gst.ablations.full_pool);
    s.finish();
  }
  {
    Section s = root.sub("low_data");
    s.get_list("fractions", c.low_data_fractions);
    s.get("silver_multiplier", c.gst.silver_multiplier);
    s.finish();
  }
  {
    Section s = root.sub("attack");
    s.get_list("epsilons", c.attack.epsilons);
    s.get_list("mask_probs", c.attack.mask_probs);
    s.get("seeds", c.attack.seeds);
    s.get("relative_epsilon", c.attack.relative_epsilon);
    s.finish();
  }
  {
    Section s = root.sub("report");
    s.get("transcripts", c.transcripts);
    s.get_list("diversity_n", c.diversity_n);
    s.finish();
  }
  root.finish();
  c.resolve();
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  ordered_json& d = j["data"];
  d["n_train"] = c.data.n_train;
  d["n_val"] = c.data.n_val;
  d["n_test"] = c.data.n_test;
  d["pool_size"] = c.data.pool_size;
  d["pool_shifted_fraction"] = c.data.pool_shifted_fraction;
  d["candidates"] = c.data.candidates;
  d["grid"] = c.data.world.grid;
  d["max_objects"] = c.data.world.max_objects;
  d["feature_dim"] = c.data.world.feature_dim;
  d["noise_sigma"] = c.data.world.noise_sigma;
  d["rounds"] = c.data.dialog.rounds;
  d["max_len"] = c.data.dialog.max_len;
  d["pronoun_rate"] = c.data.dialog.pronoun_rate;
  d["present_subject_rate"] = c.data.dialog.present_subject_rate;
  ordered_json& m = j["model"];
  m["d_model"] = c.gst.model.d_model;
  m["heads"] = c.gst.model.heads;
  m["ffn"] = c.gst.model.ffn;
  m["max_ctx"] = c.gst.model.max_ctx;
  m["max_target"] = c.gst.model.max_target;
  j["train"]["teacher"] = write_train(c.gst.teacher_train);
  j["train"]["questioner"] = write_train(c.gst.questioner_train);
  j["train"]["student"] = write_train(c.gst.student_train);
  ordered_json& g = j["gst"];
  g["iterations"] = c.gst.iterations;
  g["retrieve_m"] = c.gst.retrieve_m;
  g["shrinkage"] = c.gst.shrinkage;
  g["tau"] = c.gst.tau;
  g["tau_mode"] = curate::tau_mode_name(c.gst.tau_mode);
  g["mcr_rate"] = c.gst.mcr_rate;
  g["init_from_teacher"] = c.gst.init_from_teacher;
  g["reuse_pool"] = c.gst.reuse_pool;
  g["gold_fraction"] = c.gst.gold_fraction;
  g["max_skip_fraction"] = c.gst.max_skip_fraction;
  g["question_decode"] = write_decode(c.gst.question_decode);
  g["answer_decode"] = write_decode(c.gst.answer_decode);
  ordered_json& a = j["ablations"];
  a["use_ppl"] = c.gst.ablations.use_ppl;
  a["use_mcr"] = c.gst.ablations.use_mcr;
  a["use_iir"] = c.gst.ablations.use_iir;
  a["full_pool"] = c.gst.ablations.full_pool;
  j["low_data"]["fractions"] = c.low_data_fractions;
  j["low_data"]["silver_multiplier"] = c.gst.silver_multiplier;
  ordered_json& at = j["attack"];
  at["epsilons"] = c.attack.epsilons;
  at["mask_probs"] = c.attack.mask_probs;
  at["seeds"] = c.attack.seeds;
  at["relative_epsilon"] = c.attack.relative_epsilon;
  j["report"]["transcripts"] = c.transcripts;
  j["report"]["diversity_n"] = c.diversity_n;
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

namespace {

template <class T>
bool env_integer(const char* name, T& out) {
  const char* v = std::getenv(name);
  if (!v || !*v) return false;
  char* end = nullptr;
  const long long x = std::strtoll(v, &end, 10);
  if (*end != '\0' || x < 0) throw ConfigError(std::string(name) + " must be a non-negative integer");
  out = static_cast<T>(x);
  return true;
}

}  // namespace

void apply_env_overrides(RunConfig& cfg) {
  env_integer("GST_SEED", cfg.seed);
  env_integer("GST_THREADS", cfg.threads);
  cfg.resolve();
  cfg.validate();
}

}  // namespace gst::cli
