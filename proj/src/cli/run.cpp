#include "gst/cli/run.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gst/attacks/attacks.hpp"
#include "gst/cli/config.hpp"
#include "gst/errors.hpp"
#include "gst/evalkit/report.hpp"
#include "gst/pipeline/gst.hpp"
#include "gst/seq2seq/checkpoint.hpp"
#include "gst/toyworld/dataset.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using pipeline::ModelParams;
using toyworld::Dialog;

std::string content_hash(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(toyworld::fnv1a64(bytes)));
  return buf;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-then-rename so a crash never leaves a half-written artifact.
void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << bytes;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string file_hash(const fs::path& path) { return content_hash(read_file(path)); }

namespace {

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      // A lock whose owner is gone is stale and may be taken over.
      std::ifstream in(path_);
      long owner = 0;
      in >> owner;
      if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno != ESRCH)) {
        throw ContractError("run directory " + dir.string() + " is locked by process " +
                            std::to_string(owner));
      }
      fs::remove(path_);
    }
    throw ContractError("cannot lock run directory " + dir.string());
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

std::string iter_dir(int i) { return "iter_" + std::to_string(i); }

/// The command that produces a run-relative artifact.
std::string producer_of(const std::string& rel) {
  if (rel.rfind("data/", 0) == 0) return "gen-data";
  if (rel.rfind("models/", 0) == 0) return "train-base";
  if (rel.rfind("iter_", 0) == 0) {
    const std::string it = rel.substr(5, rel.find('/') - 5);
    const std::string file = rel.substr(rel.find('/') + 1);
    std::string cmd = "train-student";
    if (file == "retrieved.json") cmd = "retrieve";
    if (file == "silver_raw.jsonl" || file == "gen_silver.json") cmd = "gen-silver";
    if (file == "silver.jsonl" || file == "selection.json") cmd = "select";
    return cmd + " --iteration " + it;
  }
  return "the stage that writes " + rel;
}

struct StageSpec {
  std::string name;                   // stamp name, e.g. "select.2"
  std::vector<std::string> sections;  // config parts the stage depends on
  std::vector<std::string> inputs;    // run-relative paths
  std::vector<std::string> outputs;
};

class Run {
 public:
  Run(fs::path dir, RunConfig cfg, bool force, std::ostream& out)
      : dir_(std::move(dir)), cfg_(std::move(cfg)), force_(force), out_(out) {
    resolved_ = ordered_json::parse(config_to_json(cfg_));
  }

  const RunConfig& cfg() const { return cfg_; }
  fs::path path(const std::string& rel) const { return dir_ / rel; }
  std::ostream& out() { return out_; }

  void require(const std::string& rel) const {
    if (!fs::exists(path(rel))) {
      throw MissingArtifactError("missing " + rel + " in " + dir_.string() + "; run `gst_cli " +
                                 producer_of(rel) + "` first");
    }
  }

  std::vector<Dialog> dialogs(const std::string& rel) const {
    require(rel);
    return toyworld::read_jsonl(path(rel));
  }

  ModelParams model(const std::string& rel, seq2seq::Role role) const {
    require(rel);
    seq2seq::Checkpoint ck = seq2seq::load_checkpoint(path(rel));
    if (!(ck.params.config == cfg_.gst.model)) {
      throw HashMismatchError(rel + " was trained with a different model configuration; rerun `gst_cli " +
                              producer_of(rel) + "`");
    }
    if (ck.params.role != role) {
      throw ContractError(rel + " holds a " + seq2seq::role_name(ck.params.role) +
                          ", expected a " + seq2seq::role_name(role));
    }
    return std::move(ck.params);
  }

  void save_model(const std::string& rel, const ModelParams& m) const {
    fs::create_directories(path(rel).parent_path());
    seq2seq::save_checkpoint(path(rel), {m, cfg_.seed});
  }

  void write(const std::string& rel, const std::string& bytes) const { write_file(path(rel), bytes); }
  void write_dialogs(const std::string& rel, const std::vector<Dialog>& d) const {
    fs::create_directories(path(rel).parent_path());
    toyworld::write_jsonl(path(rel), d);
  }

  std::vector<Dialog> gold() const {
    return pipeline::gold_subset(dialogs("data/train.jsonl"), cfg_.gst.gold_fraction, cfg_.seed);
  }

  std::string section_hash(const std::vector<std::string>& sections) const {
    ordered_json j;
    for (const auto& s : sections) {
      const ordered_json* node = &resolved_;
      std::istringstream parts(s);
      std::string key;
      while (std::getline(parts, key, '.')) node = &node->at(key);
      j[s] = *node;
    }
    return content_hash(j.dump());
  }

  /// Checks every input against the stamp of the stage that wrote it.
  void check_inputs(const StageSpec& spec) const {
    const auto stamps = read_stamps();
    for (const auto& rel : spec.inputs) {
      require(rel);
      for (const auto& [name, stamp] : stamps) {
        const auto& outs = stamp.at("outputs");
        if (!outs.contains(rel)) continue;
        const auto sections = stamp.at("sections").get<std::vector<std::string>>();
        if (stamp.at("config_hash").get<std::string>() != section_hash(sections)) {
          throw HashMismatchError(rel + " was produced under a different configuration; rerun `gst_cli " +
                                  producer_of(rel) + "`");
        }
        if (outs.at(rel).get<std::string>() != file_hash(path(rel))) {
          throw HashMismatchError(rel + " changed after it was produced; rerun `gst_cli " +
                                  producer_of(rel) + "`");
        }
      }
    }
  }

  std::string input_hash(const StageSpec& spec) const {
    std::string s = spec.name + "\n" + section_hash(spec.sections) + "\n";
    for (const auto& rel : spec.inputs) s += rel + ":" + file_hash(path(rel)) + "\n";
    return content_hash(s);
  }

  bool up_to_date(const StageSpec& spec) const {
    if (force_) return false;
    const fs::path sp = stamp_path(spec.name);
    if (!fs::exists(sp)) return false;
    const ordered_json stamp = ordered_json::parse(read_file(sp));
    if (stamp.at("input_hash").get<std::string>() != input_hash(spec)) return false;
    for (const auto& rel : spec.outputs) {
      if (!fs::exists(path(rel))) return false;
      if (stamp.at("outputs").value(rel, std::string()) != file_hash(path(rel))) return false;
    }
    return true;
  }

  void stamp(const StageSpec& spec) const {
    ordered_json j;
    j["stage"] = spec.name;
    j["sections"] = spec.sections;
    j["config_hash"] = section_hash(spec.sections);
    j["input_hash"] = input_hash(spec);
    j["inputs"] = spec.inputs;
    ordered_json outs = ordered_json::object();
    for (const auto& rel : spec.outputs) outs[rel] = file_hash(path(rel));
    j["outputs"] = outs;
    write_file(stamp_path(spec.name), j.dump(2) + "\n");
  }

  /// Runs `body` unless the stage is up to date; stamps, times and
  /// refreshes the manifest afterwards. Returns whether it ran.
  bool execute(const StageSpec& spec, const std::function<void()>& body) {
    check_inputs(spec);
    if (up_to_date(spec)) {
      out_ << spec.name << ": up to date\n";
      return false;
    }
    const auto t0 = std::chrono::steady_clock::now();
    body();
    stamp(spec);
    record_time(spec.name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    write_manifest();
    out_ << spec.name << ": done\n";
    return true;
  }

  void record_time(const std::string& name, double seconds) const {
    ordered_json t = ordered_json::object();
    if (fs::exists(path("timings.json"))) t = ordered_json::parse(read_file(path("timings.json")));
    t[name] = seconds;
    write_file(path("timings.json"), t.dump(2) + "\n");
  }

  std::map<std::string, ordered_json> read_stamps() const {
    std::map<std::string, ordered_json> out;
    if (!fs::exists(path("stamps"))) return out;
    for (const auto& e : fs::directory_iterator(path("stamps"))) {
      if (e.path().extension() != ".json") continue;
      out[e.path().stem().string()] = ordered_json::parse(read_file(e.path()));
    }
    return out;
  }

  /// Deterministic: config, stamps in name order, utilization per iteration.
  void write_manifest() const {
    ordered_json m;
    m["format"] = "gst-manifest v1";
    m["seed"] = cfg_.seed;
    m["config"] = resolved_;
    ordered_json stages = ordered_json::object();
    ordered_json datasets = ordered_json::object();
    ordered_json checkpoints = ordered_json::object();
    for (const auto& [name, stamp] : read_stamps()) {
      stages[name] = {{"config_hash", stamp.at("config_hash")},
                      {"input_hash", stamp.at("input_hash")},
                      {"outputs", stamp.at("outputs")}};
      for (const auto& [rel, h] : stamp.at("outputs").items()) {
        if (rel.size() > 6 && rel.substr(rel.size() - 6) == ".jsonl") datasets[rel] = h;
        if (rel.size() > 5 && rel.substr(rel.size() - 5) == ".ckpt") checkpoints[rel] = h;
      }
    }
    m["stages"] = stages;
    m["datasets"] = datasets;
    m["checkpoints"] = checkpoints;
    ordered_json util = ordered_json::object();
    for (int i = 1; fs::exists(path(iter_dir(i) + "/selection.json")); ++i) {
      const auto sel = ordered_json::parse(read_file(path(iter_dir(i) + "/selection.json")));
      util[std::to_string(i)] = 100.0 * sel.at("utilization").get<double>();
    }
    m["utilization_percent"] = util;
    write_file(path("manifest.json"), m.dump(2) + "\n");
  }

 private:
  fs::path stamp_path(const std::string& name) const { return dir_ / "stamps" / (name + ".json"); }

  fs::path dir_;
  RunConfig cfg_;
  bool force_;
  std::ostream& out_;
  ordered_json resolved_;
};

// ---------------------------------------------------------------- stages

const std::vector<std::string> kDataFiles{"data/train.jsonl", "data/val.jsonl", "data/test.jsonl",
                                          "data/pool.jsonl"};

StageSpec gen_data_spec() { return {"gen-data", {"seed", "data"}, {}, kDataFiles}; }

void gen_data(Run& run) {
  run.execute(gen_data_spec(), [&] {
    const toyworld::Splits s = toyworld::generate_splits(run.cfg().data, run.cfg().seed);
    run.write_dialogs("data/train.jsonl", s.train);
    run.write_dialogs("data/val.jsonl", s.val);
    run.write_dialogs("data/test.jsonl", s.test);
    run.write_dialogs("data/pool.jsonl", s.pool);
  });
}

StageSpec train_base_spec() {
  return {"train-base",
          {"seed", "model", "train.teacher", "train.questioner", "gst.gold_fraction"},
          {"data/train.jsonl"},
          {"models/teacher.ckpt", "models/questioner.ckpt"}};
}

void train_base(Run& run) {
  run.execute(train_base_spec(), [&] {
    const auto gold = run.gold();
    run.save_model("models/teacher.ckpt", pipeline::train_teacher(gold, run.cfg().gst, run.cfg().seed));
    run.save_model("models/questioner.ckpt",
                   pipeline::train_questioner(gold, run.cfg().gst, run.cfg().seed));
  });
}

std::string teacher_of(int i) { return i == 1 ? "models/teacher.ckpt" : iter_dir(i - 1) + "/student.ckpt"; }

StageSpec retrieve_spec(int i) {
  return {"retrieve." + std::to_string(i),
          {"seed", "gst.gold_fraction", "gst.iterations", "gst.retrieve_m", "gst.shrinkage",
           "gst.reuse_pool", "ablations.use_iir", "ablations.full_pool"},
          {"data/train.jsonl", "data/pool.jsonl"},
          {iter_dir(i) + "/retrieved.json"}};
}

StageSpec gen_silver_spec(int i) {
  return {"gen-silver." + std::to_string(i),
          {"seed", "data.rounds", "gst.question_decode", "gst.answer_decode", "gst.max_skip_fraction"},
          {iter_dir(i) + "/retrieved.json", "data/pool.jsonl", teacher_of(i), "models/questioner.ckpt"},
          {iter_dir(i) + "/silver_raw.jsonl", iter_dir(i) + "/gen_silver.json"}};
}

StageSpec select_spec(int i) {
  return {"select." + std::to_string(i),
          {"gst.tau", "gst.tau_mode"},
          {iter_dir(i) + "/silver_raw.jsonl", teacher_of(i), "data/val.jsonl"},
          {iter_dir(i) + "/silver.jsonl", iter_dir(i) + "/selection.json"}};
}

StageSpec train_student_spec(int i) {
  StageSpec s{"train-student." + std::to_string(i),
              {"seed", "model", "train.student", "gst.gold_fraction", "gst.mcr_rate",
               "gst.init_from_teacher", "ablations.use_ppl", "ablations.use_mcr"},
              {"data/train.jsonl", "data/test.jsonl", teacher_of(i)},
              {iter_dir(i) + "/student.ckpt", iter_dir(i) + "/metrics.csv",
               iter_dir(i) + "/per_type.csv", iter_dir(i) + "/student_loss.csv"}};
  for (int j = 1; j <= i; ++j) s.inputs.push_back(iter_dir(j) + "/silver.jsonl");
  return s;
}

std::string retrieved_json(int i, const RunConfig& cfg, const std::vector<Dialog>& scenes) {
  ordered_json j;
  j["iteration"] = i;
  j["mode"] = cfg.gst.ablations.full_pool ? "full_pool" : (cfg.gst.ablations.use_iir ? "iir" : "random");
  j["partition"] = cfg.gst.reuse_pool ? -1 : (i - 1) % cfg.gst.iterations;
  std::vector<std::uint64_t> ids;
  for (const auto& d : scenes) ids.push_back(d.scene_id);
  j["count"] = ids.size();
  j["scene_ids"] = ids;
  return j.dump(2) + "\n";
}

std::string gen_silver_json(const std::vector<Dialog>& silver, const std::vector<std::uint64_t>& skipped) {
  ordered_json j;
  j["generated"] = silver.size();
  j["skipped"] = skipped;
  return j.dump(2) + "\n";
}

std::string loss_csv(const std::vector<double>& epoch_loss) {
  std::string s = std::string(evalkit::kCsvSchema) + "\nepoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, epoch_loss[e]);
    s += buf;
  }
  return s;
}

/// Teacher and student metrics on the test split.
void write_student_outputs(const Run& run, int i, const ModelParams& teacher,
                           const seq2seq::TrainResult& student, const std::vector<Dialog>& test) {
  run.save_model(iter_dir(i) + "/student.ckpt", student.params);
  std::vector<evalkit::MetricsRow> rows;
  std::vector<evalkit::TypeRow> types;
  for (const auto& [name, model] : {std::pair<std::string, const ModelParams*>{"teacher", &teacher},
                                    {"student", &student.params}}) {
    const auto res = evalkit::evaluate(*model, test);
    rows.push_back({name, evalkit::metrics(res)});
    for (const auto& [type, table] : evalkit::metrics_by_type(res)) types.push_back({name, type, table});
  }
  run.write(iter_dir(i) + "/metrics.csv", evalkit::metrics_csv(rows));
  run.write(iter_dir(i) + "/per_type.csv", evalkit::per_type_csv(types));
  run.write(iter_dir(i) + "/student_loss.csv", loss_csv(student.epoch_loss));
}

pipeline::LogFn logger(Run& run) {
  return [&run](const std::string& m) { run.out() << "  " << m << "\n"; };
}

void retrieve(Run& run, int i) {
  run.execute(retrieve_spec(i), [&] {
    const auto gold = run.gold();
    const auto pool = run.dialogs("data/pool.jsonl");
    const pipeline::RunData data{&gold, nullptr, nullptr, &pool};
    const auto scenes = pipeline::retrieve_scenes(data, run.cfg().gst, run.cfg().seed, i - 1);
    run.write(iter_dir(i) + "/retrieved.json", retrieved_json(i, run.cfg(), scenes));
  });
}

void gen_silver(Run& run, int i) {
  run.execute(gen_silver_spec(i), [&] {
    const auto pool = run.dialogs("data/pool.jsonl");
    std::map<std::uint64_t, const Dialog*> by_id;
    for (const auto& d : pool) by_id[d.scene_id] = &d;
    const auto ids = ordered_json::parse(read_file(run.path(iter_dir(i) + "/retrieved.json")))
                         .at("scene_ids")
                         .get<std::vector<std::uint64_t>>();
    std::vector<Dialog> scenes;
    for (auto id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("retrieved scene " + std::to_string(id) + " is not in the pool");
      scenes.push_back(*it->second);
    }
    const auto teacher = run.model(teacher_of(i), seq2seq::Role::Answerer);
    const auto questioner = run.model("models/questioner.ckpt", seq2seq::Role::Questioner);
    const auto res = pipeline::generate_silver(questioner, teacher, scenes, run.cfg().gst,
                                               pipeline::silver_stream(run.cfg().seed, i - 1), logger(run));
    run.write_dialogs(iter_dir(i) + "/silver_raw.jsonl", res.dialogs);
    run.write(iter_dir(i) + "/gen_silver.json", gen_silver_json(res.dialogs, res.skipped));
  });
}

void select_stage(Run& run, int i) {
  run.execute(select_spec(i), [&] {
    auto silver = run.dialogs(iter_dir(i) + "/silver_raw.jsonl");
    const auto teacher = run.model(teacher_of(i), seq2seq::Role::Answerer);
    const double tau = pipeline::resolve_tau(run.cfg().gst, teacher, run.dialogs("data/val.jsonl"));
    const auto rep = curate::ppl_select(silver, tau, run.cfg().gst.tau_mode);
    run.write_dialogs(iter_dir(i) + "/silver.jsonl", silver);
    run.write(iter_dir(i) + "/selection.json", rep.to_json() + "\n");
    run.out() << "  utilization " << rep.selected << "/" << rep.total << " at tau " << tau << "\n";
  });
}

void train_student(Run& run, int i) {
  run.execute(train_student_spec(i), [&] {
    const auto gold = run.gold();
    std::vector<Dialog> silver;
    for (int j = 1; j <= i; ++j) {
      const auto part = run.dialogs(iter_dir(j) + "/silver.jsonl");
      silver.insert(silver.end(), part.begin(), part.end());
    }
    const auto teacher = run.model(teacher_of(i), seq2seq::Role::Answerer);
    const auto& g = run.cfg().gst;
    const auto res = pipeline::train_student(gold, silver, pipeline::student_config(g, run.cfg().seed, i - 1),
                                             pipeline::student_init(g, teacher, run.cfg().seed, i - 1));
    write_student_outputs(run, i, teacher, res, run.dialogs("data/test.jsonl"));
  });
}

/// In-memory loop of the library; artifacts and stamps match the staged
/// commands byte for byte.
void iterate(Run& run, int k) {
  gen_data(run);
  train_base(run);
  const auto gold = run.gold();
  const auto val = run.dialogs("data/val.jsonl");
  const auto test = run.dialogs("data/test.jsonl");
  const auto pool = run.dialogs("data/pool.jsonl");
  const pipeline::RunData data{&gold, &val, nullptr, &pool};
  for (int i = 1; i <= k; ++i) {
    const std::vector<StageSpec> specs{retrieve_spec(i), gen_silver_spec(i), select_spec(i),
                                       train_student_spec(i)};
    bool fresh = true;
    for (const auto& s : specs) {
      // Earlier specs produce the inputs of later ones, so order matters.
      if (!fs::exists(run.path(s.outputs.front())) || !run.up_to_date(s)) {
        fresh = false;
        break;
      }
    }
    if (fresh) {
      run.out() << "iteration " << i << ": up to date\n";
      continue;
    }
    pipeline::IterationState st;
    st.iteration = i - 1;
    st.teacher = run.model(teacher_of(i), seq2seq::Role::Answerer);
    st.questioner = run.model("models/questioner.ckpt", seq2seq::Role::Questioner);
    for (int j = 1; j < i; ++j) st.silver.push_back(run.dialogs(iter_dir(j) + "/silver.jsonl"));
    const auto t0 = std::chrono::steady_clock::now();
    const pipeline::IterationHook hook = [&](const pipeline::IterationArtifacts& a) {
      run.write(iter_dir(i) + "/retrieved.json", retrieved_json(i, run.cfg(), a.scenes));
      run.stamp(specs[0]);
      std::vector<Dialog> raw = a.silver;
      for (auto& d : raw) {
        for (auto& r : d.rounds) r.selected = true;
      }
      run.write_dialogs(iter_dir(i) + "/silver_raw.jsonl", raw);
      run.write(iter_dir(i) + "/gen_silver.json", gen_silver_json(raw, a.skipped));
      run.stamp(specs[1]);
      run.write_dialogs(iter_dir(i) + "/silver.jsonl", a.silver);
      run.write(iter_dir(i) + "/selection.json", a.record.selection.to_json() + "\n");
      run.stamp(specs[2]);
      write_student_outputs(run, i, a.teacher, a.student, test);
      run.stamp(specs[3]);
    };
    pipeline::iterate(std::move(st), data, run.cfg().gst, run.cfg().seed, 1, logger(run), hook);
    run.record_time("iterate." + std::to_string(i),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    run.write_manifest();
    run.out() << "iteration " << i << ": done\n";
  }
}

void low_data(Run& run) {
  StageSpec spec{"low-data",
                 {"seed", "model", "train", "gst", "low_data"},
                 {"data/train.jsonl", "data/val.jsonl", "data/test.jsonl", "data/pool.jsonl"},
                 {"low_data/low_data.csv"}};
  run.execute(spec, [&] {
    const auto train = run.dialogs("data/train.jsonl");
    const auto val = run.dialogs("data/val.jsonl");
    const auto test = run.dialogs("data/test.jsonl");
    const auto pool = run.dialogs("data/pool.jsonl");
    const pipeline::RunData data{&train, &val, &test, &pool};
    std::vector<pipeline::LowDataRow> rows;
    for (double f : run.cfg().low_data_fractions) {
      rows.push_back(pipeline::low_data_run(f, data, run.cfg().gst, run.cfg().seed, logger(run)));
      run.out() << "  fraction " << f << ": teacher NDCG " << rows.back().teacher.ndcg
                << ", student NDCG " << rows.back().student.ndcg << "\n";
    }
    run.write("low_data/low_data.csv", evalkit::low_data_csv(rows));
  });
}

std::string label_for(const std::vector<std::string>& checkpoints) {
  std::string label;
  for (const auto& c : checkpoints) {
    std::string s = fs::path(c).replace_extension().string();
    std::replace(s.begin(), s.end(), '/', '_');
    label += (label.empty() ? "" : "+") + s;
  }
  return label;
}

std::vector<ModelParams> load_models(const Run& run, const std::vector<std::string>& checkpoints) {
  std::vector<ModelParams> out;
  for (const auto& c : checkpoints) out.push_back(run.model(c, seq2seq::Role::Answerer));
  return out;
}

std::vector<const ModelParams*> pointers(const std::vector<ModelParams>& models) {
  std::vector<const ModelParams*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

void eval(Run& run, const std::vector<std::string>& checkpoints, const std::string& split,
          std::string label) {
  if (label.empty()) label = label_for(checkpoints);
  StageSpec spec{"eval." + label, {}, {"data/" + split + ".jsonl"},
                 {"eval/" + label + "/metrics.csv", "eval/" + label + "/per_type.csv"}};
  spec.inputs.insert(spec.inputs.end(), checkpoints.begin(), checkpoints.end());
  run.execute(spec, [&] {
    const auto models = load_models(run, checkpoints);
    const auto ptrs = pointers(models);
    const auto res = evalkit::evaluate(ptrs, run.dialogs("data/" + split + ".jsonl"));
    const auto table = evalkit::metrics(res);
    std::vector<evalkit::TypeRow> types;
    for (const auto& [type, t] : evalkit::metrics_by_type(res)) types.push_back({label, type, t});
    run.write("eval/" + label + "/metrics.csv", evalkit::metrics_csv({{label, table}}));
    run.write("eval/" + label + "/per_type.csv", evalkit::per_type_csv(types));
    run.out() << "  " << label << " on " << split << ": NDCG " << table.ndcg << ", MRR " << table.mrr
              << ", R@1 " << table.r1 << ", R@5 " << table.r5 << ", R@10 " << table.r10
              << ", Mean " << table.mean_rank << "\n";
  });
}

void attack(Run& run, const std::vector<std::string>& checkpoints, const std::string& split,
            std::string label, bool fgsm, bool textual) {
  if (label.empty()) label = label_for(checkpoints);
  StageSpec spec{"attack." + label, {"seed", "attack"}, {"data/train.jsonl", "data/" + split + ".jsonl"},
                 {"attack/" + label + "/attack_curves.csv", "attack/" + label + "/attack_summary.csv"}};
  spec.inputs.insert(spec.inputs.end(), checkpoints.begin(), checkpoints.end());
  // Flags are not config keys; they are folded into the stamp name.
  spec.name += std::string(fgsm ? "" : ".no-fgsm") + (textual ? "" : ".no-textual");
  run.execute(spec, [&] {
    const auto models = load_models(run, checkpoints);
    const auto ptrs = pointers(models);
    attacks::AttackConfig ac = run.cfg().attack;
    ac.seed = run.cfg().seed;
    const auto scale = attacks::feature_std(run.dialogs("data/train.jsonl"));
    const auto curves =
        attacks::attacked_eval(ptrs, run.dialogs("data/" + split + ".jsonl"), ac, scale, fgsm, textual);
    run.write("attack/" + label + "/attack_curves.csv", evalkit::attack_csv(curves.rows));
    run.write("attack/" + label + "/attack_summary.csv", evalkit::attack_summary_csv(curves.summary));
  });
}

std::vector<std::vector<toyworld::Tokens>> questions_of(const std::vector<Dialog>& dialogs) {
  std::vector<std::vector<toyworld::Tokens>> out;
  for (const auto& d : dialogs) {
    out.emplace_back();
    for (const auto& r : d.rounds) out.back().push_back(r.question);
  }
  return out;
}

void add_type_share(std::vector<evalkit::TypeShareRow>& rows, const std::string& config,
                    const std::vector<Dialog>& dialogs) {
  const auto dist = evalkit::type_distribution(questions_of(dialogs));
  std::size_t total = 0;
  for (const auto& [t, n] : dist) total += n;
  for (const auto& [t, n] : dist) {
    rows.push_back({config, t, n, total == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(total)});
  }
}

void report(Run& run) {
  std::vector<std::string> inputs;
  const auto collect = [&](const std::string& rel) {
    if (fs::exists(run.path(rel))) inputs.push_back(rel);
  };
  collect("data/train.jsonl");
  int iterations = 0;
  while (fs::exists(run.path(iter_dir(iterations + 1) + "/silver.jsonl"))) ++iterations;
  for (int i = 1; i <= iterations; ++i) {
    for (const char* f : {"/silver.jsonl", "/selection.json", "/metrics.csv", "/per_type.csv"}) {
      collect(iter_dir(i) + f);
    }
  }
  collect("low_data/low_data.csv");
  std::vector<std::string> eval_labels, attack_labels;
  for (const auto& [dir, labels] : {std::pair<std::string, std::vector<std::string>*>{"eval", &eval_labels},
                                    {"attack", &attack_labels}}) {
    if (!fs::exists(run.path(dir))) continue;
    for (const auto& e : fs::directory_iterator(run.path(dir))) {
      if (e.is_directory()) labels->push_back(e.path().filename().string());
    }
    std::sort(labels->begin(), labels->end());
  }
  for (const auto& l : eval_labels) {
    collect("eval/" + l + "/metrics.csv");
    collect("eval/" + l + "/per_type.csv");
  }
  for (const auto& l : attack_labels) collect("attack/" + l + "/attack_curves.csv");

  StageSpec spec{"report", {"seed", "data", "report"}, inputs, {"report/report.md"}};
  run.execute(spec, [&] {
    evalkit::ReportInputs in;
    in.run_info.emplace_back("seed", std::to_string(run.cfg().seed));
    in.run_info.emplace_back("config hash", content_hash(config_to_json(run.cfg())));
    in.run_info.emplace_back("completed iterations", std::to_string(iterations));

    std::vector<evalkit::MetricsRow> metrics;
    std::vector<evalkit::TypeRow> per_type;
    for (int i = 1; i <= iterations; ++i) {
      const std::string prefix = "iter" + std::to_string(i) + "/";
      if (fs::exists(run.path(iter_dir(i) + "/metrics.csv"))) {
        for (auto r : evalkit::parse_metrics_csv(read_file(run.path(iter_dir(i) + "/metrics.csv")))) {
          r.config = prefix + r.config;
          metrics.push_back(r);
        }
        for (auto r : evalkit::parse_per_type_csv(read_file(run.path(iter_dir(i) + "/per_type.csv")))) {
          r.config = prefix + r.config;
          per_type.push_back(r);
        }
      }
    }
    for (const auto& l : eval_labels) {
      for (const auto& r : evalkit::parse_metrics_csv(read_file(run.path("eval/" + l + "/metrics.csv")))) {
        metrics.push_back(r);
      }
      for (const auto& r : evalkit::parse_per_type_csv(read_file(run.path("eval/" + l + "/per_type.csv")))) {
        per_type.push_back(r);
      }
    }
    if (!metrics.empty()) in.metrics = metrics;
    if (!per_type.empty()) in.per_type = per_type;

    if (iterations > 0) {
      std::vector<evalkit::TypeShareRow> share;
      std::vector<evalkit::DiversityRow> diversity;
      std::vector<evalkit::UtilizationRow> util;
      if (fs::exists(run.path("data/train.jsonl"))) add_type_share(share, "gold", run.dialogs("data/train.jsonl"));
      std::vector<Dialog> last;
      for (int i = 1; i <= iterations; ++i) {
        const auto silver = run.dialogs(iter_dir(i) + "/silver.jsonl");
        const std::string name = "iter" + std::to_string(i);
        add_type_share(share, name, silver);
        // Reference questions: the oracle gold dialog of each silver scene.
        std::vector<Dialog> gold;
        for (const auto& d : silver) gold.push_back(toyworld::make_gold_dialog(run.cfg().data, d.scene, run.cfg().seed, false));
        if (!silver.empty()) {
          for (int n : run.cfg().diversity_n) {
            const auto st = evalkit::ngram_diversity(questions_of(silver), questions_of(gold), n);
            diversity.push_back({name, n, st.diversity, st.no_match});
          }
        }
        const auto sel = ordered_json::parse(read_file(run.path(iter_dir(i) + "/selection.json")));
        util.push_back({i, sel.at("tau").get<double>(), curate::parse_tau_mode(sel.at("mode").get<std::string>()),
                        sel.at("total").get<std::size_t>(), sel.at("selected").get<std::size_t>(),
                        sel.at("utilization").get<double>()});
        if (i == iterations) {
          for (std::size_t t = 0; t < silver.size() && t < static_cast<std::size_t>(run.cfg().transcripts); ++t) {
            in.transcripts.push_back({gold[t], silver[t]});
          }
        }
      }
      in.type_share = share;
      in.diversity = diversity;
      in.utilization = util;
    }
    if (fs::exists(run.path("low_data/low_data.csv"))) {
      in.low_data = evalkit::parse_low_data_csv(read_file(run.path("low_data/low_data.csv")));
    }
    if (!attack_labels.empty()) {
      std::vector<std::pair<std::string, attacks::AttackCurves>> curves;
      for (const auto& l : attack_labels) {
        attacks::AttackCurves c;
        c.rows = evalkit::parse_attack_csv(read_file(run.path("attack/" + l + "/attack_curves.csv")));
        c.summary = attacks::summarize(c.rows);
        curves.emplace_back(l, std::move(c));
      }
      in.attacks = curves;
    }
    const auto docs = evalkit::render_report(in);
    evalkit::write_report(run.path("report"), docs);
  });
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message,
                 const std::string& command) {
  ordered_json j;
  j["status"] = "error";
  j["kind"] = kind;
  j["message"] = message;
  j["command"] = command;
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generative self-training for visual dialog on a procedural toy world."};
  app.name("gst_cli");
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string run_dir, config_path;
  bool force = false;
  app.add_option("--run", run_dir, "Run directory (created if missing)")->required();
  app.add_option("--config", config_path,
                 "JSON config; defaults to <run>/config.json, then the built-in preset");
  app.add_flag("--force", force, "Re-run stages even when their inputs are unchanged");

  int iteration = 1, iterations = 0;
  std::vector<std::string> checkpoints;
  std::string split = "test", label;
  bool no_fgsm = false, no_textual = false;

  app.add_subcommand("gen-data", "Write gold splits and the unlabeled pool");
  app.add_subcommand("train-base", "Train teacher and questioner on gold");
  for (const char* name : {"retrieve", "gen-silver", "select", "train-student"}) {
    static const std::map<std::string, std::string> help{
        {"retrieve", "Pick pool scenes for an iteration (IIR, random, or full pool)"},
        {"gen-silver", "Generate silver dialogs with teacher perplexities"},
        {"select", "Apply the perplexity threshold to silver rounds"},
        {"train-student", "Train a student on gold plus accumulated silver"}};
    app.add_subcommand(name, help.at(name))
        ->add_option("--iteration", iteration, "1-based iteration")
        ->check(CLI::PositiveNumber);
  }
  app.add_subcommand("iterate", "Run GST iterations end to end")
      ->add_option("--iterations", iterations, "Number of iterations (default: config)")
      ->check(CLI::PositiveNumber);
  app.add_subcommand("low-data", "Teacher vs student over the configured gold fractions");
  for (const char* name : {"eval", "attack"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "eval"
                                             ? "Ranking metrics for one checkpoint or an ensemble"
                                             : "FGSM and textual attack sweeps");
    sub->add_option("--checkpoint", checkpoints, "Run-relative checkpoint path; repeat for an ensemble");
    sub->add_option("--split", split, "Dialog split")->check(CLI::IsMember({"train", "val", "test"}));
    sub->add_option("--label", label, "Output label (default: derived from checkpoints)");
  }
  app.get_subcommand("attack")->add_flag("--no-fgsm", no_fgsm, "Skip the FGSM sweep");
  app.get_subcommand("attack")->add_flag("--no-textual", no_textual, "Skip textual attacks");
  app.add_subcommand("report", "Aggregate the run directory into Markdown and CSV");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  std::string command;
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    write_error(err, "usage", e.what(), "");
    return 2;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    const fs::path dir(run_dir);
    fs::create_directories(dir);
    RunLock lock(dir);
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = load_config(config_path);
    } else if (fs::exists(dir / "config.json")) {
      cfg = load_config(dir / "config.json");
    }
    apply_env_overrides(cfg);
    write_file(dir / "config.json", config_to_json(cfg));
    Run run(dir, cfg, force, out);
    if (checkpoints.empty()) checkpoints.push_back("models/teacher.ckpt");

    if (command == "gen-data") {
      gen_data(run);
    } else if (command == "train-base") {
      train_base(run);
    } else if (command == "retrieve") {
      retrieve(run, iteration);
    } else if (command == "gen-silver") {
      gen_silver(run, iteration);
    } else if (command == "select") {
      select_stage(run, iteration);
    } else if (command == "train-student") {
      train_student(run, iteration);
    } else if (command == "iterate") {
      iterate(run, iterations > 0 ? iterations : cfg.gst.iterations);
    } else if (command == "low-data") {
      low_data(run);
    } else if (command == "eval") {
      eval(run, checkpoints, split, label);
    } else if (command == "attack") {
      attack(run, checkpoints, split, label, !no_fgsm, !no_textual);
    } else if (command == "report") {
      report(run);
    }
    return 0;
  } catch (const Error& e) {
    write_error(err, e.kind(), e.what(), command);
    return 1;
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what(), command);
    return 1;
  }
}

}  // namespace gst::cli
