#include "gst/toyworld/dataset.hpp"

#include <fstream>

#include "json.hpp"

#include "gst/errors.hpp"

namespace gst::toyworld {

using nlohmann::ordered_json;

namespace {

// Stream ids forked from each scene's stream.
enum SceneStream : std::uint64_t { kStyle = 0, kLayout = 1, kDialog = 2, kFeatures = 3, kCands = 4 };

numkit::Rng scene_stream(std::uint64_t seed, std::uint64_t scene_id) {
  return numkit::Rng(seed).fork(scene_id);
}

std::string text(std::span<const Token> tokens) { return Vocab::standard().decode(tokens); }
Tokens tokens(const ordered_json& j) { return Vocab::standard().encode(j.get<std::string>()); }

template <std::size_t N>
int word_index(const std::array<const char*, N>& table, const std::string& w) {
  for (std::size_t i = 0; i < N; ++i) {
    if (w == table[i]) return static_cast<int>(i);
  }
  throw FormatError("dataset: unknown attribute '" + w + "'");
}

}  // namespace

Dialog make_gold_dialog(const DatasetConfig& cfg, const Scene& scene, std::uint64_t seed,
                        bool with_candidates) {
  const numkit::Rng base = scene_stream(seed, scene.id);
  numkit::Rng dialog_rng = base.fork(kDialog);
  Dialog d = gen_gold_dialog(scene, dialog_rng, cfg.dialog);
  numkit::Rng feature_rng = base.fork(kFeatures);
  d.features = render_features(scene, feature_rng, cfg.world.regions(), cfg.world.feature_dim,
                               cfg.world.noise_sigma, cfg.world.grid);
  d.seed = seed;
  if (with_candidates) {
    numkit::Rng cand_rng = base.fork(kCands);
    for (std::size_t t = 0; t < d.rounds.size(); ++t) {
      const Tokens resolved = resolve_question(d.rounds[t].question, antecedent_for(d, t));
      d.rounds[t].candidates = build_candidates(scene, resolved, cand_rng, cfg.candidates);
    }
  }
  return d;
}

Dialog make_pool_entry(const DatasetConfig& cfg, const Scene& scene, std::uint64_t seed) {
  numkit::Rng feature_rng = scene_stream(seed, scene.id).fork(kFeatures);
  Dialog d;
  d.scene_id = scene.id;
  d.scene = scene;
  d.caption = caption_for(scene);
  d.features = render_features(scene, feature_rng, cfg.world.regions(), cfg.world.feature_dim,
                               cfg.world.noise_sigma, cfg.world.grid);
  d.seed = seed;
  return d;
}

Splits generate_splits(const DatasetConfig& cfg, std::uint64_t seed) {
  Splits s;
  std::uint64_t next_id = 0;
  const auto gold = [&](int n, std::vector<Dialog>& out, bool with_candidates) {
    for (int i = 0; i < n; ++i, ++next_id) {
      numkit::Rng layout = scene_stream(seed, next_id).fork(kLayout);
      const Scene scene = gen_scene(cfg.world, layout, Style::InDomain, next_id);
      out.push_back(make_gold_dialog(cfg, scene, seed, with_candidates));
    }
  };
  gold(cfg.n_train, s.train, false);
  gold(cfg.n_val, s.val, true);
  gold(cfg.n_test, s.test, true);
  for (int i = 0; i < cfg.pool_size; ++i, ++next_id) {
    const numkit::Rng base = scene_stream(seed, next_id);
    numkit::Rng style_rng = base.fork(kStyle);
    const Style style =
        style_rng.bernoulli(cfg.pool_shifted_fraction) ? Style::Shifted : Style::InDomain;
    numkit::Rng layout = base.fork(kLayout);
    s.pool.push_back(make_pool_entry(cfg, gen_scene(cfg.world, layout, style, next_id), seed));
  }
  return s;
}

std::string dialog_to_json(const Dialog& d) {
  ordered_json j;
  j["scene_id"] = d.scene_id;
  j["style"] = style_name(d.scene.style);
  j["caption"] = text(d.caption);
  ordered_json objects = ordered_json::array();
  for (const Object& o : d.scene.objects) {
    objects.push_back({{"shape", kShapeWords.at(o.shape)},
                       {"color", kColorWords.at(o.color)},
                       {"size", kSizeWords.at(o.size)},
                       {"row", o.row},
                       {"col", o.col}});
  }
  j["objects"] = objects;
  ordered_json rounds = ordered_json::array();
  for (const Round& r : d.rounds) {
    ordered_json jr;
    jr["question"] = text(r.question);
    jr["answer"] = text(r.answer);
    if (r.candidates) {
      ordered_json cands = ordered_json::array();
      for (const auto& a : r.candidates->answers) cands.push_back(text(a));
      jr["candidates"] = cands;
      jr["relevance"] = r.candidates->relevance;
      jr["gt_index"] = r.candidates->gt_index;
    }
    if (r.teacher_ppl) {
      jr["teacher_ppl"] = *r.teacher_ppl;
      jr["selected"] = r.selected;
    }
    rounds.push_back(std::move(jr));
  }
  j["rounds"] = rounds;
  ordered_json feats = ordered_json::array();
  for (std::size_t r = 0; r < d.features.regions; ++r) {
    feats.push_back(std::vector<double>(d.features.values.begin() + r * d.features.dim,
                                        d.features.values.begin() + (r + 1) * d.features.dim));
  }
  j["features"] = feats;
  j["grammar_version"] = kGrammarVersion;
  j["seed"] = d.seed;
  return j.dump();
}

Dialog dialog_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("dataset: malformed JSON line: ") + e.what());
  }
  try {
    if (j.at("grammar_version").get<int>() != kGrammarVersion) {
      throw FormatError("dataset: grammar_version mismatch");
    }
    Dialog d;
    d.scene_id = j.at("scene_id").get<std::uint64_t>();
    d.scene.id = d.scene_id;
    d.scene.style = parse_style(j.at("style").get<std::string>());
    d.caption = tokens(j.at("caption"));
    for (const auto& o : j.at("objects")) {
      Object obj;
      obj.shape = word_index(kShapeWords, o.at("shape").get<std::string>());
      obj.color = word_index(kColorWords, o.at("color").get<std::string>());
      obj.size = word_index(kSizeWords, o.at("size").get<std::string>());
      obj.row = o.at("row").get<int>();
      obj.col = o.at("col").get<int>();
      d.scene.objects.push_back(obj);
    }
    for (const auto& jr : j.at("rounds")) {
      Round r;
      r.question = tokens(jr.at("question"));
      r.answer = tokens(jr.at("answer"));
      if (jr.contains("candidates")) {
        CandidateSet c;
        for (const auto& a : jr.at("candidates")) c.answers.push_back(tokens(a));
        c.relevance = jr.at("relevance").get<std::vector<double>>();
        c.gt_index = jr.at("gt_index").get<int>();
        if (c.relevance.size() != c.answers.size() || c.gt_index < 0 ||
            c.gt_index >= static_cast<int>(c.answers.size())) {
          throw FormatError("dataset: inconsistent candidate set");
        }
        r.candidates = std::move(c);
      }
      if (jr.contains("teacher_ppl")) {
        r.teacher_ppl = jr.at("teacher_ppl").get<double>();
        r.selected = jr.at("selected").get<bool>();
      }
      d.rounds.push_back(std::move(r));
    }
    const auto& feats = j.at("features");
    d.features.regions = feats.size();
    d.features.dim = feats.empty() ? 0 : feats[0].size();
    for (const auto& row : feats) {
      auto vals = row.get<std::vector<double>>();
      if (vals.size() != d.features.dim) throw FormatError("dataset: ragged feature rows");
      d.features.values.insert(d.features.values.end(), vals.begin(), vals.end());
    }
    d.seed = j.at("seed").get<std::uint64_t>();
    return d;
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("dataset: bad record: ") + e.what());
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Dialog>& dialogs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("dataset: cannot write " + path.string());
  for (const Dialog& d : dialogs) out << dialog_to_json(d) << '\n';
  if (!out) throw DataError("dataset: write failed for " + path.string());
}

std::vector<Dialog> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset: cannot read " + path.string());
  std::vector<Dialog> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(dialog_from_json(line));
  }
  return out;
}

}  // namespace gst::toyworld
