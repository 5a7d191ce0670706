#include "gst/toyworld/scene.hpp"

#include <numeric>

#include "gst/errors.hpp"

namespace gst::toyworld {

const char* style_name(Style style) {
  return style == Style::InDomain ? "in_domain" : "shifted";
}

Style parse_style(const std::string& name) {
  if (name == "in_domain") return Style::InDomain;
  if (name == "shifted") return Style::Shifted;
  throw DataError("unknown scene style '" + name + "'");
}

Scene gen_scene(const WorldConfig& cfg, numkit::Rng& rng, Style style, std::uint64_t id) {
  const StyleWeights& w = style == Style::InDomain ? cfg.in_domain : cfg.shifted;
  const int cells = cfg.regions();
  const int hi = std::min({w.max_objects, cfg.max_objects, cells});
  if (w.min_objects < 1 || w.min_objects > hi) {
    throw ContractError("gen_scene: object count range is empty");
  }
  Scene scene;
  scene.id = id;
  scene.style = style;
  const int count = w.min_objects + static_cast<int>(rng.uniform_int(hi - w.min_objects + 1));

  std::vector<int> cell_ids(cells);
  std::iota(cell_ids.begin(), cell_ids.end(), 0);
  rng.shuffle(std::span<int>(cell_ids));
  for (int i = 0; i < count; ++i) {
    Object o;
    o.shape = static_cast<int>(rng.categorical(w.shape));
    o.color = static_cast<int>(rng.categorical(w.color));
    o.size = static_cast<int>(rng.categorical(w.size));
    o.row = cell_ids[i] / cfg.grid;
    o.col = cell_ids[i] % cfg.grid;
    scene.objects.push_back(o);
  }
  return scene;
}

SceneFeatures render_features(const Scene& scene, numkit::Rng& rng, int regions, int dim,
                              double sigma, int grid) {
  if (regions != grid * grid) {
    throw ContractError("render_features: regions must equal the grid cell count");
  }
  if (dim < kMinFeatureDim) {
    throw ContractError("render_features: feature dim must be at least " +
                        std::to_string(kMinFeatureDim));
  }
  SceneFeatures f;
  f.regions = static_cast<std::size_t>(regions);
  f.dim = static_cast<std::size_t>(dim);
  f.values.assign(f.regions * f.dim, 0.0);
  std::vector<bool> occupied(f.regions, false);
  for (const Object& o : scene.objects) {
    const std::size_t r = static_cast<std::size_t>(o.row * grid + o.col);
    double* v = f.values.data() + r * f.dim;
    v[o.shape] = 1.0;
    v[6 + o.color] = 1.0;
    v[12 + o.size] = 1.0;
    v[kObjectDim] = 1.0;
    occupied[r] = true;
  }
  for (std::size_t r = 0; r < f.regions; ++r) {
    if (!occupied[r]) f.values[r * f.dim + kBackgroundDim] = 1.0;
  }
  if (sigma > 0.0) {
    for (double& x : f.values) x += sigma * rng.normal();
  }
  return f;
}

std::vector<double> pooled_features(const SceneFeatures& features) {
  std::vector<double> out(features.dim, 0.0);
  for (std::size_t r = 0; r < features.regions; ++r) {
    for (std::size_t j = 0; j < features.dim; ++j) out[j] += features.at(r, j);
  }
  for (double& x : out) x /= static_cast<double>(features.regions);
  return out;
}

}  // namespace gst::toyworld
