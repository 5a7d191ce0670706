#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gst/numkit/rng.hpp"

namespace gst::toyworld {

inline constexpr int kNumShapes = 6;
inline constexpr int kNumColors = 6;
inline constexpr int kNumSizes = 2;

enum class Style { InDomain, Shifted };
const char* style_name(Style style);
Style parse_style(const std::string& name);

struct Object {
  int shape = 0;
  int color = 0;
  int size = 0;  // 0 small, 1 large
  int row = 0;
  int col = 0;
  bool operator==(const Object&) const = default;
};

struct Scene {
  std::uint64_t id = 0;
  std::vector<Object> objects;
  Style style = Style::InDomain;
  bool operator==(const Scene&) const = default;
};

struct StyleWeights {
  std::vector<double> shape;
  std::vector<double> color;
  std::vector<double> size;
  int min_objects = 1;
  int max_objects = 4;
};

struct WorldConfig {
  int grid = 3;
  int max_objects = 6;
  int feature_dim = 16;
  double noise_sigma = 0.05;
  StyleWeights in_domain{{0.30, 0.25, 0.20, 0.15, 0.07, 0.03},
                         {0.30, 0.25, 0.20, 0.15, 0.07, 0.03},
                         {0.6, 0.4},
                         1,
                         4};
  // Reversed marginals and one more object on average.
  StyleWeights shifted{{0.03, 0.07, 0.15, 0.20, 0.25, 0.30},
                       {0.03, 0.07, 0.15, 0.20, 0.25, 0.30},
                       {0.3, 0.7},
                       2,
                       5};
  int regions() const { return grid * grid; }
};

/// Region features: `regions` rows of `dim` values, row-major.
struct SceneFeatures {
  std::size_t regions = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t j) const { return values[r * dim + j]; }
  bool operator==(const SceneFeatures&) const = default;
};

Scene gen_scene(const WorldConfig& cfg, numkit::Rng& rng, Style style, std::uint64_t id = 0);

/// Layout of the attribute embedding (first 16 dims; extra dims stay zero
/// before noise): one-hot shape [0,6), one-hot color [6,12), one-hot size
/// [12,14), object flag 14, background flag 15.
inline constexpr int kBackgroundDim = 15;
inline constexpr int kObjectDim = 14;
inline constexpr int kMinFeatureDim = 16;

SceneFeatures render_features(const Scene& scene, numkit::Rng& rng, int regions, int dim,
                              double sigma, int grid = 3);

/// Mean over regions: the per-scene summary vector used for retrieval.
std::vector<double> pooled_features(const SceneFeatures& features);

}  // namespace gst::toyworld
