#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpreg/expr.hpp"
#include "gpreg/image.hpp"

namespace gpreg {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Ground truth expressed in the same language the search explores.
struct GroundTruthTransform {
  Expr tx;
  Expr ty;
};

// Paired ground-truth points: reference_points[i] is the image of
// sensed_points[i] under the true transform.
struct ControlPointSet {
  std::vector<Vec2> reference_points;
  std::vector<Vec2> sensed_points;
  std::size_t size() const { return reference_points.size(); }
};

struct SyntheticPair {
  GrayImage reference;  // the scene itself
  GrayImage sensed;     // scene resampled through the truth transform
  ControlPointSet control_points;
};

// Builds a semi-synthetic pair: sensed pixel (x, y) takes the bilinearly
// interpolated scene intensity at (tx(x,y), ty(x,y)), rounded half-up;
// pixels whose source falls outside the scene render as 0. Control points
// are a 4x4 uniform grid over the sensed interior; a grid point whose truth
// image leaves the scene raises IoError naming the point.
SyntheticPair make_synthetic_pair(const GrayImage& scene,
                                  const GroundTruthTransform& truth,
                                  int sensed_width, int sensed_height);

// Root-mean-square distance, in pixels, between the reference points and
// the transformed sensed points. Throws std::invalid_argument when the set
// is empty.
double rmse(const Expr& tx, const Expr& ty, const ControlPointSet& points,
            ImageDims sensed_dims);

// CSV with header "ref_x,ref_y,sensed_x,sensed_y", one pair per line.
void save_control_points(const ControlPointSet& points, const std::string& path);
ControlPointSet load_control_points(const std::string& path);

// Multi-octave value-noise test scene; deterministic in (width, height, seed).
GrayImage synthesize_scene(int width, int height, std::uint64_t seed);

}  // namespace gpreg
