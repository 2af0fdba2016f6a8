#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gpreg/expr.hpp"
#include "gpreg/image.hpp"
#include "gpreg/rng.hpp"

namespace gpreg {

// Pixel sampling policy for one fitness evaluation.
struct SamplePlan {
  double fraction = 0.005;         // share of sensed pixels to draw
  int floor_count = 500;           // never draw fewer than this many
  double overlap_threshold = 0.25; // below this in-bounds share -> invalid
};

struct FitnessResult {
  double mi = 0.0;               // nats
  double overlap_fraction = 0.0; // in-bounds samples / total samples
  bool valid = false;
};

// floor(intensity / bin_width); bin_width 8 gives 32 gray levels.
inline int quantize(int intensity, int bin_width) { return intensity / bin_width; }

inline int bin_count(int bin_width) { return 255 / bin_width + 1; }

// Joint gray-level counts between two quantized images, bins x bins.
class JointHistogram {
 public:
  explicit JointHistogram(int bins)
      : bins_(bins), counts_(static_cast<std::size_t>(bins) * bins, 0) {}

  void add(int a, int b) {
    ++counts_[static_cast<std::size_t>(a) * bins_ + b];
    ++total_;
  }
  std::uint64_t count(int a, int b) const {
    return counts_[static_cast<std::size_t>(a) * bins_ + b];
  }
  int bins() const { return bins_; }
  std::uint64_t total() const { return total_; }

  JointHistogram transposed() const;

 private:
  int bins_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// I(A, B) = sum p(a,b) ln(p(a,b) / (p(a) p(b))) over occupied bins, in nats.
// Throws std::invalid_argument when the histogram is empty.
double mutual_information(const JointHistogram& hist);

struct PixelPos {
  int x = 0;
  int y = 0;
};

// max(floor(fraction * pixels), floor_count) distinct positions, uniform
// without replacement, capped at the pixel count. fraction 1.0 yields every
// pixel exactly once in row-major order.
std::vector<PixelPos> sample_pixels(Rng& rng, int width, int height,
                                    const SamplePlan& plan);

// Maps every sampled sensed pixel through (tx, ty) into reference
// coordinates, gates on the in-bounds share, and scores the joint histogram
// of (sensed gray, bilinearly interpolated reference gray). Invalid results
// carry mi = 0. If histogram_out is non-null it receives the joint counts.
FitnessResult evaluate_fitness(const Expr& tx, const Expr& ty,
                               const GrayImage& sensed, const GrayImage& reference,
                               std::span<const PixelPos> samples,
                               const SamplePlan& plan, int bin_width,
                               JointHistogram* histogram_out = nullptr);

}  // namespace gpreg
