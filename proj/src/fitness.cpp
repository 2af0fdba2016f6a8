#include "gpreg/fitness.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace gpreg {

JointHistogram JointHistogram::transposed() const {
  JointHistogram out(bins_);
  for (int a = 0; a < bins_; ++a) {
    for (int b = 0; b < bins_; ++b) {
      out.counts_[static_cast<std::size_t>(b) * bins_ + a] =
          counts_[static_cast<std::size_t>(a) * bins_ + b];
    }
  }
  out.total_ = total_;
  return out;
}

double mutual_information(const JointHistogram& hist) {
  const std::uint64_t total = hist.total();
  if (total == 0) throw std::invalid_argument("mutual_information: no overlapping samples");
  const int bins = hist.bins();

  std::vector<std::uint64_t> row(bins, 0), col(bins, 0);
  for (int a = 0; a < bins; ++a) {
    for (int b = 0; b < bins; ++b) {
      const std::uint64_t n = hist.count(a, b);
      row[a] += n;
      col[b] += n;
    }
  }

  const double n_total = static_cast<double>(total);
  double mi = 0.0;
  for (int a = 0; a < bins; ++a) {
    for (int b = 0; b < bins; ++b) {
      const std::uint64_t n = hist.count(a, b);
      if (n == 0) continue;
      const double p_ab = static_cast<double>(n) / n_total;
      // p(a,b) / (p(a) p(b)) = n_ab * N / (n_a * n_b)
      mi += p_ab * std::log(static_cast<double>(n) * n_total /
                            (static_cast<double>(row[a]) * static_cast<double>(col[b])));
    }
  }
  return mi;
}

std::vector<PixelPos> sample_pixels(Rng& rng, int width, int height,
                                    const SamplePlan& plan) {
  const std::uint64_t pixel_count = static_cast<std::uint64_t>(width) * height;
  std::uint64_t want = static_cast<std::uint64_t>(
      std::floor(plan.fraction * static_cast<double>(pixel_count)));
  want = std::max<std::uint64_t>(want, static_cast<std::uint64_t>(plan.floor_count));
  want = std::min(want, pixel_count);

  std::vector<PixelPos> out;
  out.reserve(want);
  if (want == pixel_count) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.push_back({x, y});
    }
    return out;
  }

  // Floyd's uniform k-subset of [0, pixel_count), O(k) memory.
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(want * 2);
  for (std::uint64_t j = pixel_count - want; j < pixel_count; ++j) {
    std::uint64_t t = rand_index(rng, j + 1);
    if (!chosen.insert(t).second) {
      t = j;
      chosen.insert(t);
    }
    out.push_back({static_cast<int>(t % width), static_cast<int>(t / width)});
  }
  return out;
}

FitnessResult evaluate_fitness(const Expr& tx, const Expr& ty,
                               const GrayImage& sensed, const GrayImage& reference,
                               std::span<const PixelPos> samples,
                               const SamplePlan& plan, int bin_width,
                               JointHistogram* histogram_out) {
  JointHistogram hist(bin_count(bin_width));
  FitnessResult result;
  if (samples.empty()) {
    if (histogram_out) *histogram_out = hist;
    return result;
  }

  bool nonfinite = false;
  std::uint64_t in_bounds = 0;
  EvalContext ctx{0.0, 0.0, sensed.width, sensed.height};
  for (const PixelPos& p : samples) {
    ctx.x = p.x;
    ctx.y = p.y;
    const double rx = eval(tx, ctx, nonfinite);
    const double ry = eval(ty, ctx, nonfinite);
    if (!reference.contains(rx, ry)) continue;
    ++in_bounds;
    const int a = quantize(sensed.at(p.x, p.y), bin_width);
    const int b = quantize(static_cast<int>(std::lround(bilinear(reference, rx, ry))),
                           bin_width);
    hist.add(a, b);
  }

  result.overlap_fraction =
      static_cast<double>(in_bounds) / static_cast<double>(samples.size());
  if (histogram_out) *histogram_out = hist;
  if (nonfinite || in_bounds == 0 || result.overlap_fraction < plan.overlap_threshold) {
    return result;  // valid stays false, mi stays 0
  }
  result.valid = true;
  result.mi = mutual_information(hist);
  if (result.mi < 0.0 && result.mi > -1e-9) result.mi = 0.0;  // rounding slack
  return result;
}

}  // namespace gpreg
