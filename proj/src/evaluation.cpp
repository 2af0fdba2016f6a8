#include "gpreg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gpreg/rng.hpp"

namespace gpreg {

namespace {

// 4x4 grid at 1/5, 2/5, 3/5, 4/5 of the raster extent, strictly interior.
std::vector<Vec2> interior_grid(int width, int height) {
  std::vector<Vec2> out;
  out.reserve(16);
  for (int j = 1; j <= 4; ++j) {
    for (int i = 1; i <= 4; ++i) {
      out.push_back({std::round((width - 1) * i / 5.0),
                     std::round((height - 1) * j / 5.0)});
    }
  }
  return out;
}

double parse_csv_field(const std::string& field, int line_no, const std::string& path) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ParseError(path + ": malformed number '" + field + "' on line " +
                         std::to_string(line_no),
                     static_cast<std::size_t>(line_no));
  }
  return v;
}

}  // namespace

SyntheticPair make_synthetic_pair(const GrayImage& scene,
                                  const GroundTruthTransform& truth,
                                  int sensed_width, int sensed_height) {
  if (sensed_width < 1 || sensed_height < 1) {
    throw std::invalid_argument("make_synthetic_pair: empty sensed dimensions");
  }
  SyntheticPair out;
  out.reference = scene;
  out.sensed = GrayImage(sensed_width, sensed_height);

  EvalContext ctx{0.0, 0.0, sensed_width, sensed_height};
  for (int y = 0; y < sensed_height; ++y) {
    for (int x = 0; x < sensed_width; ++x) {
      ctx.x = x;
      ctx.y = y;
      const double sx = eval(truth.tx, ctx);
      const double sy = eval(truth.ty, ctx);
      if (!scene.contains(sx, sy)) continue;  // no source: stays 0
      const long v = std::lround(bilinear(scene, sx, sy));
      out.sensed.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
    }
  }

  for (const Vec2& p : interior_grid(sensed_width, sensed_height)) {
    ctx.x = p.x;
    ctx.y = p.y;
    const Vec2 image{eval(truth.tx, ctx), eval(truth.ty, ctx)};
    if (!scene.contains(image.x, image.y)) {
      std::ostringstream msg;
      msg << "make_synthetic_pair: control point (" << p.x << ", " << p.y
          << ") maps off-scene to (" << image.x << ", " << image.y << ")";
      throw IoError(msg.str());
    }
    out.control_points.sensed_points.push_back(p);
    out.control_points.reference_points.push_back(image);
  }
  return out;
}

double rmse(const Expr& tx, const Expr& ty, const ControlPointSet& points,
            ImageDims sensed_dims) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("rmse: empty control point set");
  if (points.sensed_points.size() != n) {
    throw std::invalid_argument("rmse: mismatched point lists");
  }
  EvalContext ctx{0.0, 0.0, sensed_dims.width, sensed_dims.height};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ctx.x = points.sensed_points[i].x;
    ctx.y = points.sensed_points[i].y;
    const double mx = eval(tx, ctx);
    const double my = eval(ty, ctx);
    const double dx = points.reference_points[i].x - mx;
    const double dy = points.reference_points[i].y - my;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

void save_control_points(const ControlPointSet& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open file for writing");
  out << "ref_x,ref_y,sensed_x,sensed_y\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << format_double(points.reference_points[i].x) << ','
        << format_double(points.reference_points[i].y) << ','
        << format_double(points.sensed_points[i].x) << ','
        << format_double(points.sensed_points[i].y) << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

ControlPointSet load_control_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) || line != "ref_x,ref_y,sensed_x,sensed_y") {
    throw ParseError(path + ": missing header 'ref_x,ref_y,sensed_x,sensed_y'", 1);
  }
  ControlPointSet out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 4) {
      throw ParseError(path + ": expected 4 fields on line " + std::to_string(line_no) +
                           ", got " + std::to_string(fields.size()),
                       static_cast<std::size_t>(line_no));
    }
    out.reference_points.push_back({parse_csv_field(fields[0], line_no, path),
                                    parse_csv_field(fields[1], line_no, path)});
    out.sensed_points.push_back({parse_csv_field(fields[2], line_no, path),
                                 parse_csv_field(fields[3], line_no, path)});
  }
  return out;
}

GrayImage synthesize_scene(int width, int height, std::uint64_t seed) {
  if (width < 1 || height < 1) throw std::invalid_argument("synthesize_scene: empty dims");
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);

  auto smoothstep = [](double t) { return t * t * (3.0 - 2.0 * t); };

  int octave = 0;
  for (int spacing = std::max(width, height) / 2; spacing >= 2; spacing /= 2, ++octave) {
    Rng rng = make_stream(seed, kSceneStream, static_cast<std::uint64_t>(octave));
    const int gw = width / spacing + 2;
    const int gh = height / spacing + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rand_unit(rng);

    const double amplitude = static_cast<double>(spacing);
    for (int y = 0; y < height; ++y) {
      const double v = static_cast<double>(y) / spacing;
      const int v0 = static_cast<int>(v);
      const double fy = smoothstep(v - v0);
      for (int x = 0; x < width; ++x) {
        const double u = static_cast<double>(x) / spacing;
        const int u0 = static_cast<int>(u);
        const double fx = smoothstep(u - u0);
        const double a = lattice[static_cast<std::size_t>(v0) * gw + u0];
        const double b = lattice[static_cast<std::size_t>(v0) * gw + u0 + 1];
        const double c = lattice[static_cast<std::size_t>(v0 + 1) * gw + u0];
        const double d = lattice[static_cast<std::size_t>(v0 + 1) * gw + u0 + 1];
        const double top = a + (b - a) * fx;
        const double bot = c + (d - c) * fx;
        acc[static_cast<std::size_t>(y) * width + x] += amplitude * (top + (bot - top) * fy);
      }
    }
  }

  const auto [mn_it, mx_it] = std::minmax_element(acc.begin(), acc.end());
  const double mn = *mn_it;
  const double range = std::max(*mx_it - mn, 1e-12);
  GrayImage img(width, height);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (acc[i] - mn) / range));
  }
  return img;
}

}  // namespace gpreg
