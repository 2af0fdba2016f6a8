#include "gpreg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

namespace gpreg {

namespace {

constexpr long long kMaxPixels = 1LL << 30;

std::string lower_ext(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

void check_dims(long long w, long long h, const std::string& path) {
  if (w <= 0 || h <= 0 || w * h > kMaxPixels) {
    throw IoError(path + ": dimension overflow (" + std::to_string(w) + "x" +
                  std::to_string(h) + ")");
  }
}

// --- PGM (P5, maxval 255) ---

int pgm_read_int(std::istream& in, const std::string& path) {
  // skip whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw IoError(path + ": malformed PGM header");
  long long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > kMaxPixels) throw IoError(path + ": dimension overflow in header");
    c = in.get();
  }
  if (c != EOF) in.unget();
  return static_cast<int>(v);
}

GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open file");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') {
    throw IoError(path + ": unsupported format (expected binary PGM 'P5')");
  }
  const int w = pgm_read_int(in, path);
  const int h = pgm_read_int(in, path);
  const int maxval = pgm_read_int(in, path);
  check_dims(w, h, path);
  if (maxval != 255) {
    throw IoError(path + ": unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  }
  in.get();  // single whitespace byte separating header and payload
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IoError(path + ": truncated payload");
  }
  return img;
}

void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open file for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError(path + ": write failed");
}

// --- PNG (8-bit grayscale) ---

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(path + ": cannot open file");

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError(path + ": unsupported format (not a PNG file)");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop pinfo = png ? png_create_info_struct(png) : nullptr;
  if (!png || !pinfo) {
    png_destroy_read_struct(&png, &pinfo, nullptr);
    throw IoError(path + ": libpng initialization failed");
  }

  GrayImage img;
  std::string error;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &pinfo, nullptr);
    throw IoError(path + ": truncated payload or corrupt PNG");
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, pinfo);

  const png_uint_32 w = png_get_image_width(png, pinfo);
  const png_uint_32 h = png_get_image_height(png, pinfo);
  const int bit_depth = png_get_bit_depth(png, pinfo);
  const int color_type = png_get_color_type(png, pinfo);

  if (color_type != PNG_COLOR_TYPE_GRAY) {
    error = "unsupported color type (8-bit grayscale only)";
  } else if (bit_depth != 8) {
    error = "unsupported bit depth (" + std::to_string(bit_depth) + "-bit)";
  }
  if (!error.empty()) {
    png_destroy_read_struct(&png, &pinfo, nullptr);
    throw IoError(path + ": " + error);
  }
  check_dims(w, h, path);

  png_set_interlace_handling(png);
  png_read_update_info(png, pinfo);

  img = GrayImage(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &pinfo, nullptr);
  return img;
}

void save_png(const GrayImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(path + ": cannot open file for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop pinfo = png ? png_create_info_struct(png) : nullptr;
  if (!png || !pinfo) {
    png_destroy_write_struct(&png, &pinfo);
    throw IoError(path + ": libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &pinfo);
    throw IoError(path + ": write failed");
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, pinfo, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, pinfo);
  std::vector<png_const_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
  }
  png_write_rows(png, const_cast<png_bytepp>(rows.data()), img.height);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &pinfo);
}

}  // namespace

GrayImage load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "pgm") return load_pgm(path);
  if (ext == "png") return load_png(path);
  throw IoError(path + ": unsupported format (expected .pgm or .png)");
}

void save_image(const GrayImage& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0) throw IoError(path + ": empty image");
  const std::string ext = lower_ext(path);
  if (ext == "pgm") return save_pgm(img, path);
  if (ext == "png") return save_png(img, path);
  throw IoError(path + ": unsupported format (expected .pgm or .png)");
}

double bilinear(const GrayImage& img, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  // right/bottom edge: collapse onto the last cell so fx, fy stay in [0, 1]
  if (x0 >= img.width - 1) x0 = img.width - 2;
  if (y0 >= img.height - 1) y0 = img.height - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

RegistrationRendering warp_to_reference(const GrayImage& sensed, const Expr& tx,
                                        const Expr& ty, int ref_width,
                                        int ref_height) {
  RegistrationRendering out;
  out.warped = GrayImage(ref_width, ref_height);
  out.valid_mask.assign(static_cast<std::size_t>(ref_width) * ref_height, 0);
  EvalContext ctx{0.0, 0.0, sensed.width, sensed.height};
  for (int y = 0; y < sensed.height; ++y) {
    for (int x = 0; x < sensed.width; ++x) {
      ctx.x = x;
      ctx.y = y;
      const long px = std::lround(eval(tx, ctx));
      const long py = std::lround(eval(ty, ctx));
      if (px < 0 || py < 0 || px >= ref_width || py >= ref_height) continue;
      const std::size_t idx = static_cast<std::size_t>(py) * ref_width + px;
      out.warped.pixels[idx] = sensed.at(x, y);
      out.valid_mask[idx] = 1;
    }
  }
  return out;
}

GrayImage difference_image(const GrayImage& reference,
                           const RegistrationRendering& rendering) {
  if (reference.width != rendering.warped.width ||
      reference.height != rendering.warped.height) {
    throw std::invalid_argument("difference_image: dimension mismatch");
  }
  GrayImage out(reference.width, reference.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    if (rendering.valid_mask[i]) {
      const int d = static_cast<int>(reference.pixels[i]) -
                    static_cast<int>(rendering.warped.pixels[i]);
      out.pixels[i] = static_cast<std::uint8_t>(d < 0 ? -d : d);
    }
  }
  return out;
}

}  // namespace gpreg
