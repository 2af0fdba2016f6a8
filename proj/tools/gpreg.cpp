// gpreg - evolves free-form coordinate transforms that register a sensed
// grayscale image onto a reference by maximizing mutual information.
//
// Subcommands: register, synth, eval, render. See README.md.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpreg/evaluation.hpp"
#include "gpreg/evolution.hpp"
#include "gpreg/expr.hpp"
#include "gpreg/fitness.hpp"
#include "gpreg/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  int population = 150;
  double crossover_prob = 0.9;
  double mutation_rate = 0.3;
  int elite_count = -1;  // -1: derive ceil(0.02 * population)
  double cross_axis_prob = 0.2;
  int init_max_height = 6;
  int mutation_max_height = 3;
  int stall_window = 10;
  double stall_increment = 0.02;
  int stop_patience = 30;
  int max_generations = 500;
  double sample_fraction = 0.005;
  int sample_floor = 500;
  double overlap_threshold = 0.25;
  int bin_width = 8;
  std::uint64_t seed = 1;
  int threads = 1;
  bool dump_histogram = false;
  std::string reference;
  std::string sensed;
  std::string out;
};

struct Binding {
  std::string key;
  CLI::Option* opt;
  std::function<void(const json&)> apply;
};

template <typename T>
Binding bind_key(const std::string& key, CLI::Option* opt, T& field) {
  return {key, opt, [key, &field](const json& v) {
            try {
              field = v.get<T>();
            } catch (const json::exception&) {
              throw ConfigError("config key '" + key + "' has the wrong type");
            }
          }};
}

// defaults < config file < explicit command-line flags
void apply_config_file(const std::string& path, const std::vector<Binding>& bindings) {
  std::ifstream in(path);
  if (!in) throw gpreg::IoError(path + ": cannot open config file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const Binding* binding = nullptr;
    for (const Binding& b : bindings) {
      if (b.key == key) {
        binding = &b;
        break;
      }
    }
    if (binding == nullptr) throw ConfigError(path + ": unknown config key '" + key + "'");
    if (binding->opt != nullptr && binding->opt->count() > 0) continue;  // flag wins
    binding->apply(value);
  }
}

void validate(RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.population < 1) fail("population must be >= 1");
  if (cfg.crossover_prob < 0 || cfg.crossover_prob > 1) fail("crossover_prob must be in [0,1]");
  if (cfg.mutation_rate < 0 || cfg.mutation_rate > 1) fail("mutation_rate must be in [0,1]");
  if (cfg.cross_axis_prob < 0 || cfg.cross_axis_prob > 1) fail("cross_axis_prob must be in [0,1]");
  if (cfg.init_max_height < 1) fail("init_max_height must be >= 1");
  if (cfg.mutation_max_height < 1) fail("mutation_max_height must be >= 1");
  if (cfg.stall_window < 1) fail("stall_window must be >= 1");
  if (cfg.stall_increment < 0) fail("stall_increment must be >= 0");
  if (cfg.stop_patience < 1) fail("stop_patience must be >= 1");
  if (cfg.max_generations < 0) fail("max_generations must be >= 0");
  if (cfg.sample_fraction <= 0 || cfg.sample_fraction > 1) fail("sample_fraction must be in (0,1]");
  if (cfg.sample_floor < 1) fail("sample_floor must be >= 1");
  if (cfg.overlap_threshold < 0 || cfg.overlap_threshold > 1) fail("overlap_threshold must be in [0,1]");
  if (cfg.bin_width < 1 || cfg.bin_width > 255) fail("bin_width must be in 1..255");
  if (cfg.threads < 1) fail("threads must be >= 1");
  if (cfg.elite_count < 0) cfg.elite_count = gpreg::default_elite_count(cfg.population);
  if (cfg.elite_count > cfg.population) fail("elite_count must be <= population");
}

gpreg::GpParams gp_params(const RunConfig& cfg) {
  gpreg::GpParams p;
  p.population_size = cfg.population;
  p.crossover_prob = cfg.crossover_prob;
  p.mutation_rate = cfg.mutation_rate;
  p.elite_count = cfg.elite_count;
  p.init_max_height = cfg.init_max_height;
  p.mutation_max_height = cfg.mutation_max_height;
  p.cross_axis_prob = cfg.cross_axis_prob;
  p.stall_window = cfg.stall_window;
  p.stall_increment = cfg.stall_increment;
  p.stop_patience = cfg.stop_patience;
  p.max_generations = cfg.max_generations;
  return p;
}

ordered_json config_echo(const RunConfig& cfg) {
  ordered_json j;
  j["population"] = cfg.population;
  j["crossover_prob"] = cfg.crossover_prob;
  j["mutation_rate"] = cfg.mutation_rate;
  j["elite_count"] = cfg.elite_count;
  j["cross_axis_prob"] = cfg.cross_axis_prob;
  j["init_max_height"] = cfg.init_max_height;
  j["mutation_max_height"] = cfg.mutation_max_height;
  j["stall_window"] = cfg.stall_window;
  j["stall_increment"] = cfg.stall_increment;
  j["stop_patience"] = cfg.stop_patience;
  j["max_generations"] = cfg.max_generations;
  j["sample_fraction"] = cfg.sample_fraction;
  j["sample_floor"] = cfg.sample_floor;
  j["overlap_threshold"] = cfg.overlap_threshold;
  j["bin_width"] = cfg.bin_width;
  j["dump_histogram"] = cfg.dump_histogram;
  j["reference"] = cfg.reference;
  j["sensed"] = cfg.sensed;
  j["out"] = cfg.out;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw gpreg::IoError(path.string() + ": cannot open file for writing");
  out << text;
  if (!out) throw gpreg::IoError(path.string() + ": write failed");
}

std::string trace_csv(const std::vector<gpreg::GenerationStats>& trace) {
  std::string csv = "generation,best_mi,mean_mi,mutation_rate,stall_counter\n";
  for (const gpreg::GenerationStats& s : trace) {
    csv += std::to_string(s.generation) + ',' + gpreg::format_double(s.best_mi) + ',' +
           gpreg::format_double(s.mean_mi) + ',' + gpreg::format_double(s.mutation_rate) +
           ',' + std::to_string(s.stall_counter) + '\n';
  }
  return csv;
}

std::string histogram_csv(const gpreg::JointHistogram& hist) {
  std::string csv;
  for (int a = 0; a < hist.bins(); ++a) {
    for (int b = 0; b < hist.bins(); ++b) {
      if (b > 0) csv += ',';
      csv += std::to_string(hist.count(a, b));
    }
    csv += '\n';
  }
  return csv;
}

gpreg::Expr load_expr_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gpreg::IoError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return gpreg::parse(ss.str());
}

bool uses_rotation(const gpreg::Expr& e) {
  if (e.op == gpreg::Op::RotX || e.op == gpreg::Op::RotY) return true;
  for (const gpreg::Expr& child : e.children) {
    if (uses_rotation(child)) return true;
  }
  return false;
}

// --- register ---

int cmd_register(const RunConfig& cfg) {
  const gpreg::GrayImage reference = gpreg::load_image(cfg.reference);
  const gpreg::GrayImage sensed = gpreg::load_image(cfg.sensed);
  fs::create_directories(cfg.out);

  gpreg::FitnessEnv env;
  env.sensed = &sensed;
  env.reference = &reference;
  env.plan = {cfg.sample_fraction, cfg.sample_floor, cfg.overlap_threshold};
  env.bin_width = cfg.bin_width;
  env.threads = cfg.threads;

  const auto t0 = std::chrono::steady_clock::now();
  const gpreg::RunResult result = gpreg::run_registration(env, gp_params(cfg), cfg.seed);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string tx_text = gpreg::serialize(result.best.x_tree);
  const std::string ty_text = gpreg::serialize(result.best.y_tree);

  ordered_json report;
  report["best"] = {{"tx", tx_text},
                    {"ty", ty_text},
                    {"chromosome", gpreg::format_chromosome_line(result.best.x_tree,
                                                                 result.best.y_tree)},
                    {"search_mi", result.best.fitness.mi},
                    {"full_mi", result.full_mi},
                    {"full_overlap", result.full_overlap}};
  report["config"] = config_echo(cfg);
  report["generations"] = result.generations;
  report["seed"] = cfg.seed;
  report["stop_reason"] = result.stop_reason;
  ordered_json trace = ordered_json::array();
  for (const gpreg::GenerationStats& s : result.trace) {
    trace.push_back({{"generation", s.generation},
                     {"best_mi", s.best_mi},
                     {"mean_mi", s.mean_mi},
                     {"mutation_rate", s.mutation_rate},
                     {"stall_counter", s.stall_counter}});
  }
  report["trace"] = std::move(trace);
  // excluded from replay comparisons, see README
  report["runtime"] = {{"threads", cfg.threads}, {"wall_time_seconds", wall}};

  const fs::path out_dir(cfg.out);
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  write_text(out_dir / "best.tx.sexpr", tx_text + "\n");
  write_text(out_dir / "best.ty.sexpr", ty_text + "\n");
  write_text(out_dir / "trace.csv", trace_csv(result.trace));

  const gpreg::RegistrationRendering rendering = gpreg::warp_to_reference(
      sensed, result.best.x_tree, result.best.y_tree, reference.width, reference.height);
  gpreg::save_image(rendering.warped, (out_dir / "warped.png").string());
  gpreg::save_image(gpreg::difference_image(reference, rendering),
                    (out_dir / "diff.png").string());

  if (cfg.dump_histogram) {
    gpreg::SamplePlan full = env.plan;
    full.fraction = 1.0;
    full.floor_count = 1;
    gpreg::Rng unused = gpreg::make_stream(cfg.seed, gpreg::kSampleStream, 0);
    const auto all = gpreg::sample_pixels(unused, sensed.width, sensed.height, full);
    gpreg::JointHistogram hist(gpreg::bin_count(cfg.bin_width));
    gpreg::evaluate_fitness(result.best.x_tree, result.best.y_tree, sensed, reference, all,
                            full, cfg.bin_width, &hist);
    write_text(out_dir / "histogram.csv", histogram_csv(hist));
  }

  std::printf("MI (full set): %.6f\n", result.full_mi);
  std::printf("%s\n", report["best"]["chromosome"].get<std::string>().c_str());
  std::printf("generations: %d, stop: %s\n", result.generations, result.stop_reason.c_str());
  return 0;
}

// --- synth ---

int cmd_synth(const std::string& scene_path, const std::string& tx_text,
              const std::string& ty_text, int width, int height, const std::string& out) {
  const gpreg::GroundTruthTransform truth{gpreg::parse(tx_text), gpreg::parse(ty_text)};
  const gpreg::GrayImage scene = gpreg::load_image(scene_path);
  const int w = width > 0 ? width : scene.width;
  const int h = height > 0 ? height : scene.height;
  const gpreg::SyntheticPair pair = gpreg::make_synthetic_pair(scene, truth, w, h);

  fs::create_directories(out);
  const fs::path out_dir(out);
  gpreg::save_image(pair.reference, (out_dir / "reference.png").string());
  gpreg::save_image(pair.sensed, (out_dir / "sensed.png").string());
  gpreg::save_control_points(pair.control_points, (out_dir / "control_points.csv").string());

  ordered_json truth_json;
  truth_json["tx"] = gpreg::serialize(truth.tx);
  truth_json["ty"] = gpreg::serialize(truth.ty);
  truth_json["sensed_width"] = w;
  truth_json["sensed_height"] = h;
  truth_json["scene"] = scene_path;
  write_text(out_dir / "truth.json", truth_json.dump(2) + "\n");

  std::printf("wrote reference.png, sensed.png, control_points.csv, truth.json to %s\n",
              out.c_str());
  return 0;
}

// --- eval ---

int cmd_eval(const gpreg::Expr& tx, const gpreg::Expr& ty, const std::string& points_path,
             int width, int height) {
  const gpreg::ControlPointSet points = gpreg::load_control_points(points_path);
  if (points.size() == 0) {
    throw ConfigError(points_path + ": no control point pairs (header only)");
  }
  if ((width <= 0 || height <= 0) && (uses_rotation(tx) || uses_rotation(ty))) {
    throw ConfigError("transform uses rotx/roty; pass --width and --height of the sensed image");
  }
  const gpreg::ImageDims dims{width > 0 ? width : 1, height > 0 ? height : 1};
  std::printf("%.3f\n", gpreg::rmse(tx, ty, points, dims));
  return 0;
}

// --- render ---

int cmd_render(const gpreg::Expr& tx, const gpreg::Expr& ty, const std::string& sensed_path,
               const std::string& reference_path, const std::string& out) {
  const gpreg::GrayImage sensed = gpreg::load_image(sensed_path);
  const gpreg::GrayImage reference = gpreg::load_image(reference_path);
  fs::create_directories(out);
  const fs::path out_dir(out);
  const gpreg::RegistrationRendering rendering =
      gpreg::warp_to_reference(sensed, tx, ty, reference.width, reference.height);
  gpreg::save_image(rendering.warped, (out_dir / "warped.png").string());
  gpreg::save_image(gpreg::difference_image(reference, rendering),
                    (out_dir / "diff.png").string());
  std::printf("wrote warped.png, diff.png to %s\n", out.c_str());
  return 0;
}

gpreg::Expr resolve_expr(const std::string& inline_text, const std::string& file_path,
                         const char* which) {
  if (!inline_text.empty()) return gpreg::parse(inline_text);
  if (!file_path.empty()) return load_expr_file(file_path);
  throw ConfigError(std::string("missing --") + which + " or --" + which + "-file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpreg - image registration by genetic programming over transform trees"};
  app.require_subcommand(1);

  // register
  RunConfig cfg;
  std::string config_path;
  CLI::App* reg = app.add_subcommand("register",
                                     "evolve a sensed->reference transform and report it");
  std::vector<Binding> bindings;
  bindings.push_back(bind_key("population", reg->add_option("--population", cfg.population), cfg.population));
  bindings.push_back(bind_key("crossover_prob", reg->add_option("--crossover-prob", cfg.crossover_prob), cfg.crossover_prob));
  bindings.push_back(bind_key("mutation_rate", reg->add_option("--mutation-rate", cfg.mutation_rate), cfg.mutation_rate));
  bindings.push_back(bind_key("elite_count", reg->add_option("--elite-count", cfg.elite_count), cfg.elite_count));
  bindings.push_back(bind_key("cross_axis_prob", reg->add_option("--cross-axis-prob", cfg.cross_axis_prob), cfg.cross_axis_prob));
  bindings.push_back(bind_key("init_max_height", reg->add_option("--init-max-height", cfg.init_max_height), cfg.init_max_height));
  bindings.push_back(bind_key("mutation_max_height", reg->add_option("--mutation-max-height", cfg.mutation_max_height), cfg.mutation_max_height));
  bindings.push_back(bind_key("stall_window", reg->add_option("--stall-window", cfg.stall_window), cfg.stall_window));
  bindings.push_back(bind_key("stall_increment", reg->add_option("--stall-increment", cfg.stall_increment), cfg.stall_increment));
  bindings.push_back(bind_key("stop_patience", reg->add_option("--stop-patience", cfg.stop_patience), cfg.stop_patience));
  bindings.push_back(bind_key("max_generations", reg->add_option("--max-generations", cfg.max_generations), cfg.max_generations));
  bindings.push_back(bind_key("sample_fraction", reg->add_option("--sample-fraction", cfg.sample_fraction), cfg.sample_fraction));
  bindings.push_back(bind_key("sample_floor", reg->add_option("--sample-floor", cfg.sample_floor), cfg.sample_floor));
  bindings.push_back(bind_key("overlap_threshold", reg->add_option("--overlap-threshold", cfg.overlap_threshold), cfg.overlap_threshold));
  bindings.push_back(bind_key("bin_width", reg->add_option("--bin-width", cfg.bin_width), cfg.bin_width));
  bindings.push_back(bind_key("seed", reg->add_option("--seed", cfg.seed), cfg.seed));
  bindings.push_back(bind_key("threads", reg->add_option("--threads", cfg.threads), cfg.threads));
  bindings.push_back(bind_key("dump_histogram", reg->add_flag("--dump-histogram", cfg.dump_histogram), cfg.dump_histogram));
  bindings.push_back(bind_key("reference", reg->add_option("--reference", cfg.reference), cfg.reference));
  bindings.push_back(bind_key("sensed", reg->add_option("--sensed", cfg.sensed), cfg.sensed));
  bindings.push_back(bind_key("out", reg->add_option("--out", cfg.out), cfg.out));
  reg->add_option("--config", config_path, "flat JSON config; flags override file values");

  // synth
  std::string synth_scene, synth_tx, synth_ty, synth_out;
  int synth_w = 0, synth_h = 0;
  CLI::App* synth = app.add_subcommand("synth",
                                       "build a semi-synthetic pair from a scene and a truth transform");
  synth->add_option("--scene", synth_scene, "grayscale scene image")->required();
  synth->add_option("--tx", synth_tx, "truth x-transform s-expression")->required();
  synth->add_option("--ty", synth_ty, "truth y-transform s-expression")->required();
  synth->add_option("--width", synth_w, "sensed width (default: scene width)");
  synth->add_option("--height", synth_h, "sensed height (default: scene height)");
  synth->add_option("--out", synth_out, "output directory")->required();

  // eval
  std::string eval_tx, eval_ty, eval_tx_file, eval_ty_file, eval_points;
  int eval_w = 0, eval_h = 0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a transform against control points (RMSE)");
  eval_cmd->add_option("--tx", eval_tx, "x-transform s-expression");
  eval_cmd->add_option("--ty", eval_ty, "y-transform s-expression");
  eval_cmd->add_option("--tx-file", eval_tx_file, "file holding the x-transform")->excludes("--tx");
  eval_cmd->add_option("--ty-file", eval_ty_file, "file holding the y-transform")->excludes("--ty");
  eval_cmd->add_option("--points", eval_points, "control point CSV")->required();
  eval_cmd->add_option("--width", eval_w, "sensed width (needed when the transform uses rotx/roty)");
  eval_cmd->add_option("--height", eval_h, "sensed height");

  // render
  std::string ren_tx, ren_ty, ren_tx_file, ren_ty_file, ren_sensed, ren_reference, ren_out;
  CLI::App* render = app.add_subcommand("render", "warp the sensed image and write warped/diff images");
  render->add_option("--tx", ren_tx, "x-transform s-expression");
  render->add_option("--ty", ren_ty, "y-transform s-expression");
  render->add_option("--tx-file", ren_tx_file, "file holding the x-transform")->excludes("--tx");
  render->add_option("--ty-file", ren_ty_file, "file holding the y-transform")->excludes("--ty");
  render->add_option("--sensed", ren_sensed, "sensed image")->required();
  render->add_option("--reference", ren_reference, "reference image")->required();
  render->add_option("--out", ren_out, "output directory")->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }

    if (reg->parsed()) {
      if (!config_path.empty()) apply_config_file(config_path, bindings);
      if (cfg.reference.empty()) throw ConfigError("missing --reference");
      if (cfg.sensed.empty()) throw ConfigError("missing --sensed");
      if (cfg.out.empty()) throw ConfigError("missing --out");
      validate(cfg);
      return cmd_register(cfg);
    }
    if (synth->parsed()) {
      return cmd_synth(synth_scene, synth_tx, synth_ty, synth_w, synth_h, synth_out);
    }
    if (eval_cmd->parsed()) {
      const gpreg::Expr tx = resolve_expr(eval_tx, eval_tx_file, "tx");
      const gpreg::Expr ty = resolve_expr(eval_ty, eval_ty_file, "ty");
      return cmd_eval(tx, ty, eval_points, eval_w, eval_h);
    }
    if (render->parsed()) {
      const gpreg::Expr tx = resolve_expr(ren_tx, ren_tx_file, "tx");
      const gpreg::Expr ty = resolve_expr(ren_ty, ren_ty_file, "ty");
      return cmd_render(tx, ty, ren_sensed, ren_reference, ren_out);
    }
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gpreg::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gpreg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
