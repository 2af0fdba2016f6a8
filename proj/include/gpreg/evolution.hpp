#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gpreg/expr.hpp"
#include "gpreg/fitness.hpp"
#include "gpreg/image.hpp"
#include "gpreg/rng.hpp"

namespace gpreg {

// Search parameters. The defaults are the values used for every evaluation
// run; elite_count keeps the top 2% of the population.
struct GpParams {
  int population_size = 150;
  double crossover_prob = 0.9;
  double mutation_rate = 0.3;
  int elite_count = 3;
  int init_max_height = 6;
  int mutation_max_height = 3;
  double cross_axis_prob = 0.2;   // x-tree with y-tree crossover
  int stall_window = 10;          // flat generations before a rate bump
  double stall_increment = 0.02;
  int stop_patience = 30;         // flat generations before stopping
  int max_generations = 500;
};

inline int default_elite_count(int population_size) {
  return (population_size * 2 + 99) / 100;  // ceil(0.02 * population)
}

// Hard depth cap for any tree produced by the genetic operators.
constexpr int kMaxTreeDepth = 12;
// Per-node firing probability of the point-mutation sweep.
constexpr double kNodeMutationProb = 0.05;
// Best-fitness deltas below this count as "no significant improvement".
constexpr double kImprovementEpsilon = 1e-4;
constexpr double kMutationRateCap = 0.9;

// One candidate transform: an x-tree and a y-tree.
struct Chromosome {
  Expr x_tree;
  Expr y_tree;
  FitnessResult fitness{};
  bool evaluated = false;
  int rank = 0;  // 1 = best after ranking, 0 = unranked
  std::uint64_t id = 0;
};

// Shared, read-only context for fitness evaluation during a run.
struct FitnessEnv {
  const GrayImage* sensed = nullptr;
  const GrayImage* reference = nullptr;
  SamplePlan plan{};
  int bin_width = 8;
  int threads = 1;
};

struct GenerationStats {
  int generation = 0;
  double best_mi = 0.0;  // best_ever after this generation
  double mean_mi = 0.0;  // mean over valid chromosomes
  double mutation_rate = 0.0;
  int stall_counter = 0;
};

struct RunState {
  int generation = 0;
  std::vector<Chromosome> population;  // ranked: index i holds rank i+1
  Chromosome best_ever;
  double current_mutation_rate = 0.3;
  int stall_counter = 0;           // flat generations since last bump/improvement
  int no_improvement_count = 0;    // flat generations, drives stopping
  std::uint64_t seed = 0;
  Rng rng;  // main stream: init + selection + crossover + mutation
  std::uint64_t next_id = 0;
};

// P(pos) = (M - pos + 1) / (M (M + 1) / 2), pos in 1..M.
double selection_probability(int pos, int population_size);

// Sorts descending by fitness (invalid last, ties to the lower id) and
// assigns rank = position, 1-based.
void rank_population(std::vector<Chromosome>& population);

// Two independent rank-proportional draws; may pick the same index twice.
// Returns positions into the ranked population (index i = rank i+1).
std::pair<int, int> select_pair(const std::vector<Chromosome>& ranked, Rng& rng);

// One-point subtree crossover per tree couple, gated once per pair by
// crossover_prob; with cross_axis_prob the couples are (a.x, b.y) and
// (a.y, b.x) instead of like-with-like. Children exceeding the depth cap
// cause a repick (5 attempts) and then fall back to the parent's tree.
std::pair<Chromosome, Chromosome> crossover(const Chromosome& a, const Chromosome& b,
                                            const GpParams& params, Rng& rng);

// Each variant fires independently with probability current_rate / 2:
// subtree replacement (depth <= mutation_max_height) and a same-arity
// point-mutation sweep over every node of both trees.
Chromosome mutate(const Chromosome& chrom, const GpParams& params,
                  double current_rate, Rng& rng, ImageDims dims);

// Generates 2x population_size chromosomes (ramped half-and-half over
// depths 2..init_max_height), evaluates them on the generation-0 sample
// set, and keeps the best population_size.
RunState initialize(const GpParams& params, const FitnessEnv& env, std::uint64_t seed);

// Elites carry over unchanged (previous fitness kept); the rest of the next
// population comes from select -> crossover -> mutate, evaluated on a fresh
// shared sample set. Updates best_ever, the adaptive mutation rate, and the
// stall counters.
GenerationStats step_generation(RunState& state, const GpParams& params,
                                const FitnessEnv& env);

// Applies the adaptive-rate rule given the best-fitness delta of the
// generation that just completed; returns the updated rate.
double adapt_mutation_rate(RunState& state, const GpParams& params, double improvement);

bool should_stop(const RunState& state, const GpParams& params);

struct RunResult {
  Chromosome best;
  double full_mi = 0.0;       // best chromosome re-scored on every pixel
  double full_overlap = 0.0;
  int generations = 0;
  std::string stop_reason;    // "stalled" or "max_generations"
  std::vector<GenerationStats> trace;  // entry 0 = initial population
};

RunResult run_registration(
    const FitnessEnv& env, const GpParams& params, std::uint64_t seed,
    const std::function<void(const GenerationStats&)>& on_generation = {});

}  // namespace gpreg
