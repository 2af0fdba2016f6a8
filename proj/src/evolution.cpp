#include "gpreg/evolution.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace gpreg {

namespace {

// true when a outranks b
bool beats(const Chromosome& a, const Chromosome& b) {
  if (a.fitness.valid != b.fitness.valid) return a.fitness.valid;
  if (a.fitness.mi != b.fitness.mi) return a.fitness.mi > b.fitness.mi;
  return a.id < b.id;
}

// strictly better fitness, ignoring ids (for best_ever updates)
bool improves_on(const Chromosome& a, const Chromosome& b) {
  if (a.fitness.valid != b.fitness.valid) return a.fitness.valid;
  return a.fitness.valid && a.fitness.mi > b.fitness.mi;
}

void evaluate_range(std::vector<Chromosome>& pop, std::size_t from, std::size_t to,
                    std::span<const PixelPos> samples, const FitnessEnv& env) {
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      pop[i].fitness = evaluate_fitness(pop[i].x_tree, pop[i].y_tree, *env.sensed,
                                        *env.reference, samples, env.plan, env.bin_width);
      pop[i].evaluated = true;
    }
  };
  const int threads = std::max(1, env.threads);
  if (threads == 1 || to - from < 2) {
    work(from, to);
    return;
  }
  std::vector<std::thread> workers;
  const std::size_t n = to - from;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = from + static_cast<std::size_t>(t) * chunk;
    if (lo >= to) break;
    workers.emplace_back(work, lo, std::min(lo + chunk, to));
  }
  for (std::thread& w : workers) w.join();
}

// One-point swap of a tree couple under the depth cap. After five failed
// attempts each over-cap side reverts to its parent tree.
std::pair<Expr, Expr> swap_subtrees(const Expr& ta, const Expr& tb, Rng& rng) {
  const int na = node_count(ta);
  const int nb = node_count(tb);
  Expr ca, cb;
  for (int attempt = 0; attempt < 5; ++attempt) {
    const int ia = static_cast<int>(rand_index(rng, na));
    const int ib = static_cast<int>(rand_index(rng, nb));
    ca = replace_at(ta, ia, node_at(tb, ib));
    cb = replace_at(tb, ib, node_at(ta, ia));
    if (depth(ca) <= kMaxTreeDepth && depth(cb) <= kMaxTreeDepth) {
      return {std::move(ca), std::move(cb)};
    }
  }
  if (depth(ca) > kMaxTreeDepth) ca = ta;
  if (depth(cb) > kMaxTreeDepth) cb = tb;
  return {std::move(ca), std::move(cb)};
}

constexpr std::array<Op, 5> kArity2 = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};
constexpr std::array<Op, 4> kArity1 = {Op::Cos, Op::Sin, Op::RotX, Op::RotY};
constexpr std::array<Op, 2> kArity3 = {Op::Rbf, Op::Irbf};
constexpr std::array<Op, 4> kArity0 = {Op::Const, Op::VarX, Op::VarY, Op::E};

void point_mutate(Expr& e, Rng& rng, ImageDims dims) {
  if (rand_chance(rng, kNodeMutationProb)) {
    Op replacement = e.op;
    switch (arity(e.op)) {
      case 0: replacement = kArity0[rand_index(rng, kArity0.size())]; break;
      case 1: replacement = kArity1[rand_index(rng, kArity1.size())]; break;
      case 2: replacement = kArity2[rand_index(rng, kArity2.size())]; break;
      case 3: replacement = kArity3[rand_index(rng, kArity3.size())]; break;
    }
    e.op = replacement;
    if (e.op == Op::Const) {
      const double bound = static_cast<double>(std::max(dims.width, dims.height));
      e.value = rand_real(rng, -bound, bound);
    }
  }
  for (Expr& child : e.children) point_mutate(child, rng, dims);
}

GenerationStats stats_of(const RunState& st) {
  GenerationStats s;
  s.generation = st.generation;
  s.best_mi = st.best_ever.fitness.mi;
  double sum = 0.0;
  int valid = 0;
  for (const Chromosome& c : st.population) {
    if (c.fitness.valid) {
      sum += c.fitness.mi;
      ++valid;
    }
  }
  s.mean_mi = valid > 0 ? sum / valid : 0.0;
  s.mutation_rate = st.current_mutation_rate;
  s.stall_counter = st.stall_counter;
  return s;
}

}  // namespace

double selection_probability(int pos, int population_size) {
  if (pos < 1 || pos > population_size) {
    throw std::out_of_range("selection_probability: pos " + std::to_string(pos) +
                            " outside 1.." + std::to_string(population_size));
  }
  const double total = static_cast<double>(population_size) * (population_size + 1) / 2.0;
  return static_cast<double>(population_size - pos + 1) / total;
}

void rank_population(std::vector<Chromosome>& population) {
  std::sort(population.begin(), population.end(), beats);
  for (std::size_t i = 0; i < population.size(); ++i) {
    population[i].rank = static_cast<int>(i) + 1;
  }
}

std::pair<int, int> select_pair(const std::vector<Chromosome>& ranked, Rng& rng) {
  const std::uint64_t m = ranked.size();
  assert(m > 0);
  const std::uint64_t total = m * (m + 1) / 2;
  auto draw = [&]() -> int {
    // weight of position i (rank i+1) is m - i; invert the integer CDF
    std::uint64_t r = rand_index(rng, total);
    std::uint64_t acc = 0;
    for (std::uint64_t i = 0; i < m; ++i) {
      acc += m - i;
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(m) - 1;  // unreachable
  };
  const int first = draw();
  const int second = draw();
  return {first, second};
}

std::pair<Chromosome, Chromosome> crossover(const Chromosome& a, const Chromosome& b,
                                            const GpParams& params, Rng& rng) {
  Chromosome ca, cb;
  ca.x_tree = a.x_tree;
  ca.y_tree = a.y_tree;
  cb.x_tree = b.x_tree;
  cb.y_tree = b.y_tree;
  if (!rand_chance(rng, params.crossover_prob)) return {std::move(ca), std::move(cb)};

  if (rand_chance(rng, params.cross_axis_prob)) {
    auto [ax, by] = swap_subtrees(a.x_tree, b.y_tree, rng);
    ca.x_tree = std::move(ax);
    cb.y_tree = std::move(by);
    auto [ay, bx] = swap_subtrees(a.y_tree, b.x_tree, rng);
    ca.y_tree = std::move(ay);
    cb.x_tree = std::move(bx);
  } else {
    auto [ax, bx] = swap_subtrees(a.x_tree, b.x_tree, rng);
    ca.x_tree = std::move(ax);
    cb.x_tree = std::move(bx);
    auto [ay, by] = swap_subtrees(a.y_tree, b.y_tree, rng);
    ca.y_tree = std::move(ay);
    cb.y_tree = std::move(by);
  }
  return {std::move(ca), std::move(cb)};
}

Chromosome mutate(const Chromosome& chrom, const GpParams& params,
                  double current_rate, Rng& rng, ImageDims dims) {
  Chromosome out;
  out.x_tree = chrom.x_tree;
  out.y_tree = chrom.y_tree;

  if (rand_chance(rng, current_rate / 2.0)) {  // variant 1: subtree replacement
    Expr& target = rand_chance(rng, 0.5) ? out.x_tree : out.y_tree;
    for (int attempt = 0; attempt < 5; ++attempt) {
      const int idx = static_cast<int>(rand_index(rng, node_count(target)));
      Expr sub = random_tree(rng, params.mutation_max_height, dims, GenMethod::Grow);
      Expr candidate = replace_at(target, idx, std::move(sub));
      if (depth(candidate) <= kMaxTreeDepth) {
        target = std::move(candidate);
        break;
      }
    }
  }

  if (rand_chance(rng, current_rate / 2.0)) {  // variant 2: point mutation
    point_mutate(out.x_tree, rng, dims);
    point_mutate(out.y_tree, rng, dims);
  }
  return out;
}

RunState initialize(const GpParams& params, const FitnessEnv& env, std::uint64_t seed) {
  RunState st;
  st.seed = seed;
  st.rng = make_stream(seed, kMainStream);
  st.current_mutation_rate = params.mutation_rate;

  const ImageDims dims{env.sensed->width, env.sensed->height};
  const int total = 2 * params.population_size;
  const int hi = std::max(1, params.init_max_height);
  const int lo = std::min(2, hi);
  const int tiers = hi - lo + 1;

  std::vector<Chromosome> pool;
  pool.reserve(total);
  for (int t = 0; t < tiers; ++t) {
    const int n = total / tiers + (t < total % tiers ? 1 : 0);
    const int tier_depth = lo + t;
    for (int i = 0; i < n; ++i) {
      const GenMethod method = i < (n + 1) / 2 ? GenMethod::Grow : GenMethod::Full;
      Chromosome c;
      c.x_tree = random_tree(st.rng, tier_depth, dims, method);
      c.y_tree = random_tree(st.rng, tier_depth, dims, method);
      c.id = st.next_id++;
      pool.push_back(std::move(c));
    }
  }

  Rng sample_rng = make_stream(seed, kSampleStream, 0);
  const std::vector<PixelPos> samples =
      sample_pixels(sample_rng, dims.width, dims.height, env.plan);
  evaluate_range(pool, 0, pool.size(), samples, env);
  rank_population(pool);
  pool.resize(std::min<std::size_t>(pool.size(), params.population_size));
  st.population = std::move(pool);
  st.best_ever = st.population.front();
  return st;
}

GenerationStats step_generation(RunState& state, const GpParams& params,
                                const FitnessEnv& env) {
  const ImageDims dims{env.sensed->width, env.sensed->height};
  const int next_gen = state.generation + 1;
  const int elites = std::min(params.elite_count, params.population_size);

  std::vector<Chromosome> next;
  next.reserve(params.population_size);
  for (int i = 0; i < elites; ++i) next.push_back(state.population[i]);

  while (static_cast<int>(next.size()) < params.population_size) {
    const auto [ia, ib] = select_pair(state.population, state.rng);
    auto [child_a, child_b] =
        crossover(state.population[ia], state.population[ib], params, state.rng);
    Chromosome a = mutate(child_a, params, state.current_mutation_rate, state.rng, dims);
    a.id = state.next_id++;
    next.push_back(std::move(a));
    if (static_cast<int>(next.size()) < params.population_size) {
      Chromosome b = mutate(child_b, params, state.current_mutation_rate, state.rng, dims);
      b.id = state.next_id++;
      next.push_back(std::move(b));
    }
    // when population_size - elite_count is odd the final second child is dropped
  }

  Rng sample_rng = make_stream(state.seed, kSampleStream, next_gen);
  const std::vector<PixelPos> samples =
      sample_pixels(sample_rng, dims.width, dims.height, env.plan);
  evaluate_range(next, elites, next.size(), samples, env);
  rank_population(next);
  state.population = std::move(next);
  state.generation = next_gen;

  double improvement = 0.0;
  if (improves_on(state.population.front(), state.best_ever)) {
    improvement = state.population.front().fitness.mi - state.best_ever.fitness.mi;
    state.best_ever = state.population.front();
  }
  if (improvement >= kImprovementEpsilon) {
    state.no_improvement_count = 0;
  } else {
    ++state.no_improvement_count;
  }
  adapt_mutation_rate(state, params, improvement);
  return stats_of(state);
}

double adapt_mutation_rate(RunState& state, const GpParams& params, double improvement) {
  if (improvement >= kImprovementEpsilon) {
    state.current_mutation_rate = params.mutation_rate;
    state.stall_counter = 0;
  } else {
    ++state.stall_counter;
    if (state.stall_counter >= params.stall_window) {
      state.current_mutation_rate =
          std::min(state.current_mutation_rate + params.stall_increment, kMutationRateCap);
      state.stall_counter = 0;
    }
  }
  return state.current_mutation_rate;
}

bool should_stop(const RunState& state, const GpParams& params) {
  return state.no_improvement_count >= params.stop_patience ||
         state.generation >= params.max_generations;
}

RunResult run_registration(
    const FitnessEnv& env, const GpParams& params, std::uint64_t seed,
    const std::function<void(const GenerationStats&)>& on_generation) {
  RunState state = initialize(params, env, seed);
  RunResult out;
  out.trace.push_back(stats_of(state));
  if (on_generation) on_generation(out.trace.back());

  while (!should_stop(state, params)) {
    const GenerationStats s = step_generation(state, params, env);
    out.trace.push_back(s);
    if (on_generation) on_generation(s);
  }

  out.best = state.best_ever;
  out.generations = state.generation;
  out.stop_reason =
      state.no_improvement_count >= params.stop_patience ? "stalled" : "max_generations";

  // Re-score the winner on the full pixel set for comparability.
  SamplePlan full = env.plan;
  full.fraction = 1.0;
  full.floor_count = 1;
  Rng unused = make_stream(seed, kSampleStream, 0);
  const std::vector<PixelPos> all =
      sample_pixels(unused, env.sensed->width, env.sensed->height, full);
  const FitnessResult fr = evaluate_fitness(out.best.x_tree, out.best.y_tree, *env.sensed,
                                            *env.reference, all, full, env.bin_width);
  out.full_mi = fr.mi;
  out.full_overlap = fr.overlap_fraction;
  return out;
}

}  // namespace gpreg
