#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hmagat/mapf.hpp"

namespace hmagat::hypergen {

using mapf::Cell;
using mapf::Configuration;
using mapf::GridMap;

// Region labelling of grid vertices; a vertex may carry several colours.
struct Colouring {
  int width = 0;
  int height = 0;
  int num_colours = 0;
  std::vector<std::vector<int>> colours;  // per cell index, sorted ascending; empty on obstacles

  const std::vector<int>& at(Cell c) const { return colours[c.y * width + c.x]; }
  bool has(Cell c, int colour) const;
  // Number of (vertex, colour) pairs.
  std::size_t pair_count() const;

  friend bool operator==(const Colouring&, const Colouring&) = default;
};

// Per-iteration record of the soft-border pass.
struct SoftBorderTrace {
  std::vector<std::size_t> pair_counts;  // after the rigid discard, then after each iteration
  int iterations = 0;
  int fallback_components = 0;  // free components that received no surviving colour
};

// Rigid assignment (one colour per free vertex, -1 on obstacles) -> soft colouring.
// Keeps the `keep` most populous colours (renumbered by population rank) and grows them into
// the discarded regions, accumulating colours on every vertex of the discarded area.
Colouring soften_borders(const GridMap& map, const std::vector<int>& rigid, int num_rigid, int keep,
                         SoftBorderTrace* trace = nullptr);

// Lloyd's algorithm on the grid graph followed by the discard-half/soft-border pass.
Colouring lloyd_colouring(const GridMap& map, int k_init, int iters, std::uint64_t seed,
                          SoftBorderTrace* trace = nullptr);

// Colour diffusion + k-means followed by the discard-half/soft-border pass.
Colouring kmeans_colouring(const GridMap& map, int k_init, int iters, std::uint64_t seed,
                           SoftBorderTrace* trace = nullptr);

// k_init giving k = k_init / 2 surviving colours at `fraction` of the free vertex count.
int default_initial_colours(const GridMap& map, double fraction = 0.10);

std::string dump_colouring(const Colouring& colouring);
Colouring parse_colouring(std::string_view text);

// ---------------------------------------------------------------------------

struct Hyperedge {
  std::vector<int> tail;  // sorted agent ids
  std::vector<int> head;  // sorted agent ids

  friend bool operator==(const Hyperedge&, const Hyperedge&) = default;
  friend auto operator<=>(const Hyperedge&, const Hyperedge&) = default;
};

struct DirectedHypergraph {
  int num_nodes = 0;
  std::vector<Hyperedge> edges;

  friend bool operator==(const DirectedHypergraph&, const DirectedHypergraph&) = default;
};

enum class Norm { kEuclidean, kChebyshev, kManhattan };

bool within_radius(Cell a, Cell b, double radius, Norm norm);

DirectedHypergraph colouring_to_hypergraph(const Colouring& colouring, const Configuration& config,
                                           double comm_radius, Norm norm = Norm::kEuclidean);

DirectedHypergraph shortest_distance_hypergraph(const GridMap& map, const Configuration& config,
                                                double comm_radius, int epsilon, std::uint64_t seed,
                                                Norm norm = Norm::kEuclidean);

// One row per (edge, tail member) in edge order then tail order: (dx, dy, |dx| + |dy|)
// relative to the centroid of the head positions.
Eigen::MatrixXd hyperedge_features(const DirectedHypergraph& graph, const Configuration& config);

// ---------------------------------------------------------------------------

enum class Strategy { kKMeans, kLloyd, kShortestDistance };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Per-map hypergraph factory. Colourings are computed once at construction.
class HypergraphBuilder {
 public:
  struct Options {
    Strategy strategy = Strategy::kKMeans;
    double comm_radius = 7.0;
    Norm norm = Norm::kEuclidean;
    int k_init = 0;  // 0 selects default_initial_colours
    int colouring_iters = 10;
    int epsilon = 0;
    std::uint64_t seed = 0;
    int regen_interval = 5;  // shortest-distance hypergraphs are rebuilt every this many steps
  };

  HypergraphBuilder(const GridMap& map, Options options);

  DirectedHypergraph build(const Configuration& config, int timestep = 0) const;
  const Options& options() const { return options_; }
  const Colouring* colouring() const { return has_colouring_ ? &colouring_ : nullptr; }

 private:
  GridMap map_;
  Options options_;
  Colouring colouring_;
  bool has_colouring_ = false;
};

}  // namespace hmagat::hypergen
