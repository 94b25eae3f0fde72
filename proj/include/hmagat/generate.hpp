#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "hmagat/mapf.hpp"

namespace hmagat::evalkit {

enum class MapKind { kRandom, kMaze, kRoom };

std::string_view map_kind_name(MapKind kind);
MapKind parse_map_kind(std::string_view name);

struct GenerateOptions {
  MapKind kind = MapKind::kRandom;
  int min_size = 8;  // width and height are drawn independently from [min_size, max_size]
  int max_size = 10;
  int agents = 4;
  // Target obstacle density drawn uniformly per map from [density_min, density_max].
  double density_min = 0.2;
  double density_max = 0.2;
  int count = 1;
  std::uint64_t seed = 0;
  int max_retries = 100;  // map redraws per instance before giving up

  void validate() const;
};

// Obstacle layout of the requested kind. Only the largest free component is kept, so every pair
// of free cells is connected.
mapf::GridMap generate_map(MapKind kind, int width, int height, double density, std::mt19937_64& rng);

// Instances with distinct starts and distinct goals on generated maps. Deterministic per seed.
// Throws std::runtime_error when placement keeps failing after max_retries map redraws.
std::vector<mapf::Instance> generate_instances(const GenerateOptions& options);

// Training mix: round(random_share * count) instances on random maps, the rest on mazes, in an
// order shuffled by the seed. `options.kind` is ignored.
std::vector<mapf::Instance> generate_training_mix(const GenerateOptions& options, double random_share = 0.2);

// Agents placed uniformly at random on the free cells of `map`.
mapf::Instance place_agents(const mapf::GridMap& map, int agents, std::mt19937_64& rng);

}  // namespace hmagat::evalkit
