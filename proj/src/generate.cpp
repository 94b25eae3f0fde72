#include "hmagat/generate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hmagat::evalkit {

using mapf::Cell;
using mapf::GridMap;

std::string_view map_kind_name(MapKind kind) {
  switch (kind) {
    case MapKind::kRandom: return "random";
    case MapKind::kMaze: return "maze";
    case MapKind::kRoom: return "room";
  }
  return "?";
}

MapKind parse_map_kind(std::string_view name) {
  if (name == "random") return MapKind::kRandom;
  if (name == "maze") return MapKind::kMaze;
  if (name == "room") return MapKind::kRoom;
  throw std::invalid_argument("unknown map kind: " + std::string(name));
}

void GenerateOptions::validate() const {
  if (min_size < 2 || max_size < min_size) throw std::invalid_argument("GenerateOptions: bad size range");
  if (agents < 1 || count < 0 || max_retries < 1) throw std::invalid_argument("GenerateOptions: bad counts");
  if (density_min < 0.0 || density_max < density_min || density_max >= 1.0) {
    throw std::invalid_argument("GenerateOptions: density range must lie in [0, 1)");
  }
}

namespace {

void keep_largest_component(GridMap& map) {
  std::vector<int> labels;
  const int count = map.components(labels);
  if (count <= 1) return;
  std::vector<int> sizes(count, 0);
  for (int l : labels) {
    if (l >= 0) ++sizes[l];
  }
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (int k = 0; k < map.num_cells(); ++k) {
    if (labels[k] >= 0 && labels[k] != keep) map.set_obstacle(map.cell(k), true);
  }
}

int obstacle_count(const GridMap& map) { return map.num_cells() - map.free_count(); }

// Frees random obstacle cells next to free cells until at most `target` obstacles remain.
// Opening a neighbour of the free region never disconnects it.
void open_until(GridMap& map, int target, std::mt19937_64& rng) {
  while (obstacle_count(map) > target) {
    std::vector<Cell> frontier;
    for (int k = 0; k < map.num_cells(); ++k) {
      const Cell c = map.cell(k);
      if (map.is_free(c)) continue;
      for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
        if (map.is_free(n)) {
          frontier.push_back(c);
          break;
        }
      }
    }
    if (frontier.empty()) return;
    map.set_obstacle(frontier[std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng)], false);
  }
}

GridMap random_map(int width, int height, int target, std::mt19937_64& rng) {
  GridMap map(width, height);
  std::vector<int> cells(map.num_cells());
  for (int k = 0; k < map.num_cells(); ++k) cells[k] = k;
  std::shuffle(cells.begin(), cells.end(), rng);
  for (int k = 0; k < target; ++k) map.set_obstacle(map.cell(cells[k]), true);
  return map;
}

// Depth-first maze on the even lattice, then opened up to the target density.
GridMap maze_map(int width, int height, int target, std::mt19937_64& rng) {
  GridMap map(width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 1));
  std::vector<Cell> stack{{0, 0}};
  map.set_obstacle({0, 0}, false);
  while (!stack.empty()) {
    const Cell c = stack.back();
    std::vector<Cell> next;
    for (Cell d : {Cell{2, 0}, Cell{-2, 0}, Cell{0, 2}, Cell{0, -2}}) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (map.in_bounds(n) && map.is_obstacle(n)) next.push_back(n);
    }
    if (next.empty()) {
      stack.pop_back();
      continue;
    }
    const Cell n = next[std::uniform_int_distribution<std::size_t>(0, next.size() - 1)(rng)];
    map.set_obstacle({(c.x + n.x) / 2, (c.y + n.y) / 2}, false);
    map.set_obstacle(n, false);
    stack.push_back(n);
  }
  open_until(map, target, rng);
  return map;
}

// Rectangular rooms separated by one-cell walls, one door per shared wall segment.
GridMap room_map(int width, int height, int target, std::mt19937_64& rng) {
  GridMap map(width, height);
  const int room = std::max(3, std::min(width, height) / 3);
  std::vector<int> wall_x, wall_y;
  for (int x = room; x < width - 1; x += room + 1) wall_x.push_back(x);
  for (int y = room; y < height - 1; y += room + 1) wall_y.push_back(y);
  for (int x : wall_x) {
    for (int y = 0; y < height; ++y) map.set_obstacle({x, y}, true);
  }
  for (int y : wall_y) {
    for (int x = 0; x < width; ++x) map.set_obstacle({x, y}, true);
  }
  auto spans = [](const std::vector<int>& walls, int extent) {
    std::vector<std::pair<int, int>> out;
    int lo = 0;
    for (int w : walls) {
      out.emplace_back(lo, w - 1);
      lo = w + 1;
    }
    out.emplace_back(lo, extent - 1);
    return out;
  };
  auto pick = [&rng](std::pair<int, int> span) { return std::uniform_int_distribution<int>(span.first, span.second)(rng); };
  for (int x : wall_x) {
    for (auto span : spans(wall_y, height)) map.set_obstacle({x, pick(span)}, false);
  }
  for (int y : wall_y) {
    for (auto span : spans(wall_x, width)) map.set_obstacle({pick(span), y}, false);
  }
  // Interior clutter up to the target; doors and their approaches stay free.
  std::vector<Cell> interior;
  for (int k = 0; k < map.num_cells(); ++k) {
    const Cell c = map.cell(k);
    if (!map.is_free(c)) continue;
    bool near_wall = false;
    for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
      near_wall = near_wall || (map.in_bounds(n) && map.is_obstacle(n));
    }
    if (!near_wall) interior.push_back(c);
  }
  std::shuffle(interior.begin(), interior.end(), rng);
  for (Cell c : interior) {
    if (obstacle_count(map) >= target) break;
    map.set_obstacle(c, true);
  }
  open_until(map, target, rng);
  return map;
}

}  // namespace

GridMap generate_map(MapKind kind, int width, int height, double density, std::mt19937_64& rng) {
  const int target = static_cast<int>(std::lround(density * width * height));
  GridMap map;
  switch (kind) {
    case MapKind::kRandom: map = random_map(width, height, target, rng); break;
    case MapKind::kMaze: map = maze_map(width, height, target, rng); break;
    case MapKind::kRoom: map = room_map(width, height, target, rng); break;
  }
  keep_largest_component(map);
  return map;
}

mapf::Instance place_agents(const GridMap& map, int agents, std::mt19937_64& rng) {
  std::vector<Cell> free = map.free_cells();
  if (static_cast<int>(free.size()) < agents) throw std::runtime_error("place_agents: not enough free cells");
  mapf::Instance inst;
  inst.map = map;
  std::shuffle(free.begin(), free.end(), rng);
  inst.starts.assign(free.begin(), free.begin() + agents);
  std::shuffle(free.begin(), free.end(), rng);
  inst.goals.assign(free.begin(), free.begin() + agents);
  return inst;
}

std::vector<mapf::Instance> generate_instances(const GenerateOptions& options) {
  options.validate();
  std::mt19937_64 rng(options.seed);
  std::vector<mapf::Instance> out;
  for (int k = 0; k < options.count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < options.max_retries && !placed; ++attempt) {
      const int w = std::uniform_int_distribution<int>(options.min_size, options.max_size)(rng);
      const int h = std::uniform_int_distribution<int>(options.min_size, options.max_size)(rng);
      const double density = std::uniform_real_distribution<double>(options.density_min, options.density_max)(rng);
      const GridMap map = generate_map(options.kind, w, h, density, rng);
      if (map.free_count() < options.agents) continue;
      out.push_back(place_agents(map, options.agents, rng));
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("generate_instances: could not place " + std::to_string(options.agents) +
                               " agents after " + std::to_string(options.max_retries) + " maps");
    }
  }
  return out;
}

std::vector<mapf::Instance> generate_training_mix(const GenerateOptions& options, double random_share) {
  options.validate();
  if (random_share < 0.0 || random_share > 1.0) throw std::invalid_argument("generate_training_mix: share in [0, 1]");
  GenerateOptions part = options;
  part.kind = MapKind::kRandom;
  part.count = static_cast<int>(std::lround(random_share * options.count));
  std::vector<mapf::Instance> out = generate_instances(part);
  part.kind = MapKind::kMaze;
  part.count = options.count - part.count;
  part.seed = options.seed + 1;
  for (auto& inst : generate_instances(part)) out.push_back(std::move(inst));
  std::mt19937_64 rng(options.seed + 2);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace hmagat::evalkit
