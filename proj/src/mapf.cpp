#include "hmagat/mapf.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hmagat::mapf {

Cell apply(Cell c, Action a) {
  switch (a) {
    case Action::kStay:
      return c;
    case Action::kUp:
      return {c.x, c.y - 1};
    case Action::kRight:
      return {c.x + 1, c.y};
    case Action::kDown:
      return {c.x, c.y + 1};
    case Action::kLeft:
      return {c.x - 1, c.y};
  }
  return c;
}

Action mirror_horizontal(Action a) {
  if (a == Action::kLeft) return Action::kRight;
  if (a == Action::kRight) return Action::kLeft;
  return a;
}

std::string_view action_name(Action a) {
  static constexpr std::array<std::string_view, kNumActions> kNames = {"stay", "up", "right", "down",
                                                                       "left"};
  return kNames[static_cast<int>(a)];
}

std::optional<Action> action_between(Cell from, Cell to) {
  for (Action a : kAllActions) {
    if (apply(from, a) == to) return a;
  }
  return std::nullopt;
}

GridMap::GridMap(int width, int height)
    : GridMap(width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                                       static_cast<std::size_t>(std::max(height, 0)))) {}

GridMap::GridMap(int width, int height, std::vector<std::uint8_t> obstacles)
    : width_(width), height_(height), obstacles_(std::move(obstacles)) {
  if (width < 1 || height < 1) throw std::invalid_argument("GridMap: width and height must be >= 1");
  if (obstacles_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("GridMap: obstacle grid size mismatch");
  }
  for (auto& v : obstacles_) v = v ? 1 : 0;
}

void GridMap::set_obstacle(Cell c, bool blocked) {
  if (!in_bounds(c)) throw std::out_of_range("GridMap::set_obstacle: cell out of bounds");
  obstacles_[index(c)] = blocked ? 1 : 0;
}

int GridMap::free_count() const {
  return static_cast<int>(std::count(obstacles_.begin(), obstacles_.end(), 0));
}

std::vector<Cell> GridMap::free_cells() const {
  std::vector<Cell> cells;
  for (int i = 0; i < num_cells(); ++i) {
    if (obstacles_[i] == 0) cells.push_back(cell(i));
  }
  return cells;
}

std::vector<Cell> GridMap::neighbours(Cell c) const {
  std::vector<Cell> out;
  out.reserve(4);
  for (Action a : {Action::kUp, Action::kRight, Action::kDown, Action::kLeft}) {
    Cell n = apply(c, a);
    if (is_free(n)) out.push_back(n);
  }
  return out;
}

int GridMap::components(std::vector<int>& labels) const {
  labels.assign(num_cells(), -1);
  int count = 0;
  std::deque<int> queue;
  for (int s = 0; s < num_cells(); ++s) {
    if (obstacles_[s] != 0 || labels[s] != -1) continue;
    labels[s] = count;
    queue.push_back(s);
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (Cell n : neighbours(cell(u))) {
        int v = index(n);
        if (labels[v] == -1) {
          labels[v] = count;
          queue.push_back(v);
        }
      }
    }
    ++count;
  }
  return count;
}

void Instance::validate() const {
  if (starts.empty()) throw std::invalid_argument("Instance: at least one agent required");
  if (starts.size() != goals.size()) throw std::invalid_argument("Instance: starts/goals size mismatch");
  auto check_distinct = [this](const std::vector<Cell>& cells, const char* what) {
    std::vector<int> idx;
    idx.reserve(cells.size());
    for (const Cell& c : cells) {
      if (!map.is_free(c)) {
        throw std::invalid_argument(std::string("Instance: ") + what + " on obstacle or out of map");
      }
      idx.push_back(map.index(c));
    }
    std::sort(idx.begin(), idx.end());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
      throw std::invalid_argument(std::string("Instance: duplicate ") + what);
    }
  };
  check_distinct(starts, "start");
  check_distinct(goals, "goal");
}

void Trajectory::push(const Configuration& next) {
  if (configs.empty()) {
    configs.push_back(next);
    return;
  }
  const Configuration& prev = configs.back();
  std::vector<Action> joint(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    auto a = action_between(prev[i], next[i]);
    if (!a) throw std::invalid_argument("Trajectory::push: non-adjacent move");
    joint[i] = *a;
  }
  actions.push_back(std::move(joint));
  configs.push_back(next);
}

DistanceField bfs_dist(const GridMap& map, Cell target) {
  if (!map.is_free(target)) throw std::invalid_argument("bfs_dist: target is not a free cell");
  std::vector<int> dist(map.num_cells(), kUnreachable);
  std::deque<Cell> queue{target};
  dist[map.index(target)] = 0;
  while (!queue.empty()) {
    Cell u = queue.front();
    queue.pop_front();
    const int du = dist[map.index(u)];
    for (Cell n : map.neighbours(u)) {
      int& dn = dist[map.index(n)];
      if (dn == kUnreachable) {
        dn = du + 1;
        queue.push_back(n);
      }
    }
  }
  return DistanceField(map.width(), std::move(dist));
}

std::vector<DistanceField> goal_distances(const Instance& instance) {
  std::vector<DistanceField> out;
  out.reserve(instance.goals.size());
  for (const Cell& g : instance.goals) out.push_back(bfs_dist(instance.map, g));
  return out;
}

std::string_view conflict_name(ConflictKind kind) {
  switch (kind) {
    case ConflictKind::kVertex:
      return "vertex";
    case ConflictKind::kEdge:
      return "edge";
    case ConflictKind::kObstacle:
      return "obstacle";
    case ConflictKind::kNonAdjacent:
      return "non-adjacent";
  }
  return "unknown";
}

std::vector<Conflict> validate_joint_move(const GridMap& map, const Configuration& from,
                                          const Configuration& to) {
  if (from.size() != to.size()) throw std::invalid_argument("validate_joint_move: length mismatch");
  const int n = static_cast<int>(from.size());
  std::vector<Conflict> conflicts;
  for (int i = 0; i < n; ++i) {
    if (!action_between(from[i], to[i])) {
      conflicts.push_back({ConflictKind::kNonAdjacent, i, -1, to[i]});
    } else if (!map.is_free(to[i])) {
      conflicts.push_back({ConflictKind::kObstacle, i, -1, to[i]});
    }
  }
  // Agents are bucketed by target cell; every pair sharing a target is reported.
  std::vector<std::vector<int>> target_owners(map.num_cells());
  std::vector<int> source_owner(map.num_cells(), -1);
  for (int i = 0; i < n; ++i) {
    if (map.in_bounds(from[i])) source_owner[map.index(from[i])] = i;
  }
  for (int i = 0; i < n; ++i) {
    if (!map.in_bounds(to[i])) continue;
    auto& owners = target_owners[map.index(to[i])];
    for (int j : owners) conflicts.push_back({ConflictKind::kVertex, j, i, to[i]});
    owners.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    if (!map.in_bounds(to[i]) || from[i] == to[i]) continue;
    int j = source_owner[map.index(to[i])];
    if (j > i && to[j] == from[i]) conflicts.push_back({ConflictKind::kEdge, i, j, to[i]});
  }
  return conflicts;
}

namespace {

// Cells of the discrete segment (0,0) -> (dx,dy), excluding the origin.
std::vector<Cell> bresenham(int dx, int dy) {
  std::vector<Cell> out;
  int x = 0, y = 0;
  const int adx = std::abs(dx), ady = -std::abs(dy);
  const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
  int err = adx + ady;
  while (x != dx || y != dy) {
    const int e2 = 2 * err;
    if (e2 >= ady) {
      err += ady;
      x += sx;
    }
    if (e2 <= adx) {
      err += adx;
      y += sy;
    }
    out.push_back({x, y});
  }
  return out;
}

}  // namespace

Observation build_observation(const Instance& instance, const std::vector<DistanceField>& goal_dist,
                              const Configuration& config, int agent, int radius) {
  const int n = static_cast<int>(config.size());
  if (agent < 0 || agent >= n) throw std::invalid_argument("build_observation: agent out of range");
  if (radius < 1) throw std::invalid_argument("build_observation: radius must be >= 1");
  const GridMap& map = instance.map;
  const int side = 2 * radius + 1;
  const int plane = side * side;
  Observation obs;
  obs.radius = radius;
  obs.agent = agent;
  obs.data = Eigen::VectorXd::Zero(kObservationChannels * plane);

  const Cell centre = config[agent];
  const DistanceField& dist = goal_dist[agent];
  const int centre_dist = dist(centre);
  auto slot = [&](int channel, int dx, int dy) -> double& {
    return obs.data[channel * plane + (dy + radius) * side + (dx + radius)];
  };

  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const Cell v{centre.x + dx, centre.y + dy};
      if (!map.is_free(v)) {
        slot(kObstacleChannel, dx, dy) = 1.0;
        slot(kCostToGoChannel, dx, dy) = 1.0;
        continue;
      }
      const int dv = dist(v);
      double ctg;
      if (dv == kUnreachable) {
        ctg = 1.0;
      } else if (centre_dist == kUnreachable) {
        ctg = -1.0;
      } else {
        ctg = static_cast<double>(dv - centre_dist) / (2.0 * radius);
      }
      slot(kCostToGoChannel, dx, dy) = std::clamp(ctg, -1.0, 1.0);
    }
  }

  for (int j = 0; j < n; ++j) {
    if (j == agent) continue;
    const int dx = config[j].x - centre.x, dy = config[j].y - centre.y;
    if (std::abs(dx) <= radius && std::abs(dy) <= radius) slot(kAgentChannel, dx, dy) = 1.0;
  }

  const Cell goal = instance.goals[agent];
  const int gdx = goal.x - centre.x, gdy = goal.y - centre.y;
  if (std::abs(gdx) <= radius && std::abs(gdy) <= radius) {
    slot(kGoalChannel, gdx, gdy) = 1.0;
  } else {
    for (const Cell& p : bresenham(gdx, gdy)) {
      if (std::abs(p.x) > radius || std::abs(p.y) > radius) break;
      slot(kGoalChannel, p.x, p.y) = 1.0;
    }
  }
  return obs;
}

Observation build_observation(const Instance& instance, const Configuration& config, int agent,
                              int radius) {
  std::vector<DistanceField> fields(instance.goals.size());
  fields[agent] = bfs_dist(instance.map, instance.goals[agent]);
  return build_observation(instance, fields, config, agent, radius);
}

Eigen::MatrixXd build_observations(const Instance& instance, const std::vector<DistanceField>& goal_dist,
                                   const Configuration& config, int radius) {
  const int n = static_cast<int>(config.size());
  const int side = 2 * radius + 1;
  Eigen::MatrixXd out(n, kObservationChannels * side * side);
  for (int i = 0; i < n; ++i) {
    out.row(i) = build_observation(instance, goal_dist, config, i, radius).data.transpose();
  }
  return out;
}

SocResult soc_metrics(const Trajectory& trajectory, const Instance& instance, int episode_limit) {
  const auto& configs = trajectory.configs;
  const int n = instance.num_agents();
  if (configs.empty() || configs.front() != instance.starts) {
    throw std::invalid_argument("soc_metrics: trajectory must start at the instance starts");
  }
  if (!trajectory.actions.empty() && trajectory.actions.size() + 1 != configs.size()) {
    throw std::invalid_argument("soc_metrics: actions/configs length mismatch");
  }
  for (std::size_t t = 0; t + 1 < configs.size(); ++t) {
    if (configs[t + 1].size() != static_cast<std::size_t>(n) ||
        !validate_joint_move(instance.map, configs[t], configs[t + 1]).empty()) {
      throw std::invalid_argument("soc_metrics: invalid transition at step " + std::to_string(t));
    }
    if (!trajectory.actions.empty()) {
      for (int i = 0; i < n; ++i) {
        if (apply(configs[t][i], trajectory.actions[t][i]) != configs[t + 1][i]) {
          throw std::invalid_argument("soc_metrics: action label mismatch at step " + std::to_string(t));
        }
      }
    }
  }

  SocResult result;
  result.costs.assign(n, 0);
  result.success = true;
  const Configuration& last = configs.back();
  for (int i = 0; i < n; ++i) {
    if (last[i] != instance.goals[i]) {
      result.costs[i] = episode_limit;
      result.success = false;
      continue;
    }
    int t = static_cast<int>(configs.size()) - 1;
    while (t > 0 && configs[t - 1][i] == instance.goals[i]) --t;
    result.costs[i] = t;
  }
  for (int c : result.costs) result.soc += c;
  return result;
}

std::string serialize_instance(const Instance& instance) {
  std::ostringstream out;
  const GridMap& map = instance.map;
  out << map.height() << ' ' << map.width() << ' ' << instance.num_agents() << '\n';
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out << (map.is_free({x, y}) ? '.' : '@');
    out << '\n';
  }
  for (int i = 0; i < instance.num_agents(); ++i) {
    out << instance.starts[i].x << ' ' << instance.starts[i].y << ' ' << instance.goals[i].x << ' '
        << instance.goals[i].y << '\n';
  }
  return out.str();
}

Instance parse_instance(std::string_view text) {
  std::istringstream in{std::string(text)};
  int height = 0, width = 0, n = 0;
  if (!(in >> height >> width >> n) || height < 1 || width < 1 || n < 1) {
    throw std::invalid_argument("parse_instance: bad header");
  }
  std::vector<std::uint8_t> obstacles;
  obstacles.reserve(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    std::string row;
    if (!(in >> row) || static_cast<int>(row.size()) != width) {
      throw std::invalid_argument("parse_instance: bad map row " + std::to_string(y));
    }
    for (char ch : row) {
      if (ch != '.' && ch != '@') throw std::invalid_argument("parse_instance: bad map character");
      obstacles.push_back(ch == '@' ? 1 : 0);
    }
  }
  Instance instance{GridMap(width, height, std::move(obstacles)), {}, {}};
  for (int i = 0; i < n; ++i) {
    Cell s, g;
    if (!(in >> s.x >> s.y >> g.x >> g.y)) {
      throw std::invalid_argument("parse_instance: bad agent line " + std::to_string(i));
    }
    instance.starts.push_back(s);
    instance.goals.push_back(g);
  }
  instance.validate();
  return instance;
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_instance(buf.str());
}

void save_instance(const Instance& instance, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_instance(instance);
}

}  // namespace hmagat::mapf
