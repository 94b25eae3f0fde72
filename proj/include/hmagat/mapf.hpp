#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hmagat::mapf {

// Grid cell; x is the column, y the row. Row 0 is the top of the map.
struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Fixed action enumeration. The numeric values are the decoder output order.
enum class Action : std::uint8_t { kStay = 0, kUp = 1, kRight = 2, kDown = 3, kLeft = 4 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kStay, Action::kUp, Action::kRight, Action::kDown, Action::kLeft};

Cell apply(Cell c, Action a);
Action mirror_horizontal(Action a);
std::string_view action_name(Action a);

// Returns the action moving `from` to the 4-adjacent (or identical) cell `to`.
std::optional<Action> action_between(Cell from, Cell to);

class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height);  // all free
  GridMap(int width, int height, std::vector<std::uint8_t> obstacles);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_cells() const { return width_ * height_; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool is_free(Cell c) const { return in_bounds(c) && obstacles_[index(c)] == 0; }
  bool is_obstacle(Cell c) const { return !is_free(c); }
  void set_obstacle(Cell c, bool blocked);

  int index(Cell c) const { return c.y * width_ + c.x; }
  Cell cell(int index) const { return {index % width_, index / width_}; }

  int free_count() const;
  std::vector<Cell> free_cells() const;
  // Free 4-neighbours of c.
  std::vector<Cell> neighbours(Cell c) const;

  // Connected component id per cell (-1 on obstacles); returns the component count.
  int components(std::vector<int>& labels) const;

  const std::vector<std::uint8_t>& obstacles() const { return obstacles_; }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> obstacles_;
};

using Configuration = std::vector<Cell>;

struct Instance {
  GridMap map;
  std::vector<Cell> starts;
  std::vector<Cell> goals;

  int num_agents() const { return static_cast<int>(starts.size()); }
  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Trajectory {
  std::vector<Configuration> configs;
  std::vector<std::vector<Action>> actions;  // actions[t] moves configs[t] to configs[t + 1]

  int length() const { return static_cast<int>(actions.size()); }
  void push(const Configuration& next);
};

// ---------------------------------------------------------------------------
// Shortest paths

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

class DistanceField {
 public:
  DistanceField() = default;
  DistanceField(int width, std::vector<int> dist) : width_(width), dist_(std::move(dist)) {}

  int operator()(Cell c) const { return dist_[c.y * width_ + c.x]; }
  int at(int index) const { return dist_[index]; }
  const std::vector<int>& data() const { return dist_; }

 private:
  int width_ = 0;
  std::vector<int> dist_;
};

// Exact 4-connected BFS distances to `target`; obstacles and unreachable cells are kUnreachable.
DistanceField bfs_dist(const GridMap& map, Cell target);

// One distance field per agent goal.
std::vector<DistanceField> goal_distances(const Instance& instance);

// ---------------------------------------------------------------------------
// Joint-move validation

enum class ConflictKind { kVertex, kEdge, kObstacle, kNonAdjacent };

struct Conflict {
  ConflictKind kind;
  int agent_a;
  int agent_b;  // -1 for single-agent conflicts
  Cell cell;

  friend bool operator==(const Conflict&, const Conflict&) = default;
};

std::string_view conflict_name(ConflictKind kind);

// Empty result means the joint move is valid. Per-agent conflicts come first, then one vertex
// conflict per pair sharing a target (agent_a < agent_b), then one edge conflict per swapping pair.
std::vector<Conflict> validate_joint_move(const GridMap& map, const Configuration& from,
                                          const Configuration& to);

// ---------------------------------------------------------------------------
// Observations

inline constexpr int kObservationChannels = 4;

struct Observation {
  int radius = 0;
  int agent = 0;
  // Channel-major [channel][row][col], side = 2 * radius + 1.
  Eigen::VectorXd data;

  int side() const { return 2 * radius + 1; }
  double at(int channel, int row, int col) const {
    return data[(channel * side() + row) * side() + col];
  }
};

enum ObservationChannel : int { kObstacleChannel = 0, kAgentChannel = 1, kGoalChannel = 2, kCostToGoChannel = 3 };

Observation build_observation(const Instance& instance, const std::vector<DistanceField>& goal_dist,
                              const Configuration& config, int agent, int radius);
Observation build_observation(const Instance& instance, const Configuration& config, int agent,
                              int radius);

// One row per agent, flattened observations.
Eigen::MatrixXd build_observations(const Instance& instance, const std::vector<DistanceField>& goal_dist,
                                   const Configuration& config, int radius);

// ---------------------------------------------------------------------------
// Costs

struct SocResult {
  std::vector<int> costs;
  long long soc = 0;
  bool success = false;
};

SocResult soc_metrics(const Trajectory& trajectory, const Instance& instance, int episode_limit);

// ---------------------------------------------------------------------------
// Text format: "H W n", H map rows of '.'/'@', then n lines "sx sy gx gy".

std::string serialize_instance(const Instance& instance);
Instance parse_instance(std::string_view text);
Instance load_instance(const std::string& path);
void save_instance(const Instance& instance, const std::string& path);

}  // namespace hmagat::mapf
