#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "hmagat/mapf.hpp"

namespace hmagat::experts {

using mapf::Action;
using mapf::Cell;
using mapf::Configuration;
using mapf::GridMap;
using mapf::Instance;

class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveResult {
  mapf::Trajectory trajectory;
  bool success = false;
  long long soc = 0;         // sum of costs; failed agents charged the step limit
  std::size_t expansions = 0;  // search nodes expanded (joint_optimal only)
};

// Exact best-first search over (configuration, settled-agent set). Requires n <= 4 and at most 64
// free cells; `limit` bounds node expansions. Infeasible instances return success = false.
SolveResult joint_optimal(const Instance& instance, std::size_t limit = 2'000'000);

// ---------------------------------------------------------------------------

using Preference = std::array<Action, mapf::kNumActions>;

struct PibtState {
  std::vector<Cell> goals;
  Configuration config;
  std::vector<double> priority;  // integer part grows while off-goal; fractional part is the id tie-break

  static PibtState initial(const Instance& instance);
};

// One synchronous PIBT step. Updates priorities, plans, and moves state.config to the result.
Configuration pibt_step(const GridMap& map, PibtState& state, const std::vector<Preference>& preferences);

// Actions sorted by the goal distance of the resulting cell; cells off the map or blocked go
// last. Ties are broken by `rng` when given, else by action index.
Preference distance_preference(const GridMap& map, const mapf::DistanceField& goal_dist, Cell at,
                               std::mt19937_64* rng = nullptr);

// Order among actions whose resulting cells are equally far from the goal.
enum class TieBreak { kRandom, kActionOrder };

// PIBT with distance-greedy preferences until every agent is at its goal or `step_limit` steps.
SolveResult pibt_expert(const Instance& instance, int step_limit, std::uint64_t seed = 0,
                        TieBreak ties = TieBreak::kRandom);

// Ranking sampled without replacement from softmax(logits / tau) (Gumbel top-k).
Preference sample_ranking(const Eigen::RowVectorXd& logits, double tau, std::mt19937_64& rng);

// Shielded joint action: per-agent sampled rankings fed to pibt_step. Updates state.
std::vector<Action> collision_shield(const GridMap& map, PibtState& state, const Eigen::MatrixXd& logits,
                                     const std::vector<double>& tau, std::mt19937_64& rng);

// Expert interface used by the training and evaluation pipelines.
using Expert = std::function<SolveResult(const Instance&, int step_limit)>;

Expert make_pibt_expert(std::uint64_t seed = 0, TieBreak ties = TieBreak::kRandom);

// ---------------------------------------------------------------------------
// Closed-loop execution

// Source of joint actions during a rollout. Returned moves must be collision-free.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const Instance& instance, std::uint64_t seed) = 0;
  virtual std::vector<Action> act(const Configuration& config, int timestep) = 0;
};

struct RolloutResult {
  mapf::Trajectory trajectory;
  std::vector<int> costs;
  long long soc = 0;
  bool success = false;
  bool timed_out = false;  // wall-clock limit hit before the step limit
  double seconds = 0.0;
};

// Runs until every agent is at its goal, `step_limit` steps, or `time_limit` seconds.
// Throws std::logic_error if the controller emits an invalid joint move.
RolloutResult rollout(Controller& controller, const Instance& instance, int step_limit, std::uint64_t seed,
                      double time_limit = std::numeric_limits<double>::infinity());

// Distance-greedy PIBT; identical moves to pibt_expert under the same seed.
class PibtController : public Controller {
 public:
  explicit PibtController(TieBreak ties = TieBreak::kRandom) : ties_(ties) {}
  void reset(const Instance& instance, std::uint64_t seed) override;
  std::vector<Action> act(const Configuration& config, int timestep) override;

 private:
  const Instance* instance_ = nullptr;
  std::vector<mapf::DistanceField> dist_;
  PibtState state_;
  std::mt19937_64 rng_;
  TieBreak ties_;
};

// Every agent stays forever.
class StayController : public Controller {
 public:
  void reset(const Instance& instance, std::uint64_t) override { n_ = instance.num_agents(); }
  std::vector<Action> act(const Configuration&, int) override { return std::vector<Action>(n_, Action::kStay); }

 private:
  int n_ = 0;
};

}  // namespace hmagat::experts
