#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "hmagat/mapf.hpp"
#include "hmagat/model.hpp"

namespace hmagat::evalkit {

// ---------------------------------------------------------------------------
// Attention entropy

struct EntropyResult {
  double mean = 0.0;  // over included nodes
  int nodes = 0;      // included node rows
  int excluded = 0;   // rows with fewer than two neighbours
};

// -sum a log a / log m for one row of m >= 2 neighbour weights.
double normalised_entropy(const std::vector<double>& weights);

// Averages normalised_entropy over rows; rows with fewer than two entries are excluded.
EntropyResult entropy_of_rows(const std::vector<std::vector<double>>& rows);

// Neighbour weights a_ij of every node in one layer of a recorded forward pass. The neighbour set
// of i is every j reachable through the graph structure, whatever its weight.
std::vector<std::vector<double>> attention_rows(const model::AttentionRecord& record, int layer);

// Mean over nodes, steps and instances. layer < 0 pools every layer.
EntropyResult attention_entropy(const std::vector<model::AttentionRecord>& records, int layer = -1);

// ---------------------------------------------------------------------------
// Hand-crafted scenarios

struct ScenarioSpec {
  std::string name;
  mapf::Instance instance;
  std::vector<int> groups;               // group label per agent
  std::vector<std::vector<int>> sweep;   // agent subsets, one per sweep point
  int target = 0;                        // analysed agent

  // Groups partition the agents and every sweep point contains the target.
  void validate() const;
};

// Four groups around agent 0; the sweep grows group 3 from one to five agents (4 to 8 agents).
// Geometric reconstruction, not the original map.
ScenarioSpec scenario_dilution();
// Agent 0 with four neighbours whose pairwise geometry is mirrored for agents 3 and 4, while only
// agent 3 interacts with agent 0 through agent 1. Geometric reconstruction, not the original map.
ScenarioSpec scenario_group_interaction();

// Instance restricted to `agents`, in the given order.
mapf::Instance sub_instance(const mapf::Instance& instance, const std::vector<int>& agents);
// Instance mirrored left to right.
mapf::Instance mirror_instance(const mapf::Instance& instance);

// Sample standard deviation over mean; 0 for a constant positive series.
double coefficient_of_variation(const std::vector<double>& values);

struct CvResult {
  Eigen::MatrixXd first_layer;     // sweep points x groups, summed a_target,j per group
  Eigen::MatrixXd layer_average;   // same, averaged over layers
  std::vector<double> cv_first;    // per group
  std::vector<double> cv_average;  // per group
};

CvResult scenario_cv(const model::ModelParams& params, const ScenarioSpec& scenario, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Shapley values

// Characteristic function: coalition (indices into the player list) -> per-class values.
using CoalitionValue = std::function<Eigen::VectorXd(const std::vector<int>& coalition)>;

// Exact Shapley values by enumerating all 2^k coalitions; players x classes.
// Throws experts::ResourceLimitError for more than `max_players` players.
Eigen::MatrixXd shapley_values(int players, const CoalitionValue& value, int max_players = 6);

struct ShapleyResult {
  std::vector<int> players;
  std::vector<mapf::Action> classes;  // plausible classes in the original orientation
  Eigen::VectorXd mean_abs;           // per player, averaged with the mirrored scenario
  Eigen::VectorXd percent;            // mean_abs as a share of its total, in percent
};

// Log-odds of each action for `agent`, from the model run on the instance as given.
Eigen::VectorXd action_log_odds(const model::ModelParams& params, const mapf::Instance& instance, int agent,
                                std::uint64_t seed = 0);

// Plausible classes: actions that keep the agent on a free in-map cell.
std::vector<mapf::Action> plausible_actions(const mapf::GridMap& map, mapf::Cell at);

// v(S) = target log-odds per plausible class with S and the target present, averaged with the
// horizontally mirrored scenario.
ShapleyResult shapley_exact(const model::ModelParams& params, const mapf::Instance& instance, int target,
                            const std::vector<int>& players, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Failure modes

enum class Outcome { kSuccess, kDeadlock, kLivelock, kTimeout };

std::string_view outcome_name(Outcome outcome);

struct FailureReport {
  std::vector<Outcome> labels;   // per agent
  double partial_success = 0.0;  // fraction of agents at their goal at the end
};

// Agents off-goal at the end are deadlocked if their last 5 actions kept position, livelocked if
// the trajectory tail alternates between two cells for at least 3 round trips, else timed out.
FailureReport classify_failures(const mapf::Trajectory& trajectory, const mapf::Instance& instance);

}  // namespace hmagat::evalkit
