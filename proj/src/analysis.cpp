#include "hmagat/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hmagat/experts.hpp"

namespace hmagat::evalkit {

using mapf::Action;
using mapf::Cell;
using mapf::Instance;

double normalised_entropy(const std::vector<double>& weights) {
  if (weights.size() < 2) throw std::invalid_argument("normalised_entropy: needs at least two neighbours");
  double h = 0.0;
  for (double a : weights) {
    if (a > 0.0) h -= a * std::log(a);
  }
  return h / std::log(static_cast<double>(weights.size()));
}

EntropyResult entropy_of_rows(const std::vector<std::vector<double>>& rows) {
  EntropyResult r;
  double total = 0.0;
  for (const auto& row : rows) {
    if (row.size() < 2) {
      ++r.excluded;
      continue;
    }
    total += normalised_entropy(row);
    ++r.nodes;
  }
  r.mean = r.nodes > 0 ? total / r.nodes : 0.0;
  return r;
}

std::vector<std::vector<double>> attention_rows(const model::AttentionRecord& record, int layer) {
  const model::GraphInput& g = record.graph;
  const int n = g.num_nodes();
  std::vector<std::vector<char>> linked(n, std::vector<char>(n, 0));
  if (g.kind == model::LayerKind::kGat) {
    for (std::size_t k = 0; k < g.pairs.target.size(); ++k) linked[g.pairs.target[k]][g.pairs.source[k]] = 1;
  } else {
    std::vector<std::vector<int>> tails(g.hyper.num_edges);
    for (std::size_t t = 0; t < g.hyper.tail_edge.size(); ++t) tails[g.hyper.tail_edge[t]].push_back(g.hyper.tail_node[t]);
    for (std::size_t k = 0; k < g.hyper.head_node.size(); ++k) {
      for (int j : tails[g.hyper.head_edge[k]]) linked[g.hyper.head_node[k]][j] = 1;
    }
  }
  const Eigen::MatrixXd a = model::aggregate_attention(record, layer);
  std::vector<std::vector<double>> rows(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (linked[i][j]) rows[i].push_back(a(i, j));
    }
  }
  return rows;
}

EntropyResult attention_entropy(const std::vector<model::AttentionRecord>& records, int layer) {
  std::vector<std::vector<double>> rows;
  for (const auto& rec : records) {
    const int layers = static_cast<int>(rec.layers.size());
    for (int l = layer < 0 ? 0 : layer; l < (layer < 0 ? layers : layer + 1); ++l) {
      auto r = attention_rows(rec, l);
      rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
  }
  return entropy_of_rows(rows);
}

// ---------------------------------------------------------------------------

void ScenarioSpec::validate() const {
  instance.validate();
  if (static_cast<int>(groups.size()) != instance.num_agents()) {
    throw std::invalid_argument("ScenarioSpec: one group label per agent");
  }
  for (int g : groups) {
    if (g < 0) throw std::invalid_argument("ScenarioSpec: negative group label");
  }
  if (target < 0 || target >= instance.num_agents()) throw std::invalid_argument("ScenarioSpec: bad target");
  for (const auto& point : sweep) {
    if (std::find(point.begin(), point.end(), target) == point.end()) {
      throw std::invalid_argument("ScenarioSpec: sweep point without the target");
    }
    for (int a : point) {
      if (a < 0 || a >= instance.num_agents()) throw std::invalid_argument("ScenarioSpec: bad sweep agent");
    }
  }
}

ScenarioSpec scenario_dilution() {
  ScenarioSpec s;
  s.name = "dilution";
  mapf::GridMap map(11, 11);
  for (int x = 0; x <= 4; ++x) map.set_obstacle({x, 7}, true);
  s.instance.map = map;
  s.instance.starts = {{1, 4}, {5, 0}, {8, 4}, {0, 8}, {1, 10}, {2, 8}, {3, 10}, {4, 9}};
  s.instance.goals = {{9, 4}, {6, 10}, {2, 4}, {4, 10}, {3, 8}, {0, 10}, {1, 8}, {0, 9}};
  s.groups = {0, 1, 2, 3, 3, 3, 3, 3};
  for (int n = 4; n <= 8; ++n) {
    std::vector<int> point(n);
    std::iota(point.begin(), point.end(), 0);
    s.sweep.push_back(point);
  }
  s.validate();
  return s;
}

ScenarioSpec scenario_group_interaction() {
  ScenarioSpec s;
  s.name = "group_interaction";
  s.instance.map = mapf::GridMap(9, 9);
  s.instance.starts = {{4, 5}, {4, 3}, {3, 4}, {5, 3}, {3, 7}};
  s.instance.goals = {{4, 1}, {4, 3}, {8, 4}, {1, 3}, {7, 7}};
  s.groups = {0, 1, 2, 3, 4};
  s.sweep = {{0, 1, 2, 3, 4}};
  s.validate();
  return s;
}

Instance sub_instance(const Instance& instance, const std::vector<int>& agents) {
  Instance out;
  out.map = instance.map;
  for (int a : agents) {
    out.starts.push_back(instance.starts.at(a));
    out.goals.push_back(instance.goals.at(a));
  }
  return out;
}

Instance mirror_instance(const Instance& instance) {
  const mapf::GridMap& m = instance.map;
  mapf::GridMap map(m.width(), m.height());
  auto flip = [&](Cell c) { return Cell{m.width() - 1 - c.x, c.y}; };
  for (int k = 0; k < m.num_cells(); ++k) {
    if (m.is_obstacle(m.cell(k))) map.set_obstacle(flip(m.cell(k)), true);
  }
  Instance out;
  out.map = map;
  for (Cell c : instance.starts) out.starts.push_back(flip(c));
  for (Cell c : instance.goals) out.goals.push_back(flip(c));
  return out;
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (mean == 0.0) return sd == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return sd / std::abs(mean);
}

CvResult scenario_cv(const model::ModelParams& params, const ScenarioSpec& scenario, std::uint64_t seed) {
  scenario.validate();
  const int groups = *std::max_element(scenario.groups.begin(), scenario.groups.end()) + 1;
  const auto points = static_cast<Eigen::Index>(scenario.sweep.size());
  CvResult r;
  r.first_layer = Eigen::MatrixXd::Zero(points, groups);
  r.layer_average = Eigen::MatrixXd::Zero(points, groups);
  for (Eigen::Index s = 0; s < points; ++s) {
    const std::vector<int>& agents = scenario.sweep[s];
    const Instance inst = sub_instance(scenario.instance, agents);
    const int target =
        static_cast<int>(std::find(agents.begin(), agents.end(), scenario.target) - agents.begin());
    model::GraphFactory graphs(params.config(), inst.map, seed);
    const model::PolicyOutput out =
        model::policy_forward(params, inst, mapf::goal_distances(inst), inst.starts, graphs, 0);
    const int layers = static_cast<int>(out.attention.layers.size());
    for (int l = 0; l < layers; ++l) {
      const Eigen::MatrixXd a = model::aggregate_attention(out.attention, l);
      for (std::size_t j = 0; j < agents.size(); ++j) {
        const int g = scenario.groups[agents[j]];
        const double w = a(target, static_cast<Eigen::Index>(j));
        if (l == 0) r.first_layer(s, g) += w;
        r.layer_average(s, g) += w / layers;
      }
    }
  }
  for (int g = 0; g < groups; ++g) {
    const Eigen::VectorXd first = r.first_layer.col(g);
    const Eigen::VectorXd avg = r.layer_average.col(g);
    r.cv_first.push_back(coefficient_of_variation({first.data(), first.data() + first.size()}));
    r.cv_average.push_back(coefficient_of_variation({avg.data(), avg.data() + avg.size()}));
  }
  return r;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd shapley_values(int players, const CoalitionValue& value, int max_players) {
  if (players < 0) throw std::invalid_argument("shapley_values: negative player count");
  if (players > max_players) {
    throw experts::ResourceLimitError("shapley_values: " + std::to_string(players) + " players exceed the limit of " +
                                      std::to_string(max_players));
  }
  const std::size_t subsets = std::size_t{1} << players;
  std::vector<Eigen::VectorXd> v(subsets);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    std::vector<int> coalition;
    for (int i = 0; i < players; ++i) {
      if (mask >> i & 1U) coalition.push_back(i);
    }
    v[mask] = value(coalition);
  }
  const Eigen::Index classes = v[0].size();
  // weight[s] = s! (k - s - 1)! / k!
  std::vector<double> weight(static_cast<std::size_t>(std::max(players, 1)));
  for (int s = 0; s < players; ++s) {
    weight[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(players - s + 0.0) - std::lgamma(players + 1.0));
  }
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(players, classes);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    const int size = std::popcount(mask);
    for (int i = 0; i < players; ++i) {
      if (mask >> i & 1U) continue;
      phi.row(i) += weight[size] * (v[mask | (std::size_t{1} << i)] - v[mask]).transpose();
    }
  }
  return phi;
}

std::vector<Action> plausible_actions(const mapf::GridMap& map, Cell at) {
  std::vector<Action> out;
  for (int a = 0; a < mapf::kNumActions; ++a) {
    if (map.is_free(mapf::apply(at, static_cast<Action>(a)))) out.push_back(static_cast<Action>(a));
  }
  return out;
}

Eigen::VectorXd action_log_odds(const model::ModelParams& params, const Instance& instance, int agent,
                                std::uint64_t seed) {
  model::GraphFactory graphs(params.config(), instance.map, seed);
  const model::PolicyOutput out =
      model::policy_forward(params, instance, mapf::goal_distances(instance), instance.starts, graphs, 0);
  const Eigen::RowVectorXd l = out.logits.row(agent);
  Eigen::VectorXd odds(l.size());
  for (Eigen::Index c = 0; c < l.size(); ++c) {
    double rest_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < l.size(); ++k) {
      if (k != c) rest_max = std::max(rest_max, l[k]);
    }
    double rest = 0.0;
    for (Eigen::Index k = 0; k < l.size(); ++k) {
      if (k != c) rest += std::exp(l[k] - rest_max);
    }
    odds[c] = l[c] - (rest_max + std::log(rest));
  }
  return odds;
}

ShapleyResult shapley_exact(const model::ModelParams& params, const Instance& instance, int target,
                            const std::vector<int>& players, std::uint64_t seed) {
  if (std::find(players.begin(), players.end(), target) != players.end()) {
    throw std::invalid_argument("shapley_exact: the target cannot be a player");
  }
  const int k = static_cast<int>(players.size());
  if (k > 6) throw experts::ResourceLimitError("shapley_exact: at most 6 coalition agents");
  ShapleyResult r;
  r.players = players;
  r.classes = plausible_actions(instance.map, instance.starts.at(target));
  r.mean_abs = Eigen::VectorXd::Zero(k);
  const Instance mirrored = mirror_instance(instance);
  for (int side = 0; side < 2; ++side) {
    const Instance& inst = side == 0 ? instance : mirrored;
    auto value = [&](const std::vector<int>& coalition) {
      std::vector<int> agents{target};
      for (int c : coalition) agents.push_back(players[c]);
      const Eigen::VectorXd odds = action_log_odds(params, sub_instance(inst, agents), 0, seed);
      Eigen::VectorXd v(static_cast<Eigen::Index>(r.classes.size()));
      for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const Action a = side == 0 ? r.classes[c] : mapf::mirror_horizontal(r.classes[c]);
        v[static_cast<Eigen::Index>(c)] = odds[static_cast<int>(a)];
      }
      return v;
    };
    const Eigen::MatrixXd phi = shapley_values(k, value);
    if (phi.cols() > 0) r.mean_abs += 0.5 * phi.cwiseAbs().rowwise().mean();
  }
  const double total = r.mean_abs.sum();
  r.percent = total > 0.0 ? Eigen::VectorXd(100.0 * r.mean_abs / total) : Eigen::VectorXd::Zero(k);
  return r;
}

// ---------------------------------------------------------------------------

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::kSuccess: return "success";
    case Outcome::kDeadlock: return "deadlock";
    case Outcome::kLivelock: return "livelock";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

FailureReport classify_failures(const mapf::Trajectory& trajectory, const Instance& instance) {
  if (trajectory.configs.empty()) throw std::invalid_argument("classify_failures: empty trajectory");
  const int n = instance.num_agents();
  const int last = static_cast<int>(trajectory.configs.size()) - 1;
  FailureReport r;
  int at_goal = 0;
  for (int i = 0; i < n; ++i) {
    auto pos = [&](int t) { return trajectory.configs[t][i]; };
    if (pos(last) == instance.goals[i]) {
      r.labels.push_back(Outcome::kSuccess);
      ++at_goal;
      continue;
    }
    bool stuck = last >= 5;
    for (int t = last - 4; stuck && t <= last; ++t) stuck = pos(t) == pos(t - 1);
    if (stuck) {
      r.labels.push_back(Outcome::kDeadlock);
      continue;
    }
    int transitions = 0;
    if (last >= 1 && pos(last) != pos(last - 1)) {
      const Cell a = pos(last), b = pos(last - 1);
      for (int t = last; t >= 1; --t) {
        const bool even = (last - t) % 2 == 0;
        if (pos(t) != (even ? a : b) || pos(t - 1) != (even ? b : a)) break;
        ++transitions;
      }
    }
    r.labels.push_back(transitions >= 6 ? Outcome::kLivelock : Outcome::kTimeout);
  }
  r.partial_success = n > 0 ? static_cast<double>(at_goal) / n : 1.0;
  return r;
}

}  // namespace hmagat::evalkit
