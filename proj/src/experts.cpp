#include "hmagat/experts.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <unordered_map>

namespace hmagat::experts {

namespace {

// Joint search state: 6 bits of free-cell index per agent, settled mask above.
using Key = std::uint64_t;

struct SearchNode {
  Key key;
  long long g;
  int parent;
  bool move;  // false for a settle edge
};

Key encode(const std::vector<int>& cells, unsigned mask) {
  Key k = mask;
  for (int c : cells) k = (k << 6) | static_cast<Key>(c);
  return k;
}

void decode(Key k, int n, std::vector<int>& cells, unsigned& mask) {
  cells.assign(n, 0);
  for (int i = n - 1; i >= 0; --i) {
    cells[i] = static_cast<int>(k & 63U);
    k >>= 6;
  }
  mask = static_cast<unsigned>(k);
}

}  // namespace

SolveResult joint_optimal(const Instance& instance, std::size_t limit) {
  instance.validate();
  const GridMap& map = instance.map;
  const int n = instance.num_agents();
  if (n > 4) throw ResourceLimitError("joint_optimal: at most 4 agents supported");
  const std::vector<Cell> free = map.free_cells();
  if (free.size() > 64) throw ResourceLimitError("joint_optimal: at most 64 free cells supported");

  std::vector<int> free_id(map.num_cells(), -1);
  for (std::size_t k = 0; k < free.size(); ++k) free_id[map.index(free[k])] = static_cast<int>(k);
  std::vector<std::vector<int>> moves(free.size());  // per free cell, destinations indexed by action
  for (std::size_t k = 0; k < free.size(); ++k) {
    for (Action a : mapf::kAllActions) {
      const Cell to = mapf::apply(free[k], a);
      moves[k].push_back(map.is_free(to) ? free_id[map.index(to)] : -1);
    }
  }
  const auto dist = mapf::goal_distances(instance);
  std::vector<int> goal(n);
  for (int i = 0; i < n; ++i) goal[i] = free_id[map.index(instance.goals[i])];

  auto heuristic = [&](const std::vector<int>& cells, unsigned mask) -> long long {
    long long h = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1U << i)) continue;
      const int d = dist[i](free[cells[i]]);
      if (d == mapf::kUnreachable) return -1;
      h += d;
    }
    return h;
  };

  std::vector<int> start(n);
  for (int i = 0; i < n; ++i) start[i] = free_id[map.index(instance.starts[i])];

  std::vector<SearchNode> nodes;
  std::unordered_map<Key, int> index;  // key -> node id holding the best g
  using Entry = std::tuple<long long, long long, int>;  // f, -g, node
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  SolveResult result;
  const long long h0 = heuristic(start, 0);
  if (h0 < 0) return result;
  nodes.push_back({encode(start, 0), 0, -1, false});
  index[nodes[0].key] = 0;
  open.emplace(h0, 0, 0);

  const unsigned full = (1U << n) - 1U;
  std::vector<int> cells, next(n);
  unsigned mask = 0;
  int goal_node = -1;

  auto relax = [&](const std::vector<int>& to_cells, unsigned to_mask, long long g, int parent, bool move) {
    const long long h = heuristic(to_cells, to_mask);
    if (h < 0) return;
    const Key key = encode(to_cells, to_mask);
    auto it = index.find(key);
    if (it != index.end() && nodes[it->second].g <= g) return;
    nodes.push_back({key, g, parent, move});
    const int id = static_cast<int>(nodes.size()) - 1;
    index[key] = id;
    open.emplace(g + h, -g, id);
  };

  while (!open.empty()) {
    const auto [f, neg_g, id] = open.top();
    open.pop();
    (void)f;
    if (index.at(nodes[id].key) != id || -neg_g != nodes[id].g) continue;  // stale entry
    if (++result.expansions > limit) throw ResourceLimitError("joint_optimal: expansion limit exceeded");
    decode(nodes[id].key, n, cells, mask);
    if (mask == full) {
      goal_node = id;
      break;
    }
    const long long g = nodes[id].g;

    for (int i = 0; i < n; ++i) {
      if (!(mask & (1U << i)) && cells[i] == goal[i]) relax(cells, mask | (1U << i), g, id, false);
    }

    std::vector<int> movers;
    for (int i = 0; i < n; ++i) {
      if (!(mask & (1U << i))) movers.push_back(i);
    }
    const long long step_cost = static_cast<long long>(movers.size());
    std::vector<int> choice(movers.size(), 0);
    while (true) {
      bool ok = true;
      next = cells;
      for (std::size_t k = 0; k < movers.size() && ok; ++k) {
        const int to = moves[cells[movers[k]]][choice[k]];
        if (to < 0) ok = false;
        next[movers[k]] = to;
      }
      for (int a = 0; a < n && ok; ++a) {
        for (int b = a + 1; b < n && ok; ++b) {
          if (next[a] == next[b] || (next[a] == cells[b] && next[b] == cells[a])) ok = false;
        }
      }
      if (ok) relax(next, mask, g + step_cost, id, true);
      std::size_t k = 0;
      while (k < choice.size() && ++choice[k] == mapf::kNumActions) choice[k++] = 0;
      if (k == choice.size()) break;
    }
  }
  if (goal_node < 0) return result;

  std::vector<Configuration> configs;
  for (int id = goal_node; id >= 0; id = nodes[id].parent) {
    if (nodes[id].parent >= 0 && !nodes[id].move) continue;
    decode(nodes[id].key, n, cells, mask);
    Configuration c(n);
    for (int i = 0; i < n; ++i) c[i] = free[cells[i]];
    configs.push_back(std::move(c));
  }
  std::reverse(configs.begin(), configs.end());
  for (const auto& c : configs) result.trajectory.push(c);
  result.success = true;
  result.soc = nodes[goal_node].g;
  return result;
}

// ---------------------------------------------------------------------------

PibtState PibtState::initial(const Instance& instance) {
  PibtState s;
  s.goals = instance.goals;
  s.config = instance.starts;
  const int n = instance.num_agents();
  s.priority.resize(n);
  for (int i = 0; i < n; ++i) s.priority[i] = static_cast<double>(n - i) / (n + 1);
  return s;
}

namespace {

class PibtPlanner {
 public:
  PibtPlanner(const GridMap& map, const Configuration& from, const std::vector<Preference>& prefs)
      : map_(map), from_(from), prefs_(prefs), to_(from.size(), -1),
        occupied_now_(map.num_cells(), -1), occupied_next_(map.num_cells(), -1) {
    for (std::size_t i = 0; i < from.size(); ++i) occupied_now_[map.index(from[i])] = static_cast<int>(i);
  }

  void plan(int i) {
    if (to_[i] < 0) search(i);
  }

  Configuration result() const {
    Configuration out(from_.size());
    for (std::size_t i = 0; i < from_.size(); ++i) out[i] = map_.cell(to_[i]);
    return out;
  }

 private:
  bool search(int i) {
    const int here = map_.index(from_[i]);
    for (Action a : prefs_[i]) {
      const Cell c = mapf::apply(from_[i], a);
      if (!map_.is_free(c)) continue;
      const int v = map_.index(c);
      if (occupied_next_[v] >= 0) continue;
      const int k = occupied_now_[v];
      if (k >= 0 && to_[k] == here) continue;  // swap
      occupied_next_[v] = i;
      to_[i] = v;
      if (k < 0 || v == here) return true;
      if (to_[k] < 0 && !search(k)) continue;
      return true;
    }
    occupied_next_[here] = i;
    to_[i] = here;
    return false;
  }

  const GridMap& map_;
  const Configuration& from_;
  const std::vector<Preference>& prefs_;
  std::vector<int> to_;
  std::vector<int> occupied_now_;
  std::vector<int> occupied_next_;
};

}  // namespace

Configuration pibt_step(const GridMap& map, PibtState& state, const std::vector<Preference>& preferences) {
  const int n = static_cast<int>(state.config.size());
  if (static_cast<int>(preferences.size()) != n) throw std::invalid_argument("pibt_step: one preference per agent");
  for (int i = 0; i < n; ++i) {
    const double frac = state.priority[i] - std::floor(state.priority[i]);
    state.priority[i] = state.config[i] == state.goals[i] ? frac : state.priority[i] + 1.0;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return state.priority[a] > state.priority[b]; });
  PibtPlanner planner(map, state.config, preferences);
  for (int i : order) planner.plan(i);
  state.config = planner.result();
  return state.config;
}

Preference distance_preference(const GridMap& map, const mapf::DistanceField& goal_dist, Cell at,
                               std::mt19937_64* rng) {
  std::array<std::pair<long long, double>, mapf::kNumActions> key;
  for (int a = 0; a < mapf::kNumActions; ++a) {
    const Cell c = mapf::apply(at, static_cast<Action>(a));
    const long long d = map.is_free(c) ? goal_dist(c) : std::numeric_limits<long long>::max();
    const double tie = rng ? std::uniform_real_distribution<double>(0.0, 1.0)(*rng) : static_cast<double>(a);
    key[a] = {d, tie};
  }
  Preference p = mapf::kAllActions;
  std::stable_sort(p.begin(), p.end(),
                   [&](Action x, Action y) { return key[static_cast<int>(x)] < key[static_cast<int>(y)]; });
  return p;
}

SolveResult pibt_expert(const Instance& instance, int step_limit, std::uint64_t seed, TieBreak ties) {
  PibtController controller(ties);
  RolloutResult run = rollout(controller, instance, step_limit, seed);
  SolveResult result;
  result.trajectory = std::move(run.trajectory);
  result.success = run.success;
  result.soc = run.soc;
  return result;
}

Preference sample_ranking(const Eigen::RowVectorXd& logits, double tau, std::mt19937_64& rng) {
  if (logits.size() != mapf::kNumActions) throw std::invalid_argument("sample_ranking: need one logit per action");
  if (!(tau > 0.0)) throw std::invalid_argument("sample_ranking: temperature must be positive");
  std::array<double, mapf::kNumActions> key;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int a = 0; a < mapf::kNumActions; ++a) {
    double u = uniform(rng);
    while (u <= 0.0) u = uniform(rng);
    key[a] = logits[a] / tau - std::log(-std::log(u));
  }
  Preference p = mapf::kAllActions;
  std::stable_sort(p.begin(), p.end(),
                   [&](Action x, Action y) { return key[static_cast<int>(x)] > key[static_cast<int>(y)]; });
  return p;
}

std::vector<Action> collision_shield(const GridMap& map, PibtState& state, const Eigen::MatrixXd& logits,
                                     const std::vector<double>& tau, std::mt19937_64& rng) {
  const int n = static_cast<int>(state.config.size());
  if (logits.rows() != n || static_cast<int>(tau.size()) != n) {
    throw std::invalid_argument("collision_shield: one logit row and temperature per agent");
  }
  std::vector<Preference> prefs(n);
  for (int i = 0; i < n; ++i) prefs[i] = sample_ranking(logits.row(i), tau[i], rng);
  const Configuration from = state.config;
  const Configuration& to = pibt_step(map, state, prefs);
  std::vector<Action> actions(n);
  for (int i = 0; i < n; ++i) actions[i] = *mapf::action_between(from[i], to[i]);
  return actions;
}

Expert make_pibt_expert(std::uint64_t seed, TieBreak ties) {
  return [seed, ties](const Instance& instance, int step_limit) {
    return pibt_expert(instance, step_limit, seed, ties);
  };
}

RolloutResult rollout(Controller& controller, const Instance& instance, int step_limit, std::uint64_t seed,
                      double time_limit) {
  instance.validate();
  const auto begin = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count(); };
  controller.reset(instance, seed);
  RolloutResult result;
  Configuration config = instance.starts;
  result.trajectory.push(config);
  for (int t = 0; t < step_limit && config != instance.goals; ++t) {
    if (elapsed() > time_limit) {
      result.timed_out = true;
      break;
    }
    const std::vector<Action> joint = controller.act(config, t);
    if (joint.size() != config.size()) throw std::logic_error("rollout: controller returned wrong action count");
    Configuration next(config.size());
    for (std::size_t i = 0; i < config.size(); ++i) next[i] = mapf::apply(config[i], joint[i]);
    if (!mapf::validate_joint_move(instance.map, config, next).empty()) {
      throw std::logic_error("rollout: controller produced a conflicting joint move");
    }
    config = std::move(next);
    result.trajectory.push(config);
  }
  const auto soc = mapf::soc_metrics(result.trajectory, instance, step_limit);
  result.costs = soc.costs;
  result.soc = soc.soc;
  result.success = soc.success;
  result.seconds = elapsed();
  return result;
}

void PibtController::reset(const Instance& instance, std::uint64_t seed) {
  instance_ = &instance;
  dist_ = mapf::goal_distances(instance);
  state_ = PibtState::initial(instance);
  rng_.seed(seed);
}

std::vector<Action> PibtController::act(const Configuration& config, int) {
  const int n = static_cast<int>(config.size());
  state_.config = config;
  std::vector<Preference> prefs(n);
  std::mt19937_64* rng = ties_ == TieBreak::kRandom ? &rng_ : nullptr;
  for (int i = 0; i < n; ++i) prefs[i] = distance_preference(instance_->map, dist_[i], config[i], rng);
  const Configuration next = pibt_step(instance_->map, state_, prefs);
  std::vector<Action> actions(n);
  for (int i = 0; i < n; ++i) actions[i] = *mapf::action_between(config[i], next[i]);
  return actions;
}

}  // namespace hmagat::experts
