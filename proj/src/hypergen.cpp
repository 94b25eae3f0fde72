#include "hmagat/hypergen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hmagat::hypergen {

bool Colouring::has(Cell c, int colour) const {
  const auto& cs = at(c);
  return std::binary_search(cs.begin(), cs.end(), colour);
}

std::size_t Colouring::pair_count() const {
  std::size_t total = 0;
  for (const auto& cs : colours) total += cs.size();
  return total;
}

namespace {

// Row-compressed sparse vectors; entries of a row are (colour, value) sorted by colour.
struct SparseRows {
  std::vector<int> start{0};
  std::vector<std::pair<int, double>> data;

  int rows() const { return static_cast<int>(start.size()) - 1; }
  bool empty_row(int r) const { return start[r] == start[r + 1]; }
  void append_empty() { start.push_back(static_cast<int>(data.size())); }
  void append_copy(const SparseRows& other, int r) {
    data.insert(data.end(), other.data.begin() + other.start[r], other.data.begin() + other.start[r + 1]);
    start.push_back(static_cast<int>(data.size()));
  }
};

// Dense scratch buffer that emits only the touched entries.
class SparseAccumulator {
 public:
  explicit SparseAccumulator(int size) : value_(size, 0.0), used_(size, 0) {}

  void add(const SparseRows& rows, int r, double scale) {
    for (int e = rows.start[r]; e < rows.start[r + 1]; ++e) {
      const auto [k, v] = rows.data[e];
      if (!used_[k]) {
        used_[k] = 1;
        touched_.push_back(k);
      }
      value_[k] += scale * v;
    }
  }

  // Appends the accumulated nonzeros as a new row and clears the buffer.
  void flush(SparseRows& out) {
    std::sort(touched_.begin(), touched_.end());
    for (int k : touched_) {
      if (value_[k] != 0.0) out.data.push_back({k, value_[k]});
      value_[k] = 0.0;
      used_[k] = 0;
    }
    touched_.clear();
    out.start.push_back(static_cast<int>(out.data.size()));
  }

 private:
  std::vector<double> value_;
  std::vector<char> used_;
  std::vector<int> touched_;
};

void check_initial_colours(const GridMap& map, int k_init) {
  if (k_init < 2 || k_init % 2 != 0) {
    throw std::invalid_argument("colouring: k_init must be even and >= 2");
  }
  if (k_init > map.free_count()) {
    throw std::invalid_argument("colouring: k_init exceeds the number of free vertices");
  }
}

// Multi-source BFS; label[v] = index of the seed that reaches v first (seed order breaks ties).
std::vector<int> nearest_seed(const GridMap& map, const std::vector<int>& seeds) {
  std::vector<int> label(map.num_cells(), -1);
  std::deque<int> queue;
  for (int s = 0; s < static_cast<int>(seeds.size()); ++s) {
    label[seeds[s]] = s;
    queue.push_back(seeds[s]);
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (Cell n : map.neighbours(map.cell(u))) {
      const int v = map.index(n);
      if (label[v] == -1) {
        label[v] = label[u];
        queue.push_back(v);
      }
    }
  }
  return label;
}

// Seats per connected component: at least one each (largest components first when seats run
// short), remainder proportional to size.
std::vector<int> apportion_seats(const std::vector<int>& sizes, int seats) {
  const int m = static_cast<int>(sizes.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sizes[a] > sizes[b]; });
  std::vector<int> out(m, 0);
  int left = seats;
  for (int c : order) {
    if (left == 0) break;
    out[c] = 1;
    --left;
  }
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < m; ++c) {
    const double share = left * sizes[c] / total;
    int extra = std::min(static_cast<int>(std::floor(share)), sizes[c] - out[c]);
    out[c] += extra;
    assigned += extra;
    remainders.push_back({share - std::floor(share), c});
  }
  left -= assigned;
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  while (left > 0) {
    bool placed = false;
    for (const auto& [frac, c] : remainders) {
      if (left == 0) break;
      if (out[c] < sizes[c]) {
        ++out[c];
        --left;
        placed = true;
      }
    }
    if (!placed) break;
  }
  return out;
}

// Sum of within-region shortest-path distances from `source`.
long long region_distance_sum(const GridMap& map, const std::vector<int>& region, int colour, int source,
                              std::vector<int>& scratch) {
  std::fill(scratch.begin(), scratch.end(), -1);
  std::deque<int> queue{source};
  scratch[source] = 0;
  long long total = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    total += scratch[u];
    for (Cell n : map.neighbours(map.cell(u))) {
      const int v = map.index(n);
      if (region[v] == colour && scratch[v] == -1) {
        scratch[v] = scratch[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return total;
}

}  // namespace

Colouring soften_borders(const GridMap& map, const std::vector<int>& rigid, int num_rigid, int keep,
                         SoftBorderTrace* trace) {
  if (keep < 1 || keep > num_rigid) throw std::invalid_argument("soften_borders: bad colour count");
  std::vector<long long> population(num_rigid, 0);
  for (int v : rigid) {
    if (v >= 0) ++population[v];
  }
  std::vector<int> order(num_rigid);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return population[a] > population[b]; });
  std::vector<int> rename(num_rigid, -1);
  for (int r = 0; r < keep; ++r) rename[order[r]] = r;

  Colouring out;
  out.width = map.width();
  out.height = map.height();
  out.num_colours = keep;
  out.colours.assign(map.num_cells(), {});

  std::vector<char> in_u(map.num_cells(), 0);
  std::vector<std::pair<int, int>> fresh;  // pairs added in the previous iteration
  int uncovered = 0;
  for (int v = 0; v < map.num_cells(); ++v) {
    if (map.is_obstacle(map.cell(v))) continue;
    const int c = rigid[v] >= 0 ? rename[rigid[v]] : -1;
    if (c >= 0) {
      out.colours[v].push_back(c);
      fresh.push_back({v, c});
    } else {
      in_u[v] = 1;
      ++uncovered;
    }
  }
  SoftBorderTrace local;
  SoftBorderTrace& tr = trace ? *trace : local;
  tr = SoftBorderTrace{};
  tr.pair_counts.push_back(out.pair_count());

  // Synchronous neighbour adoption restricted to the initially uncoloured set. Only pairs gained
  // in the previous round can spread, so tracking them reproduces the full sweep exactly.
  while (uncovered > 0) {
    std::vector<std::pair<int, int>> next;
    for (const auto& [v, c] : fresh) {
      for (Cell n : map.neighbours(map.cell(v))) {
        const int u = map.index(n);
        if (!in_u[u]) continue;
        auto& cs = out.colours[u];
        if (std::find(cs.begin(), cs.end(), c) == cs.end()) next.push_back({u, c});
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    if (next.empty()) {
      // Components without any surviving colour: adopt the colour of the nearest coloured cell.
      std::vector<int> labels;
      map.components(labels);
      std::vector<char> comp_coloured(map.num_cells(), 0);
      for (int v = 0; v < map.num_cells(); ++v) {
        if (labels[v] >= 0 && !out.colours[v].empty()) comp_coloured[labels[v]] = 1;
      }
      std::set<int> stuck;
      for (int v = 0; v < map.num_cells(); ++v) {
        if (labels[v] >= 0 && !comp_coloured[labels[v]]) stuck.insert(labels[v]);
      }
      for (int comp : stuck) {
        double best = std::numeric_limits<double>::infinity();
        int best_colour = 0;
        for (int u = 0; u < map.num_cells(); ++u) {
          if (labels[u] != comp) continue;
          const Cell cu = map.cell(u);
          for (int v = 0; v < map.num_cells(); ++v) {
            if (out.colours[v].empty() || (labels[v] >= 0 && labels[v] == comp)) continue;
            const Cell cv = map.cell(v);
            const double d = std::hypot(cu.x - cv.x, cu.y - cv.y);
            if (d < best) {
              best = d;
              best_colour = out.colours[v].front();
            }
          }
        }
        for (int u = 0; u < map.num_cells(); ++u) {
          if (labels[u] == comp && out.colours[u].empty()) {
            out.colours[u].push_back(best_colour);
            --uncovered;
          }
        }
        ++tr.fallback_components;
      }
      tr.pair_counts.push_back(out.pair_count());
      break;
    }
    for (const auto& [u, c] : next) {
      if (out.colours[u].empty()) --uncovered;
      out.colours[u].push_back(c);
    }
    fresh = std::move(next);
    ++tr.iterations;
    tr.pair_counts.push_back(out.pair_count());
  }
  for (auto& cs : out.colours) std::sort(cs.begin(), cs.end());
  return out;
}

Colouring lloyd_colouring(const GridMap& map, int k_init, int iters, std::uint64_t seed,
                          SoftBorderTrace* trace) {
  check_initial_colours(map, k_init);
  std::mt19937_64 rng(seed);

  std::vector<int> labels;
  const int num_comp = map.components(labels);
  std::vector<std::vector<int>> comp_cells(num_comp);
  for (int v = 0; v < map.num_cells(); ++v) {
    if (labels[v] >= 0) comp_cells[labels[v]].push_back(v);
  }
  std::vector<int> sizes(num_comp);
  for (int c = 0; c < num_comp; ++c) sizes[c] = static_cast<int>(comp_cells[c].size());
  const std::vector<int> seats = apportion_seats(sizes, k_init);

  std::vector<int> centres;
  for (int c = 0; c < num_comp; ++c) {
    std::vector<int> picked;
    std::sample(comp_cells[c].begin(), comp_cells[c].end(), std::back_inserter(picked), seats[c], rng);
    centres.insert(centres.end(), picked.begin(), picked.end());
  }

  std::vector<int> region = nearest_seed(map, centres);
  std::vector<int> scratch(map.num_cells());
  const int k = static_cast<int>(centres.size());
  for (int it = 0; it < iters; ++it) {
    std::vector<std::vector<int>> members(k);
    for (int v = 0; v < map.num_cells(); ++v) {
      if (region[v] >= 0) members[region[v]].push_back(v);
    }
    bool moved = false;
    for (int c = 0; c < k; ++c) {
      long long best = std::numeric_limits<long long>::max();
      int best_v = centres[c];
      for (int v : members[c]) {
        const long long s = region_distance_sum(map, region, c, v, scratch);
        if (s < best) {
          best = s;
          best_v = v;
        }
      }
      if (best_v != centres[c]) {
        centres[c] = best_v;
        moved = true;
      }
    }
    if (!moved) break;
    region = nearest_seed(map, centres);
  }
  return soften_borders(map, region, k, k_init / 2, trace);
}

Colouring kmeans_colouring(const GridMap& map, int k_init, int iters, std::uint64_t seed,
                           SoftBorderTrace* trace) {
  check_initial_colours(map, k_init);
  std::mt19937_64 rng(seed);
  const std::vector<Cell> free = map.free_cells();
  std::vector<Cell> seed_cells;
  std::sample(free.begin(), free.end(), std::back_inserter(seed_cells), k_init, rng);
  std::shuffle(seed_cells.begin(), seed_cells.end(), rng);
  std::vector<int> seeds;
  for (Cell c : seed_cells) seeds.push_back(map.index(c));

  const int cells = map.num_cells();
  // Diffusion vectors are sparse: colour c only reaches vertices within `iters` hops of its seed.
  std::vector<int> seed_colour(cells, -1);
  for (int c = 0; c < k_init; ++c) seed_colour[seeds[c]] = c;
  SparseRows x;
  for (int v = 0; v < cells; ++v) {
    if (seed_colour[v] >= 0) x.data.push_back({seed_colour[v], 1.0});
    x.append_empty();
  }

  std::vector<std::vector<int>> adjacency(cells);
  for (Cell c : free) {
    for (Cell n : map.neighbours(c)) adjacency[map.index(c)].push_back(map.index(n));
  }
  SparseAccumulator acc(k_init);
  for (int it = 0; it < iters; ++it) {
    SparseRows next;
    next.data.reserve(x.data.size() * 2);
    for (int v = 0; v < cells; ++v) {
      for (int u : adjacency[v]) acc.add(x, u, 1.0);
      acc.flush(next);
      double norm = 0.0;
      for (int e = next.start[v]; e < next.start[v + 1]; ++e) norm += std::abs(next.data[e].second);
      if (norm > 0.0) {
        for (int e = next.start[v]; e < next.start[v + 1]; ++e) next.data[e].second /= norm;
      }
    }
    x = std::move(next);
  }

  // Zero rows (never reached by diffusion) take the nearest seed's colour.
  std::vector<int> assignment(cells, -1);
  const std::vector<int> nearest = nearest_seed(map, seeds);
  std::vector<int> active;
  for (Cell c : free) {
    const int v = map.index(c);
    if (!x.empty_row(v)) {
      active.push_back(v);
    } else if (nearest[v] >= 0) {
      assignment[v] = nearest[v];
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (int s = 0; s < k_init; ++s) {
        const Cell cs = map.cell(seeds[s]);
        const double d = std::hypot(c.x - cs.x, c.y - cs.y);
        if (d < best) {
          best = d;
          assignment[v] = s;
        }
      }
    }
  }

  // Centre c starts as the one-hot vector of colour c.
  SparseRows centres;
  for (int c = 0; c < k_init; ++c) {
    centres.data.push_back({c, 1.0});
    centres.append_empty();
  }
  std::vector<double> dot(k_init, 0.0);
  std::vector<char> touched(k_init, 0);
  std::vector<int> touched_list;
  auto assign = [&]() {
    // ||c - x||^2 = ||c||^2 + ||x||^2 - 2 c.x; only centres sharing support with x have c.x != 0.
    std::vector<int> offset(k_init + 1, 0);
    for (const auto& entry : centres.data) ++offset[entry.first + 1];
    for (int c = 0; c < k_init; ++c) offset[c + 1] += offset[c];
    std::vector<std::pair<int, double>> holders(offset[k_init]);  // colour -> (centre, value)
    std::vector<int> fill(offset.begin(), offset.end() - 1);
    std::vector<double> centre_sq(k_init, 0.0);
    for (int c = 0; c < k_init; ++c) {
      for (int e = centres.start[c]; e < centres.start[c + 1]; ++e) {
        const auto [colour, value] = centres.data[e];
        holders[fill[colour]++] = {c, value};
        centre_sq[c] += value * value;
      }
    }
    std::vector<std::pair<double, int>> by_norm(k_init);
    for (int c = 0; c < k_init; ++c) by_norm[c] = {centre_sq[c], c};
    std::sort(by_norm.begin(), by_norm.end());

    for (int v : active) {
      for (int e = x.start[v]; e < x.start[v + 1]; ++e) {
        const auto [colour, value] = x.data[e];
        for (int h = offset[colour]; h < offset[colour + 1]; ++h) {
          const auto [c, cv] = holders[h];
          if (!touched[c]) {
            touched[c] = 1;
            touched_list.push_back(c);
          }
          dot[c] += cv * value;
        }
      }
      double best_d = std::numeric_limits<double>::infinity();
      int best = -1;
      for (int c : touched_list) {
        const double d = centre_sq[c] - 2.0 * dot[c];
        if (d < best_d || (d == best_d && c < best)) {
          best_d = d;
          best = c;
        }
      }
      // Untouched centres sit at ||c||^2; scanning by norm stops past the current best.
      for (const auto& [sq, c] : by_norm) {
        if (sq > best_d) break;
        if (touched[c]) continue;
        if (sq < best_d || c < best) {
          best_d = sq;
          best = c;
        }
      }
      assignment[v] = best;
      for (int c : touched_list) {
        touched[c] = 0;
        dot[c] = 0.0;
      }
      touched_list.clear();
    }
  };
  assign();
  for (int it = 0; it < iters; ++it) {
    std::vector<std::vector<int>> members(k_init);
    for (int v : active) members[assignment[v]].push_back(v);
    SparseRows next;
    for (int c = 0; c < k_init; ++c) {
      if (members[c].empty()) {
        next.append_copy(centres, c);
        continue;
      }
      const double w = 1.0 / static_cast<double>(members[c].size());
      for (int v : members[c]) acc.add(x, v, w);
      acc.flush(next);
    }
    centres = std::move(next);
    assign();
  }

  std::vector<int> population(k_init, 0);
  for (int v : assignment) {
    if (v >= 0) ++population[v];
  }
  for (int c = 0; c < k_init; ++c) {
    if (population[c] == 0) assignment[seeds[c]] = c;
  }
  return soften_borders(map, assignment, k_init, k_init / 2, trace);
}

int default_initial_colours(const GridMap& map, double fraction) {
  const int keep = std::max(1, static_cast<int>(std::lround(fraction * map.free_count())));
  return std::min(2 * keep, map.free_count() - map.free_count() % 2);
}

std::string dump_colouring(const Colouring& colouring) {
  std::ostringstream out;
  out << colouring.width << ' ' << colouring.height << ' ' << colouring.num_colours << '\n';
  for (int v = 0; v < static_cast<int>(colouring.colours.size()); ++v) {
    const auto& cs = colouring.colours[v];
    if (cs.empty()) continue;
    out << v % colouring.width << ' ' << v / colouring.width;
    for (int c : cs) out << ' ' << c;
    out << '\n';
  }
  return out.str();
}

Colouring parse_colouring(std::string_view text) {
  std::istringstream in{std::string(text)};
  Colouring out;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("parse_colouring: missing header");
  {
    std::istringstream header(line);
    if (!(header >> out.width >> out.height >> out.num_colours) || out.width < 1 || out.height < 1) {
      throw std::invalid_argument("parse_colouring: bad header");
    }
  }
  out.colours.assign(static_cast<std::size_t>(out.width) * out.height, {});
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    int x, y;
    if (!(row >> x >> y) || x < 0 || y < 0 || x >= out.width || y >= out.height) {
      throw std::invalid_argument("parse_colouring: bad vertex on line " + std::to_string(line_no));
    }
    auto& cs = out.colours[y * out.width + x];
    int c;
    while (row >> c) cs.push_back(c);
    std::sort(cs.begin(), cs.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

bool within_radius(Cell a, Cell b, double radius, Norm norm) {
  const double dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y);
  switch (norm) {
    case Norm::kEuclidean:
      return dx * dx + dy * dy <= radius * radius;
    case Norm::kChebyshev:
      return std::max(dx, dy) <= radius;
    case Norm::kManhattan:
      return dx + dy <= radius;
  }
  return false;
}

DirectedHypergraph colouring_to_hypergraph(const Colouring& colouring, const Configuration& config,
                                           double comm_radius, Norm norm) {
  const int n = static_cast<int>(config.size());
  DirectedHypergraph graph;
  graph.num_nodes = n;
  for (int v = 0; v < n; ++v) {
    std::vector<int> nearby;
    for (int u = 0; u < n; ++u) {
      if (within_radius(config[u], config[v], comm_radius, norm)) nearby.push_back(u);
    }
    for (int c = 0; c < colouring.num_colours; ++c) {
      std::vector<int> tail;
      for (int u : nearby) {
        if (colouring.has(config[u], c)) tail.push_back(u);
      }
      if (tail.empty()) continue;
      if (!std::binary_search(tail.begin(), tail.end(), v)) {
        tail.insert(std::upper_bound(tail.begin(), tail.end(), v), v);
      }
      graph.edges.push_back({std::move(tail), {v}});
    }
  }
  return graph;
}

DirectedHypergraph shortest_distance_hypergraph(const GridMap& map, const Configuration& config,
                                                double comm_radius, int epsilon, std::uint64_t seed,
                                                Norm norm) {
  if (epsilon < 0) throw std::invalid_argument("shortest_distance_hypergraph: epsilon must be >= 0");
  constexpr int kMinCliques = 5;
  constexpr int kMaxRounds = 10;
  const int n = static_cast<int>(config.size());
  std::vector<mapf::DistanceField> fields;
  fields.reserve(n);
  for (const Cell& c : config) fields.push_back(mapf::bfs_dist(map, c));
  auto dist = [&](int a, int b) -> long long {
    const int d = fields[a](config[b]);
    return d == mapf::kUnreachable ? std::numeric_limits<int>::max() : d;
  };

  std::mt19937_64 rng(seed);
  DirectedHypergraph graph;
  graph.num_nodes = n;
  for (int v = 0; v < n; ++v) {
    std::vector<int> comm;
    for (int u = 0; u < n; ++u) {
      if (u != v && within_radius(config[u], config[v], comm_radius, norm)) comm.push_back(u);
    }
    if (comm.empty()) {
      graph.edges.push_back({{v}, {v}});
      continue;
    }
    const int m = static_cast<int>(comm.size());
    std::vector<std::vector<char>> adj(m, std::vector<char>(m, 0));
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        if (a == b) continue;
        const int u = comm[a], w = comm[b];
        if (dist(v, u) + dist(u, w) <= std::max(dist(v, u), dist(v, w)) + epsilon) {
          adj[a][b] = adj[b][a] = 1;
        }
      }
    }

    std::vector<std::vector<int>> cliques;  // local indices, sorted
    for (int round = 0; round < kMaxRounds; ++round) {
      std::vector<int> uncovered(m);
      std::iota(uncovered.begin(), uncovered.end(), 0);
      while (!uncovered.empty()) {
        const int start = uncovered[std::uniform_int_distribution<int>(0, uncovered.size() - 1)(rng)];
        std::vector<int> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> clique{start};
        for (int w : order) {
          if (w == start) continue;
          if (std::all_of(clique.begin(), clique.end(), [&](int q) { return adj[q][w] != 0; })) {
            clique.push_back(w);
          }
        }
        std::sort(clique.begin(), clique.end());
        if (std::find(cliques.begin(), cliques.end(), clique) == cliques.end()) cliques.push_back(clique);
        std::erase_if(uncovered, [&](int q) { return std::binary_search(clique.begin(), clique.end(), q); });
      }
      if (static_cast<int>(cliques.size()) >= kMinCliques) break;
    }
    for (const auto& clique : cliques) {
      std::vector<int> tail;
      for (int q : clique) tail.push_back(comm[q]);
      tail.push_back(v);
      std::sort(tail.begin(), tail.end());
      graph.edges.push_back({std::move(tail), {v}});
    }
  }
  return graph;
}

Eigen::MatrixXd hyperedge_features(const DirectedHypergraph& graph, const Configuration& config) {
  std::size_t rows = 0;
  for (const auto& e : graph.edges) rows += e.tail.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), 3);
  Eigen::Index r = 0;
  for (const auto& e : graph.edges) {
    double cx = 0.0, cy = 0.0;
    for (int h : e.head) {
      cx += config[h].x;
      cy += config[h].y;
    }
    cx /= static_cast<double>(e.head.size());
    cy /= static_cast<double>(e.head.size());
    for (int j : e.tail) {
      const double dx = config[j].x - cx, dy = config[j].y - cy;
      out.row(r++) << dx, dy, std::abs(dx) + std::abs(dy);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kKMeans:
      return "kmeans";
    case Strategy::kLloyd:
      return "lloyd";
    case Strategy::kShortestDistance:
      return "shortest";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "kmeans") return Strategy::kKMeans;
  if (name == "lloyd") return Strategy::kLloyd;
  if (name == "shortest") return Strategy::kShortestDistance;
  throw std::invalid_argument("unknown hypergraph strategy: " + std::string(name));
}

HypergraphBuilder::HypergraphBuilder(const GridMap& map, Options options)
    : map_(map), options_(options) {
  if (options_.strategy == Strategy::kShortestDistance) return;
  const int k_init = options_.k_init > 0 ? options_.k_init : default_initial_colours(map_);
  colouring_ = options_.strategy == Strategy::kKMeans
                   ? kmeans_colouring(map_, k_init, options_.colouring_iters, options_.seed)
                   : lloyd_colouring(map_, k_init, options_.colouring_iters, options_.seed);
  has_colouring_ = true;
}

DirectedHypergraph HypergraphBuilder::build(const Configuration& config, int timestep) const {
  if (has_colouring_) {
    return colouring_to_hypergraph(colouring_, config, options_.comm_radius, options_.norm);
  }
  return shortest_distance_hypergraph(map_, config, options_.comm_radius, options_.epsilon,
                                      options_.seed + static_cast<std::uint64_t>(timestep),
                                      options_.norm);
}

}  // namespace hmagat::hypergen
