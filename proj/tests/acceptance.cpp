// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
// Usage: acceptance [criterion ...]; no arguments runs all eleven.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmagat/analysis.hpp"
#include "hmagat/benchmark.hpp"
#include "hmagat/experts.hpp"
#include "hmagat/generate.hpp"
#include "hmagat/hypergen.hpp"
#include "hmagat/model.hpp"
#include "hmagat/movingai.hpp"
#include "hmagat/render.hpp"
#include "hmagat/training.hpp"
#include "model_util.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmagat;
using Eigen::MatrixXd;
using mapf::Cell;
using mapf::Instance;

namespace {

struct Result {
  bool pass = true;
  std::string detail;

  // Records a failed check; the first few messages are kept.
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || std::count(detail.begin(), detail.end(), ';') < 3) detail += (detail.empty() ? "" : "; ") + what;
    pass = false;
  }
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

model::ModelConfig small_config(model::LayerKind kind = model::LayerKind::kHgnn) {
  model::ModelConfig c;
  c.kind = kind;
  c.hidden = 8;
  c.obs_radius = 2;
  c.conv1_channels = 2;
  c.conv2_channels = 3;
  c.edge_hidden = 4;
  c.temp_hidden = 4;
  return c;
}

// ---------------------------------------------------------------------------

Result gradient_integrity() {
  Result r;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = small_config();
    auto params = model::ModelParams::initialise(c, 500 + trial);
    std::normal_distribution<double> normal(0.0, 0.3);
    for (auto& [name, value] : params.blobs()) value = value.unaryExpr([&](double) { return normal(rng); });
    const auto inst = testutil::random_instance(7, 7, 0.15, 2 + trial % 3, rng);
    const auto s = testutil::make_scene(c, inst, trial);
    std::vector<int> targets;
    for (int i = 0; i < inst.num_agents(); ++i) targets.push_back(static_cast<int>(rng() % 5));
    worst = std::max(worst, testutil::composed_gradient_error(params, s, targets));
  }
  r.check(worst <= 1e-4, "max relative error above 1e-4");
  r.detail = fmt("5 instances, 3 HGNN layers, max rel err %.2e", worst) + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

Result oracle_equivalence() {
  Result r;
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = small_config();
    const auto params = model::ModelParams::initialise(c, 600 + trial);
    const int n = 1 + static_cast<int>(rng() % 6);
    const auto g = oracle::random_hypergraph(n, rng);
    const MatrixXd x = testutil::random_matrix(n, c.hidden, rng);
    const MatrixXd w = testutil::random_matrix(testutil::tail_entries(g), c.hidden, rng);
    const int layer = static_cast<int>(rng() % c.layers);
    const auto run = testutil::run_hgnn(params, layer, x, w, g);
    const auto ref = oracle::hgnn_layer(params, layer, x, w, g);
    worst = std::max(worst, (run.out - ref.out).cwiseAbs().maxCoeff());
  }
  r.check(worst <= 1e-12, "layer output differs from the oracle");
  r.detail = fmt("100 hypergraphs, max abs diff %.2e", worst) + (r.pass ? "" : "; " + r.detail);
  return r;
}

Result attention_normalisation() {
  Result r;
  std::mt19937_64 rng(103);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto kind = trial % 2 ? model::LayerKind::kGat : model::LayerKind::kHgnn;
    auto c = small_config(kind);
    c.strategy = trial % 3 == 0 ? hypergen::Strategy::kShortestDistance : hypergen::Strategy::kKMeans;
    const auto params = model::ModelParams::initialise(c, trial);
    const auto inst = testutil::random_instance(8, 8, 0.15, 2 + static_cast<int>(rng() % 6), rng);
    const auto s = testutil::make_scene(c, inst, trial);
    const auto out = model::policy_forward(params, s.observations, s.graph);
    const auto missing = model::nodes_without_attention(out.attention);
    const int n = inst.num_agents();
    for (int l = 0; l < c.layers; ++l) {
      const auto& att = out.attention.layers[l];
      if (kind == model::LayerKind::kHgnn) {
        std::vector<double> per_edge(s.graph.hyper.num_edges, 0.0), per_node(n, 0.0);
        for (std::size_t t = 0; t < s.graph.hyper.tail_edge.size(); ++t) per_edge[s.graph.hyper.tail_edge[t]] += att.edge_tail[t];
        for (std::size_t h = 0; h < s.graph.hyper.head_node.size(); ++h) per_node[s.graph.hyper.head_node[h]] += att.node_edge[h];
        for (double v : per_edge) worst = std::max(worst, std::abs(v - 1.0));
        for (int i = 0; i < n; ++i) {
          if (std::find(missing.begin(), missing.end(), i) == missing.end()) worst = std::max(worst, std::abs(per_node[i] - 1.0));
        }
      } else {
        std::vector<double> per_node(n, 0.0);
        for (std::size_t k = 0; k < s.graph.pairs.target.size(); ++k) per_node[s.graph.pairs.target[k]] += att.node_edge[k];
        for (double v : per_node) worst = std::max(worst, std::abs(v - 1.0));
      }
      const MatrixXd a = model::aggregate_attention(out.attention, l);
      for (int i = 0; i < n; ++i) {
        if (std::find(missing.begin(), missing.end(), i) != missing.end()) continue;
        worst = std::max(worst, std::abs(a.row(i).sum() - 1.0));
      }
    }
  }
  r.check(worst <= 1e-9, "a softmax segment or aggregated row does not sum to 1");
  r.detail = fmt("1000 forward passes, max |sum - 1| %.2e", worst) + (r.pass ? "" : "; " + r.detail);
  return r;
}

Result dilution_properties() {
  Result r;
  std::mt19937_64 rng(104);
  int diluted = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = small_config(model::LayerKind::kGat);
    const auto params = model::ModelParams::initialise(c, 700 + trial);
    const int n = 2 + static_cast<int>(rng() % 4);
    model::PairGraphInput g{n, {}, {}, {}};
    for (int j = 0; j < n; ++j) {
      g.target.push_back(0);
      g.source.push_back(j);
    }
    const MatrixXd x = testutil::random_matrix(n, c.hidden, rng);
    const MatrixXd w = testutil::random_matrix(n, c.hidden, rng);
    const int dup = static_cast<int>(rng() % n);
    auto g2 = g;
    g2.num_nodes = n + 1;
    g2.target.push_back(0);
    g2.source.push_back(n);
    MatrixXd x2(n + 1, c.hidden), w2(n + 1, c.hidden);
    x2 << x, x.row(dup);
    w2 << w, w.row(dup);
    const auto before = testutil::run_gat(params, x, w, g);
    const auto after = testutil::run_gat(params, x2, w2, g2);
    bool all = true;
    for (int k = 0; k < n; ++k) all = all && after.attention.node_edge[k] < before.attention.node_edge[k];
    diluted += all;
  }
  r.check(diluted == 100, "GAT attention not diluted in every trial");

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = small_config();
    const auto params = model::ModelParams::initialise(c, 800 + trial);
    const int n = 2 + static_cast<int>(rng() % 4);
    auto g = oracle::random_hypergraph(n, rng);
    MatrixXd x = testutil::random_matrix(n, c.hidden, rng);
    const int head = g.edges[0].head[0];
    for (int j : g.edges[0].tail) x.row(j) = x.row(head);
    MatrixXd w = testutil::random_matrix(testutil::tail_entries(g), c.hidden, rng);
    for (std::size_t k = 1; k < g.edges[0].tail.size(); ++k) w.row(k) = w.row(0);
    auto g2 = g;
    g2.num_nodes = n + 1;
    g2.edges[0].tail.push_back(n);
    MatrixXd x2(n + 1, c.hidden);
    x2 << x, x.row(head);
    MatrixXd w2(w.rows() + 1, c.hidden);
    const auto edge0 = static_cast<Eigen::Index>(g.edges[0].tail.size());
    w2 << w.topRows(edge0), w.row(0), w.bottomRows(w.rows() - edge0);
    const auto before = testutil::run_hgnn(params, 0, x, w, g);
    const auto after = testutil::run_hgnn(params, 0, x2, w2, g2);
    const auto h_before = oracle::hgnn_layer(params, 0, x, w, g).h[0];
    const auto h_after = oracle::hgnn_layer(params, 0, x2, w2, g2).h[0];
    worst = std::max(worst, (h_before - h_after).cwiseAbs().maxCoeff());
    worst = std::max(worst, (before.attention.node_edge - after.attention.node_edge).cwiseAbs().maxCoeff());
    worst = std::max(worst, (before.out.row(head) - after.out.row(head)).cwiseAbs().maxCoeff());
  }
  r.check(worst <= 1e-10, "HGNN changed under a duplicated tail member");

  // Information only: on a generic hyperedge the duplicate re-weights the softmax.
  double generic = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = small_config();
    const auto params = model::ModelParams::initialise(c, 900 + trial);
    const int n = 2 + static_cast<int>(rng() % 4);
    auto g = oracle::random_hypergraph(n, rng);
    const MatrixXd x = testutil::random_matrix(n, c.hidden, rng);
    const MatrixXd w = testutil::random_matrix(testutil::tail_entries(g), c.hidden, rng);
    const int dup = g.edges[0].tail.back();
    auto g2 = g;
    g2.num_nodes = n + 1;
    g2.edges[0].tail.push_back(n);
    MatrixXd x2(n + 1, c.hidden);
    x2 << x, x.row(dup);
    MatrixXd w2(w.rows() + 1, c.hidden);
    const auto edge0 = static_cast<Eigen::Index>(g.edges[0].tail.size());
    w2 << w.topRows(edge0), w.row(edge0 - 1), w.bottomRows(w.rows() - edge0);
    const auto h_before = oracle::hgnn_layer(params, 0, x, w, g).h[0];
    const auto h_after = oracle::hgnn_layer(params, 0, x2, w2, g2).h[0];
    generic = std::max(generic, (h_before - h_after).cwiseAbs().maxCoeff());
  }
  r.detail = fmt("GAT diluted %g/100; homogeneous HGNN edge max change %.2e; generic edge max h_e change %.2e",
                 diluted, worst, generic) +
             (r.pass ? "" : "; " + r.detail);
  return r;
}

Result mapf_semantics() {
  Result r;
  std::mt19937_64 rng(105);
  int agree = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const auto inst = testutil::random_instance(4, 4, 0.2, n, rng);
    mapf::Configuration to = inst.starts;
    for (auto& c : to) {
      if (rng() % 10 == 0) {
        c = {static_cast<int>(rng() % 6) - 1, static_cast<int>(rng() % 6) - 1};
      } else {
        c = mapf::apply(c, static_cast<mapf::Action>(rng() % 5));
      }
    }
    agree += oracle::conflict_keys(mapf::validate_joint_move(inst.map, inst.starts, to)) ==
             oracle::conflicts(inst.map, inst.starts, to);
  }
  r.check(agree == 10000, "classification disagrees with the oracle");

  int trajectories = 0, clean = 0;
  auto record = [&](const Instance& inst, const mapf::Trajectory& t) {
    ++trajectories;
    clean += oracle::conflict_free(inst.map, t);
  };
  const auto params = model::ModelParams::initialise(small_config(), 9);
  for (int k = 0; k < 30; ++k) {
    const auto inst = testutil::random_instance(8, 8, 0.2, 2 + k % 7, rng);
    record(inst, experts::pibt_expert(inst, 128, k).trajectory);
    for (auto mode : {training::TemperatureMode::kFixed, training::TemperatureMode::kActorSample}) {
      training::ModelController controller(params, mode, 1.0);
      record(inst, experts::rollout(controller, inst, 64, k).trajectory);
    }
    const auto small = testutil::random_instance(4, 4, 0.2, 1 + k % 3, rng);
    const auto joint = experts::joint_optimal(small);
    if (joint.success) record(small, joint.trajectory);
  }
  r.check(clean == trajectories, "a trajectory contains a conflict");
  r.detail = fmt("%g/10000 joint moves agree; %g/%g trajectories conflict-free", agree, clean, trajectories) +
             (r.pass ? "" : "; " + r.detail);
  return r;
}

Result optimality_oracle() {
  Result r;
  std::mt19937_64 rng(106);
  int solved = 0, bounded = 0;
  for (int trial = 0; solved < 200; ++trial) {
    const int side = 3 + static_cast<int>(rng() % 3);
    const auto inst = testutil::random_instance(side, side, 0.2, 1 + static_cast<int>(rng() % 3), rng);
    const auto joint = experts::joint_optimal(inst);
    if (!joint.success) continue;
    ++solved;
    bounded += joint.soc <= experts::pibt_expert(inst, 256, trial).soc;
  }
  r.check(bounded == 200, "joint optimum above PIBT on some instance");
  // Three agents contending for the top row of a small map with obstacles.
  Instance group{testutil::parse_rows({"....", ".@..", "..@@"}), {{0, 1}, {2, 1}, {0, 0}}, {{3, 0}, {2, 0}, {1, 0}}};
  const long long joint = experts::joint_optimal(group).soc;
  const long long pibt = experts::pibt_expert(group, 256, 0).soc;
  r.check(joint < pibt, "no strict improvement on the hand-built instance");
  r.detail = fmt("%g/200 joint <= PIBT; hand-built joint %g vs PIBT %g", bounded, joint, pibt) + (r.pass ? "" : "; " + r.detail);
  return r;
}

Result hypergraph_construction() {
  Result r;
  std::mt19937_64 rng(107);
  int maps = 0, covered = 0, edges = 0, valid = 0, reproducible = 0, builds = 0;
  while (maps < 50) {
    const auto map = testutil::random_grid(6 + static_cast<int>(rng() % 10), 6 + static_cast<int>(rng() % 10), 0.25, rng);
    if (map.free_count() < 8) continue;
    ++maps;
    const int k_init = hypergen::default_initial_colours(map);
    for (auto f : {hypergen::lloyd_colouring, hypergen::kmeans_colouring}) {
      const auto col = f(map, k_init, 10, maps, nullptr);
      bool ok = col.num_colours == k_init / 2;
      std::vector<int> used(std::max(col.num_colours, 0), 0);
      for (int k = 0; k < map.num_cells() && ok; ++k) {
        const Cell c = map.cell(k);
        ok = map.is_free(c) != col.at(c).empty();
        for (int colour : col.at(c)) {
          ok = ok && colour >= 0 && colour < col.num_colours;
          if (ok) ++used[colour];
        }
      }
      ok = ok && std::all_of(used.begin(), used.end(), [](int u) { return u > 0; });
      covered += ok;
      reproducible += f(map, k_init, 10, maps, nullptr) == col;
    }
    std::vector<Cell> free = map.free_cells();
    std::shuffle(free.begin(), free.end(), rng);
    const mapf::Configuration config(free.begin(), free.begin() + std::min<std::size_t>(6, free.size()));
    for (auto strategy : {hypergen::Strategy::kKMeans, hypergen::Strategy::kLloyd, hypergen::Strategy::kShortestDistance}) {
      hypergen::HypergraphBuilder::Options o;
      o.strategy = strategy;
      o.comm_radius = 4.0;
      o.seed = maps;
      const auto g = hypergen::HypergraphBuilder(map, o).build(config, 0);
      for (const auto& e : g.edges) {
        ++edges;
        const bool singleton = e.head.size() == 1;
        bool ok = singleton && std::binary_search(e.tail.begin(), e.tail.end(), e.head[0]);
        for (int u : e.tail) {
          ok = ok && hypergen::within_radius(config[u], config[e.head[0]], o.comm_radius, o.norm);
        }
        valid += ok;
      }
      ++builds;
      reproducible += hypergen::HypergraphBuilder(map, o).build(config, 0) == g;
    }
  }
  r.check(covered == 100, "a colouring misses free vertices or has the wrong colour count");
  r.check(valid == edges, "a hyperedge breaks the construction invariants");
  r.check(reproducible == 100 + builds, "identical seeds gave different structures");
  r.detail = fmt("coverage %g/100 colourings; %g/%g hyperedges valid", covered, valid, edges) +
             fmt("; %g/%g reproducible", reproducible, 100 + builds) + (r.pass ? "" : "; " + r.detail);
  return r;
}

// Desk-scale learning run. HGNN and GAT share instances, dataset, seeds and budget.
Result learning_signal() {
  Result r;
  const auto start = std::chrono::steady_clock::now();
  evalkit::GenerateOptions g;
  g.min_size = 8;
  g.max_size = 10;
  g.agents = 4;
  g.density_min = 0.2;
  g.density_max = 0.3;
  g.count = 300;
  g.seed = 2024;
  const auto train = evalkit::generate_training_mix(g);
  g.count = 100;
  g.seed = 4048;
  const auto held = evalkit::generate_training_mix(g);

  const experts::Expert expert = experts::make_pibt_expert(0, experts::TieBreak::kActionOrder);
  const training::Dataset base = training::collect_dataset(train, expert, {});
  const training::Dataset held_demos = training::collect_dataset(held, expert, {});

  struct Outcome {
    double accuracy = 0.0, success = 0.0, rel_soc = 0.0;
  };
  auto run = [&](model::LayerKind kind) {
    model::ModelConfig c;
    c.kind = kind;
    training::TrainConfig t;
    t.epochs = 30;
    t.seed = 7;
    training::PipelineOptions p;
    p.dagger_every = 10;
    p.dagger_instances = 50;
    auto params = model::ModelParams::initialise(c, 7);
    training::Dataset data = base;
    training::train_imitation(params, data, expert, t, p);

    training::SampleCache cache(c, 0);
    cache.sync(held_demos);
    std::vector<std::size_t> all(held_demos.size());
    std::iota(all.begin(), all.end(), 0);
    Outcome o;
    o.accuracy = training::evaluate_samples(params, held_demos, cache, all).accuracy;
    evalkit::EvalOptions e;
    e.seed = 11;
    const auto report = evalkit::evaluate(
        [&] { return std::make_unique<training::ModelController>(params, training::TemperatureMode::kFixed, 1.0); },
        held, e);
    for (const auto& row : report.rows) {
      o.success += row.success;
      o.rel_soc += row.rel_soc;
    }
    o.success /= static_cast<double>(report.rows.size());
    o.rel_soc /= static_cast<double>(report.rows.size());
    return o;
  };
  const Outcome hgnn = run(model::LayerKind::kHgnn);
  const Outcome gat = run(model::LayerKind::kGat);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

  r.check(hgnn.accuracy >= 0.85, "held-out accuracy below 85%");
  r.check(hgnn.success >= 0.70, "shielded success below 70%");
  r.check(hgnn.rel_soc <= gat.rel_soc, "HGNN Rel. SoC above GAT");
  r.check(minutes < 60.0, "runtime above one hour");
  r.detail = fmt("HGNN acc %.3f success %.2f rel %.3f", hgnn.accuracy, hgnn.success, hgnn.rel_soc) +
             fmt("; GAT acc %.3f success %.2f rel %.3f", gat.accuracy, gat.success, gat.rel_soc) +
             fmt("; %.1f min", minutes) + (r.pass ? "" : "; " + r.detail);
  return r;
}

Result metric_formulas() {
  Result r;
  const double entropy = evalkit::normalised_entropy({0.7, 0.2, 0.1});
  r.check(std::abs(entropy - 0.7304) <= 1e-3, "entropy of (0.7, 0.2, 0.1) off");

  const evalkit::BenchmarkRow best_row{"m", 4, 0, true, false, 20, 20, 1.0, 1.0};
  const evalkit::BenchmarkRow fail_row{"m", 4, 0, false, true, 100, 20, 5.0, 1.0};
  const evalkit::BenchmarkReport best{"best", "b", {best_row}, {}};
  const evalkit::BenchmarkReport failed{"failed", "b", {fail_row}, {}};
  const auto radar = evalkit::radar_metrics({best, failed}, 4);
  r.check(radar[0].quality == 1.0 && radar[0].scalability == 1.0, "best solver does not score 1.0");
  r.check(radar[1].quality == 0.0 && radar[1].scalability == 0.0, "failed solver does not score 0");

  std::mt19937_64 rng(109);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int k = 1; k <= 4; ++k) {
    std::vector<double> weight(k);
    for (double& w : weight) w = normal(rng);
    if (k >= 3) weight[1] = weight[0];
    weight[k - 1] = 0.0;
    const double synergy = normal(rng);
    auto v = [&](const std::vector<int>& s) {
      double total = 0.0;
      int pair = 0;
      for (int p : s) {
        total += weight[p];
        pair += k >= 3 && p <= 1;
      }
      if (pair == 2) total += synergy;
      Eigen::VectorXd out(2);
      out << total, total * total;
      return out;
    };
    const MatrixXd phi = evalkit::shapley_values(k, v);
    std::vector<int> all(k);
    std::iota(all.begin(), all.end(), 0);
    worst = std::max(worst, (phi.colwise().sum().transpose() - (v(all) - v({}))).cwiseAbs().maxCoeff());
    if (k >= 3) worst = std::max(worst, (phi.row(0) - phi.row(1)).cwiseAbs().maxCoeff());
    // The last player adds zero in every coalition only in the first class.
    worst = std::max(worst, std::abs(phi(k - 1, 0)));
  }
  r.check(worst <= 1e-9, "Shapley axioms violated");
  r.detail = fmt("entropy %.4f; radar %.1f/%.1f; Shapley axiom error %.1e", entropy, radar[0].quality,
                 radar[1].quality, worst) +
             (r.pass ? "" : "; " + r.detail);
  return r;
}

Result formats() {
  Result r;
  const std::string map_text = read_file(testutil::source_path("tests/fixtures/tiny.map"));
  const std::string scen_text = read_file(testutil::source_path("tests/fixtures/tiny.scen"));
  const auto map = evalkit::parse_movingai_map(map_text);
  r.check(evalkit::parse_movingai_map(evalkit::serialize_movingai_map(map)) == map, "map round trip");
  const auto scen = evalkit::parse_movingai_scen(scen_text);
  const auto scen_back = evalkit::parse_movingai_scen(evalkit::serialize_movingai_scen(scen));
  bool same = scen.size() == scen_back.size();
  for (std::size_t k = 0; same && k < scen.size(); ++k) {
    same = scen[k].start == scen_back[k].start && scen[k].goal == scen_back[k].goal &&
           scen[k].optimal == scen_back[k].optimal && scen[k].map == scen_back[k].map;
  }
  r.check(same, "scen round trip");
  const Instance inst = evalkit::parse_movingai(map_text, scen_text).front();
  r.check(mapf::parse_instance(mapf::serialize_instance(inst)) == inst, "instance text round trip");

  const auto params = model::ModelParams::initialise(model::ModelConfig{}, 3);
  const std::string bytes = model::serialize_checkpoint(params);
  const auto back = model::parse_checkpoint(bytes);
  r.check(model::identical(params, back) && model::serialize_checkpoint(back) == bytes, "checkpoint round trip");

  const evalkit::ScenarioSpec s = evalkit::scenario_group_interaction();
  const int n = s.instance.num_agents();
  MatrixXd a = MatrixXd::Zero(n, n);
  a(0, 1) = 0.6;
  a(0, 2) = 0.25;
  a(0, 3) = 0.15;
  a(1, 3) = 1.0;
  evalkit::RenderOptions attention;
  attention.attention = &a;
  const evalkit::ScenarioSpec d = evalkit::scenario_dilution();
  const auto colouring = hypergen::lloyd_colouring(d.instance.map, 8, 10, 3);
  const auto pibt = experts::pibt_expert(d.instance, 64, 0);
  evalkit::RenderOptions scene;
  scene.colouring = &colouring;
  scene.trajectory = &pibt.trajectory;
  scene.timestep = 3;
  scene.agent_groups = d.groups;
  int stable = 0;
  stable += evalkit::render_svg(Instance{mapf::GridMap(4, 3), {}, {}}) ==
            read_file(testutil::source_path("tests/golden/empty_map.svg"));
  stable += evalkit::render_svg(d.instance, scene) == read_file(testutil::source_path("tests/golden/dilution.svg"));
  stable += evalkit::render_svg(s.instance, attention) == read_file(testutil::source_path("tests/golden/attention.svg"));
  r.check(stable == 3, "SVG differs from its golden");
  r.detail = fmt("MovingAI, instance and checkpoint round trips; %g/3 SVG goldens byte-identical", stable) +
             (r.pass ? "" : "; " + r.detail);
  return r;
}

// Stays for `delay` steps, then runs distance-greedy PIBT.
class DelayedController : public experts::Controller {
 public:
  explicit DelayedController(int delay) : delay_(delay) {}
  void reset(const Instance& instance, std::uint64_t seed) override {
    n_ = instance.num_agents();
    pibt_.reset(instance, seed);
  }
  std::vector<mapf::Action> act(const mapf::Configuration& config, int timestep) override {
    if (timestep < delay_) return std::vector<mapf::Action>(n_, mapf::Action::kStay);
    return pibt_.act(config, timestep);
  }

 private:
  int delay_;
  int n_ = 0;
  experts::PibtController pibt_;
};

Result pipeline_mechanics() {
  Result r;
  // A 1x12 corridor with expert SoC 10: a delay of d gives model SoC 10 + d.
  Instance line{mapf::GridMap(12, 1), {{0, 0}}, {{10, 0}}};
  const training::TrainConfig config;
  int calls = 0;
  const experts::Expert stub = [&calls](const Instance& inst, int limit) {
    ++calls;
    return experts::pibt_expert(inst, limit, 0);
  };
  for (auto [delay, expect] : {std::pair{0, false}, {2, false}, {3, true}, {40, true}}) {
    DelayedController policy(delay);
    training::Dataset d;
    calls = 0;
    const auto q = training::quality_improvement_round(policy, {line}, {10}, stub, config, d, 0);
    r.check((q.triggered == 1) == expect && (calls > 0) == expect, "trigger at delay " + std::to_string(delay));
    if (delay == 40) {
      r.check(q.extractions == std::vector<std::pair<int, int>>{{0, 0}, {0, 16}, {0, 32}, {0, 48}}, "stride 16 extraction");
    }
  }
  DelayedController slow(40);
  training::Dataset d;
  calls = 0;
  training::quality_improvement_round(slow, std::vector<Instance>(100, line), std::vector<long long>(100, 10), stub,
                                      config, d, 0);
  r.check(calls == 30, "expert call cap");

  std::mt19937_64 rng(111);
  std::cauchy_distribution<double> wide(0.0, 50.0);
  bool in_range = true;
  for (int k = 0; k < 100000; ++k) {
    const double tau = training::tau_from_logit(wide(rng));
    in_range = in_range && tau >= 0.5 && tau <= 1.0;
  }
  r.check(in_range, "tau outside [0.5, 1]");

  auto c = small_config();
  c.temp_hidden = 8;
  auto params = model::ModelParams::initialise(c, 16);
  std::normal_distribution<double> normal;
  training::PpoBuffer buffer;
  buffer.features = MatrixXd::NullaryExpr(150, model::kTemperatureInputs, [&] { return normal(rng); });
  buffer.z = Eigen::VectorXd::NullaryExpr(150, [&] { return normal(rng); });
  buffer.log_prob = Eigen::VectorXd::NullaryExpr(150, [&] { return normal(rng); });
  buffer.advantage = Eigen::VectorXd::Zero(150);
  buffer.returns = training::temperature_forward(params, buffer.features).critic;
  const auto before = params;
  training::AdamW opt({3e-4, 0.9, 0.999, 1e-8, 0.0});
  training::ppo_update(params, opt, buffer, training::PpoConfig{}, rng);
  double moved = 0.0;
  for (const auto& [name, value] : before.blobs()) moved = std::max(moved, (params.at(name) - value).cwiseAbs().maxCoeff());
  r.check(moved <= 1e-9, "PPO moved parameters on a zero-advantage buffer");
  r.detail = fmt("trigger/stride/cap as configured; %g expert calls capped; PPO max change %.1e", calls, moved) +
             (r.pass ? "" : "; " + r.detail);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Result()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"layer oracle equivalence", oracle_equivalence},
      {"attention normalisation", attention_normalisation},
      {"dilution properties", dilution_properties},
      {"MAPF semantics", mapf_semantics},
      {"optimality oracle", optimality_oracle},
      {"hypergraph construction", hypergraph_construction},
      {"desk-scale learning signal", learning_signal},
      {"metric formulas", metric_formulas},
      {"formats", formats},
      {"pipeline mechanics", pipeline_mechanics},
  };
  std::vector<int> selected;
  for (int k = 1; k < argc; ++k) selected.push_back(std::atoi(argv[k]));
  if (selected.empty()) {
    selected.resize(criteria.size());
    std::iota(selected.begin(), selected.end(), 1);
  }
  bool all = true;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    const auto& [name, run] = criteria[id - 1];
    const auto start = std::chrono::steady_clock::now();
    Result result;
    try {
      result = run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %2d %s: %s [%.1f s]\n", result.pass ? "PASS" : "FAIL", id, name, result.detail.c_str(),
                seconds);
    std::fflush(stdout);
    all = all && result.pass;
  }
  return all ? 0 : 1;
}
