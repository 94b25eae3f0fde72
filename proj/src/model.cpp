#include "hmagat/model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace hmagat::model {

namespace {

std::string layer_name(int layer, const char* weight) { return "layer" + std::to_string(layer) + "." + weight; }

ad::Var linear(const BoundParams& p, const ad::Var& x, const std::string& prefix, bool bias) {
  ad::Var y = ad::matmul(x, p(prefix + ".w"));
  return bias ? ad::add_row(y, p(prefix + ".b")) : y;
}

Eigen::MatrixXd relative_features(const mapf::Configuration& config, const std::vector<int>& from,
                                  const std::vector<int>& to) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(from.size()), 3);
  for (std::size_t k = 0; k < from.size(); ++k) {
    const double dx = config[to[k]].x - config[from[k]].x;
    const double dy = config[to[k]].y - config[from[k]].y;
    out.row(static_cast<Eigen::Index>(k)) << dx, dy, std::abs(dx) + std::abs(dy);
  }
  return out;
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) { return kind == LayerKind::kHgnn ? "hgnn" : "gat"; }

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "hgnn") return LayerKind::kHgnn;
  if (name == "gat") return LayerKind::kGat;
  throw std::invalid_argument("unknown layer kind: " + std::string(name));
}

std::vector<ParamShape> parameter_shapes(const ModelConfig& c) {
  if (c.hidden < 1 || c.layers < 0 || c.obs_radius < 0 || c.conv1_channels < 1 || c.conv2_channels < 1 ||
      c.edge_hidden < 1 || c.temp_hidden < 1) {
    throw std::invalid_argument("ModelConfig: non-positive dimension");
  }
  const int d = c.hidden;
  const int plane = c.obs_side() * c.obs_side();
  std::vector<ParamShape> out;
  auto dense = [&](const std::string& prefix, int in, int width, bool bias) {
    out.push_back({prefix + ".w", in, width});
    if (bias) out.push_back({prefix + ".b", 1, width});
  };
  out.push_back({"enc.conv1.w", c.conv1_channels, mapf::kObservationChannels * 9});
  if (c.bias) out.push_back({"enc.conv1.b", 1, c.conv1_channels});
  out.push_back({"enc.conv2.w", c.conv2_channels, c.conv1_channels * 9});
  if (c.bias) out.push_back({"enc.conv2.b", 1, c.conv2_channels});
  dense("enc.fc", c.conv2_channels * plane, d, c.bias);
  dense("edge.fc1", 3, c.edge_hidden, c.bias);
  dense("edge.fc2", c.edge_hidden, d, c.bias);
  for (int l = 0; l < c.layers; ++l) {
    const char* names_hgnn[] = {"W_R", "W_n", "W_e", "W_h", "Theta_n", "Theta_e", "Theta_h"};
    const char* names_gat[] = {"W_R", "W_n", "W_e", "Theta_n", "Theta_e"};
    if (c.kind == LayerKind::kHgnn) {
      for (const char* w : names_hgnn) out.push_back({layer_name(l, w), d, d});
    } else {
      for (const char* w : names_gat) out.push_back({layer_name(l, w), d, d});
    }
  }
  dense("dec.fc1", d, d, c.bias);
  dense("dec.fc2", d, mapf::kNumActions, c.bias);
  dense("temp.actor.fc1", kTemperatureInputs, c.temp_hidden, true);
  dense("temp.actor.fc2", c.temp_hidden, 1, true);
  out.push_back({"temp.actor.log_std", 1, 1});
  dense("temp.critic.fc1", kTemperatureInputs, c.temp_hidden, true);
  dense("temp.critic.fc2", c.temp_hidden, 1, true);
  return out;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  ModelParams p;
  p.config_ = config;
  for (const auto& s : parameter_shapes(config)) p.blobs_[s.name] = Eigen::MatrixXd::Zero(s.rows, s.cols);
  return p;
}

ModelParams ModelParams::initialise(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  for (const auto& s : parameter_shapes(config)) {
    Eigen::MatrixXd& m = p.blobs_[s.name];
    if (s.name.ends_with(".b")) continue;
    if (s.name == "temp.actor.log_std") {
      m(0, 0) = std::log(0.5);
      continue;
    }
    double fan_in = s.rows, fan_out = s.cols;
    if (s.name.starts_with("enc.conv")) {
      fan_in = s.cols;
      fan_out = s.rows * 9.0;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  }
  return p;
}

const Eigen::MatrixXd& ModelParams::at(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw std::out_of_range("ModelParams: no parameter " + name);
  return it->second;
}

Eigen::MatrixXd& ModelParams::at(const std::string& name) {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw std::out_of_range("ModelParams: no parameter " + name);
  return it->second;
}

std::size_t ModelParams::count(std::string_view prefix) const {
  std::size_t total = 0;
  for (const auto& [name, m] : blobs_) {
    if (name.starts_with(prefix)) total += static_cast<std::size_t>(m.size());
  }
  return total;
}

bool is_temperature_param(std::string_view name) { return name.starts_with("temp."); }

bool identical(const ModelParams& a, const ModelParams& b) {
  if (!(a.config() == b.config()) || a.blobs().size() != b.blobs().size()) return false;
  auto ia = a.blobs().begin();
  auto ib = b.blobs().begin();
  for (; ia != a.blobs().end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.rows() != ib->second.rows() || ia->second.cols() != ib->second.cols()) {
      return false;
    }
    if (std::memcmp(ia->second.data(), ib->second.data(), sizeof(double) * ia->second.size()) != 0) return false;
  }
  return true;
}

BoundParams::BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), params_(&params) {
  for (const auto& [name, value] : params.blobs()) {
    vars_.emplace(name, trainable ? tape.variable(value) : tape.constant(value));
  }
}

ad::Var BoundParams::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("BoundParams: no parameter " + name);
  return it->second;
}

ad::Var BoundParams::zeros(int rows, int cols) const { return tape_->constant(Eigen::MatrixXd::Zero(rows, cols)); }

std::map<std::string, Eigen::MatrixXd> BoundParams::gradients() const {
  std::map<std::string, Eigen::MatrixXd> out;
  for (const auto& [name, v] : vars_) out.emplace(name, v.grad());
  return out;
}

// ---------------------------------------------------------------------------

HypergraphInput make_hypergraph_input(const hypergen::DirectedHypergraph& graph, const mapf::Configuration& config) {
  if (static_cast<int>(config.size()) != graph.num_nodes) {
    throw std::invalid_argument("make_hypergraph_input: configuration does not match hypergraph");
  }
  HypergraphInput in;
  in.num_nodes = graph.num_nodes;
  in.num_edges = static_cast<int>(graph.edges.size());
  for (int e = 0; e < in.num_edges; ++e) {
    for (int j : graph.edges[e].tail) {
      in.tail_node.push_back(j);
      in.tail_edge.push_back(e);
    }
    for (int i : graph.edges[e].head) {
      in.head_node.push_back(i);
      in.head_edge.push_back(e);
    }
  }
  in.omega = hypergen::hyperedge_features(graph, config);
  return in;
}

PairGraphInput disk_graph(const mapf::Configuration& config, double comm_radius, hypergen::Norm norm) {
  PairGraphInput g;
  g.num_nodes = static_cast<int>(config.size());
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int j = 0; j < g.num_nodes; ++j) {
      if (i == j || hypergen::within_radius(config[i], config[j], comm_radius, norm)) {
        g.target.push_back(i);
        g.source.push_back(j);
      }
    }
  }
  g.omega = relative_features(config, g.target, g.source);
  return g;
}

GraphInput concat_graphs(const std::vector<GraphInput>& graphs) {
  GraphInput out;
  if (graphs.empty()) return out;
  out.kind = graphs.front().kind;
  Eigen::Index tail_rows = 0, pair_rows = 0;
  for (const auto& g : graphs) {
    if (g.kind != out.kind) throw std::invalid_argument("concat_graphs: mixed graph kinds");
    tail_rows += g.hyper.omega.rows();
    pair_rows += g.pairs.omega.rows();
  }
  out.hyper.omega.resize(tail_rows, 3);
  out.pairs.omega.resize(pair_rows, 3);
  Eigen::Index tail_at = 0, pair_at = 0;
  for (const auto& g : graphs) {
    const int node_off = out.num_nodes();
    const int edge_off = out.hyper.num_edges;
    for (int v : g.hyper.tail_node) out.hyper.tail_node.push_back(v + node_off);
    for (int e : g.hyper.tail_edge) out.hyper.tail_edge.push_back(e + edge_off);
    for (int v : g.hyper.head_node) out.hyper.head_node.push_back(v + node_off);
    for (int e : g.hyper.head_edge) out.hyper.head_edge.push_back(e + edge_off);
    for (int v : g.pairs.target) out.pairs.target.push_back(v + node_off);
    for (int v : g.pairs.source) out.pairs.source.push_back(v + node_off);
    if (g.hyper.omega.rows() > 0) out.hyper.omega.middleRows(tail_at, g.hyper.omega.rows()) = g.hyper.omega;
    if (g.pairs.omega.rows() > 0) out.pairs.omega.middleRows(pair_at, g.pairs.omega.rows()) = g.pairs.omega;
    tail_at += g.hyper.omega.rows();
    pair_at += g.pairs.omega.rows();
    out.hyper.num_nodes += g.num_nodes();
    out.pairs.num_nodes += g.num_nodes();
    out.hyper.num_edges += g.hyper.num_edges;
  }
  return out;
}

GraphFactory::GraphFactory(const ModelConfig& config, const mapf::GridMap& map, std::uint64_t seed)
    : config_(config) {
  if (config.kind != LayerKind::kHgnn) return;
  hypergen::HypergraphBuilder::Options options;
  options.strategy = config.strategy;
  options.comm_radius = config.comm_radius;
  options.norm = config.norm;
  options.colouring_iters = config.colouring_iters;
  options.epsilon = config.epsilon;
  options.seed = seed;
  options.regen_interval = config.regen_interval;
  builder_.emplace(map, options);
}

GraphInput GraphFactory::build(const mapf::Configuration& config, int timestep) {
  GraphInput g;
  g.kind = config_.kind;
  if (config_.kind == LayerKind::kGat) {
    g.pairs = disk_graph(config, config_.comm_radius, config_.norm);
    g.hyper.num_nodes = g.pairs.num_nodes;
    return g;
  }
  if (config_.strategy == hypergen::Strategy::kShortestDistance) {
    const int interval = std::max(1, config_.regen_interval);
    if (!cached_ || timestep < cached_step_ || timestep - cached_step_ >= interval ||
        cached_->num_nodes != static_cast<int>(config.size())) {
      cached_ = builder_->build(config, timestep);
      cached_step_ = timestep;
    }
    g.hyper = make_hypergraph_input(*cached_, config);
  } else {
    g.hyper = make_hypergraph_input(builder_->build(config, timestep), config);
  }
  g.pairs.num_nodes = g.hyper.num_nodes;
  return g;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd aggregate_attention(const AttentionRecord& record, int layer) {
  if (layer < 0 || layer >= static_cast<int>(record.layers.size())) {
    throw std::out_of_range("aggregate_attention: layer out of range");
  }
  const GraphInput& g = record.graph;
  const LayerAttention& att = record.layers[layer];
  const int n = g.num_nodes();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  if (g.kind == LayerKind::kGat) {
    for (std::size_t k = 0; k < g.pairs.target.size(); ++k) {
      a(g.pairs.target[k], g.pairs.source[k]) += att.node_edge[static_cast<Eigen::Index>(k)];
    }
    return a;
  }
  std::vector<std::vector<int>> tails(g.hyper.num_edges);
  for (std::size_t t = 0; t < g.hyper.tail_edge.size(); ++t) tails[g.hyper.tail_edge[t]].push_back(static_cast<int>(t));
  for (std::size_t k = 0; k < g.hyper.head_node.size(); ++k) {
    const int i = g.hyper.head_node[k];
    const double a_ie = att.node_edge[static_cast<Eigen::Index>(k)];
    for (int t : tails[g.hyper.head_edge[k]]) a(i, g.hyper.tail_node[t]) += a_ie * att.edge_tail[t];
  }
  return a;
}

std::vector<int> nodes_without_attention(const AttentionRecord& record) {
  const GraphInput& g = record.graph;
  std::vector<char> has(g.num_nodes(), 0);
  if (g.kind == LayerKind::kGat) {
    for (int i : g.pairs.target) has[i] = 1;
  } else {
    for (int i : g.hyper.head_node) has[i] = 1;
  }
  std::vector<int> out;
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (!has[i]) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

ad::Var encode(const BoundParams& p, const ad::Var& observations) {
  const ModelConfig& c = p.config();
  if (observations.cols() != c.obs_size()) throw std::invalid_argument("encode: observation size mismatch");
  const int side = c.obs_side();
  auto bias = [&](const std::string& name, int width) { return c.bias ? p(name) : p.zeros(1, width); };
  ad::Var h = ad::relu(ad::conv2d(observations, p("enc.conv1.w"), bias("enc.conv1.b", c.conv1_channels),
                                  mapf::kObservationChannels, side, side, 3));
  h = ad::relu(ad::conv2d(h, p("enc.conv2.w"), bias("enc.conv2.b", c.conv2_channels), c.conv1_channels, side,
                          side, 3));
  return ad::relu(linear(p, h, "enc.fc", c.bias));
}

ad::Var edge_mlp(const BoundParams& p, const ad::Var& omega) {
  const bool bias = p.config().bias;
  return linear(p, ad::relu(linear(p, omega, "edge.fc1", bias)), "edge.fc2", bias);
}

ad::Var hgnn_layer(const BoundParams& p, int layer, const ad::Var& x, const ad::Var& w, const HypergraphInput& g,
                   LayerAttention* attention) {
  const double slope = p.config().leaky_slope;
  if (x.rows() != g.num_nodes) throw std::invalid_argument("hgnn_layer: feature rows != node count");
  if (w.rows() != static_cast<Eigen::Index>(g.tail_node.size())) {
    throw std::invalid_argument("hgnn_layer: edge features must cover every tail entry");
  }
  const int E = g.num_edges;
  // Tail -> hyperedge: query is the mean of head features.
  ad::Var query = ad::segment_mean(ad::gather_rows(x, g.head_node), g.head_edge, E);
  ad::Var x_tail = ad::gather_rows(x, g.tail_node);
  ad::Var key = ad::add(ad::matmul(x_tail, p(layer_name(layer, "Theta_n"))),
                        ad::matmul(w, p(layer_name(layer, "Theta_e"))));
  ad::Var s_ej = ad::leaky_relu(ad::row_dot(ad::gather_rows(query, g.tail_edge), key), slope);
  ad::Var a_ej = ad::segment_softmax(s_ej, g.tail_edge, E);
  ad::Var message = ad::add(ad::matmul(x_tail, p(layer_name(layer, "W_n"))),
                            ad::matmul(w, p(layer_name(layer, "W_e"))));
  ad::Var h = ad::segment_sum(ad::mul_rows(message, a_ej), g.tail_edge, E);

  // Hyperedge -> head node.
  ad::Var h_key = ad::gather_rows(ad::matmul(h, p(layer_name(layer, "Theta_h"))), g.head_edge);
  ad::Var s_ie = ad::leaky_relu(ad::row_dot(ad::gather_rows(x, g.head_node), h_key), slope);
  ad::Var a_ie = ad::segment_softmax(s_ie, g.head_node, g.num_nodes);
  ad::Var h_msg = ad::gather_rows(ad::matmul(h, p(layer_name(layer, "W_h"))), g.head_edge);
  ad::Var agg = ad::segment_sum(ad::mul_rows(h_msg, a_ie), g.head_node, g.num_nodes);

  if (attention) {
    attention->edge_tail = a_ej.value().col(0);
    attention->node_edge = a_ie.value().col(0);
  }
  return ad::relu(ad::add(ad::matmul(x, p(layer_name(layer, "W_R"))), agg));
}

ad::Var gat_layer(const BoundParams& p, int layer, const ad::Var& x, const ad::Var& w, const PairGraphInput& g,
                  LayerAttention* attention) {
  const double slope = p.config().leaky_slope;
  if (x.rows() != g.num_nodes) throw std::invalid_argument("gat_layer: feature rows != node count");
  if (w.rows() != static_cast<Eigen::Index>(g.source.size())) {
    throw std::invalid_argument("gat_layer: edge features must cover every pair");
  }
  ad::Var x_src = ad::gather_rows(x, g.source);
  ad::Var key = ad::add(ad::matmul(x_src, p(layer_name(layer, "Theta_n"))),
                        ad::matmul(w, p(layer_name(layer, "Theta_e"))));
  ad::Var s = ad::leaky_relu(ad::row_dot(ad::gather_rows(x, g.target), key), slope);
  ad::Var a = ad::segment_softmax(s, g.target, g.num_nodes);
  ad::Var message = ad::add(ad::matmul(x_src, p(layer_name(layer, "W_n"))),
                            ad::matmul(w, p(layer_name(layer, "W_e"))));
  ad::Var agg = ad::segment_sum(ad::mul_rows(message, a), g.target, g.num_nodes);
  if (attention) {
    attention->edge_tail.resize(0);
    attention->node_edge = a.value().col(0);
  }
  return ad::relu(ad::add(ad::matmul(x, p(layer_name(layer, "W_R"))), agg));
}

ad::Var decode(const BoundParams& p, const ad::Var& x) {
  const bool bias = p.config().bias;
  return linear(p, ad::relu(linear(p, x, "dec.fc1", bias)), "dec.fc2", bias);
}

ad::Var policy_logits(const BoundParams& p, const ad::Var& observations, const GraphInput& graph,
                      AttentionRecord* record) {
  const ModelConfig& c = p.config();
  if (graph.kind != c.kind) throw std::invalid_argument("policy_logits: graph kind does not match the model");
  if (observations.rows() != graph.num_nodes()) {
    throw std::invalid_argument("policy_logits: one observation per node required");
  }
  ad::Tape& tape = p.tape();
  ad::Var x = encode(p, observations);
  const Eigen::MatrixXd& omega = c.kind == LayerKind::kHgnn ? graph.hyper.omega : graph.pairs.omega;
  ad::Var w = edge_mlp(p, tape.constant(omega.rows() > 0 ? omega : Eigen::MatrixXd(0, 3)));
  if (record) {
    record->graph = graph;
    record->layers.assign(c.layers, {});
  }
  for (int l = 0; l < c.layers; ++l) {
    LayerAttention* slot = record ? &record->layers[l] : nullptr;
    x = c.kind == LayerKind::kHgnn ? hgnn_layer(p, l, x, w, graph.hyper, slot)
                                   : gat_layer(p, l, x, w, graph.pairs, slot);
  }
  return decode(p, x);
}

PolicyOutput policy_forward(const ModelParams& params, const Eigen::MatrixXd& observations, const GraphInput& graph) {
  ad::Tape tape;
  BoundParams p(tape, params, false);
  PolicyOutput out;
  out.logits = policy_logits(p, tape.constant(observations), graph, &out.attention).value();
  return out;
}

PolicyOutput policy_forward(const ModelParams& params, const mapf::Instance& instance,
                            const std::vector<mapf::DistanceField>& goal_dist, const mapf::Configuration& config,
                            GraphFactory& graphs, int timestep) {
  const Eigen::MatrixXd obs =
      mapf::build_observations(instance, goal_dist, config, params.config().obs_radius);
  return policy_forward(params, obs, graphs.build(config, timestep));
}

}  // namespace hmagat::model
