#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmagat/ad/ops.hpp"
#include "hmagat/hypergen.hpp"
#include "hmagat/mapf.hpp"

namespace hmagat::model {

enum class LayerKind { kHgnn, kGat };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct ModelConfig {
  LayerKind kind = LayerKind::kHgnn;
  int hidden = 64;
  int layers = 3;
  int obs_radius = 5;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int edge_hidden = 16;   // width of the edge-feature MLP
  int temp_hidden = 32;   // width of the temperature actor and critic
  bool bias = true;       // encoder, decoder and edge-MLP biases
  double leaky_slope = ad::kLeakySlope;

  // Communication structure.
  double comm_radius = 7.0;
  hypergen::Strategy strategy = hypergen::Strategy::kKMeans;
  hypergen::Norm norm = hypergen::Norm::kEuclidean;
  int colouring_iters = 10;
  int epsilon = 0;
  int regen_interval = 5;

  int obs_side() const { return 2 * obs_radius + 1; }
  int obs_size() const { return mapf::kObservationChannels * obs_side() * obs_side(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Number of per-agent statistics fed to the temperature actor and critic:
// 5 logits, agents in FOV, obstacles in FOV, goal distance, goal dx, goal dy.
inline constexpr int kTemperatureInputs = 10;

struct ParamShape {
  std::string name;
  int rows;
  int cols;
};

// Ordered parameter list for a configuration. Names starting with "temp." belong to the
// temperature actor/critic and are excluded from the policy.
std::vector<ParamShape> parameter_shapes(const ModelConfig& config);

class ModelParams {
 public:
  ModelParams() = default;

  // Glorot-uniform weights, zero biases, log-std of the temperature head at log(0.5).
  static ModelParams initialise(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  bool has(const std::string& name) const { return blobs_.count(name) != 0; }
  const Eigen::MatrixXd& at(const std::string& name) const;
  Eigen::MatrixXd& at(const std::string& name);
  const std::map<std::string, Eigen::MatrixXd>& blobs() const { return blobs_; }
  std::map<std::string, Eigen::MatrixXd>& blobs() { return blobs_; }

  // Scalar count over names with the given prefix.
  std::size_t count(std::string_view prefix = "") const;

 private:
  ModelConfig config_;
  std::map<std::string, Eigen::MatrixXd> blobs_;
};

bool is_temperature_param(std::string_view name);

// Same configuration, names, shapes and bit-identical values.
bool identical(const ModelParams& a, const ModelParams& b);

// Parameters placed on a tape. `trainable` makes them variables; otherwise constants.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable);

  ad::Tape& tape() const { return *tape_; }
  const ModelConfig& config() const { return params_->config(); }
  ad::Var operator()(const std::string& name) const;
  // Zero constant of the given shape (stand-in for absent biases).
  ad::Var zeros(int rows, int cols) const;

  // Gradients of every bound parameter after tape.backward().
  std::map<std::string, Eigen::MatrixXd> gradients() const;

 private:
  ad::Tape* tape_;
  const ModelParams* params_;
  std::map<std::string, ad::Var> vars_;
};

// ---------------------------------------------------------------------------
// Graph inputs

// Flattened directed hypergraph: one tail entry per (e, j in T(e)), one head entry per (e, i in H(e)).
struct HypergraphInput {
  int num_nodes = 0;
  int num_edges = 0;
  std::vector<int> tail_node;
  std::vector<int> tail_edge;
  std::vector<int> head_node;
  std::vector<int> head_edge;
  Eigen::MatrixXd omega;  // tail entries x 3
};

HypergraphInput make_hypergraph_input(const hypergen::DirectedHypergraph& graph, const mapf::Configuration& config);

// Pairwise graph: node `target[k]` attends to `source[k]` with edge feature omega.row(k).
struct PairGraphInput {
  int num_nodes = 0;
  std::vector<int> target;
  std::vector<int> source;
  Eigen::MatrixXd omega;  // pairs x 3, (dx, dy, |dx| + |dy|) of source relative to target
};

// Disk graph within the communication radius, self-loops included.
PairGraphInput disk_graph(const mapf::Configuration& config, double comm_radius, hypergen::Norm norm);

struct GraphInput {
  LayerKind kind = LayerKind::kHgnn;
  HypergraphInput hyper;
  PairGraphInput pairs;

  int num_nodes() const { return kind == LayerKind::kHgnn ? hyper.num_nodes : pairs.num_nodes; }
};

// Disjoint union; node and edge ids of later graphs are offset.
GraphInput concat_graphs(const std::vector<GraphInput>& graphs);

// Per-map source of communication graphs. Shortest-distance hypergraphs are rebuilt only every
// `regen_interval` steps; in between the last structure is reused with current positions.
class GraphFactory {
 public:
  GraphFactory(const ModelConfig& config, const mapf::GridMap& map, std::uint64_t seed);

  GraphInput build(const mapf::Configuration& config, int timestep);
  const hypergen::HypergraphBuilder* builder() const { return builder_ ? &*builder_ : nullptr; }

 private:
  ModelConfig config_;
  std::optional<hypergen::HypergraphBuilder> builder_;
  std::optional<hypergen::DirectedHypergraph> cached_;
  int cached_step_ = 0;
};

// ---------------------------------------------------------------------------
// Attention

struct LayerAttention {
  Eigen::VectorXd edge_tail;  // HGNN: alpha_ej per tail entry
  Eigen::VectorXd node_edge;  // HGNN: alpha_ie per head entry; GAT: alpha_ij per pair
};

struct AttentionRecord {
  GraphInput graph;
  std::vector<LayerAttention> layers;
};

// a_ij for one layer (n x n). Rows of nodes without incident attention are zero.
Eigen::MatrixXd aggregate_attention(const AttentionRecord& record, int layer);
// Nodes whose aggregated row is empty.
std::vector<int> nodes_without_attention(const AttentionRecord& record);

// ---------------------------------------------------------------------------
// Network pieces (tape level)

// observations: N x obs_size -> N x hidden.
ad::Var encode(const BoundParams& p, const ad::Var& observations);
// omega: entries x 3 -> entries x hidden.
ad::Var edge_mlp(const BoundParams& p, const ad::Var& omega);
ad::Var hgnn_layer(const BoundParams& p, int layer, const ad::Var& x, const ad::Var& w, const HypergraphInput& g,
                   LayerAttention* attention = nullptr);
ad::Var gat_layer(const BoundParams& p, int layer, const ad::Var& x, const ad::Var& w, const PairGraphInput& g,
                  LayerAttention* attention = nullptr);
// N x hidden -> N x 5.
ad::Var decode(const BoundParams& p, const ad::Var& x);

// Encoder -> L communication layers -> decoder.
ad::Var policy_logits(const BoundParams& p, const ad::Var& observations, const GraphInput& graph,
                      AttentionRecord* record = nullptr);

struct PolicyOutput {
  Eigen::MatrixXd logits;  // n x 5
  AttentionRecord attention;
};

PolicyOutput policy_forward(const ModelParams& params, const Eigen::MatrixXd& observations,
                            const GraphInput& graph);
PolicyOutput policy_forward(const ModelParams& params, const mapf::Instance& instance,
                            const std::vector<mapf::DistanceField>& goal_dist, const mapf::Configuration& config,
                            GraphFactory& graphs, int timestep);

// ---------------------------------------------------------------------------
// Checkpoints: "HMGTCKPT", u32 version, u32 header length, JSON header, u32 blob count, then per
// blob u32 name length, name, u32 rows, u32 cols, rows*cols f64 (row-major, little-endian).

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelParams& params);
ModelParams parse_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace hmagat::model
