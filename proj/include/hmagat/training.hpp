#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hmagat/experts.hpp"
#include "hmagat/mapf.hpp"
#include "hmagat/model.hpp"

namespace hmagat::training {

using experts::Expert;
using mapf::Action;
using mapf::Configuration;
using mapf::Instance;
using model::ModelParams;

// ---------------------------------------------------------------------------
// Demonstrations

struct Sample {
  int instance = 0;
  int timestep = 0;
  Configuration config;
  std::vector<Action> actions;  // expert action per agent
};

struct Dataset {
  std::vector<Instance> instances;
  std::vector<long long> expert_soc;  // per instance; -1 when unknown
  std::vector<Sample> samples;
  int skipped = 0;                    // instances the expert failed on

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int num_agent_samples() const;
  // Adds an instance and one sample per step of `trajectory`.
  void add_trajectory(const Instance& instance, const mapf::Trajectory& trajectory, long long soc);
  void append(const Dataset& other);
};

// FNV-1a over the raw bytes of an observation.
std::uint64_t observation_hash(const mapf::Observation& obs);

// Framed binary layout, little-endian:
//   "HMGTDEMO", u32 version, u32 R_obs, u32 instance count,
//   per instance: u32 text length, instance text, i64 expert SoC;
//   u32 sample count, per sample: u32 instance, u32 timestep, u32 n,
//   per agent: i32 x, i32 y, u8 action, u64 observation hash.
// Loading recomputes observations and rejects hash mismatches.
std::string serialize_dataset(const Dataset& dataset, int obs_radius);
Dataset parse_dataset(std::string_view bytes, int obs_radius);
void save_dataset(const Dataset& dataset, int obs_radius, const std::string& path);
Dataset load_dataset(const std::string& path, int obs_radius);

struct CollectOptions {
  int step_limit = 256;
};

// One sample per expert step of every successful expert run; failures are skipped and counted.
Dataset collect_dataset(const std::vector<Instance>& instances, const Expert& expert, const CollectOptions& options);

// ---------------------------------------------------------------------------
// Optimisation

class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  explicit AdamW(Options options) : options_(options) {}

  // Updates every parameter named in `grads`.
  void step(ModelParams& params, const std::map<std::string, Eigen::MatrixXd>& grads);
  Options& options() { return options_; }
  long long steps() const { return t_; }

 private:
  Options options_;
  long long t_ = 0;
  std::map<std::string, Eigen::MatrixXd> m_;
  std::map<std::string, Eigen::MatrixXd> v_;
};

// Observation and graph tensors per sample, computed once per dataset entry.
class SampleCache {
 public:
  explicit SampleCache(const model::ModelConfig& config, std::uint64_t graph_seed = 0)
      : config_(config), graph_seed_(graph_seed) {}

  // Extends the cache to cover every sample of `dataset`.
  void sync(const Dataset& dataset);
  const Eigen::MatrixXd& observations(std::size_t sample) const { return obs_[sample]; }
  const model::GraphInput& graph(std::size_t sample) const { return graphs_[sample]; }
  std::size_t size() const { return obs_.size(); }

 private:
  model::ModelConfig config_;
  std::uint64_t graph_seed_;
  std::vector<std::unique_ptr<model::GraphFactory>> factories_;  // per dataset instance
  std::vector<std::vector<mapf::DistanceField>> dist_;
  std::vector<Eigen::MatrixXd> obs_;
  std::vector<model::GraphInput> graphs_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;  // samples (instance-steps) per minibatch
  double lr = 1e-3;
  double weight_decay = 0.01;
  double val_fraction = 0.1;
  double delta_buf = 1.2;
  int stride = 16;                // h
  int expert_call_cap = 30;
  int quality_ratio = 1;          // quality : pretrain mix
  int pretrain_ratio = 3;
  double success_threshold = 0.8; // success rate enabling the quality phase
  int post_train_epochs = 20;
  int step_limit = 256;
  double rollout_tau = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;      // training action accuracy over agent samples
  double val_accuracy = -1.0; // -1 without a validation split
  int batches = 0;
};

// Mean cross-entropy and accuracy of the policy on the given samples.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate_samples(const ModelParams& params, const Dataset& dataset, const SampleCache& cache,
                            const std::vector<std::size_t>& indices);

// Loss and parameter gradients on one minibatch.
struct BatchResult {
  double loss = 0.0;
  int correct = 0;
  int agents = 0;
  std::map<std::string, Eigen::MatrixXd> grads;  // policy parameters only
};
BatchResult batch_gradients(const ModelParams& params, const Dataset& dataset, const SampleCache& cache,
                            const std::vector<std::size_t>& batch);

// One shuffled pass over `train` in minibatches of config.batch_size.
EpochStats il_epoch(ModelParams& params, AdamW& optimizer, const Dataset& dataset, SampleCache& cache,
                    const std::vector<std::size_t>& train, const std::vector<std::size_t>& validation,
                    const TrainConfig& config, std::mt19937_64& rng);

// Deterministic train/validation split of sample indices.
void split_samples(std::size_t count, double val_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& validation);

// ---------------------------------------------------------------------------
// Closed-loop policy

enum class TemperatureMode { kFixed, kActorMean, kActorSample };

// One per-agent temperature decision recorded for PPO.
struct TemperatureStep {
  Eigen::MatrixXd features;  // n x kTemperatureInputs
  Eigen::VectorXd z;         // sampled pre-sigmoid logits
  Eigen::VectorXd log_prob;  // under the behaviour policy
  Eigen::VectorXd values;    // per-agent critic outputs
};

// Model policy with PIBT collision shielding.
class ModelController : public experts::Controller {
 public:
  ModelController(const ModelParams& params, TemperatureMode mode = TemperatureMode::kFixed, double tau = 1.0);

  void reset(const Instance& instance, std::uint64_t seed) override;
  std::vector<Action> act(const Configuration& config, int timestep) override;

  // Recorded temperature decisions of the current episode (kActorSample only).
  const std::vector<TemperatureStep>& temperature_steps() const { return steps_; }
  const model::PolicyOutput& last_output() const { return last_; }

 private:
  const ModelParams* params_;
  TemperatureMode mode_;
  double tau_;
  const Instance* instance_ = nullptr;
  std::vector<mapf::DistanceField> dist_;
  std::unique_ptr<model::GraphFactory> graphs_;
  experts::PibtState state_;
  std::mt19937_64 rng_;
  std::vector<TemperatureStep> steps_;
  model::PolicyOutput last_;
};

using ControllerFactory = std::function<std::unique_ptr<experts::Controller>()>;

// ---------------------------------------------------------------------------
// Online expert

struct DaggerReport {
  int rollouts = 0;
  int failures = 0;
  int corrections = 0;  // expert trajectories appended
  int expert_failures = 0;
  std::size_t added_samples = 0;
  double success_rate = 0.0;
};

// Rolls out the controller on every instance. On failure the expert is queried from the final
// configuration and from one uniformly drawn earlier configuration; successful expert runs are
// appended to `dataset` as new sub-instances.
DaggerReport dagger_round(experts::Controller& policy, const std::vector<Instance>& instances, const Expert& expert,
                          const TrainConfig& config, Dataset& dataset, std::uint64_t seed);

struct QualityReport {
  int rollouts = 0;
  int triggered = 0;   // instances where model SoC > delta_buf * expert SoC
  int expert_calls = 0;
  int added = 0;       // expert sub-solutions kept
  std::vector<std::pair<int, int>> extractions;  // (instance, timestep) passed to the expert
};

// For successful rollouts whose SoC exceeds delta_buf times the reference expert SoC, extracts
// sub-instances (model configuration at every stride-th step, original goals) and keeps expert
// solutions whose SoC is delta_buf times below the model's remaining SoC. Expert calls are capped.
QualityReport quality_improvement_round(experts::Controller& policy, const std::vector<Instance>& instances,
                                        const std::vector<long long>& expert_soc, const Expert& expert,
                                        const TrainConfig& config, Dataset& dataset, std::uint64_t seed);

struct PostTrainReport {
  std::vector<EpochStats> epochs;
  std::vector<QualityReport> quality;
  bool degenerate = false;  // no quality data was ever available
};

// Mixed-batch training drawing each batch slot from the quality set with probability
// quality_ratio / (quality_ratio + pretrain_ratio); the online expert runs after every epoch.
PostTrainReport post_train(ModelParams& params, AdamW& optimizer, const Dataset& pretrain, Dataset& quality,
                           const std::vector<Instance>& instances, const std::vector<long long>& expert_soc,
                           const Expert& expert, const TrainConfig& config, std::mt19937_64& rng);

// Indices of samples drawn for one mixed batch: true marks a quality sample.
std::vector<std::pair<bool, std::size_t>> mixed_batch(std::size_t pretrain_size, std::size_t quality_size,
                                                      const TrainConfig& config, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Full imitation pipeline

struct PipelineLog {
  std::vector<EpochStats> epochs;
  std::vector<DaggerReport> dagger;
  std::vector<QualityReport> quality;
};

struct PipelineOptions {
  int dagger_every = 5;     // epochs between online expert phases; 0 disables
  int dagger_instances = 50;
  std::function<void(int epoch, const EpochStats&)> on_epoch;
};

// Pre-training with periodic DAgger and, once the success threshold is reached, quality rounds.
// Rollouts use the instances present in `dataset` on entry, with their recorded expert SoC.
PipelineLog train_imitation(ModelParams& params, Dataset& dataset, const Expert& expert, const TrainConfig& config,
                            const PipelineOptions& options);

// ---------------------------------------------------------------------------
// Temperature actor-critic

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double lr = 3e-4;
  int batch_size = 64;
  int epochs = 4;  // passes over each buffer
  double value_coef = 0.5;

  void validate() const;
};

// Per-agent inputs: 5 logits, agents in FOV, obstacles in FOV, goal distance, goal dx, goal dy.
Eigen::MatrixXd temperature_features(const Instance& instance, const std::vector<mapf::DistanceField>& goal_dist,
                                     const Configuration& config, const Eigen::MatrixXd& logits, int obs_radius);

struct TemperatureOutput {
  Eigen::VectorXd mean;    // pre-sigmoid actor output per agent
  Eigen::VectorXd tau;     // 0.5 + 0.5 * sigmoid(mean)
  Eigen::VectorXd critic;  // per-agent critic outputs
  double value = 0.0;      // mean of critic outputs
  double log_std = 0.0;
};

TemperatureOutput temperature_forward(const ModelParams& params, const Eigen::MatrixXd& features);
double tau_from_logit(double z);
double gaussian_log_prob(double z, double mean, double log_std);

// Flattened per-agent transitions with precomputed advantages.
struct PpoBuffer {
  Eigen::MatrixXd features;    // rows = transitions
  Eigen::VectorXd z;
  Eigen::VectorXd log_prob;
  Eigen::VectorXd advantage;
  Eigen::VectorXd returns;

  std::size_t size() const { return static_cast<std::size_t>(z.size()); }
};

// Terminal-only reward (+1 success, -1 otherwise) per agent; per-agent GAE over the critic values.
// Targets are advantage + value, so a zero-advantage episode leaves the critic at its fixed point.
void append_episode(PpoBuffer& buffer, const std::vector<TemperatureStep>& steps, bool success,
                    const PpoConfig& config);

// d(surrogate)/d(log-ratio) for one transition: ratio * A where the unclipped term is active, else 0.
double clipped_surrogate_grad(double ratio, double advantage, double clip);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  int minibatches = 0;
};

// Clipped-surrogate update of the temperature actor/critic (Adam, no weight decay).
PpoStats ppo_update(ModelParams& params, AdamW& optimizer, const PpoBuffer& buffer, const PpoConfig& config,
                    std::mt19937_64& rng);

struct TemperatureTrainLog {
  std::vector<double> success_rate;
  std::vector<PpoStats> updates;
};

TemperatureTrainLog train_temperature(ModelParams& params, const std::vector<Instance>& instances, int epochs,
                                      int step_limit, const PpoConfig& config, std::uint64_t seed);

}  // namespace hmagat::training
