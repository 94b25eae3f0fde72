#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hmagat/training.hpp"

namespace hmagat::training {

void TrainConfig::validate() const {
  if (!(delta_buf > 1.0)) throw std::invalid_argument("TrainConfig: delta_buf must exceed 1");
  if (stride < 1) throw std::invalid_argument("TrainConfig: stride must be >= 1");
  if (quality_ratio < 1 || pretrain_ratio < 1) throw std::invalid_argument("TrainConfig: mix ratios must be positive");
  if (batch_size < 1 || epochs < 0 || post_train_epochs < 0) throw std::invalid_argument("TrainConfig: bad sizes");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("TrainConfig: val_fraction in [0, 1)");
  if (expert_call_cap < 0 || step_limit < 1) throw std::invalid_argument("TrainConfig: bad limits");
  if (!(rollout_tau > 0.0)) throw std::invalid_argument("TrainConfig: rollout_tau must be positive");
}

void AdamW::step(ModelParams& params, const std::map<std::string, Eigen::MatrixXd>& grads) {
  ++t_;
  const Options& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Eigen::MatrixXd& p = params.at(name);
    auto [mit, m_new] = m_.try_emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    (void)m_new;
    (void)v_new;
    Eigen::MatrixXd& m = mit->second;
    Eigen::MatrixXd& v = vit->second;
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    p *= 1.0 - o.lr * o.weight_decay;
    p.array() -= o.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
  }
}

// ---------------------------------------------------------------------------

namespace {

struct Batch {
  Eigen::MatrixXd obs;
  model::GraphInput graph;
  std::vector<int> targets;
};

Batch assemble(const Dataset& dataset, const SampleCache& cache, const std::vector<std::size_t>& indices) {
  Batch b;
  std::vector<model::GraphInput> graphs;
  Eigen::Index rows = 0;
  for (std::size_t k : indices) rows += cache.observations(k).rows();
  if (!indices.empty()) b.obs.resize(rows, cache.observations(indices.front()).cols());
  Eigen::Index at = 0;
  for (std::size_t k : indices) {
    const Eigen::MatrixXd& o = cache.observations(k);
    b.obs.middleRows(at, o.rows()) = o;
    at += o.rows();
    graphs.push_back(cache.graph(k));
    for (Action a : dataset.samples[k].actions) b.targets.push_back(static_cast<int>(a));
  }
  b.graph = model::concat_graphs(graphs);
  return b;
}

int count_correct(const Eigen::MatrixXd& logits, const std::vector<int>& targets) {
  int correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best;
    logits.row(r).maxCoeff(&best);
    if (best == targets[static_cast<std::size_t>(r)]) ++correct;
  }
  return correct;
}

std::vector<mapf::Configuration> distinct_configs(std::vector<mapf::Configuration> configs) {
  std::vector<mapf::Configuration> out;
  for (auto& c : configs) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

BatchResult batch_gradients(const ModelParams& params, const Dataset& dataset, const SampleCache& cache,
                            const std::vector<std::size_t>& batch) {
  const Batch b = assemble(dataset, cache, batch);
  ad::Tape tape;
  model::BoundParams p(tape, params, true);
  ad::Var logits = model::policy_logits(p, tape.constant(b.obs), b.graph);
  ad::Var loss = ad::cross_entropy(logits, b.targets);
  tape.backward(loss);
  BatchResult r;
  r.loss = loss.value()(0, 0);
  r.agents = static_cast<int>(b.targets.size());
  r.correct = count_correct(logits.value(), b.targets);
  for (auto& [name, g] : p.gradients()) {
    if (!model::is_temperature_param(name)) r.grads.emplace(name, std::move(g));
  }
  return r;
}

Evaluation evaluate_samples(const ModelParams& params, const Dataset& dataset, const SampleCache& cache,
                            const std::vector<std::size_t>& indices) {
  Evaluation e;
  if (indices.empty()) return e;
  constexpr std::size_t kChunk = 64;
  double loss_sum = 0.0;
  int correct = 0, agents = 0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    std::vector<std::size_t> chunk(indices.begin() + start,
                                   indices.begin() + std::min(indices.size(), start + kChunk));
    const Batch b = assemble(dataset, cache, chunk);
    const model::PolicyOutput out = model::policy_forward(params, b.obs, b.graph);
    ad::Tape tape;
    const double loss = ad::cross_entropy(tape.constant(out.logits), b.targets).value()(0, 0);
    loss_sum += loss * static_cast<double>(b.targets.size());
    agents += static_cast<int>(b.targets.size());
    correct += count_correct(out.logits, b.targets);
  }
  e.loss = loss_sum / agents;
  e.accuracy = static_cast<double>(correct) / agents;
  return e;
}

void split_samples(std::size_t count, double val_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& validation) {
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  const auto val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(count)));
  validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(val));
  train.assign(all.begin() + static_cast<std::ptrdiff_t>(val), all.end());
  std::sort(validation.begin(), validation.end());
  std::sort(train.begin(), train.end());
}

EpochStats il_epoch(ModelParams& params, AdamW& optimizer, const Dataset& dataset, SampleCache& cache,
                    const std::vector<std::size_t>& train, const std::vector<std::size_t>& validation,
                    const TrainConfig& config, std::mt19937_64& rng) {
  if (train.empty()) throw std::invalid_argument("il_epoch: empty training set");
  cache.sync(dataset);
  std::vector<std::size_t> order = train;
  std::shuffle(order.begin(), order.end(), rng);
  EpochStats stats;
  double loss_sum = 0.0;
  int correct = 0, agents = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
    BatchResult r = batch_gradients(params, dataset, cache, batch);
    if (!std::isfinite(r.loss)) {
      std::ostringstream msg;
      msg << "il_epoch: non-finite loss at batch " << stats.batches << " (learning rate " << optimizer.options().lr
          << ")";
      throw std::runtime_error(msg.str());
    }
    optimizer.step(params, r.grads);
    loss_sum += r.loss * r.agents;
    correct += r.correct;
    agents += r.agents;
    ++stats.batches;
  }
  stats.loss = loss_sum / agents;
  stats.accuracy = static_cast<double>(correct) / agents;
  if (!validation.empty()) stats.val_accuracy = evaluate_samples(params, dataset, cache, validation).accuracy;
  return stats;
}

// ---------------------------------------------------------------------------

ModelController::ModelController(const ModelParams& params, TemperatureMode mode, double tau)
    : params_(&params), mode_(mode), tau_(tau) {
  if (mode == TemperatureMode::kFixed && (tau < 0.5 || tau > 1.0)) {
    throw std::invalid_argument("ModelController: temperature must lie in [0.5, 1.0]");
  }
}

void ModelController::reset(const Instance& instance, std::uint64_t seed) {
  instance_ = &instance;
  dist_ = mapf::goal_distances(instance);
  graphs_ = std::make_unique<model::GraphFactory>(params_->config(), instance.map, seed);
  state_ = experts::PibtState::initial(instance);
  rng_.seed(seed);
  steps_.clear();
}

std::vector<Action> ModelController::act(const Configuration& config, int timestep) {
  const int n = static_cast<int>(config.size());
  last_ = model::policy_forward(*params_, *instance_, dist_, config, *graphs_, timestep);
  std::vector<double> tau(n, tau_);
  if (mode_ != TemperatureMode::kFixed) {
    const Eigen::MatrixXd features =
        temperature_features(*instance_, dist_, config, last_.logits, params_->config().obs_radius);
    const TemperatureOutput t = temperature_forward(*params_, features);
    if (mode_ == TemperatureMode::kActorMean) {
      for (int i = 0; i < n; ++i) tau[i] = t.tau[i];
    } else {
      TemperatureStep step;
      step.features = features;
      step.z.resize(n);
      step.log_prob.resize(n);
      step.values = t.critic;
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int i = 0; i < n; ++i) {
        step.z[i] = t.mean[i] + std::exp(t.log_std) * normal(rng_);
        step.log_prob[i] = gaussian_log_prob(step.z[i], t.mean[i], t.log_std);
        tau[i] = tau_from_logit(step.z[i]);
      }
      steps_.push_back(std::move(step));
    }
  }
  state_.config = config;
  return experts::collision_shield(instance_->map, state_, last_.logits, tau, rng_);
}

// ---------------------------------------------------------------------------

DaggerReport dagger_round(experts::Controller& policy, const std::vector<Instance>& instances, const Expert& expert,
                          const TrainConfig& config, Dataset& dataset, std::uint64_t seed) {
  DaggerReport report;
  std::mt19937_64 rng(seed);
  const std::size_t before = dataset.size();
  int successes = 0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Instance& inst = instances[k];
    const experts::RolloutResult run = experts::rollout(policy, inst, config.step_limit, seed + k);
    ++report.rollouts;
    if (run.success) {
      ++successes;
      continue;
    }
    ++report.failures;
    const auto& configs = run.trajectory.configs;
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, configs.size() - 1)(rng);
    for (const Configuration& start : distinct_configs({configs.back(), configs[pick]})) {
      if (start == inst.goals) continue;
      Instance sub{inst.map, start, inst.goals};
      const experts::SolveResult fix = expert(sub, config.step_limit);
      if (!fix.success) {
        ++report.expert_failures;
        continue;
      }
      dataset.add_trajectory(sub, fix.trajectory, fix.soc);
      ++report.corrections;
    }
  }
  report.added_samples = dataset.size() - before;
  report.success_rate = instances.empty() ? 1.0 : static_cast<double>(successes) / instances.size();
  return report;
}

QualityReport quality_improvement_round(experts::Controller& policy, const std::vector<Instance>& instances,
                                        const std::vector<long long>& expert_soc, const Expert& expert,
                                        const TrainConfig& config, Dataset& dataset, std::uint64_t seed) {
  config.validate();
  if (expert_soc.size() != instances.size()) {
    throw std::invalid_argument("quality_improvement_round: one reference SoC per instance");
  }
  QualityReport report;
  for (std::size_t k = 0; k < instances.size() && report.expert_calls < config.expert_call_cap; ++k) {
    const Instance& inst = instances[k];
    const experts::RolloutResult run = experts::rollout(policy, inst, config.step_limit, seed + k);
    ++report.rollouts;
    if (!run.success || expert_soc[k] < 0) continue;
    if (!(static_cast<double>(run.soc) > config.delta_buf * static_cast<double>(expert_soc[k]))) continue;
    ++report.triggered;
    const auto& configs = run.trajectory.configs;
    const int length = run.trajectory.length();
    for (int t = 0; t < length; t += config.stride) {
      if (report.expert_calls >= config.expert_call_cap) break;
      Instance sub{inst.map, configs[t], inst.goals};
      mapf::Trajectory suffix;
      for (std::size_t s = static_cast<std::size_t>(t); s < configs.size(); ++s) suffix.push(configs[s]);
      const long long model_soc = mapf::soc_metrics(suffix, sub, config.step_limit).soc;
      ++report.expert_calls;
      report.extractions.emplace_back(static_cast<int>(k), t);
      const experts::SolveResult fix = expert(sub, config.step_limit);
      if (fix.success && config.delta_buf * static_cast<double>(fix.soc) < static_cast<double>(model_soc)) {
        dataset.add_trajectory(sub, fix.trajectory, fix.soc);
        ++report.added;
      }
    }
  }
  return report;
}

std::vector<std::pair<bool, std::size_t>> mixed_batch(std::size_t pretrain_size, std::size_t quality_size,
                                                      const TrainConfig& config, std::mt19937_64& rng) {
  if (pretrain_size == 0) throw std::invalid_argument("mixed_batch: empty pretrain set");
  const double q = static_cast<double>(config.quality_ratio) / (config.quality_ratio + config.pretrain_ratio);
  std::bernoulli_distribution pick_quality(quality_size > 0 ? q : 0.0);
  std::vector<std::pair<bool, std::size_t>> out;
  for (int k = 0; k < config.batch_size; ++k) {
    const bool quality = pick_quality(rng);
    const std::size_t size = quality ? quality_size : pretrain_size;
    out.emplace_back(quality, std::uniform_int_distribution<std::size_t>(0, size - 1)(rng));
  }
  return out;
}

PostTrainReport post_train(ModelParams& params, AdamW& optimizer, const Dataset& pretrain, Dataset& quality,
                           const std::vector<Instance>& instances, const std::vector<long long>& expert_soc,
                           const Expert& expert, const TrainConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (pretrain.empty()) throw std::invalid_argument("post_train: empty pretrain dataset");
  PostTrainReport report;
  // Combined view: pretrain samples first, then quality samples.
  Dataset merged = pretrain;
  const std::size_t p_size = pretrain.size();
  merged.append(quality);
  SampleCache cache(params.config(), config.seed);
  if (quality.empty()) {
    report.degenerate = true;
    std::cerr << "post_train: quality dataset is empty; training on pretrain samples only\n";
  }
  for (int epoch = 0; epoch < config.post_train_epochs; ++epoch) {
    cache.sync(merged);
    const std::size_t q_size = merged.size() - p_size;
    const std::size_t batches = (merged.size() + config.batch_size - 1) / config.batch_size;
    EpochStats stats;
    double loss_sum = 0.0;
    int correct = 0, agents = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> batch;
      for (const auto& [is_quality, idx] : mixed_batch(p_size, q_size, config, rng)) {
        batch.push_back(is_quality ? p_size + idx : idx);
      }
      BatchResult r = batch_gradients(params, merged, cache, batch);
      if (!std::isfinite(r.loss)) {
        throw std::runtime_error("post_train: non-finite loss (learning rate " +
                                 std::to_string(optimizer.options().lr) + ")");
      }
      optimizer.step(params, r.grads);
      loss_sum += r.loss * r.agents;
      correct += r.correct;
      agents += r.agents;
      ++stats.batches;
    }
    stats.loss = loss_sum / agents;
    stats.accuracy = static_cast<double>(correct) / agents;
    report.epochs.push_back(stats);

    ModelController controller(params, TemperatureMode::kFixed, config.rollout_tau);
    Dataset fresh;
    report.quality.push_back(quality_improvement_round(controller, instances, expert_soc, expert, config, fresh,
                                                       config.seed + 7919ULL * (epoch + 1)));
    quality.append(fresh);
    merged.append(fresh);
    if (!quality.empty()) report.degenerate = false;
  }
  return report;
}

PipelineLog train_imitation(ModelParams& params, Dataset& dataset, const Expert& expert, const TrainConfig& config,
                            const PipelineOptions& options) {
  config.validate();
  PipelineLog log;
  const std::vector<Instance> base(dataset.instances.begin(), dataset.instances.end());
  const std::vector<long long> base_soc(dataset.expert_soc.begin(), dataset.expert_soc.end());
  std::vector<std::size_t> train, validation;
  split_samples(dataset.size(), config.val_fraction, config.seed, train, validation);
  SampleCache cache(params.config(), config.seed);
  AdamW optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::size_t cursor = 0;
  bool quality_enabled = false;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats = il_epoch(params, optimizer, dataset, cache, train, validation, config, rng);
    log.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(epoch, stats);
    if (options.dagger_every <= 0 || (epoch + 1) % options.dagger_every != 0 || base.empty()) continue;

    std::vector<Instance> subset;
    std::vector<long long> subset_soc;
    const int take = std::min<int>(options.dagger_instances, static_cast<int>(base.size()));
    for (int k = 0; k < take; ++k) {
      subset.push_back(base[cursor % base.size()]);
      subset_soc.push_back(base_soc[cursor % base.size()]);
      ++cursor;
    }
    ModelController controller(params, TemperatureMode::kFixed, config.rollout_tau);
    const std::size_t before = dataset.size();
    const std::uint64_t round_seed = config.seed + 104729ULL * (epoch + 1);
    log.dagger.push_back(dagger_round(controller, subset, expert, config, dataset, round_seed));
    if (log.dagger.back().success_rate >= config.success_threshold) quality_enabled = true;
    if (quality_enabled) {
      log.quality.push_back(
          quality_improvement_round(controller, subset, subset_soc, expert, config, dataset, round_seed + 1));
    }
    for (std::size_t k = before; k < dataset.size(); ++k) train.push_back(k);
  }
  return log;
}

}  // namespace hmagat::training
