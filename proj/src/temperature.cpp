#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "hmagat/ad/ops.hpp"
#include "hmagat/training.hpp"

namespace hmagat::training {

namespace {

constexpr double kGradientFloor = 1e-12;

ad::Var mlp(const model::BoundParams& p, const std::string& prefix, const ad::Var& x) {
  ad::Var h = ad::relu(ad::add_row(ad::matmul(x, p(prefix + ".fc1.w")), p(prefix + ".fc1.b")));
  return ad::add_row(ad::matmul(h, p(prefix + ".fc2.w")), p(prefix + ".fc2.b"));
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0) || !(gamma > 0.0 && gamma <= 1.0) || !(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("PpoConfig: clip in (0, 1), gamma and lambda in (0, 1]");
  }
  if (!(lr > 0.0) || batch_size < 1 || epochs < 1 || value_coef < 0.0) {
    throw std::invalid_argument("PpoConfig: bad optimiser settings");
  }
}

Eigen::MatrixXd temperature_features(const Instance& instance, const std::vector<mapf::DistanceField>& goal_dist,
                                     const Configuration& config, const Eigen::MatrixXd& logits, int obs_radius) {
  const int n = static_cast<int>(config.size());
  const double side = 2.0 * obs_radius + 1.0;
  const double area = side * side;
  const double scale = 2.0 * obs_radius;
  Eigen::MatrixXd f(n, model::kTemperatureInputs);
  for (int i = 0; i < n; ++i) {
    const mapf::Cell c = config[i];
    int agents = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i && std::abs(config[j].x - c.x) <= obs_radius && std::abs(config[j].y - c.y) <= obs_radius) ++agents;
    }
    int obstacles = 0;
    for (int dy = -obs_radius; dy <= obs_radius; ++dy) {
      for (int dx = -obs_radius; dx <= obs_radius; ++dx) {
        if (instance.map.is_obstacle({c.x + dx, c.y + dy})) ++obstacles;
      }
    }
    const int d = goal_dist[i](c);
    const double dist = d == mapf::kUnreachable ? 1.0 : std::min(1.0, d / scale);
    const mapf::Cell g = instance.goals[i];
    f.row(i).head(mapf::kNumActions) = logits.row(i);
    f(i, 5) = agents / area;
    f(i, 6) = obstacles / area;
    f(i, 7) = dist;
    f(i, 8) = std::clamp((g.x - c.x) / scale, -1.0, 1.0);
    f(i, 9) = std::clamp((g.y - c.y) / scale, -1.0, 1.0);
  }
  return f;
}

double tau_from_logit(double z) { return 0.5 + 0.5 / (1.0 + std::exp(-z)); }

double gaussian_log_prob(double z, double mean, double log_std) {
  const double u = (z - mean) * std::exp(-log_std);
  return -0.5 * u * u - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

TemperatureOutput temperature_forward(const ModelParams& params, const Eigen::MatrixXd& features) {
  ad::Tape tape;
  model::BoundParams p(tape, params, false);
  const ad::Var x = tape.constant(features);
  TemperatureOutput out;
  out.mean = mlp(p, "temp.actor", x).value().col(0);
  out.critic = mlp(p, "temp.critic", x).value().col(0);
  out.tau = out.mean.unaryExpr([](double z) { return tau_from_logit(z); });
  out.value = out.critic.size() > 0 ? out.critic.mean() : 0.0;
  out.log_std = params.at("temp.actor.log_std")(0, 0);
  return out;
}

void append_episode(PpoBuffer& buffer, const std::vector<TemperatureStep>& steps, bool success,
                    const PpoConfig& config) {
  if (steps.empty()) return;
  const auto T = static_cast<Eigen::Index>(steps.size());
  const Eigen::Index n = steps.front().z.size();
  const Eigen::Index cols = steps.front().features.cols();
  const Eigen::Index start = static_cast<Eigen::Index>(buffer.size());
  const Eigen::Index total = start + T * n;
  buffer.features.conservativeResize(total, cols);
  buffer.z.conservativeResize(total);
  buffer.log_prob.conservativeResize(total);
  buffer.advantage.conservativeResize(total);
  buffer.returns.conservativeResize(total);
  const double terminal = success ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double next_adv = 0.0;
    double next_value = 0.0;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const TemperatureStep& s = steps[static_cast<std::size_t>(t)];
      const double reward = t == T - 1 ? terminal : 0.0;
      const double delta = reward + config.gamma * next_value - s.values[i];
      const double adv = delta + config.gamma * config.lambda * next_adv;
      const Eigen::Index row = start + t * n + i;
      buffer.features.row(row) = s.features.row(i);
      buffer.z[row] = s.z[i];
      buffer.log_prob[row] = s.log_prob[i];
      buffer.advantage[row] = adv;
      buffer.returns[row] = adv + s.values[i];
      next_adv = adv;
      next_value = s.values[i];
    }
  }
}

double clipped_surrogate_grad(double ratio, double advantage, double clip) {
  const bool active = (advantage > 0.0 && ratio < 1.0 + clip) || (advantage < 0.0 && ratio > 1.0 - clip);
  return active ? ratio * advantage : 0.0;
}

PpoStats ppo_update(ModelParams& params, AdamW& optimizer, const PpoBuffer& buffer, const PpoConfig& config,
                    std::mt19937_64& rng) {
  config.validate();
  PpoStats stats;
  if (buffer.size() == 0) return stats;
  std::vector<Eigen::Index> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto m = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd features(m, buffer.features.cols());
      Eigen::MatrixXd returns(m, 1);
      for (Eigen::Index k = 0; k < m; ++k) {
        features.row(k) = buffer.features.row(order[start + k]);
        returns(k, 0) = buffer.returns[order[start + k]];
      }

      ad::Tape tape;
      model::BoundParams p(tape, params, true);
      const ad::Var x = tape.constant(features);
      const ad::Var mean = mlp(p, "temp.actor", x);
      const ad::Var log_std = p("temp.actor.log_std");
      const double ls = log_std.value()(0, 0);
      const double var = std::exp(2.0 * ls);

      // Surrogate gradient w.r.t. mean and log_std, injected as linear terms on the tape.
      Eigen::MatrixXd g_mean(m, 1);
      double g_ls = 0.0;
      double policy_loss = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index row = order[start + k];
        const double mu = mean.value()(k, 0);
        const double z = buffer.z[row];
        const double a = buffer.advantage[row];
        const double ratio = std::exp(gaussian_log_prob(z, mu, ls) - buffer.log_prob[row]);
        const double clipped = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
        policy_loss -= std::min(ratio * a, clipped * a) / m;
        const double g = clipped_surrogate_grad(ratio, a, config.clip);
        g_mean(k, 0) = -(g / m) * (z - mu) / var;
        g_ls += -(g / m) * ((z - mu) * (z - mu) / var - 1.0);
      }
      Eigen::MatrixXd g_ls_m(1, 1);
      g_ls_m(0, 0) = g_ls;
      const ad::Var surrogate =
          ad::add(ad::sum(ad::hadamard(mean, tape.constant(g_mean))), ad::hadamard(log_std, tape.constant(g_ls_m)));
      const ad::Var diff = ad::sub(mlp(p, "temp.critic", x), tape.constant(returns));
      const ad::Var value_loss = ad::mean(ad::hadamard(diff, diff));
      const ad::Var total = ad::add(surrogate, ad::scale(value_loss, config.value_coef));
      tape.backward(total);

      // Adam rescales any nonzero gradient to a learning-rate sized step, so rounding residue at
      // the critic's fixed point is dropped rather than amplified.
      std::map<std::string, Eigen::MatrixXd> grads;
      for (auto& [name, g] : p.gradients()) {
        if (!model::is_temperature_param(name)) continue;
        g = (g.array().abs() <= kGradientFloor).select(0.0, g);
        grads.emplace(name, std::move(g));
      }
      optimizer.step(params, grads);
      stats.policy_loss += policy_loss;
      stats.value_loss += value_loss.value()(0, 0);
      ++stats.minibatches;
    }
  }
  stats.policy_loss /= stats.minibatches;
  stats.value_loss /= stats.minibatches;
  return stats;
}

TemperatureTrainLog train_temperature(ModelParams& params, const std::vector<Instance>& instances, int epochs,
                                      int step_limit, const PpoConfig& config, std::uint64_t seed) {
  config.validate();
  TemperatureTrainLog log;
  AdamW optimizer({config.lr, 0.9, 0.999, 1e-8, 0.0});
  std::mt19937_64 rng(seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    PpoBuffer buffer;
    int successes = 0;
    for (std::size_t k = 0; k < instances.size(); ++k) {
      ModelController controller(params, TemperatureMode::kActorSample);
      const experts::RolloutResult run =
          experts::rollout(controller, instances[k], step_limit, seed + 1000003ULL * epoch + k);
      if (run.success) ++successes;
      append_episode(buffer, controller.temperature_steps(), run.success, config);
    }
    log.success_rate.push_back(instances.empty() ? 0.0 : static_cast<double>(successes) / instances.size());
    log.updates.push_back(ppo_update(params, optimizer, buffer, config, rng));
  }
  return log;
}

}  // namespace hmagat::training
