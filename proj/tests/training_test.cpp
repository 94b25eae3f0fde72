#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hmagat/generate.hpp"
#include "hmagat/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmagat;
using mapf::Cell;
using mapf::Instance;
using training::Dataset;
using training::TrainConfig;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.hidden = 16;
  c.obs_radius = 2;
  c.conv1_channels = 4;
  c.conv2_channels = 4;
  c.edge_hidden = 4;
  c.temp_hidden = 8;
  return c;
}

Instance line_instance(int length, Cell start, Cell goal) {
  Instance inst{mapf::GridMap(length, 1), {start}, {goal}};
  inst.validate();
  return inst;
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

struct CountingExpert {
  int calls = 0;
  experts::Expert expert() {
    return [this](const Instance& inst, int limit) {
      ++calls;
      return experts::pibt_expert(inst, limit, 0);
    };
  }
};

Dataset demo_dataset(int instances, int agents, std::uint64_t seed) {
  evalkit::GenerateOptions g;
  g.min_size = 6;
  g.max_size = 7;
  g.agents = agents;
  g.count = instances;
  g.seed = seed;
  return training::collect_dataset(evalkit::generate_instances(g), experts::make_pibt_expert(seed), {});
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  return idx;
}

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.delta_buf, 1.2);
  EXPECT_EQ(c.stride, 16);
  EXPECT_EQ(c.expert_call_cap, 30);
  EXPECT_EQ(c.quality_ratio, 1);
  EXPECT_EQ(c.pretrain_ratio, 3);
  EXPECT_EQ(c.post_train_epochs, 20);
  EXPECT_DOUBLE_EQ(c.success_threshold, 0.8);
  EXPECT_DOUBLE_EQ(c.val_fraction, 0.1);
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.delta_buf = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.stride = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.quality_ratio = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PpoConfig, DefaultsAndValidation) {
  const training::PpoConfig c;
  EXPECT_DOUBLE_EQ(c.clip, 0.2);
  EXPECT_DOUBLE_EQ(c.gamma, 0.99);
  EXPECT_DOUBLE_EQ(c.lambda, 0.95);
  EXPECT_DOUBLE_EQ(c.lr, 3e-4);
  EXPECT_EQ(c.batch_size, 64);
  EXPECT_NO_THROW(c.validate());
  for (auto edit : {+[](training::PpoConfig& p) { p.clip = 1.0; }, +[](training::PpoConfig& p) { p.clip = 0.0; },
                    +[](training::PpoConfig& p) { p.gamma = 0.0; }, +[](training::PpoConfig& p) { p.lambda = 1.5; }}) {
    auto bad = c;
    edit(bad);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
  }
}

TEST(AdamW, MatchesScalarRecurrence) {
  model::ModelParams params = model::ModelParams::zeros(small_config());
  params.at("dec.fc2.b") << 0.5, -1.0, 2.0, 0.0, 3.0;
  training::AdamW opt({0.05, 0.9, 0.999, 1e-8, 0.1});
  std::vector<double> p = {0.5, -1.0, 2.0, 0.0, 3.0}, m(5, 0.0), v(5, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int t = 1; t <= 6; ++t) {
    Eigen::MatrixXd g(1, 5);
    for (int k = 0; k < 5; ++k) g(0, k) = normal(rng);
    opt.step(params, {{"dec.fc2.b", g}});
    for (int k = 0; k < 5; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g(0, k);
      v[k] = 0.999 * v[k] + 0.001 * g(0, k) * g(0, k);
      const double mhat = m[k] / (1 - std::pow(0.9, t));
      const double vhat = v[k] / (1 - std::pow(0.999, t));
      p[k] -= 0.05 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.1 * p[k]);
    }
  }
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(params.at("dec.fc2.b")(0, k), p[k], 1e-12);
  EXPECT_EQ(opt.steps(), 6);
}

TEST(Dataset, OneSamplePerExpertStep) {
  const auto inst = line_instance(5, {0, 0}, {3, 0});
  const Dataset d = training::collect_dataset({inst}, experts::make_pibt_expert(), {});
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.expert_soc, std::vector<long long>{3});
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(d.samples[t].timestep, t);
    EXPECT_EQ(d.samples[t].actions[0], mapf::Action::kRight);
  }
  EXPECT_TRUE(training::collect_dataset({}, experts::make_pibt_expert(), {}).empty());
}

TEST(Dataset, UnsolvableInstancesAreSkipped) {
  Instance blocked{testutil::parse_rows({".@."}), {{0, 0}}, {{2, 0}}};
  const auto ok = line_instance(4, {0, 0}, {1, 0});
  const Dataset d = training::collect_dataset({blocked, ok}, experts::make_pibt_expert(), {16});
  EXPECT_EQ(d.skipped, 1);
  EXPECT_EQ(d.instances.size(), 1u);
  EXPECT_EQ(d.size(), 1u);
}

TEST(Dataset, BinaryRoundTrip) {
  const Dataset d = demo_dataset(4, 3, 2);
  ASSERT_FALSE(d.empty());
  const std::string bytes = training::serialize_dataset(d, 3);
  const Dataset back = training::parse_dataset(bytes, 3);
  EXPECT_EQ(back.instances, d.instances);
  EXPECT_EQ(back.expert_soc, d.expert_soc);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    EXPECT_EQ(back.samples[k].config, d.samples[k].config);
    EXPECT_EQ(back.samples[k].actions, d.samples[k].actions);
    EXPECT_EQ(back.samples[k].timestep, d.samples[k].timestep);
  }
  EXPECT_EQ(training::serialize_dataset(back, 3), bytes);

  EXPECT_THROW(training::parse_dataset(bytes, 2), std::runtime_error);
  std::string tampered = bytes;
  tampered[tampered.size() - 1] ^= 1;
  EXPECT_THROW(training::parse_dataset(tampered, 3), std::runtime_error);
  EXPECT_THROW(training::parse_dataset(bytes.substr(0, bytes.size() - 3), 3), std::runtime_error);
}

TEST(Split, DefaultHoldsOutTenPercent) {
  std::vector<std::size_t> train, val;
  training::split_samples(200, 0.1, 5, train, val);
  EXPECT_EQ(val.size(), 20u);
  EXPECT_EQ(train.size(), 180u);
  std::vector<std::size_t> all = train;
  all.insert(all.end(), val.begin(), val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < all.size(); ++k) EXPECT_EQ(all[k], k);
}

TEST(IlEpoch, UniformLogitsGiveLogFiveLoss) {
  const Dataset d = demo_dataset(2, 3, 3);
  auto params = model::ModelParams::initialise(small_config(), 3);
  params.at("dec.fc2.w").setZero();
  params.at("dec.fc2.b").setZero();
  training::SampleCache cache(params.config());
  cache.sync(d);
  EXPECT_NEAR(training::evaluate_samples(params, d, cache, all_indices(d)).loss, std::log(5.0), 1e-12);
}

TEST(IlEpoch, ZeroLearningRateLeavesParamsAndLoss) {
  const Dataset d = demo_dataset(3, 3, 4);
  auto params = model::ModelParams::initialise(small_config(), 4);
  const auto initial = params;
  TrainConfig config;
  config.batch_size = 4;
  training::AdamW opt({0.0, 0.9, 0.999, 1e-8, 0.01});
  training::SampleCache cache(params.config());
  std::mt19937_64 rng(1);
  const auto first = training::il_epoch(params, opt, d, cache, all_indices(d), {}, config, rng);
  const auto second = training::il_epoch(params, opt, d, cache, all_indices(d), {}, config, rng);
  EXPECT_TRUE(model::identical(params, initial));
  EXPECT_NEAR(first.loss, second.loss, 1e-12);
  EXPECT_TRUE(std::isfinite(first.loss));
  EXPECT_EQ(first.val_accuracy, -1.0);
}

TEST(IlEpoch, OverfitsTenSamples) {
  Dataset full = demo_dataset(4, 4, 5);
  Dataset d;
  d.instances = full.instances;
  d.expert_soc = full.expert_soc;
  d.samples.assign(full.samples.begin(), full.samples.begin() + 10);
  auto params = model::ModelParams::initialise(model::ModelConfig{}, 5);
  TrainConfig config;
  config.batch_size = 10;
  training::AdamW opt({3e-3, 0.9, 0.999, 1e-8, 0.0});
  training::SampleCache cache(params.config());
  std::mt19937_64 rng(2);
  const auto idx = all_indices(d);
  cache.sync(d);
  const double initial = training::evaluate_samples(params, d, cache, idx).loss;
  for (int step = 0; step < 200; ++step) training::il_epoch(params, opt, d, cache, idx, {}, config, rng);
  const auto final_eval = training::evaluate_samples(params, d, cache, idx);
  EXPECT_LT(final_eval.loss, initial);
  EXPECT_GE(final_eval.accuracy, 0.99);
}

TEST(IlEpoch, ReproducibleUnderSeed) {
  const Dataset d = demo_dataset(3, 3, 6);
  auto run = [&] {
    auto params = model::ModelParams::initialise(small_config(), 6);
    TrainConfig config;
    config.batch_size = 3;
    training::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
    training::SampleCache cache(params.config(), 6);
    std::mt19937_64 rng(6);
    for (int e = 0; e < 3; ++e) training::il_epoch(params, opt, d, cache, all_indices(d), {}, config, rng);
    return params;
  };
  EXPECT_TRUE(model::identical(run(), run()));
}

TEST(IlEpoch, NonFiniteLossAborts) {
  const Dataset d = demo_dataset(2, 3, 7);
  auto params = model::ModelParams::initialise(small_config(), 7);
  params.at("dec.fc2.b")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  training::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
  training::SampleCache cache(params.config());
  std::mt19937_64 rng(1);
  try {
    training::il_epoch(params, opt, d, cache, all_indices(d), {}, TrainConfig{}, rng);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos);
  }
}

TEST(Dagger, PerfectPolicyLeavesDatasetUnchanged) {
  evalkit::GenerateOptions g;
  g.count = 10;
  g.seed = 8;
  const auto instances = evalkit::generate_instances(g);
  Dataset d = demo_dataset(2, 3, 8);
  const auto before = d.size();
  experts::PibtController perfect;
  const auto report = training::dagger_round(perfect, instances, experts::make_pibt_expert(), TrainConfig{}, d, 8);
  EXPECT_EQ(report.failures, 0);
  EXPECT_EQ(d.size(), before);
  EXPECT_DOUBLE_EQ(report.success_rate, 1.0);
}

TEST(Dagger, FailingPolicyGetsCorrectionsEverywhere) {
  evalkit::GenerateOptions g;
  g.count = 10;
  g.seed = 9;
  const auto instances = evalkit::generate_instances(g);
  Dataset d;
  experts::StayController stay;
  TrainConfig config;
  config.step_limit = 32;
  std::size_t last = 0;
  int with_corrections = 0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto report = training::dagger_round(stay, {instances[k]}, experts::make_pibt_expert(), config, d, k);
    EXPECT_GE(d.size(), last);
    if (d.size() > last) ++with_corrections;
    last = d.size();
    EXPECT_EQ(report.failures, 1);
  }
  EXPECT_EQ(with_corrections, 10);
}

TEST(Quality, TriggersOnlyAboveDeltaBuf) {
  const auto inst = line_instance(12, {0, 0}, {10, 0});
  const TrainConfig config;
  for (auto [delay, expect] : {std::pair{0, false}, {2, false}, {3, true}}) {
    DelayedController policy(delay);
    CountingExpert stub;
    Dataset d;
    const auto report = training::quality_improvement_round(policy, {inst}, {10}, stub.expert(), config, d, 0);
    EXPECT_EQ(report.triggered == 1, expect) << delay;
    EXPECT_EQ(stub.calls > 0, expect) << delay;
    EXPECT_EQ(d.empty(), !expect) << delay;
  }
}

TEST(Quality, ExtractsEveryStrideAndKeepsShorterSolutions) {
  const auto inst = line_instance(12, {0, 0}, {10, 0});
  DelayedController policy(40);
  CountingExpert stub;
  Dataset d;
  const auto report = training::quality_improvement_round(policy, {inst}, {10}, stub.expert(), TrainConfig{}, d, 0);
  const std::vector<std::pair<int, int>> expected{{0, 0}, {0, 16}, {0, 32}, {0, 48}};
  EXPECT_EQ(report.extractions, expected);
  EXPECT_EQ(stub.calls, 4);
  // Remaining model SoC 50, 34, 18, 2 against expert SoC 10, 10, 10, 2.
  EXPECT_EQ(report.added, 3);
  ASSERT_EQ(d.instances.size(), 3u);
  for (const auto& sub : d.instances) {
    EXPECT_EQ(sub.starts, inst.starts);
    EXPECT_EQ(sub.goals, inst.goals);
  }
}

TEST(Quality, RespectsCallCap) {
  const auto inst = line_instance(12, {0, 0}, {10, 0});
  const std::vector<Instance> instances(100, inst);
  DelayedController policy(40);
  CountingExpert stub;
  Dataset d;
  const auto report = training::quality_improvement_round(policy, instances, std::vector<long long>(100, 10),
                                                          stub.expert(), TrainConfig{}, d, 0);
  EXPECT_EQ(stub.calls, 30);
  EXPECT_EQ(report.expert_calls, 30);
}

TEST(PostTrain, MixedBatchRatio) {
  TrainConfig config;
  std::mt19937_64 rng(11);
  long long quality = 0, total = 0;
  for (int b = 0; b < 20000; ++b) {
    const auto batch = training::mixed_batch(100, 50, config, rng);
    ASSERT_EQ(batch.size(), 16u);
    for (const auto& [is_quality, idx] : batch) {
      quality += is_quality;
      ++total;
      EXPECT_LT(idx, is_quality ? 50u : 100u);
    }
  }
  EXPECT_NEAR(16.0 * quality / total, 4.0, 0.05);
  for (const auto& [is_quality, idx] : training::mixed_batch(100, 0, config, rng)) EXPECT_FALSE(is_quality);
}

TEST(PostTrain, EmptyQualitySetDegenerates) {
  Dataset pretrain = demo_dataset(3, 3, 12);
  Dataset quality;
  auto params = model::ModelParams::initialise(small_config(), 12);
  TrainConfig config;
  config.post_train_epochs = 2;
  config.expert_call_cap = 0;
  config.batch_size = 8;
  training::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
  std::mt19937_64 rng(12);
  const auto report = training::post_train(params, opt, pretrain, quality, pretrain.instances, pretrain.expert_soc,
                                           experts::make_pibt_expert(), config, rng);
  EXPECT_TRUE(report.degenerate);
  EXPECT_EQ(report.epochs.size(), 2u);
  EXPECT_GT(opt.steps(), 0);
}

TEST(Temperature, TauRange) {
  EXPECT_DOUBLE_EQ(training::tau_from_logit(0.0), 0.75);
  std::mt19937_64 rng(13);
  std::cauchy_distribution<double> wide(0.0, 50.0);
  for (int k = 0; k < 1000000; ++k) {
    const double tau = training::tau_from_logit(wide(rng));
    ASSERT_GE(tau, 0.5);
    ASSERT_LE(tau, 1.0);
  }
  for (double z : {-1e308, -1e4, 1e4, 1e308}) {
    EXPECT_GE(training::tau_from_logit(z), 0.5);
    EXPECT_LE(training::tau_from_logit(z), 1.0);
  }
}

TEST(Temperature, ForwardOutputs) {
  auto params = model::ModelParams::initialise(small_config(), 14);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal(0.0, 3.0);
  const Eigen::MatrixXd f = Eigen::MatrixXd::NullaryExpr(7, model::kTemperatureInputs, [&] { return normal(rng); });
  const auto out = training::temperature_forward(params, f);
  ASSERT_EQ(out.tau.size(), 7);
  for (int i = 0; i < 7; ++i) {
    EXPECT_GE(out.tau[i], 0.5);
    EXPECT_LE(out.tau[i], 1.0);
    EXPECT_DOUBLE_EQ(out.tau[i], training::tau_from_logit(out.mean[i]));
  }
  EXPECT_NEAR(out.value, out.critic.mean(), 1e-15);
  EXPECT_DOUBLE_EQ(out.log_std, std::log(0.5));
}

TEST(Temperature, FeaturesCountNeighbourhood) {
  Instance inst{testutil::parse_rows({".....", ".@...", "....."}), {{0, 0}, {1, 2}, {4, 2}}, {{4, 0}, {0, 2}, {4, 1}}};
  const auto dist = mapf::goal_distances(inst);
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Constant(3, 5, 0.25);
  const auto f = training::temperature_features(inst, dist, inst.starts, logits, 1);
  // Agent 0 at a corner: 5 off-map cells plus the obstacle at (1, 1); no neighbour within one cell.
  EXPECT_DOUBLE_EQ(f(0, 5), 0.0);
  EXPECT_DOUBLE_EQ(f(0, 6), 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(f(0, 7), std::min(1.0, 4.0 / 2.0));
  EXPECT_DOUBLE_EQ(f(0, 8), 1.0);
  EXPECT_DOUBLE_EQ(f(0, 9), 0.0);
  EXPECT_DOUBLE_EQ(f(2, 7), 0.5);
  EXPECT_DOUBLE_EQ(f(1, 0), 0.25);
}

TEST(Ppo, GaeMatchesClosedForm) {
  training::PpoConfig config;
  const int T = 4, n = 2;
  std::vector<training::TemperatureStep> steps(T);
  std::mt19937_64 rng(15);
  std::normal_distribution<double> normal;
  for (auto& s : steps) {
    s.features = Eigen::MatrixXd::NullaryExpr(n, 3, [&] { return normal(rng); });
    s.z = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
    s.log_prob = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
    s.values = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  }
  for (bool success : {true, false}) {
    training::PpoBuffer buffer;
    training::append_episode(buffer, steps, success, config);
    ASSERT_EQ(buffer.size(), static_cast<std::size_t>(T * n));
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        double adv = 0.0;
        for (int l = 0; t + l < T; ++l) {
          const int u = t + l;
          const double r = u == T - 1 ? (success ? 1.0 : -1.0) : 0.0;
          const double next = u + 1 < T ? steps[u + 1].values[i] : 0.0;
          adv += std::pow(config.gamma * config.lambda, l) * (r + config.gamma * next - steps[u].values[i]);
        }
        const int row = t * n + i;
        EXPECT_NEAR(buffer.advantage[row], adv, 1e-12);
        EXPECT_NEAR(buffer.returns[row], adv + steps[t].values[i], 1e-12);
        EXPECT_EQ(buffer.z[row], steps[t].z[i]);
      }
    }
  }
}

TEST(Ppo, ClippedSurrogateGradient) {
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(1.1, 2.0, 0.2), 2.2);
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(1.3, 2.0, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(0.5, 2.0, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(0.7, -1.0, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(1.5, -1.0, 0.2), -1.5);
  EXPECT_DOUBLE_EQ(training::clipped_surrogate_grad(0.9, -1.0, 0.2), -0.9);
}

TEST(Ppo, ZeroAdvantageIsNoOp) {
  auto params = model::ModelParams::initialise(small_config(), 16);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> normal;
  training::PpoBuffer buffer;
  buffer.features = Eigen::MatrixXd::NullaryExpr(150, model::kTemperatureInputs, [&] { return normal(rng); });
  buffer.z = Eigen::VectorXd::NullaryExpr(150, [&] { return normal(rng); });
  buffer.log_prob = Eigen::VectorXd::NullaryExpr(150, [&] { return normal(rng); });
  buffer.advantage = Eigen::VectorXd::Zero(150);
  buffer.returns = training::temperature_forward(params, buffer.features).critic;
  const auto before = params;
  training::AdamW opt({3e-4, 0.9, 0.999, 1e-8, 0.0});
  const auto stats = training::ppo_update(params, opt, buffer, training::PpoConfig{}, rng);
  EXPECT_GT(stats.minibatches, 0);
  for (const auto& [name, value] : before.blobs()) {
    EXPECT_LE((params.at(name) - value).cwiseAbs().maxCoeff(), 1e-9) << name;
  }
  EXPECT_LT(stats.value_loss, 1e-20);
  training::PpoBuffer empty;
  const auto none = training::ppo_update(params, opt, empty, training::PpoConfig{}, rng);
  EXPECT_EQ(none.minibatches, 0);
}

TEST(Ppo, PositiveAdvantageMovesMeanTowardsAction) {
  auto params = model::ModelParams::initialise(small_config(), 17);
  const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(1, model::kTemperatureInputs, 0.3);
  const auto out = training::temperature_forward(params, f);
  training::PpoBuffer buffer;
  buffer.features = f;
  buffer.z = Eigen::VectorXd::Constant(1, out.mean[0] + 0.4);
  buffer.log_prob = Eigen::VectorXd::Constant(1, training::gaussian_log_prob(buffer.z[0], out.mean[0], out.log_std));
  buffer.advantage = Eigen::VectorXd::Constant(1, 1.0);
  buffer.returns = out.critic;
  training::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
  std::mt19937_64 rng(17);
  training::PpoConfig config;
  config.epochs = 1;
  training::ppo_update(params, opt, buffer, config, rng);
  EXPECT_GT(training::temperature_forward(params, f).mean[0], out.mean[0]);
}

TEST(Ppo, GaussianLogProb) {
  EXPECT_NEAR(training::gaussian_log_prob(1.0, 1.0, 0.0), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(training::gaussian_log_prob(2.0, 0.0, std::log(2.0)),
              -0.5 - std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi), 1e-15);
}

TEST(Ppo, TrainTemperatureSmoke) {
  evalkit::GenerateOptions g;
  g.count = 3;
  g.seed = 18;
  auto params = model::ModelParams::initialise(small_config(), 18);
  const auto policy_before = params;
  training::PpoConfig config;
  config.batch_size = 16;
  const auto log = training::train_temperature(params, evalkit::generate_instances(g), 2, 32, config, 18);
  ASSERT_EQ(log.success_rate.size(), 2u);
  for (double s : log.success_rate) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  for (const auto& [name, value] : policy_before.blobs()) {
    if (!model::is_temperature_param(name)) {
      EXPECT_EQ(params.at(name), value) << name;
    }
  }
}

TEST(ModelController, ShieldedRolloutsAreConflictFree) {
  auto params = model::ModelParams::initialise(small_config(), 19);
  std::mt19937_64 rng(19);
  for (auto mode : {training::TemperatureMode::kFixed, training::TemperatureMode::kActorMean,
                    training::TemperatureMode::kActorSample}) {
    training::ModelController controller(params, mode, 1.0);
    for (int k = 0; k < 5; ++k) {
      const auto inst = testutil::random_instance(8, 8, 0.2, 5, rng);
      const auto run = experts::rollout(controller, inst, 48, k);
      EXPECT_TRUE(oracle::conflict_free(inst.map, run.trajectory));
      for (const auto& step : controller.temperature_steps()) {
        for (Eigen::Index i = 0; i < step.z.size(); ++i) {
          const double tau = training::tau_from_logit(step.z[i]);
          EXPECT_GE(tau, 0.5);
          EXPECT_LE(tau, 1.0);
        }
      }
    }
  }
  EXPECT_THROW(training::ModelController(params, training::TemperatureMode::kFixed, 0.3), std::invalid_argument);
}
