// Command-line front end: instance generation, training, evaluation, analysis and conversion.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hmagat/analysis.hpp"
#include "hmagat/benchmark.hpp"
#include "hmagat/experts.hpp"
#include "hmagat/generate.hpp"
#include "hmagat/model.hpp"
#include "hmagat/movingai.hpp"
#include "hmagat/render.hpp"
#include "hmagat/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hmagat;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Instance files (*.txt) of a directory in name order, or a single instance file.
std::vector<mapf::Instance> load_instances(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.emplace_back(path);
  }
  std::vector<mapf::Instance> out;
  for (const auto& f : files) out.push_back(mapf::load_instance(f.string()));
  if (out.empty()) throw std::runtime_error("no instances found at " + path);
  return out;
}

class RunDir {
 public:
  RunDir(const std::string& path, const json& config) : path_(path) {
    fs::create_directories(path_);
    write_file(path_ / "config.json", config.dump(2) + "\n");
    metrics_.open(path_ / "metrics.jsonl", std::ios::app);
  }
  void log(const json& record) {
    metrics_ << record.dump() << "\n";
    metrics_.flush();
    std::cout << record.dump() << "\n";
  }
  fs::path file(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
  std::ofstream metrics_;
};

struct ModelFlags {
  std::string kind = "hgnn";
  std::string strategy = "kmeans";
  int hidden = 64;
  int layers = 3;
  int obs_radius = 5;
  double comm_radius = 7.0;

  void add(CLI::App* app) {
    app->add_option("--layer", kind, "Communication layer: hgnn or gat")->check(CLI::IsMember({"hgnn", "gat"}));
    app->add_option("--strategy", strategy, "Hypergraph strategy: kmeans, lloyd or shortest");
    app->add_option("--hidden", hidden, "Feature width");
    app->add_option("--layers", layers, "Communication layers");
    app->add_option("--obs-radius", obs_radius, "Field-of-view radius");
    app->add_option("--comm-radius", comm_radius, "Communication radius");
  }
  model::ModelConfig config() const {
    model::ModelConfig c;
    c.kind = model::parse_layer_kind(kind);
    c.strategy = hypergen::parse_strategy(strategy);
    c.hidden = hidden;
    c.layers = layers;
    c.obs_radius = obs_radius;
    c.comm_radius = comm_radius;
    return c;
  }
  json to_json() const {
    return {{"layer", kind}, {"strategy", strategy}, {"hidden", hidden}, {"layers", layers},
            {"obs_radius", obs_radius}, {"comm_radius", comm_radius}};
  }
};

void add_train_flags(CLI::App* app, training::TrainConfig& c) {
  app->add_option("--epochs", c.epochs, "Imitation epochs");
  app->add_option("--batch-size", c.batch_size, "Samples per minibatch");
  app->add_option("--lr", c.lr, "Learning rate");
  app->add_option("--weight-decay", c.weight_decay, "AdamW weight decay");
  app->add_option("--val-fraction", c.val_fraction, "Validation share of samples");
  app->add_option("--delta-buf", c.delta_buf, "Quality trigger ratio");
  app->add_option("--stride", c.stride, "Sub-instance extraction stride");
  app->add_option("--expert-call-cap", c.expert_call_cap, "Expert calls per quality round");
  app->add_option("--quality-ratio", c.quality_ratio, "Quality share of the batch mix");
  app->add_option("--pretrain-ratio", c.pretrain_ratio, "Pretrain share of the batch mix");
  app->add_option("--success-threshold", c.success_threshold, "Success rate enabling quality rounds");
  app->add_option("--post-train-epochs", c.post_train_epochs, "Post-training epochs");
  app->add_option("--step-limit", c.step_limit, "Episode step limit");
  app->add_option("--rollout-tau", c.rollout_tau, "Sampling temperature during rollouts");
}

json train_config_json(const training::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"val_fraction", c.val_fraction},
          {"delta_buf", c.delta_buf},
          {"stride", c.stride},
          {"expert_call_cap", c.expert_call_cap},
          {"quality_ratio", c.quality_ratio},
          {"pretrain_ratio", c.pretrain_ratio},
          {"success_threshold", c.success_threshold},
          {"post_train_epochs", c.post_train_epochs},
          {"step_limit", c.step_limit},
          {"rollout_tau", c.rollout_tau},
          {"seed", c.seed}};
}

json epoch_json(int epoch, const training::EpochStats& s) {
  return {{"epoch", epoch}, {"loss", s.loss}, {"accuracy", s.accuracy}, {"val_accuracy", s.val_accuracy},
          {"batches", s.batches}};
}

json quality_json(const training::QualityReport& q) {
  return {{"rollouts", q.rollouts}, {"triggered", q.triggered}, {"expert_calls", q.expert_calls}, {"added", q.added}};
}

// Model controller that keeps the attention record of every step.
class RecordingController : public training::ModelController {
 public:
  using ModelController::ModelController;
  std::vector<mapf::Action> act(const mapf::Configuration& config, int timestep) override {
    auto actions = ModelController::act(config, timestep);
    records.push_back(last_output().attention);
    return actions;
  }
  std::vector<model::AttentionRecord> records;
};

experts::TieBreak parse_ties(const std::string& name) {
  return name == "ordered" ? experts::TieBreak::kActionOrder : experts::TieBreak::kRandom;
}

experts::Expert make_solver(const std::string& name, std::uint64_t seed) {
  if (name == "pibt") return experts::make_pibt_expert(seed);
  if (name == "joint") {
    return [](const mapf::Instance& inst, int) { return experts::joint_optimal(inst); };
  }
  throw std::invalid_argument("unknown solver: " + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypergraph attention policies for multi-agent pathfinding"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  // gen ---------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate instances");
  evalkit::GenerateOptions gen_opts;
  std::string gen_kind = "random", gen_out = "instances";
  gen->add_option("--kind", gen_kind, "random, maze, room or mix (20% random, 80% maze)");
  gen->add_option("--min-size", gen_opts.min_size);
  gen->add_option("--max-size", gen_opts.max_size);
  gen->add_option("--agents", gen_opts.agents);
  gen->add_option("--density-min", gen_opts.density_min);
  gen->add_option("--density-max", gen_opts.density_max);
  gen->add_option("--count", gen_opts.count);
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", seed);

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Imitation learning with online expert phases");
  training::TrainConfig train_cfg;
  ModelFlags model_flags;
  training::PipelineOptions pipeline;
  std::string train_instances, run_dir = "run";
  train->add_option("--instances", train_instances, "Instance file or directory")->required();
  train->add_option("--run-dir", run_dir);
  train->add_option("--dagger-every", pipeline.dagger_every);
  train->add_option("--dagger-instances", pipeline.dagger_instances);
  add_train_flags(train, train_cfg);
  model_flags.add(train);
  std::string expert_ties = "random";
  auto add_ties_flag = [&](CLI::App* cmd) {
    cmd->add_option("--expert-ties", expert_ties, "Demonstration tie-break: random or ordered")
        ->check(CLI::IsMember({"random", "ordered"}));
  };
  add_ties_flag(train);
  train->add_option("--seed", seed);

  // posttrain ---------------------------------------------------------------
  auto* post = app.add_subcommand("posttrain", "Post-training on expert-improved sub-instances");
  std::string checkpoint, post_instances;
  post->add_option("--checkpoint", checkpoint)->required();
  post->add_option("--instances", post_instances)->required();
  post->add_option("--run-dir", run_dir);
  add_train_flags(post, train_cfg);
  add_ties_flag(post);
  post->add_option("--seed", seed);

  // temp-train --------------------------------------------------------------
  auto* temp = app.add_subcommand("temp-train", "Actor-critic training of the sampling temperature");
  training::PpoConfig ppo;
  int temp_epochs = 10, temp_steps = 256;
  std::string temp_instances;
  temp->add_option("--checkpoint", checkpoint)->required();
  temp->add_option("--instances", temp_instances)->required();
  temp->add_option("--run-dir", run_dir);
  temp->add_option("--epochs", temp_epochs);
  temp->add_option("--step-limit", temp_steps);
  temp->add_option("--clip", ppo.clip);
  temp->add_option("--gamma", ppo.gamma);
  temp->add_option("--lambda", ppo.lambda);
  temp->add_option("--lr", ppo.lr);
  temp->add_option("--batch-size", ppo.batch_size);
  temp->add_option("--ppo-epochs", ppo.epochs);
  temp->add_option("--value-coef", ppo.value_coef);
  temp->add_option("--seed", seed);

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Benchmark a model or solver");
  evalkit::EvalOptions eval_opts;
  std::string eval_instances, solver, temperature = "fixed", json_out, baseline = "pibt";
  double tau = 1.0;
  eval->add_option("--instances", eval_instances)->required();
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint");
  eval->add_option("--solver", solver, "pibt, joint or stay instead of a model");
  eval->add_option("--baseline", baseline, "Rel. SoC reference: pibt or joint")->check(CLI::IsMember({"pibt", "joint"}));
  eval->add_option("--temperature", temperature, "fixed or actor")->check(CLI::IsMember({"fixed", "actor"}));
  eval->add_option("--tau", tau, "Fixed sampling temperature");
  eval->add_option("--step-limit", eval_opts.step_limit);
  eval->add_option("--time-limit", eval_opts.time_limit);
  eval->add_option("--map-name", eval_opts.map);
  eval->add_option("--workers", eval_opts.workers);
  eval->add_option("--json", json_out, "Write raw rows and aggregates as JSON");
  eval->add_option("--seed", seed);

  // analyze -----------------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Attention and failure analyses");
  std::string analysis, analyze_instances;
  int layer = -1, analyze_steps = 256;
  analyze->add_option("what", analysis, "entropy, cv, shapley or failures")
      ->required()
      ->check(CLI::IsMember({"entropy", "cv", "shapley", "failures"}));
  analyze->add_option("--checkpoint", checkpoint)->required();
  analyze->add_option("--instances", analyze_instances, "Instances for entropy and failures");
  analyze->add_option("--layer", layer, "Entropy layer; -1 pools all layers");
  analyze->add_option("--step-limit", analyze_steps);
  analyze->add_option("--seed", seed);

  // render ------------------------------------------------------------------
  auto* render = app.add_subcommand("render", "Draw an instance as SVG");
  std::string render_instance, render_out = "instance.svg", scenario;
  bool show_colouring = false, show_attention = false;
  render->add_option("--instance", render_instance, "Instance file");
  render->add_option("--scenario", scenario, "dilution or group_interaction")
      ->check(CLI::IsMember({"dilution", "group_interaction"}));
  render->add_option("--checkpoint", checkpoint, "Roll out this model and draw its paths");
  render->add_flag("--colouring", show_colouring, "Overlay the k-means colouring");
  render->add_flag("--attention", show_attention, "Overlay first-layer attention (needs --checkpoint)");
  render->add_option("--out", render_out);
  render->add_option("--seed", seed);

  // convert -----------------------------------------------------------------
  auto* convert = app.add_subcommand("convert", "MovingAI <-> internal instance format");
  std::string map_file, scen_file, convert_instance, convert_out = "converted";
  std::vector<int> agent_counts;
  convert->add_option("--map", map_file, "MovingAI .map file");
  convert->add_option("--scen", scen_file, "MovingAI .scen file");
  convert->add_option("--agents", agent_counts, "Agent-count prefixes to extract");
  convert->add_option("--instance", convert_instance, "Internal instance to export");
  convert->add_option("--out", convert_out, "Output directory");
  convert->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_opts.seed = seed;
      std::vector<mapf::Instance> instances;
      if (gen_kind == "mix") {
        instances = evalkit::generate_training_mix(gen_opts);
      } else {
        gen_opts.kind = evalkit::parse_map_kind(gen_kind);
        instances = evalkit::generate_instances(gen_opts);
      }
      fs::create_directories(gen_out);
      for (std::size_t k = 0; k < instances.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "instance_%05zu.txt", k);
        mapf::save_instance(instances[k], (fs::path(gen_out) / name).string());
      }
      std::cout << "wrote " << instances.size() << " instances to " << gen_out << "\n";
      return 0;
    }

    if (*train) {
      train_cfg.seed = seed;
      train_cfg.validate();
      const model::ModelConfig mc = model_flags.config();
      RunDir run(run_dir, {{"command", "train"},
                           {"instances", train_instances},
                           {"model", model_flags.to_json()},
                           {"train", train_config_json(train_cfg)},
                           {"dagger_every", pipeline.dagger_every},
                           {"dagger_instances", pipeline.dagger_instances}});
      const auto instances = load_instances(train_instances);
      const experts::Expert expert = experts::make_pibt_expert(seed, parse_ties(expert_ties));
      training::Dataset data = training::collect_dataset(instances, expert, {train_cfg.step_limit});
      run.log({{"dataset_samples", data.size()}, {"skipped_instances", data.skipped}});
      model::ModelParams params = model::ModelParams::initialise(mc, seed);
      run.log({{"parameters", params.count()}, {"policy_parameters", params.count() - params.count("temp.")}});
      pipeline.on_epoch = [&](int epoch, const training::EpochStats& s) { run.log(epoch_json(epoch, s)); };
      const training::PipelineLog log = training::train_imitation(params, data, expert, train_cfg, pipeline);
      for (const auto& d : log.dagger) {
        run.log({{"dagger_success_rate", d.success_rate}, {"dagger_corrections", d.corrections}});
      }
      for (const auto& q : log.quality) run.log({{"quality", quality_json(q)}});
      model::save_checkpoint(params, run.file("model.ckpt").string());
      training::save_dataset(data, mc.obs_radius, run.file("dataset.bin").string());
      return 0;
    }

    if (*post) {
      train_cfg.seed = seed;
      train_cfg.validate();
      RunDir run(run_dir, {{"command", "posttrain"},
                           {"checkpoint", checkpoint},
                           {"instances", post_instances},
                           {"train", train_config_json(train_cfg)}});
      model::ModelParams params = model::load_checkpoint(checkpoint);
      const auto instances = load_instances(post_instances);
      const experts::Expert expert = experts::make_pibt_expert(seed, parse_ties(expert_ties));
      const training::Dataset pretrain = training::collect_dataset(instances, expert, {train_cfg.step_limit});
      training::Dataset quality;
      training::AdamW opt({train_cfg.lr, 0.9, 0.999, 1e-8, train_cfg.weight_decay});
      std::mt19937_64 rng(seed);
      const training::PostTrainReport report = training::post_train(
          params, opt, pretrain, quality, pretrain.instances, pretrain.expert_soc, expert, train_cfg, rng);
      for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        json rec = epoch_json(static_cast<int>(e), report.epochs[e]);
        rec["quality"] = quality_json(report.quality[e]);
        run.log(rec);
      }
      run.log({{"quality_samples", quality.size()}, {"degenerate", report.degenerate}});
      model::save_checkpoint(params, run.file("model.ckpt").string());
      return 0;
    }

    if (*temp) {
      ppo.validate();
      RunDir run(run_dir, {{"command", "temp-train"},
                           {"checkpoint", checkpoint},
                           {"instances", temp_instances},
                           {"epochs", temp_epochs},
                           {"step_limit", temp_steps},
                           {"ppo",
                            {{"clip", ppo.clip},
                             {"gamma", ppo.gamma},
                             {"lambda", ppo.lambda},
                             {"lr", ppo.lr},
                             {"batch_size", ppo.batch_size},
                             {"epochs", ppo.epochs},
                             {"value_coef", ppo.value_coef}}},
                           {"seed", seed}});
      model::ModelParams params = model::load_checkpoint(checkpoint);
      const auto instances = load_instances(temp_instances);
      const training::TemperatureTrainLog log =
          training::train_temperature(params, instances, temp_epochs, temp_steps, ppo, seed);
      for (std::size_t e = 0; e < log.updates.size(); ++e) {
        run.log({{"epoch", e},
                 {"success_rate", log.success_rate[e]},
                 {"policy_loss", log.updates[e].policy_loss},
                 {"value_loss", log.updates[e].value_loss}});
      }
      model::save_checkpoint(params, run.file("model.ckpt").string());
      return 0;
    }

    if (*eval) {
      const auto instances = load_instances(eval_instances);
      eval_opts.seed = seed;
      eval_opts.baseline = baseline == "pibt" ? "pibt_expert" : "joint_optimal";
      if (baseline == "joint") eval_opts.baseline_expert = make_solver("joint", seed);
      evalkit::BenchmarkReport report;
      if (!solver.empty()) {
        eval_opts.solver = solver;
        if (solver == "stay") {
          report = evalkit::evaluate([] { return std::make_unique<experts::StayController>(); }, instances, eval_opts);
        } else {
          report = evalkit::evaluate(make_solver(solver, seed), instances, eval_opts);
        }
      } else {
        if (checkpoint.empty()) throw std::invalid_argument("eval: give --checkpoint or --solver");
        const model::ModelParams params = model::load_checkpoint(checkpoint);
        eval_opts.solver = std::string(model::layer_kind_name(params.config().kind));
        const auto mode =
            temperature == "actor" ? training::TemperatureMode::kActorMean : training::TemperatureMode::kFixed;
        report = evalkit::evaluate(
            [&] { return std::make_unique<training::ModelController>(params, mode, tau); }, instances, eval_opts);
      }
      std::cout << evalkit::format_report(report);
      if (!json_out.empty()) write_file(json_out, evalkit::report_to_json(report) + "\n");
      return 0;
    }

    if (*analyze) {
      const model::ModelParams params = model::load_checkpoint(checkpoint);
      if (analysis == "cv") {
        const evalkit::ScenarioSpec s = evalkit::scenario_dilution();
        const evalkit::CvResult r = evalkit::scenario_cv(params, s, seed);
        json out = {{"scenario", s.name}, {"cv_first_layer", r.cv_first}, {"cv_layer_average", r.cv_average}};
        for (Eigen::Index p = 0; p < r.first_layer.rows(); ++p) {
          const Eigen::VectorXd row = r.first_layer.row(p);
          out["first_layer_attention"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        std::cout << out.dump(2) << "\n";
        return 0;
      }
      if (analysis == "shapley") {
        const evalkit::ScenarioSpec s = evalkit::scenario_group_interaction();
        const evalkit::ShapleyResult r = evalkit::shapley_exact(params, s.instance, s.target, {1, 2, 3, 4}, seed);
        json out = {{"scenario", s.name}, {"players", r.players}};
        for (Eigen::Index k = 0; k < r.percent.size(); ++k) out["percent"].push_back(r.percent[k]);
        std::cout << out.dump(2) << "\n";
        return 0;
      }
      if (analyze_instances.empty()) throw std::invalid_argument("analyze: --instances is required");
      const auto instances = load_instances(analyze_instances);
      if (analysis == "entropy") {
        std::vector<model::AttentionRecord> records;
        for (std::size_t k = 0; k < instances.size(); ++k) {
          RecordingController c(params);
          experts::rollout(c, instances[k], analyze_steps, seed + k);
          records.insert(records.end(), c.records.begin(), c.records.end());
        }
        const evalkit::EntropyResult r = evalkit::attention_entropy(records, layer);
        std::cout << json{{"entropy", r.mean}, {"nodes", r.nodes}, {"excluded", r.excluded}}.dump(2) << "\n";
        return 0;
      }
      std::map<std::string, int> counts;
      double partial = 0.0;
      for (std::size_t k = 0; k < instances.size(); ++k) {
        training::ModelController c(params);
        const auto run = experts::rollout(c, instances[k], analyze_steps, seed + k);
        const auto f = evalkit::classify_failures(run.trajectory, instances[k]);
        for (auto label : f.labels) ++counts[std::string(evalkit::outcome_name(label))];
        partial += f.partial_success;
      }
      std::cout << json{{"labels", counts}, {"partial_success", partial / instances.size()}}.dump(2) << "\n";
      return 0;
    }

    if (*render) {
      mapf::Instance inst;
      evalkit::RenderOptions opts;
      if (!scenario.empty()) {
        const evalkit::ScenarioSpec s =
            scenario == "dilution" ? evalkit::scenario_dilution() : evalkit::scenario_group_interaction();
        inst = s.instance;
        opts.agent_groups = s.groups;
      } else {
        if (render_instance.empty()) throw std::invalid_argument("render: give --instance or --scenario");
        inst = mapf::load_instance(render_instance);
      }
      std::optional<hypergen::HypergraphBuilder> builder;
      if (show_colouring) {
        hypergen::HypergraphBuilder::Options o;
        o.seed = seed;
        builder.emplace(inst.map, o);
        opts.colouring = builder->colouring();
      }
      mapf::Trajectory traj;
      Eigen::MatrixXd attention;
      if (!checkpoint.empty()) {
        const model::ModelParams params = model::load_checkpoint(checkpoint);
        if (show_attention) {
          model::GraphFactory graphs(params.config(), inst.map, seed);
          const auto out = model::policy_forward(params, inst, mapf::goal_distances(inst), inst.starts, graphs, 0);
          attention = model::aggregate_attention(out.attention, 0);
          opts.attention = &attention;
        } else {
          training::ModelController c(params);
          traj = experts::rollout(c, inst, 256, seed).trajectory;
          opts.trajectory = &traj;
        }
      }
      write_file(render_out, evalkit::render_svg(inst, opts));
      std::cout << "wrote " << render_out << "\n";
      return 0;
    }

    if (*convert) {
      fs::create_directories(convert_out);
      if (!convert_instance.empty()) {
        const mapf::Instance inst = mapf::load_instance(convert_instance);
        const std::string stem = fs::path(convert_instance).stem().string();
        write_file(fs::path(convert_out) / (stem + ".map"), evalkit::serialize_movingai_map(inst.map));
        write_file(fs::path(convert_out) / (stem + ".scen"),
                   evalkit::serialize_movingai_scen(evalkit::scen_from_instance(inst, stem + ".map")));
        return 0;
      }
      if (map_file.empty() || scen_file.empty()) throw std::invalid_argument("convert: give --map and --scen");
      const auto instances = evalkit::parse_movingai(read_file(map_file), read_file(scen_file), agent_counts);
      for (const auto& inst : instances) {
        const std::string name = "agents_" + std::to_string(inst.num_agents()) + ".txt";
        mapf::save_instance(inst, (fs::path(convert_out) / name).string());
      }
      std::cout << "wrote " << instances.size() << " instances to " << convert_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
