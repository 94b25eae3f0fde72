#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hmagat/training.hpp"

namespace hmagat::training {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'M', 'G', 'T', 'D', 'E', 'M', 'O'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - at_) throw std::runtime_error("dataset: truncated input");
    std::string_view s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof v).data(), sizeof v);
    return v;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t at_ = 0;
};

}  // namespace

int Dataset::num_agent_samples() const {
  int total = 0;
  for (const auto& s : samples) total += static_cast<int>(s.actions.size());
  return total;
}

void Dataset::add_trajectory(const Instance& instance, const mapf::Trajectory& trajectory, long long soc) {
  const int id = static_cast<int>(instances.size());
  instances.push_back(instance);
  expert_soc.push_back(soc);
  for (int t = 0; t < trajectory.length(); ++t) {
    samples.push_back({id, t, trajectory.configs[t], trajectory.actions[t]});
  }
}

void Dataset::append(const Dataset& other) {
  const int offset = static_cast<int>(instances.size());
  instances.insert(instances.end(), other.instances.begin(), other.instances.end());
  expert_soc.insert(expert_soc.end(), other.expert_soc.begin(), other.expert_soc.end());
  for (Sample s : other.samples) {
    s.instance += offset;
    samples.push_back(std::move(s));
  }
  skipped += other.skipped;
}

std::uint64_t observation_hash(const mapf::Observation& obs) {
  std::uint64_t h = 14695981039346656037ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(obs.data.data());
  for (std::size_t k = 0; k < sizeof(double) * static_cast<std::size_t>(obs.data.size()); ++k) {
    h ^= bytes[k];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string serialize_dataset(const Dataset& dataset, int obs_radius) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(obs_radius));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.instances.size()));
  std::vector<std::vector<mapf::DistanceField>> dist;
  for (std::size_t k = 0; k < dataset.instances.size(); ++k) {
    const std::string text = mapf::serialize_instance(dataset.instances[k]);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    put<std::int64_t>(out, k < dataset.expert_soc.size() ? dataset.expert_soc[k] : -1);
    dist.push_back(mapf::goal_distances(dataset.instances[k]));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.samples.size()));
  for (const Sample& s : dataset.samples) {
    const Instance& inst = dataset.instances.at(s.instance);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.instance));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.timestep));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.config.size()));
    for (std::size_t i = 0; i < s.config.size(); ++i) {
      put<std::int32_t>(out, s.config[i].x);
      put<std::int32_t>(out, s.config[i].y);
      put<std::uint8_t>(out, static_cast<std::uint8_t>(s.actions[i]));
      const auto obs = mapf::build_observation(inst, dist[s.instance], s.config, static_cast<int>(i), obs_radius);
      put<std::uint64_t>(out, observation_hash(obs));
    }
  }
  return out;
}

Dataset parse_dataset(std::string_view bytes, int obs_radius) {
  Reader in(bytes);
  if (in.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) throw std::runtime_error("dataset: bad magic");
  if (in.get<std::uint32_t>() != kVersion) throw std::runtime_error("dataset: unsupported version");
  if (in.get<std::uint32_t>() != static_cast<std::uint32_t>(obs_radius)) {
    throw std::runtime_error("dataset: observation radius mismatch");
  }
  Dataset d;
  std::vector<std::vector<mapf::DistanceField>> dist;
  const auto instances = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < instances; ++k) {
    const auto len = in.get<std::uint32_t>();
    d.instances.push_back(mapf::parse_instance(in.take(len)));
    d.expert_soc.push_back(in.get<std::int64_t>());
    dist.push_back(mapf::goal_distances(d.instances.back()));
  }
  const auto samples = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < samples; ++k) {
    Sample s;
    s.instance = static_cast<int>(in.get<std::uint32_t>());
    s.timestep = static_cast<int>(in.get<std::uint32_t>());
    if (s.instance < 0 || s.instance >= static_cast<int>(d.instances.size())) {
      throw std::runtime_error("dataset: sample references unknown instance");
    }
    const Instance& inst = d.instances[s.instance];
    const auto n = in.get<std::uint32_t>();
    if (n != static_cast<std::uint32_t>(inst.num_agents())) throw std::runtime_error("dataset: agent count mismatch");
    std::vector<std::uint64_t> hashes;
    for (std::uint32_t i = 0; i < n; ++i) {
      const int x = in.get<std::int32_t>();
      const int y = in.get<std::int32_t>();
      const auto a = in.get<std::uint8_t>();
      if (a >= mapf::kNumActions) throw std::runtime_error("dataset: bad action id");
      if (!inst.map.is_free({x, y})) throw std::runtime_error("dataset: sample position not free");
      s.config.push_back({x, y});
      s.actions.push_back(static_cast<Action>(a));
      hashes.push_back(in.get<std::uint64_t>());
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto obs = mapf::build_observation(inst, dist[s.instance], s.config, static_cast<int>(i), obs_radius);
      if (observation_hash(obs) != hashes[i]) throw std::runtime_error("dataset: observation hash mismatch");
    }
    d.samples.push_back(std::move(s));
  }
  if (!in.done()) throw std::runtime_error("dataset: trailing bytes");
  return d;
}

void save_dataset(const Dataset& dataset, int obs_radius, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string bytes = serialize_dataset(dataset, obs_radius);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Dataset load_dataset(const std::string& path, int obs_radius) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), obs_radius);
}

Dataset collect_dataset(const std::vector<Instance>& instances, const Expert& expert, const CollectOptions& options) {
  Dataset d;
  for (const Instance& inst : instances) {
    const experts::SolveResult r = expert(inst, options.step_limit);
    if (!r.success) {
      ++d.skipped;
      continue;
    }
    d.add_trajectory(inst, r.trajectory, r.soc);
  }
  return d;
}

void SampleCache::sync(const Dataset& dataset) {
  while (factories_.size() < dataset.instances.size()) {
    const Instance& inst = dataset.instances[factories_.size()];
    std::unique_ptr<model::GraphFactory> factory;
    if (config_.strategy != hypergen::Strategy::kShortestDistance || config_.kind == model::LayerKind::kGat) {
      for (std::size_t k = 0; k < factories_.size() && !factory; ++k) {
        if (dataset.instances[k].map == inst.map) factory = std::make_unique<model::GraphFactory>(*factories_[k]);
      }
    }
    if (!factory) factory = std::make_unique<model::GraphFactory>(config_, inst.map, graph_seed_);
    factories_.push_back(std::move(factory));
    dist_.push_back(mapf::goal_distances(inst));
  }
  for (std::size_t k = obs_.size(); k < dataset.samples.size(); ++k) {
    const Sample& s = dataset.samples[k];
    obs_.push_back(mapf::build_observations(dataset.instances[s.instance], dist_[s.instance], s.config,
                                            config_.obs_radius));
    graphs_.push_back(factories_[s.instance]->build(s.config, s.timestep));
  }
}

}  // namespace hmagat::training
