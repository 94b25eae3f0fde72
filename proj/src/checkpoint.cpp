#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hmagat/model.hpp"

namespace hmagat::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'M', 'G', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - at_) throw std::runtime_error("checkpoint: truncated input");
    std::string_view s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(sizeof v).data(), sizeof v);
    return v;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t at_ = 0;
};

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json actions = nlohmann::json::array();
  for (mapf::Action a : mapf::kAllActions) actions.push_back(std::string(mapf::action_name(a)));
  return {
      {"kind", std::string(layer_kind_name(c.kind))},
      {"hidden", c.hidden},
      {"layers", c.layers},
      {"obs_radius", c.obs_radius},
      {"conv1_channels", c.conv1_channels},
      {"conv2_channels", c.conv2_channels},
      {"edge_hidden", c.edge_hidden},
      {"temp_hidden", c.temp_hidden},
      {"bias", c.bias},
      {"activation", "relu"},
      {"attention_activation", "leaky_relu"},
      {"leaky_slope", c.leaky_slope},
      {"comm_radius", c.comm_radius},
      {"strategy", std::string(hypergen::strategy_name(c.strategy))},
      {"norm", static_cast<int>(c.norm)},
      {"colouring_iters", c.colouring_iters},
      {"epsilon", c.epsilon},
      {"regen_interval", c.regen_interval},
      {"actions", actions},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (j.at("activation") != "relu" || j.at("attention_activation") != "leaky_relu") {
    throw std::runtime_error("checkpoint: unsupported activation");
  }
  const auto& actions = j.at("actions");
  if (actions.size() != mapf::kNumActions) throw std::runtime_error("checkpoint: action ordering mismatch");
  for (int a = 0; a < mapf::kNumActions; ++a) {
    if (actions[a] != std::string(mapf::action_name(static_cast<mapf::Action>(a)))) {
      throw std::runtime_error("checkpoint: action ordering mismatch");
    }
  }
  ModelConfig c;
  c.kind = parse_layer_kind(j.at("kind").get<std::string>());
  c.hidden = j.at("hidden");
  c.layers = j.at("layers");
  c.obs_radius = j.at("obs_radius");
  c.conv1_channels = j.at("conv1_channels");
  c.conv2_channels = j.at("conv2_channels");
  c.edge_hidden = j.at("edge_hidden");
  c.temp_hidden = j.at("temp_hidden");
  c.bias = j.at("bias");
  c.leaky_slope = j.at("leaky_slope");
  c.comm_radius = j.at("comm_radius");
  c.strategy = hypergen::parse_strategy(j.at("strategy").get<std::string>());
  const int norm = j.at("norm");
  if (norm < 0 || norm > 2) throw std::runtime_error("checkpoint: unknown norm");
  c.norm = static_cast<hypergen::Norm>(norm);
  c.colouring_iters = j.at("colouring_iters");
  c.epsilon = j.at("epsilon");
  c.regen_interval = j.at("regen_interval");
  return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  const std::string header = config_to_json(params.config()).dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(params.blobs().size()));
  for (const auto& [name, m] : params.blobs()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
  return out;
}

ModelParams parse_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  if (in.u32() != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const std::uint32_t header_len = in.u32();
  const ModelConfig config = config_from_json(nlohmann::json::parse(in.take(header_len)));
  ModelParams params = ModelParams::zeros(config);
  const std::uint32_t count = in.u32();
  if (count != params.blobs().size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name(in.take(in.u32()));
    if (!params.has(name)) throw std::runtime_error("checkpoint: unexpected parameter " + name);
    Eigen::MatrixXd& m = params.at(name);
    const std::uint32_t rows = in.u32(), cols = in.u32();
    if (rows != m.rows() || cols != m.cols()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) std::memcpy(&m(r, c), in.take(sizeof(double)).data(), sizeof(double));
    }
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return params;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string bytes = serialize_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace hmagat::model
