#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "wearseg/unet.hpp"

namespace wearseg {
namespace {

constexpr char kMagic[8] = {'W', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"mode", to_string(c.mode)},       {"use_batch_norm", c.use_batch_norm},
          {"input_edge", c.input_edge},      {"channels_in", c.channels_in},
          {"base_filters", c.base_filters},  {"bn_momentum", c.bn_momentum},
          {"bn_epsilon", c.bn_epsilon}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.use_batch_norm = j.at("use_batch_norm").get<bool>();
  c.input_edge = j.at("input_edge").get<int>();
  c.channels_in = j.at("channels_in").get<int>();
  c.base_filters = j.at("base_filters").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<float>();
  c.bn_epsilon = j.at("bn_epsilon").get<float>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UNet& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    const std::string header = config_to_json(model.config()).dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const ModelState state = model.state();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(state.tensors.size()));
    for (const auto& t : state.tensors) {
      put<std::uint64_t>(out, t.size());
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<UNet> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open checkpoint: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::invalid_argument("not a wearseg checkpoint: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::invalid_argument("unsupported checkpoint version " + std::to_string(version));
  }
  std::string header(get<std::uint32_t>(in), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  auto model = std::make_unique<UNet>(config_from_json(nlohmann::json::parse(header)));

  ModelState state;
  state.tensors.resize(get<std::uint32_t>(in));
  for (auto& t : state.tensors) {
    t.resize(get<std::uint64_t>(in));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data in " + path.string());
  }
  model->load_state(state);
  return model;
}

}  // namespace wearseg
