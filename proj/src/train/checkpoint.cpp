#include "protoseg/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "protoseg/core/error.hpp"
#include "protoseg/io/config_io.hpp"

namespace protoseg::train {
namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointCorrupt("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_tensor(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

Tensor take_tensor(const std::string& in, std::size_t& pos, const Shape& shape) {
  Tensor t(shape);
  const std::size_t bytes = t.size() * sizeof(double);
  if (pos + bytes > in.size()) throw CheckpointCorrupt("truncated checkpoint payload");
  std::memcpy(t.data(), in.data() + pos, bytes);
  pos += bytes;
  return t;
}

std::uint32_t crc(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

void check_architecture(const Checkpoint& ckpt, const model::ModelConfig& live, const nn::ParamStore& params) {
  const std::string stored = ckpt.header.at("fingerprint").get<std::string>();
  if (stored != live.fingerprint())
    throw ConfigMismatch("checkpoint model [" + stored + "] does not match [" + live.fingerprint() + "]");
  const auto& entries = params.entries();
  const auto& names = ckpt.header.at("params");
  if (names.size() != entries.size())
    throw ConfigMismatch("checkpoint has " + std::to_string(names.size()) + " parameters, model has " +
                         std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& name = names[i].at("name").get<std::string>();
    if (name != entries[i].first) throw ConfigMismatch("parameter " + name + " where " + entries[i].first + " expected");
    if (ckpt.values[i].shape() != entries[i].second.shape())
      throw ConfigMismatch("parameter " + name + " has shape " + to_string(ckpt.values[i].shape()) + ", model expects " +
                           to_string(entries[i].second.shape()));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg) {
  json header;
  header["version"] = kCheckpointVersion;
  header["fingerprint"] = cfg.model.fingerprint();
  header["config"] = io::to_json(io::RunConfig{cfg, data::default_phantom_spec(32, 0)});
  header["step"] = state.step;
  header["epoch"] = state.epoch;
  header["adam_t"] = state.adam.t;
  header["data_rng"] = state.data_rng.serialize();
  header["dropout_rng"] = state.dropout_rng.serialize();
  header["order"] = state.order;
  const bool moments = !state.adam.m.empty();
  header["has_moments"] = moments;
  json params = json::array();
  for (const auto& [name, p] : state.network.params().entries())
    params.push_back({{"name", name}, {"shape", p.shape()}});
  header["params"] = params;

  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto& entries = state.network.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    put_tensor(out, entries[i].second.value());
    if (moments) {
      put_tensor(out, state.adam.m[i]);
      put_tensor(out, state.adam.v[i]);
    }
  }
  put<std::uint32_t>(out, crc(out, out.size()));
  io::write_text_atomic(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < sizeof(kMagic) + 16 || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointCorrupt(path.string() + " is not a checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError(path.string() + " has format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  std::size_t tail = in.size() - sizeof(std::uint32_t);
  std::size_t tail_pos = tail;
  if (take<std::uint32_t>(in, tail_pos) != crc(in, tail)) throw CheckpointCorrupt(path.string() + " fails its checksum");
  const auto header_len = take<std::uint64_t>(in, pos);
  if (header_len > tail - pos) throw CheckpointCorrupt("header length out of range");

  Checkpoint ck;
  try {
    ck.header = json::parse(in.substr(pos, header_len));
    pos += header_len;
    ck.config = io::run_config_from_json(ck.header.at("config")).train;
    ck.has_moments = ck.header.at("has_moments").get<bool>();
    for (const auto& p : ck.header.at("params")) {
      const Shape shape = p.at("shape").get<Shape>();
      ck.values.push_back(take_tensor(in, pos, shape));
      if (ck.has_moments) {
        ck.first_moments.push_back(take_tensor(in, pos, shape));
        ck.second_moments.push_back(take_tensor(in, pos, shape));
      }
    }
  } catch (const json::exception& e) {
    throw CheckpointCorrupt(std::string("malformed checkpoint header: ") + e.what());
  }
  if (pos != tail) throw CheckpointCorrupt("trailing bytes in checkpoint");
  return ck;
}

void load_parameters(const Checkpoint& ckpt, model::Network& net) {
  check_architecture(ckpt, net.config(), net.params());
  const auto& entries = net.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ag::Var p = entries[i].second;
    p.mutable_value() = ckpt.values[i];
  }
}

void restore_state(const Checkpoint& ckpt, TrainState& state, const TrainConfig& cfg) {
  check_architecture(ckpt, cfg.model, state.network.params());
  Rng data_rng, dropout_rng;
  data_rng.deserialize(ckpt.header.at("data_rng").get<std::string>());
  dropout_rng.deserialize(ckpt.header.at("dropout_rng").get<std::string>());
  load_parameters(ckpt, state.network);
  state.adam.m = ckpt.first_moments;
  state.adam.v = ckpt.second_moments;
  state.adam.t = ckpt.header.at("adam_t").get<long>();
  state.step = ckpt.header.at("step").get<long>();
  state.epoch = ckpt.header.at("epoch").get<int>();
  state.order = ckpt.header.at("order").get<std::vector<std::size_t>>();
  state.data_rng = data_rng;
  state.dropout_rng = dropout_rng;
}

model::Network load_network(const std::filesystem::path& path, TrainConfig* config_out) {
  const Checkpoint ck = read_checkpoint(path);
  model::Network net(ck.config.model);
  load_parameters(ck, net);
  if (config_out) *config_out = ck.config;
  return net;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { train::save_checkpoint(path, state_, cfg_); }

void Trainer::load_checkpoint(const std::filesystem::path& path) { restore_state(read_checkpoint(path), state_, cfg_); }

}  // namespace protoseg::train
