#include "rifenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "rifenet/errors.hpp"

namespace rifenet {
namespace {

constexpr const char* kMagic = "rifenet-checkpoint";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

nlohmann::json table(const std::vector<NamedTensor>& tensors, std::uint64_t& offset) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tensors) {
    arr.push_back({{"name", t.name}, {"shape", t.tensor.shape}, {"offset", offset}});
    offset += t.tensor.size();
  }
  return arr;
}

std::vector<NamedTensor> read_table(const nlohmann::json& arr, const std::vector<double>& payload) {
  std::vector<NamedTensor> out;
  for (const auto& e : arr) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    const Shape shape = e.at("shape").get<Shape>();
    const std::uint64_t off = e.at("offset").get<std::uint64_t>();
    const std::size_t n = numel(shape);
    if (off + n > payload.size()) throw CheckpointError("tensor '" + t.name + "' runs past the payload");
    t.tensor = Tensor(shape, std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                                 payload.begin() + static_cast<std::ptrdiff_t>(off + n)));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::uint64_t offset = 0;
  nlohmann::json m;
  m["format_version"] = ckpt.manifest.format_version;
  m["backbone"] = ckpt.manifest.backbone;
  m["merged_channels"] = ckpt.manifest.merged_channels;
  m["grid"] = ckpt.manifest.grid;
  m["config_hash"] = ckpt.manifest.config_hash;
  m["iteration"] = ckpt.manifest.iteration;
  m["config"] = serialize(ckpt.config);
  m["params"] = table(ckpt.params, offset);
  m["optimizer"] = table(ckpt.optimizer, offset);
  m["payload_doubles"] = offset;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << kMagic << ' ' << kCheckpointVersion << '\n' << m.dump() << '\n';
    for (const auto* list : {&ckpt.params, &ckpt.optimizer})
      for (const auto& t : *list)
        out.write(reinterpret_cast<const char*>(t.tensor.data.data()),
                  static_cast<std::streamsize>(t.tensor.size() * sizeof(double)));
    if (!out) throw CheckpointError("short write on checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string header, manifest_line;
  if (!std::getline(in, header) || !std::getline(in, manifest_line)) throw CheckpointError("truncated checkpoint header");
  if (header != std::string(kMagic) + ' ' + std::to_string(kCheckpointVersion))
    throw CheckpointError("not a version " + std::to_string(kCheckpointVersion) + " checkpoint: '" + header + "'");
  Checkpoint ck;
  try {
    const nlohmann::json m = nlohmann::json::parse(manifest_line);
    ck.manifest.format_version = m.at("format_version").get<int>();
    ck.manifest.backbone = m.at("backbone").get<std::string>();
    ck.manifest.merged_channels = m.at("merged_channels").get<std::size_t>();
    ck.manifest.grid = m.at("grid").get<std::size_t>();
    ck.manifest.config_hash = m.at("config_hash").get<std::string>();
    ck.manifest.iteration = m.at("iteration").get<int>();
    try {
      ck.config = parse_config(m.at("config").get<std::string>());
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("embedded config: ") + e.what());
    }
    const std::uint64_t total = m.at("payload_doubles").get<std::uint64_t>();
    std::vector<double> payload(total);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(double)));
    if (static_cast<std::uint64_t>(in.gcount()) != total * sizeof(double)) throw CheckpointError("truncated checkpoint payload");
    ck.params = read_table(m.at("params"), payload);
    ck.optimizer = read_table(m.at("optimizer"), payload);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (ck.manifest.config_hash != hash_hex(config_hash(ck.config)))
    throw CheckpointError("checkpoint config hash does not match its embedded config");
  return ck;
}

std::vector<NamedTensor> snapshot(const nn::ParamStore& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.params()) out.push_back({p.name, p.var.value()});
  return out;
}

void restore(nn::ParamStore& store, const std::vector<NamedTensor>& params) {
  if (params.size() != store.params().size())
    throw CheckpointError("checkpoint holds " + std::to_string(params.size()) + " tensors, model has " +
                          std::to_string(store.params().size()));
  for (auto& p : store.params()) {
    const NamedTensor* src = nullptr;
    for (const auto& t : params)
      if (t.name == p.name) src = &t;
    if (!src) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    if (src->tensor.shape != p.var.shape())
      throw CheckpointError("parameter '" + p.name + "' has shape " + shape_str(src->tensor.shape) + ", model expects " +
                            shape_str(p.var.shape()));
    p.var.mutable_value().data = src->tensor.data;
  }
}

void check_compatible(const CheckpointManifest& manifest, const RunConfig& cfg) {
  if (manifest.format_version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint format version");
  if (manifest.backbone != cfg.model.backbone)
    throw CheckpointError("checkpoint backbone '" + manifest.backbone + "' differs from config '" + cfg.model.backbone + "'");
  if (manifest.merged_channels != cfg.model.merged_channels)
    throw CheckpointError("checkpoint C_merged " + std::to_string(manifest.merged_channels) + " differs from config " +
                          std::to_string(cfg.model.merged_channels));
  if (manifest.grid != cfg.model.grid)
    throw CheckpointError("checkpoint grid " + std::to_string(manifest.grid) + " differs from config " +
                          std::to_string(cfg.model.grid));
}

}  // namespace rifenet
