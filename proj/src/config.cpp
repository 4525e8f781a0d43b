#include "rifenet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rifenet/data.hpp"
#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define RIFENET_FIELD(KEY, EXPR, KIND)                                                         \
  Field {                                                                                      \
    KEY, [](const RunConfig& c) { return to_text_##KIND(c.EXPR); },                            \
        [](RunConfig& c, std::string_view v) { c.EXPR = from_text_##KIND(KEY, v); }            \
  }

std::string to_text_int(long long v) { return std::to_string(v); }
long long from_text_int(const char* k, std::string_view v) { return parse_number<long long>(k, v); }
std::string to_text_u64(std::uint64_t v) { return std::to_string(v); }
std::uint64_t from_text_u64(const char* k, std::string_view v) { return parse_number<std::uint64_t>(k, v); }
std::string to_text_size(std::size_t v) { return std::to_string(v); }
std::size_t from_text_size(const char* k, std::string_view v) { return parse_number<std::size_t>(k, v); }
std::string to_text_real(double v) { return fmt_double(v); }
double from_text_real(const char* k, std::string_view v) { return parse_number<double>(k, v); }
std::string to_text_bool(bool v) { return v ? "true" : "false"; }
bool from_text_bool(const char* k, std::string_view v) { return parse_bool(k, v); }
std::string to_text_str(const std::string& v) { return v; }
std::string from_text_str(const char*, std::string_view v) { return std::string(v); }
std::string to_text_proto(PrototypeMode m) { return prototype_mode_name(m); }
PrototypeMode from_text_proto(const char*, std::string_view v) { return parse_prototype_mode(std::string(v)); }
std::string to_text_guide(GuidanceSource g) { return guidance_name(g); }
GuidanceSource from_text_guide(const char*, std::string_view v) { return parse_guidance(std::string(v)); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RIFENET_FIELD("dataset", dataset, str),
      RIFENET_FIELD("data.root", data_root, str),
      RIFENET_FIELD("data.synthetic_images", synthetic_images, int),
      RIFENET_FIELD("data.synthetic_seed", synthetic_seed, u64),
      RIFENET_FIELD("data.class_consistent_unlabeled", class_consistent_unlabeled, bool),
      RIFENET_FIELD("data.augment_labeled", augment_labeled, bool),
      RIFENET_FIELD("fold", fold, int),
      RIFENET_FIELD("shots", shots, int),
      RIFENET_FIELD("model.backbone", model.backbone, str),
      RIFENET_FIELD("model.input_size", model.input_size, int),
      RIFENET_FIELD("model.backbone_frozen", model.backbone_frozen, bool),
      RIFENET_FIELD("model.merged_channels", model.merged_channels, size),
      RIFENET_FIELD("model.local_channels", model.local_channels, size),
      RIFENET_FIELD("model.grid", model.grid, size),
      RIFENET_FIELD("model.se_ratio", model.se_ratio, size),
      RIFENET_FIELD("model.prototypes", model.prototypes, proto),
      RIFENET_FIELD("model.guidance", model.guidance, guide),
      RIFENET_FIELD("model.aux_head", model.aux_head, bool),
      RIFENET_FIELD("model.aux_weight", model.aux_weight, real),
      RIFENET_FIELD("model.seed", model.seed, u64),
      RIFENET_FIELD("attention.layers", model.attention.layers, size),
      RIFENET_FIELD("attention.heads", model.attention.heads, size),
      RIFENET_FIELD("attention.ffn_dim", model.attention.ffn_dim, size),
      RIFENET_FIELD("attention.cycle", model.attention.cycle_consistency, bool),
      RIFENET_FIELD("unlabeled.count", model.unlabeled.count, int),
      RIFENET_FIELD("unlabeled.guide", model.unlabeled.guide, bool),
      RIFENET_FIELD("unlabeled.loss_weight", model.unlabeled.loss_weight, real),
      RIFENET_FIELD("unlabeled.soft_labels", model.unlabeled.soft_labels, bool),
      RIFENET_FIELD("unlabeled.confidence", model.unlabeled.confidence, real),
      RIFENET_FIELD("unlabeled.shared_geometry", model.unlabeled.shared_geometry, bool),
      RIFENET_FIELD("unlabeled.delay", model.unlabeled.delay, int),
      RIFENET_FIELD("unlabeled.rampup", model.unlabeled.rampup, int),
      RIFENET_FIELD("optim.method", optim.method, str),
      RIFENET_FIELD("optim.lr", optim.lr, real),
      RIFENET_FIELD("optim.momentum", optim.momentum, real),
      RIFENET_FIELD("optim.weight_decay", optim.weight_decay, real),
      RIFENET_FIELD("optim.schedule", optim.schedule, str),
      RIFENET_FIELD("optim.power", optim.power, real),
      RIFENET_FIELD("optim.warmup", optim.warmup, int),
      RIFENET_FIELD("optim.iterations", optim.iterations, int),
      RIFENET_FIELD("optim.accumulate", optim.accumulate, int),
      RIFENET_FIELD("optim.clip_norm", optim.clip_norm, real),
      RIFENET_FIELD("train.seed", seed, u64),
      RIFENET_FIELD("train.log", log_path, str),
      RIFENET_FIELD("train.checkpoint", checkpoint_path, str),
      RIFENET_FIELD("train.checkpoint_every", checkpoint_every, int),
      RIFENET_FIELD("train.val_every", val_every, int),
      RIFENET_FIELD("train.val_episodes", val_episodes, int),
      RIFENET_FIELD("eval.episodes", eval_episodes, int),
  };
  return table;
}

#undef RIFENET_FIELD

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream os;
  os << "config.version = " << kConfigVersion << '\n';
  for (const Field& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "config.version") {
      if (value != std::to_string(kConfigVersion))
        throw ConfigError("unsupported config version " + value + " (expected " + std::to_string(kConfigVersion) + ")");
      continue;
    }
    set_value(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize(cfg);
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  const DatasetKind kind = parse_dataset(c.dataset);
  if (c.fold < 0 || c.fold >= fold_count(kind)) fail("fold", "must be in [0, " + std::to_string(fold_count(kind) - 1) + "]");
  if (c.shots != 1 && c.shots != 5) fail("shots", "must be 1 or 5");
  if (kind == DatasetKind::Synthetic && c.data_root.empty() && c.synthetic_images < 20)
    fail("data.synthetic_images", "must be >= 20");
  const ModelConfig& m = c.model;
  if (m.backbone != "tiny") fail("model.backbone", "only 'tiny' is available");
  if (m.input_size < 32 || m.input_size > 1024 || m.input_size % 8 != 0)
    fail("model.input_size", "must be a multiple of 8 in [32, 1024]");
  if (m.merged_channels < 1 || m.merged_channels > 4096) fail("model.merged_channels", "must be in [1, 4096]");
  if (m.local_channels < 1 || m.local_channels > 4096) fail("model.local_channels", "must be in [1, 4096]");
  if (m.grid < 1 || m.grid > static_cast<std::size_t>(m.input_size / 4))
    fail("model.grid", "must be in [1, input_size / 4]");
  if (m.se_ratio < 1) fail("model.se_ratio", "must be >= 1");
  if (m.aux_weight < 0) fail("model.aux_weight", "must be >= 0");
  if (m.attention.layers < 1 || m.attention.layers > 12) fail("attention.layers", "must be in [1, 12]");
  if (m.attention.heads < 1 || m.merged_channels % m.attention.heads != 0)
    fail("attention.heads", "must divide model.merged_channels");
  if (m.unlabeled.count < 0 || m.unlabeled.count > 16) fail("unlabeled.count", "must be in [0, 16]");
  if (m.unlabeled.loss_weight < 0) fail("unlabeled.loss_weight", "must be >= 0");
  if (m.unlabeled.delay < 0) fail("unlabeled.delay", "must be >= 0");
  if (m.unlabeled.rampup < 0) fail("unlabeled.rampup", "must be >= 0");
  if (m.unlabeled.confidence < 0 || m.unlabeled.confidence >= 1) fail("unlabeled.confidence", "must be in [0, 1)");
  const OptimizerConfig& o = c.optim;
  if (o.method != "sgd" && o.method != "adamw") fail("optim.method", "must be sgd or adamw");
  if (!(o.lr > 0)) fail("optim.lr", "must be > 0");
  if (o.momentum < 0 || o.momentum >= 1) fail("optim.momentum", "must be in [0, 1)");
  if (o.weight_decay < 0) fail("optim.weight_decay", "must be >= 0");
  if (o.schedule != "poly" && o.schedule != "constant") fail("optim.schedule", "must be poly or constant");
  if (o.power < 0) fail("optim.power", "must be >= 0");
  if (o.warmup < 0) fail("optim.warmup", "must be >= 0");
  if (o.iterations < 0) fail("optim.iterations", "must be >= 0");
  if (o.accumulate < 1) fail("optim.accumulate", "must be >= 1");
  if (o.clip_norm < 0) fail("optim.clip_norm", "must be >= 0");
  if (c.checkpoint_every < 0) fail("train.checkpoint_every", "must be >= 0");
  if (c.val_every < 0) fail("train.val_every", "must be >= 0");
  if (c.val_episodes < 1) fail("train.val_episodes", "must be >= 1");
  if (c.eval_episodes < 1) fail("eval.episodes", "must be >= 1");
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = serialize(cfg);
  return fnv1a(s.data(), s.size());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rifenet
