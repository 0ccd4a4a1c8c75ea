#include "camo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "camo/errors.hpp"

namespace camo {
namespace {

struct Binding {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::string show(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

Binding int_key(std::string name, std::string help, std::function<int&(RunConfig&)> ref) {
  auto key = name;
  return {{std::move(name), std::move(help)},
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<int>(key, v); }};
}

Binding real_key(std::string name, std::string help, std::function<double&(RunConfig&)> ref) {
  auto key = name;
  return {{std::move(name), std::move(help)},
          [ref](const RunConfig& c) { return show(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(key, v); }};
}

Binding string_key(std::string name, std::string help, std::function<std::string&(RunConfig&)> ref) {
  return {{std::move(name), std::move(help)},
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    b.push_back({{"seed", "master seed; every random stream is derived from it"},
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }});
    b.push_back(string_key("data_dir", "directory of <name>.png / <name>_mask.png pairs",
                           [](RunConfig& c) -> std::string& { return c.data_dir; }));
    b.push_back(string_key("out_dir", "checkpoints and logs are written here",
                           [](RunConfig& c) -> std::string& { return c.out_dir; }));
    b.push_back(int_key("image_size", "model resolution H = W",
                        [](RunConfig& c) -> int& { return c.model.codec.image_size; }));
    b.push_back(int_key("codec.levels", "downsampling levels; latent = image_size / 2^levels",
                        [](RunConfig& c) -> int& { return c.model.codec.levels; }));
    b.push_back(int_key("codec.codebook_size", "codebook entries K",
                        [](RunConfig& c) -> int& { return c.model.codec.codebook_size; }));
    b.push_back(int_key("codec.base_width", "encoder width at the first level",
                        [](RunConfig& c) -> int& { return c.model.codec.base_width; }));
    b.push_back(real_key("codec.beta", "commitment weight",
                         [](RunConfig& c) -> double& { return c.model.codec.beta; }));
    b.push_back(int_key("codec.dead_code_steps", "unused steps before a codebook entry is reseeded",
                        [](RunConfig& c) -> int& { return c.model.codec.dead_code_steps; }));
    b.push_back(int_key("codec.steps", "stage-1 optimizer steps", [](RunConfig& c) -> int& { return c.codec_steps; }));
    b.push_back(int_key("codec.batch", "stage-1 batch size", [](RunConfig& c) -> int& { return c.codec_batch; }));
    b.push_back(real_key("codec.lr", "stage-1 Adam learning rate", [](RunConfig& c) -> double& { return c.codec_lr; }));
    b.push_back(int_key("fafim.patch", "patch size P (latent cells)",
                        [](RunConfig& c) -> int& { return c.model.conditioning.fafim.patch; }));
    b.push_back(int_key("fafim.dim", "token width C",
                        [](RunConfig& c) -> int& { return c.model.conditioning.fafim.dim; }));
    b.push_back(int_key("fafim.heads", "attention heads",
                        [](RunConfig& c) -> int& { return c.model.conditioning.fafim.heads; }));
    b.push_back({{"fafim.pe", "add positional encoding to foreground tokens"},
                 [](const RunConfig& c) { return std::string(c.model.conditioning.fafim.use_pe ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.model.conditioning.fafim.use_pe = parse_bool("fafim.pe", v); }});
    b.push_back(int_key("slic.superpixels", "target superpixel count S",
                        [](RunConfig& c) -> int& { return c.model.conditioning.slic.superpixels; }));
    b.push_back(real_key("slic.compactness", "spatial weight in the SLIC distance",
                         [](RunConfig& c) -> double& { return c.model.conditioning.slic.compactness; }));
    b.push_back(int_key("slic.iterations", "SLIC refinement iterations",
                        [](RunConfig& c) -> int& { return c.model.conditioning.slic.iterations; }));
    b.push_back(int_key("unet.base_width", "denoiser width at full latent resolution",
                        [](RunConfig& c) -> int& { return c.model.unet.base_width; }));
    b.push_back(int_key("unet.time_dim", "sinusoidal timestep embedding width",
                        [](RunConfig& c) -> int& { return c.model.unet.time_dim; }));
    b.push_back(int_key("schedule.steps", "diffusion steps T",
                        [](RunConfig& c) -> int& { return c.model.schedule.steps; }));
    b.push_back(real_key("schedule.beta_min", "first beta of the linear schedule",
                         [](RunConfig& c) -> double& { return c.model.schedule.beta_min; }));
    b.push_back(real_key("schedule.beta_max", "last beta of the linear schedule",
                         [](RunConfig& c) -> double& { return c.model.schedule.beta_max; }));
    b.push_back(real_key("loss.alpha", "regularizer in the foreground weight",
                         [](RunConfig& c) -> double& { return c.model.loss.alpha; }));
    b.push_back(real_key("loss.lambda", "weight of the denoising term against background reconstruction",
                         [](RunConfig& c) -> double& { return c.model.loss.lambda; }));
    b.push_back({{"loss.weighting", "shifted | linear | log | reciprocal | uniform"},
                 [](const RunConfig& c) { return to_string(c.model.loss.weighting); },
                 [](RunConfig& c, const std::string& v) { c.model.loss.weighting = parse_weighting(v); }});
    b.push_back({{"loss.polarity", "object | editable: which mask region gets the weight"},
                 [](const RunConfig& c) { return to_string(c.model.loss.polarity); },
                 [](RunConfig& c, const std::string& v) { c.model.loss.polarity = parse_polarity(v); }});
    b.push_back(int_key("train.steps", "stage-2 optimizer steps", [](RunConfig& c) -> int& { return c.train_steps; }));
    b.push_back(int_key("train.batch", "stage-2 batch size", [](RunConfig& c) -> int& { return c.train_batch; }));
    b.push_back(real_key("train.lr", "stage-2 Adam learning rate", [](RunConfig& c) -> double& { return c.train_lr; }));
    b.push_back(int_key("train.checkpoint_every", "stage-2 checkpoint interval in steps (0 = final only)",
                        [](RunConfig& c) -> int& { return c.checkpoint_every; }));
    b.push_back(string_key("train.resume", "stage-2 checkpoint to resume from (empty = fresh run)",
                           [](RunConfig& c) -> std::string& { return c.resume; }));
    return b;
  }();
  return table;
}

const Binding& find_binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.key.name == key) return b;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (codec_steps < 1) throw ConfigError("codec.steps must be >= 1");
  if (codec_batch < 1) throw ConfigError("codec.batch must be >= 1");
  if (train_steps < 0) throw ConfigError("train.steps must be >= 0");
  if (train_batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(codec_lr > 0) || !(train_lr > 0)) throw ConfigError("learning rates must be positive");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& b : bindings()) k.push_back(b.key);
    return k;
  }();
  return keys;
}

std::string config_value(const RunConfig& config, const std::string& key) { return find_binding(key).get(config); }

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_binding(key).set(config, value);
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + std::string(e.what()).substr(std::string("config error: ").size()));
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& b : bindings()) {
    out << "# " << b.key.help << '\n' << b.key.name << " = " << b.get(config) << '\n';
  }
  return out.str();
}

}  // namespace camo
