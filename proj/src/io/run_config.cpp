#include "io/run_config.hpp"

#include <sstream>
#include <type_traits>

#include "core/error.hpp"
#include "io/container.hpp"

namespace advpaint {
namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    require(!j.at(key).is_number_integer() || j.at(key).get<long long>() >= 0, ErrorCode::kConfig,
            where + "." + key + " must not be negative");
  }
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kConfig, where + "." + key + ": " + ex.what());
  }
}

void require_object(const nlohmann::json& j, const std::string& where) {
  require(j.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
}

}  // namespace

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    require(known, ErrorCode::kConfig, "unknown key '" + item.key() + "' in " + where);
  }
}

void apply_train_json(const nlohmann::json& j, TrainConfig& cfg) {
  require_object(j, "train");
  reject_unknown_keys(j,
                      {"steps", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps",
                       "cond_dropout", "seed", "checkpoint_every"},
                      "train");
  read_key(j, "steps", cfg.steps, "train");
  read_key(j, "batch_size", cfg.batch_size, "train");
  read_key(j, "learning_rate", cfg.learning_rate, "train");
  read_key(j, "beta1", cfg.beta1, "train");
  read_key(j, "beta2", cfg.beta2, "train");
  read_key(j, "adam_eps", cfg.adam_eps, "train");
  read_key(j, "cond_dropout", cfg.cond_dropout, "train");
  read_key(j, "seed", cfg.seed, "train");
  read_key(j, "checkpoint_every", cfg.checkpoint_every, "train");
  cfg.validate();
}

void apply_attack_json(const nlohmann::json& j, AttackConfig& cfg) {
  require_object(j, "attack");
  reject_unknown_keys(j,
                      {"eta", "alpha0", "iters", "objective", "stages", "rho", "timestep", "seed",
                       "layers", "loss_scale", "prompt"},
                      "attack");
  read_key(j, "eta", cfg.eta, "attack");
  read_key(j, "alpha0", cfg.alpha0, "attack");
  read_key(j, "iters", cfg.iters, "attack");
  if (j.contains("objective")) {
    std::string name;
    read_key(j, "objective", name, "attack");
    cfg.objective = parse_objective(name);
  }
  if (j.contains("stages")) {
    std::string name;
    read_key(j, "stages", name, "attack");
    cfg.stages = parse_stage_mode(name);
  }
  read_key(j, "rho", cfg.rho, "attack");
  if (j.contains("timestep")) {
    std::size_t t = 0;
    read_key(j, "timestep", t, "attack");
    cfg.timestep = t;
  }
  read_key(j, "seed", cfg.seed, "attack");
  if (j.contains("layers")) {
    std::vector<long long> layers;
    read_key(j, "layers", layers, "attack");
    cfg.layers.clear();
    for (long long l : layers) {
      require(l >= 1 && l <= static_cast<long long>(DenoiserConfig::kLayers), ErrorCode::kConfig,
              "attack.layers entries are 1-based block indices up to " +
                  std::to_string(DenoiserConfig::kLayers));
      cfg.layers.push_back(static_cast<std::size_t>(l - 1));
    }
  }
  read_key(j, "loss_scale", cfg.loss_scale, "attack");
  read_key(j, "prompt", cfg.prompt, "attack");
  cfg.validate();
}

void apply_sampler_json(const nlohmann::json& j, SamplerConfig& cfg) {
  require_object(j, "sampler");
  reject_unknown_keys(j, {"inference_steps", "guidance_scale", "seed", "deterministic", "clip_sample"},
                      "sampler");
  read_key(j, "inference_steps", cfg.inference_steps, "sampler");
  read_key(j, "guidance_scale", cfg.guidance_scale, "sampler");
  read_key(j, "seed", cfg.seed, "sampler");
  read_key(j, "deterministic", cfg.deterministic, "sampler");
  read_key(j, "clip_sample", cfg.clip_sample, "sampler");
  require(cfg.inference_steps >= 1, ErrorCode::kConfig, "sampler.inference_steps must be positive");
  require(cfg.guidance_scale >= 0.0, ErrorCode::kConfig, "sampler.guidance_scale must be >= 0");
  require(cfg.deterministic, ErrorCode::kConfig, "only deterministic sampling is supported");
}

RunConfig run_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + ex.what());
  }
  require_object(j, "config");
  reject_unknown_keys(j, {"train", "attack", "sampler", "experiment"}, "config");
  RunConfig cfg;
  if (j.contains("train")) apply_train_json(j["train"], cfg.train);
  if (j.contains("attack")) apply_attack_json(j["attack"], cfg.attack);
  if (j.contains("sampler")) apply_sampler_json(j["sampler"], cfg.sampler);
  if (j.contains("experiment")) cfg.experiment = j["experiment"];
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return run_config_from_json(std::string(bytes.begin(), bytes.end()));
}

std::vector<Box> parse_boxes(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "malformed box list '" + text + "'");
    }
    require(used == item.size(), ErrorCode::kInvalidArgument, "malformed box list '" + text + "'");
    values.push_back(v);
  }
  require(!values.empty() && values.size() % 4 == 0, ErrorCode::kInvalidArgument,
          "box list needs groups of four integers: '" + text + "'");
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < values.size(); i += 4)
    boxes.push_back({values[i], values[i + 1], values[i + 2], values[i + 3]});
  return boxes;
}

std::vector<int> parse_prompt(const std::string& text) {
  std::vector<int> tokens;
  std::string normalized = text;
  for (char& c : normalized)
    if (c == ',') c = ' ';
  std::stringstream ss(normalized);
  std::string item;
  while (ss >> item) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "malformed prompt '" + text + "'");
    }
    require(used == item.size(), ErrorCode::kInvalidArgument, "malformed prompt '" + text + "'");
    tokens.push_back(v);
  }
  return tokens;
}

}  // namespace advpaint
