#pragma once

#include <json.hpp>
#include <string>

#include "attack/pgd.hpp"
#include "data/train.hpp"
#include "diffusion/sampler.hpp"

namespace advpaint {

/// JSON mirror of the train / attack / sampler settings plus an optional
/// experiment plan. Unknown keys are rejected with kConfig; absent keys keep
/// their defaults.
struct RunConfig {
  TrainConfig train;
  AttackConfig attack;
  SamplerConfig sampler;
  nlohmann::json experiment;  // null when absent; parsed by the experiment harness
};

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

void apply_train_json(const nlohmann::json& j, TrainConfig& cfg);
void apply_attack_json(const nlohmann::json& j, AttackConfig& cfg);
void apply_sampler_json(const nlohmann::json& j, SamplerConfig& cfg);

/// kConfig naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

/// "x0,y0,x1,y1[,x0,y0,x1,y1...]" -> boxes (kInvalidArgument when malformed).
std::vector<Box> parse_boxes(const std::string& text);
/// "1,4" or "1 4" -> token ids; empty text gives the null prompt.
std::vector<int> parse_prompt(const std::string& text);

}  // namespace advpaint
