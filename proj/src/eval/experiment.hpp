#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attack/pgd.hpp"
#include "data/shapes.hpp"
#include "diffusion/sampler.hpp"
#include "io/run_config.hpp"

namespace advpaint {

struct PlanImage {
  std::string id;
  Tensor image;
  std::vector<Box> boxes;
  std::vector<int> prompt;  // the image's own prompt
  std::optional<MaskSpec> segmentation;
};

/// A prompt of the plan: the image's own prompt or a fixed token list.
struct PlanPrompt {
  bool own = false;
  std::vector<int> tokens;
};

/// Rows enumerate images x masks x prompts x objectives x stages.
/// Masks: "seg", "bbox", "inverted", "shifted" (expands to shifts_per_class
/// masks of each in/out class). Objectives are objective names or "random"
/// (the unoptimized uniform draw).
struct ExperimentPlan {
  std::vector<PlanImage> images;
  std::vector<std::string> masks{"seg", "bbox", "inverted", "shifted"};
  std::vector<PlanPrompt> prompts{PlanPrompt{true, {}}};
  std::vector<std::string> objectives{"attn"};
  std::vector<StageMode> stages{StageMode::kTwoStage};
  AttackConfig attack;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  int max_shift = 6;
  std::size_t shifts_per_class = 1;
  std::size_t shift_attempts = 400;
  std::optional<double> purify_sigma;
  bool attack_own_prompt = true;  // else the attack pass uses the null prompt

  /// kConfig for empty lists or unknown names.
  void validate() const;
};

struct MetricRow {
  std::string image_id;
  std::string mask_id;
  std::string in_out;  // m_in / m_out relative to the enlarged box
  std::string prompt;
  std::string objective;
  std::string stages;
  double psnr_adv_db = 0.0;
  double attention_divergence = 0.0;
  double hole_deviation_vs_clean = 0.0;
  double hole_deviation_vs_original = 0.0;
  double latent_l2 = 0.0;

  std::string key() const;
};

struct ProtectionRecord {
  std::string image_id;
  std::string objective;
  std::string stages;
  std::vector<double> initial_losses;  // per stage
  std::vector<double> final_losses;
};

struct ExperimentReport {
  std::vector<MetricRow> rows;          // sorted by key
  std::vector<ProtectionRecord> protections;
  std::vector<std::string> failures;
  std::size_t planned_rows = 0;
};

/// Masks the plan generates for one image, with their ids.
struct PlanMask {
  std::string id;
  MaskSpec mask;
};
std::vector<PlanMask> plan_masks(const ExperimentPlan& plan, const PlanImage& image,
                                 std::size_t size);

/// The box the in/out classification uses: hull of the rho-enlarged boxes.
Box optimization_box(const std::vector<Box>& boxes, double rho, std::size_t size);

ExperimentReport run_experiment(const ExperimentPlan& plan, const Checkpoint& ck,
                                const NoiseSchedule& sched);

std::string format_prompt(const std::vector<int>& tokens);
std::string report_csv(const ExperimentReport& report);
std::string report_summary_json(const ExperimentReport& report);
/// rows.csv and summary.json under out_dir.
void write_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

/// Plan from JSON. Images come from "dataset" (a gen_dataset directory,
/// relative to base_dir) via "ids" or "count".
ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentPlan load_plan(const std::filesystem::path& path);

/// Plan images from dataset samples.
std::vector<PlanImage> plan_images_from_dataset(const std::vector<ShapeSample>& samples);

}  // namespace advpaint
