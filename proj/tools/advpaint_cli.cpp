#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advpaint/advpaint.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, message}; }

void check(advpaint_status status, const std::string& what) {
  if (status == ADVPAINT_OK) return;
  const int code = status == ADVPAINT_E_CONFIG ? kExitUsage : kExitRuntime;
  throw Failure{code, what + ": " + advpaint_last_error()};
}

struct ImageFree {
  void operator()(advpaint_image* p) const { advpaint_image_free(p); }
};
struct ModelFree {
  void operator()(advpaint_model* p) const { advpaint_model_free(p); }
};
struct ProtectionFree {
  void operator()(advpaint_protection* p) const { advpaint_protection_free(p); }
};
using ImagePtr = std::unique_ptr<advpaint_image, ImageFree>;
using ModelPtr = std::unique_ptr<advpaint_model, ModelFree>;
using ProtectionPtr = std::unique_ptr<advpaint_protection, ProtectionFree>;

ImagePtr read_image(const std::string& path) {
  advpaint_image* img = nullptr;
  check(advpaint_image_read(path.c_str(), &img), "reading " + path);
  return ImagePtr(img);
}

ModelPtr load_model(const std::string& path) {
  advpaint_model* m = nullptr;
  check(advpaint_model_load(path.c_str(), &m), "loading checkpoint " + path);
  return ModelPtr(m);
}

std::vector<int> parse_prompt(const std::string& text) {
  std::size_t n = 0;
  if (advpaint_parse_prompt(text.c_str(), nullptr, 0, &n) != ADVPAINT_OK) {
    usage_error(std::string("--prompt: ") + advpaint_last_error());
  }
  std::vector<int> tokens(n);
  advpaint_parse_prompt(text.c_str(), tokens.data(), tokens.size(), &n);
  return tokens;
}

std::vector<int> parse_boxes(const std::string& text) {
  std::size_t n = 0;
  if (advpaint_parse_boxes(text.c_str(), nullptr, 0, &n) != ADVPAINT_OK) {
    usage_error(std::string("--box: ") + advpaint_last_error());
  }
  std::vector<int> flat(4 * n);
  advpaint_parse_boxes(text.c_str(), flat.data(), n, &n);
  return flat;
}

bool given(const CLI::Option* opt) { return opt->count() > 0; }

void add_config_option(CLI::App* cmd, std::string& path) {
  cmd->add_option("--config", path, "JSON run config; flags given on the command line win")
      ->check(CLI::ExistingFile);
}

void load_config(const std::string& path, advpaint_train_config* train,
                 advpaint_attack_config* attack, advpaint_sampler_config* sampler) {
  if (path.empty()) return;
  check(advpaint_config_load(path.c_str(), train, attack, sampler), "config " + path);
}

// ---- dataset gen -----------------------------------------------------------

struct DatasetArgs {
  std::string out;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::size_t size = 32;
};

void setup_dataset(CLI::App& app, DatasetArgs& a, CLI::App*& gen) {
  CLI::App* ds = app.add_subcommand("dataset", "Synthetic shape dataset");
  ds->require_subcommand(1);
  gen = ds->add_subcommand("gen", "Render a dataset of shape images, masks and metadata");
  gen->add_option("--out", a.out, "Output directory")->required();
  gen->add_option("--count", a.count, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", a.seed, "Master seed");
  gen->add_option("--size", a.size, "Image side in pixels")->check(CLI::Range(16, 256));
}

int run_dataset(const DatasetArgs& a) {
  check(advpaint_dataset_generate(a.out.c_str(), a.count, a.seed, a.size), "dataset gen");
  std::cerr << "wrote " << a.count << " samples to " << a.out << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, model = "standard";
  advpaint_train_config cfg{};
  std::size_t log_every = 100;
  CLI::Option *steps, *seed, *batch, *lr, *dropout, *every;
};

void setup_train(CLI::App& app, TrainArgs& a, CLI::App*& cmd) {
  advpaint_train_config_init(&a.cfg);
  cmd = app.add_subcommand("train", "Train the denoiser on a generated dataset");
  cmd->add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--out", a.out, "Checkpoint path")->required();
  a.steps = cmd->add_option("--steps", a.cfg.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  a.seed = cmd->add_option("--seed", a.cfg.seed, "Training seed");
  a.batch = cmd->add_option("--batch-size", a.cfg.batch_size, "Samples per step")
                ->check(CLI::PositiveNumber);
  a.lr = cmd->add_option("--lr", a.cfg.learning_rate, "Adam learning rate")
             ->check(CLI::PositiveNumber);
  a.dropout = cmd->add_option("--cond-dropout", a.cfg.cond_dropout,
                              "Probability of training on the null prompt")
                  ->check(CLI::Range(0.0, 1.0));
  a.every = cmd->add_option("--checkpoint-every", a.cfg.checkpoint_every,
                            "Save the checkpoint every N steps (0: only at the end)");
  cmd->add_option("--model", a.model, "Denoiser preset")->check(CLI::IsMember({"standard", "toy"}));
  cmd->add_option("--log-every", a.log_every, "Report the loss every N steps");
  add_config_option(cmd, a.config);
}

int run_train(TrainArgs& a) {
  advpaint_train_config cfg;
  advpaint_train_config_init(&cfg);
  load_config(a.config, &cfg, nullptr, nullptr);
  if (given(a.steps)) cfg.steps = a.cfg.steps;
  if (given(a.seed)) cfg.seed = a.cfg.seed;
  if (given(a.batch)) cfg.batch_size = a.cfg.batch_size;
  if (given(a.lr)) cfg.learning_rate = a.cfg.learning_rate;
  if (given(a.dropout)) cfg.cond_dropout = a.cfg.cond_dropout;
  if (given(a.every)) cfg.checkpoint_every = a.cfg.checkpoint_every;
  struct Log {
    std::size_t every, total;
    double sum = 0.0;
    std::size_t n = 0;
  } log{a.log_every, cfg.steps};
  auto progress = [](std::size_t step, double loss, void* user) {
    auto* l = static_cast<Log*>(user);
    l->sum += loss;
    ++l->n;
    if (l->every > 0 && (step % l->every == 0 || step == l->total)) {
      std::cerr << "step " << step << "/" << l->total << " loss " << l->sum / l->n << "\n";
      l->sum = 0.0;
      l->n = 0;
    }
  };
  check(advpaint_train(a.data.c_str(), a.model.c_str(), &cfg, a.out.c_str(), progress, &log,
                       nullptr),
        "train");
  std::cerr << "saved " << a.out << "\n";
  return 0;
}

// ---- protect ---------------------------------------------------------------

struct ProtectArgs {
  std::string ckpt, image, box, out, delta, config, objective, stages, prompt, layers;
  advpaint_attack_config cfg{};
  std::int64_t timestep = -1;
  CLI::Option *rho, *eta, *alpha, *iters, *objective_opt, *stages_opt, *seed, *timestep_opt,
      *prompt_opt, *layers_opt;
};

void setup_protect(CLI::App& app, ProtectArgs& a, CLI::App*& cmd) {
  advpaint_attack_config_init(&a.cfg);
  a.objective = a.cfg.objective;
  a.stages = a.cfg.stages;
  cmd = app.add_subcommand("protect", "Compute a protective perturbation for an image");
  cmd->add_option("--ckpt", a.ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--image", a.image, "Input PPM image")->required()->check(CLI::ExistingFile);
  cmd->add_option("--box", a.box, "Object boxes x0,y0,x1,y1[,...] (end-exclusive)");
  a.rho = cmd->add_option("--rho", a.cfg.rho, "Box enlargement factor")->check(CLI::Range(1.0, 10.0));
  a.eta = cmd->add_option("--eta", a.cfg.eta, "L-infinity budget")->check(CLI::Range(0.0, 1.0));
  a.alpha = cmd->add_option("--alpha", a.cfg.alpha0, "Initial step size")
                ->check(CLI::NonNegativeNumber);
  a.iters = cmd->add_option("--iters", a.cfg.iters, "Iterations per stage")
                ->check(CLI::PositiveNumber);
  a.objective_opt =
      cmd->add_option("--objective", a.objective, "Objective")
          ->check(CLI::IsMember(
              {"attn", "cross-only", "self-only", "noise-max", "noise-min", "latent-min"}));
  a.stages_opt = cmd->add_option("--stages", a.stages, "Stage schedule")
                     ->check(CLI::IsMember({"single", "two", "multi"}));
  a.seed = cmd->add_option("--seed", a.cfg.seed, "Attack seed");
  a.timestep_opt = cmd->add_option("--timestep", a.timestep,
                                   "Diffusion timestep of the attack pass (-1: last)");
  a.prompt_opt = cmd->add_option("--prompt", a.prompt,
                                 "Conditioning tokens of the attack pass, e.g. 1,4 (empty: null)");
  a.layers_opt = cmd->add_option("--layers", a.layers, "Blocks in the attention losses, e.g. 1,3 "
                                                       "(empty: all)");
  cmd->add_option("--out", a.out, "Protected PPM image")->required();
  cmd->add_option("--delta", a.delta, "Full-precision container with delta and traces");
  add_config_option(cmd, a.config);
}

int run_protect(ProtectArgs& a) {
  advpaint_attack_config cfg;
  advpaint_attack_config_init(&cfg);
  load_config(a.config, nullptr, &cfg, nullptr);
  // Copy strings the config storage may point into before overriding.
  std::string objective = cfg.objective, stages = cfg.stages;
  std::vector<int> layers(cfg.layers, cfg.layers + cfg.layer_count);
  std::vector<int> prompt(cfg.prompt, cfg.prompt + cfg.prompt_length);
  if (given(a.rho)) cfg.rho = a.cfg.rho;
  if (given(a.eta)) cfg.eta = a.cfg.eta;
  if (given(a.alpha)) cfg.alpha0 = a.cfg.alpha0;
  if (given(a.iters)) cfg.iters = a.cfg.iters;
  if (given(a.seed)) cfg.seed = a.cfg.seed;
  if (given(a.timestep_opt)) cfg.timestep = a.timestep;
  if (given(a.objective_opt)) objective = a.objective;
  if (given(a.stages_opt)) stages = a.stages;
  if (given(a.prompt_opt)) prompt = parse_prompt(a.prompt);
  if (given(a.layers_opt)) {
    layers = parse_prompt(a.layers);
    for (int l : layers) {
      if (l < 1 || l > 4) usage_error("--layers: block " + std::to_string(l) + " outside 1..4");
    }
  }
  cfg.objective = objective.c_str();
  cfg.stages = stages.c_str();
  cfg.layers = layers.data();
  cfg.layer_count = layers.size();
  cfg.prompt = prompt.data();
  cfg.prompt_length = prompt.size();

  const std::vector<int> boxes = a.box.empty() ? std::vector<int>{} : parse_boxes(a.box);
  if (stages != "single" && boxes.empty()) {
    usage_error("--stages " + stages + " needs at least one --box");
  }

  ModelPtr model = load_model(a.ckpt);
  ImagePtr image = read_image(a.image);
  advpaint_protection* raw = nullptr;
  check(advpaint_protect(model.get(), image.get(), boxes.data(), boxes.size() / 4, &cfg, nullptr,
                         nullptr, &raw),
        "protect");
  ProtectionPtr p(raw);
  check(advpaint_image_write(advpaint_protection_adversarial(p.get()), a.out.c_str(), nullptr),
        "writing " + a.out);
  if (!a.delta.empty()) check(advpaint_protection_save(p.get(), a.delta.c_str()), "writing " + a.delta);
  for (std::size_t s = 0; s < advpaint_protection_stage_count(p.get()); ++s) {
    std::size_t n = 0;
    const double* trace = advpaint_protection_stage_losses(p.get(), s, &n);
    std::cerr << "stage " << advpaint_protection_stage_label(p.get(), s) << ": loss "
              << (n > 0 ? trace[0] : 0.0) << " -> " << advpaint_protection_stage_final_loss(p.get(), s)
              << "\n";
  }
  std::cerr << "psnr " << advpaint_psnr(image.get(), advpaint_protection_adversarial(p.get()))
            << " dB\n";
  return 0;
}

// ---- inpaint ---------------------------------------------------------------

struct InpaintArgs {
  std::string ckpt, image, mask, prompt, out, config;
  advpaint_sampler_config cfg{};
  bool no_clip = false;
  CLI::Option *steps, *guidance, *seed, *no_clip_opt;
};

void setup_inpaint(CLI::App& app, InpaintArgs& a, CLI::App*& cmd) {
  advpaint_sampler_config_init(&a.cfg);
  cmd = app.add_subcommand("inpaint", "Fill the hole of an image with the denoiser");
  cmd->add_option("--ckpt", a.ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--image", a.image, "Input PPM image")->required()->check(CLI::ExistingFile);
  cmd->add_option("--mask", a.mask, "PGM mask, black = hole")->required()->check(CLI::ExistingFile);
  cmd->add_option("--prompt", a.prompt, "Prompt tokens, e.g. 1,4 (empty: null prompt)");
  a.steps = cmd->add_option("--steps", a.cfg.inference_steps, "DDIM steps")
                ->check(CLI::Range(1, 1000));
  a.guidance = cmd->add_option("--guidance", a.cfg.guidance_scale, "Classifier-free guidance scale")
                   ->check(CLI::NonNegativeNumber);
  a.seed = cmd->add_option("--seed", a.cfg.seed, "Sampling seed");
  a.no_clip_opt = cmd->add_flag("--no-clip-sample", a.no_clip,
                                "Skip clipping the predicted clean image at each step");
  cmd->add_option("--out", a.out, "Output PPM image")->required();
  add_config_option(cmd, a.config);
}

int run_inpaint(InpaintArgs& a) {
  advpaint_sampler_config cfg;
  advpaint_sampler_config_init(&cfg);
  load_config(a.config, nullptr, nullptr, &cfg);
  if (given(a.steps)) cfg.inference_steps = a.cfg.inference_steps;
  if (given(a.guidance)) cfg.guidance_scale = a.cfg.guidance_scale;
  if (given(a.seed)) cfg.seed = a.cfg.seed;
  if (given(a.no_clip_opt)) cfg.clip_sample = 0;
  const std::vector<int> prompt = parse_prompt(a.prompt);
  ModelPtr model = load_model(a.ckpt);
  ImagePtr image = read_image(a.image);
  ImagePtr mask = read_image(a.mask);
  advpaint_image* raw = nullptr;
  check(advpaint_inpaint(model.get(), image.get(), mask.get(), prompt.data(), prompt.size(), &cfg,
                         &raw),
        "inpaint");
  ImagePtr result(raw);
  check(advpaint_image_write(result.get(), a.out.c_str(), nullptr), "writing " + a.out);
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string ckpt, plan, out_dir;
};

void setup_evaluate(CLI::App& app, EvaluateArgs& a, CLI::App*& cmd) {
  cmd = app.add_subcommand("evaluate", "Run an experiment plan and write rows.csv and summary.json");
  cmd->add_option("--ckpt", a.ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--plan", a.plan, "Experiment plan (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", a.out_dir, "Report directory")->required();
}

int run_evaluate(const EvaluateArgs& a) {
  ModelPtr model = load_model(a.ckpt);
  std::size_t rows = 0, failures = 0;
  check(advpaint_evaluate(model.get(), a.plan.c_str(), a.out_dir.c_str(), &rows, &failures),
        "evaluate");
  std::cerr << rows << " rows, " << failures << " failures, report in " << a.out_dir << "\n";
  if (failures > 0) {
    throw Failure{kExitRuntime, std::to_string(failures) + " rows failed; see summary.json"};
  }
  return 0;
}

// ---- attmap ----------------------------------------------------------------

struct AttmapArgs {
  std::string ckpt, image, mask, prompt, branch = "cross", out;
  std::size_t layer = 1;
  std::int64_t timestep = -1;
  std::uint64_t seed = 0;
};

void setup_attmap(CLI::App& app, AttmapArgs& a, CLI::App*& cmd) {
  cmd = app.add_subcommand("attmap", "Principal-component heat map of one attention block");
  cmd->add_option("--ckpt", a.ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--image", a.image, "Input PPM image")->required()->check(CLI::ExistingFile);
  cmd->add_option("--mask", a.mask, "PGM mask, black = hole")->required()->check(CLI::ExistingFile);
  cmd->add_option("--prompt", a.prompt, "Prompt tokens, e.g. 1,4 (empty: null prompt)");
  cmd->add_option("--layer", a.layer, "Block index")->check(CLI::Range(1, 4));
  cmd->add_option("--branch", a.branch, "Attention branch")->check(CLI::IsMember({"self", "cross"}));
  cmd->add_option("--timestep", a.timestep, "Diffusion timestep (-1: last)");
  cmd->add_option("--seed", a.seed, "Seed of the noise draw and power iteration");
  cmd->add_option("--out", a.out, "Output 16x16 PGM heat map")->required();
}

int run_attmap(const AttmapArgs& a) {
  const std::vector<int> prompt = parse_prompt(a.prompt);
  ModelPtr model = load_model(a.ckpt);
  ImagePtr image = read_image(a.image);
  ImagePtr mask = read_image(a.mask);
  advpaint_image* raw = nullptr;
  int degenerate = 0;
  check(advpaint_attention_map(model.get(), image.get(), mask.get(), prompt.data(), prompt.size(),
                               a.layer, a.branch.c_str(), a.timestep, a.seed, &raw, &degenerate),
        "attmap");
  ImagePtr map(raw);
  check(advpaint_image_write(map.get(), a.out.c_str(), nullptr), "writing " + a.out);
  if (degenerate) std::cerr << "warning: features have no variance; map is flat\n";
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 7;
  double eps = 1e-5;
  double tolerance = 1e-6;
};

void setup_gradcheck(CLI::App& app, GradcheckArgs& a, CLI::App*& cmd) {
  cmd = app.add_subcommand("gradcheck", "Compare every gradient with central differences");
  cmd->add_option("--seed", a.seed, "Seed of inputs, weights and coordinates");
  cmd->add_option("--eps", a.eps, "Finite-difference step")->check(CLI::Range(1e-7, 1e-3));
  cmd->add_option("--tolerance", a.tolerance, "Largest accepted relative error")
      ->check(CLI::PositiveNumber);
}

int run_gradcheck(const GradcheckArgs& a) {
  auto report = [](const char* item, double err, void*) {
    std::cerr << item << " " << err << "\n";
  };
  double worst = 0.0;
  check(advpaint_gradcheck(a.seed, a.eps, report, nullptr, &worst), "gradcheck");
  std::cerr << "max relative error " << worst << "\n";
  if (!(worst <= a.tolerance)) {
    throw Failure{kExitRuntime, "max relative error exceeds " + std::to_string(a.tolerance)};
  }
  return 0;
}

// ---- shiftmask -------------------------------------------------------------

struct ShiftArgs {
  std::string mask, box, out, label;
  std::uint64_t seed = 0;
  int max_shift = 6;
  double rho = 1.2;
};

void setup_shiftmask(CLI::App& app, ShiftArgs& a, CLI::App*& cmd) {
  cmd = app.add_subcommand("shiftmask", "Randomly translate a mask's hole and classify it in/out");
  cmd->add_option("--mask", a.mask, "PGM mask, black = hole")->required()->check(CLI::ExistingFile);
  cmd->add_option("--box", a.box, "Object box x0,y0,x1,y1 (end-exclusive)")->required();
  cmd->add_option("--seed", a.seed, "Shift seed");
  cmd->add_option("--max-shift", a.max_shift, "Largest shift per axis in pixels")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--rho", a.rho, "Box enlargement factor of the boundary")
      ->check(CLI::Range(1.0, 10.0));
  cmd->add_option("--out", a.out, "Shifted PGM mask; its header comment holds the label")->required();
  cmd->add_option("--label", a.label, "Also write the label (in/out) to this file");
}

int run_shiftmask(const ShiftArgs& a) {
  const std::vector<int> box = parse_boxes(a.box);
  if (box.size() != 4) usage_error("--box takes exactly one box");
  ImagePtr mask = read_image(a.mask);
  advpaint_image* raw = nullptr;
  int in_out = 0;
  check(advpaint_shift_mask(mask.get(), box.data(), a.rho, a.seed, a.max_shift, &raw, &in_out),
        "shiftmask");
  ImagePtr shifted(raw);
  const std::string label = in_out ? "in" : "out";
  check(advpaint_image_write(shifted.get(), a.out.c_str(), label.c_str()), "writing " + a.out);
  if (!a.label.empty()) {
    std::ofstream f(a.label);
    f << label << "\n";
    if (!f) throw Failure{kExitRuntime, "writing " + a.label + " failed"};
  }
  std::cerr << "shifted mask is " << label << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial protection of images against diffusion inpainting"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", advpaint_version());

  DatasetArgs dataset;
  TrainArgs train;
  ProtectArgs protect;
  InpaintArgs inpaint;
  EvaluateArgs evaluate;
  AttmapArgs attmap;
  GradcheckArgs gradcheck;
  ShiftArgs shift;
  CLI::App *gen, *train_cmd, *protect_cmd, *inpaint_cmd, *evaluate_cmd, *attmap_cmd,
      *gradcheck_cmd, *shift_cmd;
  setup_dataset(app, dataset, gen);
  setup_train(app, train, train_cmd);
  setup_protect(app, protect, protect_cmd);
  setup_inpaint(app, inpaint, inpaint_cmd);
  setup_evaluate(app, evaluate, evaluate_cmd);
  setup_attmap(app, attmap, attmap_cmd);
  setup_gradcheck(app, gradcheck, gradcheck_cmd);
  setup_shiftmask(app, shift, shift_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return run_dataset(dataset);
    if (train_cmd->parsed()) return run_train(train);
    if (protect_cmd->parsed()) return run_protect(protect);
    if (inpaint_cmd->parsed()) return run_inpaint(inpaint);
    if (evaluate_cmd->parsed()) return run_evaluate(evaluate);
    if (attmap_cmd->parsed()) return run_attmap(attmap);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck);
    if (shift_cmd->parsed()) return run_shiftmask(shift);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
