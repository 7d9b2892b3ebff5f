#include "advpaint/advpaint.h"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attack/gradcheck_suite.hpp"
#include "attack/pgd.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"
#include "data/shapes.hpp"
#include "data/train.hpp"
#include "diffusion/sampler.hpp"
#include "eval/attention_map.hpp"
#include "eval/experiment.hpp"
#include "eval/metrics.hpp"
#include "io/container.hpp"
#include "io/pnm.hpp"
#include "io/run_config.hpp"

using namespace advpaint;

struct advpaint_image {
  Tensor pixels;
  std::vector<std::string> comments;
};

struct advpaint_model {
  Checkpoint checkpoint;
  NoiseSchedule schedule;
};

struct advpaint_protection {
  ProtectionResult result;
  advpaint_image adversarial;
  advpaint_image delta;
  advpaint_image initial_delta;
};

namespace {

struct NullPointer : std::runtime_error {
  using std::runtime_error::runtime_error;
};

thread_local std::string g_last_error;
thread_local std::vector<int> g_config_layers;
thread_local std::vector<int> g_config_prompt;

advpaint_status record(advpaint_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
advpaint_status guarded(F&& body) {
  try {
    body();
    return ADVPAINT_OK;
  } catch (const NullPointer& ex) {
    return record(ADVPAINT_E_NULL_POINTER, ex.what());
  } catch (const Error& ex) {
    return record(static_cast<advpaint_status>(ex.code()), ex.what());
  } catch (const std::bad_alloc&) {
    return record(ADVPAINT_E_INTERNAL, "out of memory");
  } catch (const std::exception& ex) {
    return record(ADVPAINT_E_INTERNAL, ex.what());
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw NullPointer(std::string(what) + " is NULL");
}

std::vector<int> tokens_of(const int* data, std::size_t n) {
  if (n > 0) need(data, "prompt");
  return n > 0 ? std::vector<int>(data, data + n) : std::vector<int>{};
}

std::vector<Box> boxes_of(const int* data, std::size_t count) {
  if (count > 0) need(data, "boxes");
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < count; ++i) {
    const int* b = data + 4 * i;
    boxes.push_back({b[0], b[1], b[2], b[3]});
  }
  return boxes;
}

MaskSpec mask_of(const advpaint_image* mask) {
  need(mask, "mask");
  const Tensor& t = mask->pixels;
  require(t.rank() == 3 && t.extent(0) == 1, ErrorCode::kDimension,
          "mask must have one channel, got " + shape_str(t.shape()));
  return MaskSpec::from_grid(t.reshaped({t.extent(1), t.extent(2)}));
}

TrainConfig to_core(const advpaint_train_config& c) {
  TrainConfig t;
  t.steps = c.steps;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.beta1 = c.beta1;
  t.beta2 = c.beta2;
  t.adam_eps = c.adam_eps;
  t.cond_dropout = c.cond_dropout;
  t.seed = c.seed;
  t.checkpoint_every = c.checkpoint_every;
  return t;
}

void from_core(const TrainConfig& t, advpaint_train_config& c) {
  c.steps = t.steps;
  c.batch_size = t.batch_size;
  c.learning_rate = t.learning_rate;
  c.beta1 = t.beta1;
  c.beta2 = t.beta2;
  c.adam_eps = t.adam_eps;
  c.cond_dropout = t.cond_dropout;
  c.seed = t.seed;
  c.checkpoint_every = t.checkpoint_every;
}

AttackConfig to_core(const advpaint_attack_config& c) {
  AttackConfig a;
  a.eta = c.eta;
  a.alpha0 = c.alpha0;
  a.iters = c.iters;
  need(c.objective, "attack objective");
  need(c.stages, "attack stages");
  a.objective = parse_objective(c.objective);
  a.stages = parse_stage_mode(c.stages);
  a.rho = c.rho;
  if (c.timestep >= 0) a.timestep = static_cast<std::size_t>(c.timestep);
  a.seed = c.seed;
  if (c.layer_count > 0) need(c.layers, "layers");
  for (std::size_t i = 0; i < c.layer_count; ++i) {
    require(c.layers[i] >= 1 && c.layers[i] <= static_cast<int>(DenoiserConfig::kLayers),
            ErrorCode::kInvalidArgument,
            "layer " + std::to_string(c.layers[i]) + " outside 1.." +
                std::to_string(DenoiserConfig::kLayers));
    a.layers.push_back(static_cast<std::size_t>(c.layers[i] - 1));
  }
  a.prompt = tokens_of(c.prompt, c.prompt_length);
  a.validate();
  return a;
}

void from_core(const AttackConfig& a, advpaint_attack_config& c) {
  c.eta = a.eta;
  c.alpha0 = a.alpha0;
  c.iters = a.iters;
  c.objective = objective_name(a.objective);
  c.stages = stage_mode_name(a.stages);
  c.rho = a.rho;
  c.timestep = a.timestep ? static_cast<int64_t>(*a.timestep) : -1;
  c.seed = a.seed;
  g_config_layers.clear();
  for (std::size_t l : a.layers) g_config_layers.push_back(static_cast<int>(l + 1));
  c.layers = g_config_layers.empty() ? nullptr : g_config_layers.data();
  c.layer_count = g_config_layers.size();
  g_config_prompt = a.prompt;
  c.prompt = g_config_prompt.empty() ? nullptr : g_config_prompt.data();
  c.prompt_length = g_config_prompt.size();
}

SamplerConfig to_core(const advpaint_sampler_config& c) {
  SamplerConfig s;
  s.inference_steps = c.inference_steps;
  s.guidance_scale = c.guidance_scale;
  s.seed = c.seed;
  s.clip_sample = c.clip_sample != 0;
  return s;
}

void from_core(const SamplerConfig& s, advpaint_sampler_config& c) {
  c.inference_steps = s.inference_steps;
  c.guidance_scale = s.guidance_scale;
  c.seed = s.seed;
  c.clip_sample = s.clip_sample ? 1 : 0;
}

template <typename T>
std::size_t copy_out(const std::vector<T>& values, T* out, std::size_t capacity) {
  if (out == nullptr) return values.size();
  require(capacity >= values.size(), ErrorCode::kInvalidArgument,
          "buffer holds " + std::to_string(capacity) + ", need " + std::to_string(values.size()));
  std::copy(values.begin(), values.end(), out);
  return values.size();
}

}  // namespace

extern "C" {

const char* advpaint_version(void) { return "1.0.0"; }

const char* advpaint_status_name(advpaint_status status) {
  switch (status) {
    case ADVPAINT_OK: return "ok";
    case ADVPAINT_E_NULL_POINTER: return "null-pointer";
    case ADVPAINT_E_INTERNAL: return "internal";
    default:
      if (status >= ADVPAINT_E_INVALID_ARGUMENT && status <= ADVPAINT_E_ATTACK) {
        return error_code_name(static_cast<ErrorCode>(status));
      }
      return "unknown";
  }
}

const char* advpaint_last_error(void) { return g_last_error.c_str(); }

advpaint_status advpaint_image_create(size_t channels, size_t height, size_t width,
                                      const double* data, advpaint_image** out) {
  return guarded([&] {
    need(out, "out");
    require(channels > 0 && height > 0 && width > 0, ErrorCode::kDimension,
            "image extents must be positive");
    auto img = std::make_unique<advpaint_image>();
    img->pixels = Tensor({channels, height, width});
    if (data != nullptr) std::copy(data, data + img->pixels.numel(), img->pixels.data().begin());
    *out = img.release();
  });
}

advpaint_status advpaint_image_read(const char* path, advpaint_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    PnmImage pnm = decode_pnm(read_file_bytes(path));
    *out = new advpaint_image{std::move(pnm.pixels), std::move(pnm.comments)};
  });
}

advpaint_status advpaint_image_write(const advpaint_image* image, const char* path,
                                     const char* comment) {
  return guarded([&] {
    need(image, "image");
    need(path, "path");
    write_file_bytes(path, encode_pnm(image->pixels, comment ? comment : ""));
  });
}

void advpaint_image_free(advpaint_image* image) { delete image; }

size_t advpaint_image_channels(const advpaint_image* image) {
  return image ? image->pixels.extent(0) : 0;
}
size_t advpaint_image_height(const advpaint_image* image) {
  return image ? image->pixels.extent(1) : 0;
}
size_t advpaint_image_width(const advpaint_image* image) {
  return image ? image->pixels.extent(2) : 0;
}
const double* advpaint_image_data(const advpaint_image* image) {
  return image ? image->pixels.data().data() : nullptr;
}
size_t advpaint_image_comment_count(const advpaint_image* image) {
  return image ? image->comments.size() : 0;
}
const char* advpaint_image_comment(const advpaint_image* image, size_t index) {
  if (image == nullptr || index >= image->comments.size()) return nullptr;
  return image->comments[index].c_str();
}

double advpaint_psnr(const advpaint_image* a, const advpaint_image* b) {
  double value = 0.0;
  const advpaint_status s = guarded([&] {
    need(a, "a");
    need(b, "b");
    value = psnr(a->pixels, b->pixels);
  });
  return s == ADVPAINT_OK ? value : -1.0;
}

void advpaint_train_config_init(advpaint_train_config* config) {
  if (config) from_core(TrainConfig{}, *config);
}
void advpaint_attack_config_init(advpaint_attack_config* config) {
  if (config == nullptr) return;
  const AttackConfig a;
  config->eta = a.eta;
  config->alpha0 = a.alpha0;
  config->iters = a.iters;
  config->objective = objective_name(a.objective);
  config->stages = stage_mode_name(a.stages);
  config->rho = a.rho;
  config->timestep = -1;
  config->seed = a.seed;
  config->layers = nullptr;
  config->layer_count = 0;
  config->prompt = nullptr;
  config->prompt_length = 0;
}
void advpaint_sampler_config_init(advpaint_sampler_config* config) {
  if (config) from_core(SamplerConfig{}, *config);
}

advpaint_status advpaint_config_load(const char* path, advpaint_train_config* train,
                                     advpaint_attack_config* attack,
                                     advpaint_sampler_config* sampler) {
  return guarded([&] {
    need(path, "path");
    const auto bytes = read_file_bytes(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::kConfig, std::string("config ") + path + " is not valid JSON: " + ex.what());
    }
    require(j.is_object(), ErrorCode::kConfig, "config must be a JSON object");
    reject_unknown_keys(j, {"train", "attack", "sampler", "experiment"}, "config");
    // Parse everything before touching the caller's structs.
    TrainConfig t = train ? to_core(*train) : TrainConfig{};
    AttackConfig a = attack ? to_core(*attack) : AttackConfig{};
    SamplerConfig s = sampler ? to_core(*sampler) : SamplerConfig{};
    if (j.contains("train")) apply_train_json(j["train"], t);
    if (j.contains("attack")) apply_attack_json(j["attack"], a);
    if (j.contains("sampler")) apply_sampler_json(j["sampler"], s);
    if (train) from_core(t, *train);
    if (attack) from_core(a, *attack);
    if (sampler) from_core(s, *sampler);
  });
}

advpaint_status advpaint_parse_boxes(const char* text, int* boxes, size_t capacity,
                                     size_t* box_count) {
  return guarded([&] {
    need(text, "text");
    need(box_count, "box_count");
    std::vector<int> flat;
    for (const Box& b : parse_boxes(text)) flat.insert(flat.end(), {b.x0, b.y0, b.x1, b.y1});
    *box_count = copy_out(flat, boxes, 4 * capacity) / 4;
  });
}

advpaint_status advpaint_parse_prompt(const char* text, int* tokens, size_t capacity,
                                      size_t* length) {
  return guarded([&] {
    need(text, "text");
    need(length, "length");
    const std::string s = text;
    const std::vector<int> parsed = (s.empty() || s == "null") ? std::vector<int>{} : parse_prompt(s);
    *length = copy_out(parsed, tokens, capacity);
  });
}

advpaint_status advpaint_dataset_generate(const char* out_dir, size_t count, uint64_t seed,
                                          size_t image_size) {
  return guarded([&] {
    need(out_dir, "out_dir");
    gen_dataset(count, seed, out_dir, image_size);
  });
}

advpaint_status advpaint_train(const char* data_dir, const char* model_preset,
                               const advpaint_train_config* config, const char* out_path,
                               advpaint_train_progress_fn progress, void* user,
                               advpaint_model** out) {
  return guarded([&] {
    need(data_dir, "data_dir");
    need(config, "config");
    const std::string preset = model_preset ? model_preset : "standard";
    DenoiserConfig mc;
    if (preset == "standard") {
      mc = DenoiserConfig::standard();
    } else if (preset == "toy") {
      mc = DenoiserConfig::toy();
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown model preset '" + preset + "'");
    }
    const TrainConfig tc = to_core(*config);
    const std::vector<ShapeSample> data = load_dataset(data_dir);
    require(data.empty() || data.front().image.extent(1) == mc.image_size, ErrorCode::kDimension,
            "dataset images do not match the model's image size");
    TrainProgress cb;
    if (progress) cb = [progress, user](std::size_t step, double loss) { progress(step, loss, user); };
    std::optional<std::filesystem::path> path;
    if (out_path) path = out_path;
    const NoiseSchedule sched = default_schedule();
    TrainResult r = train(tc, data, sched, mc, std::nullopt, path, cb);
    if (out) *out = new advpaint_model{std::move(r.checkpoint), sched};
  });
}

advpaint_status advpaint_model_load(const char* path, advpaint_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new advpaint_model{Checkpoint::load(path), default_schedule()};
  });
}

advpaint_status advpaint_model_save(const advpaint_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->checkpoint.save(path);
  });
}

void advpaint_model_free(advpaint_model* model) { delete model; }

uint64_t advpaint_model_train_step(const advpaint_model* model) {
  return model ? model->checkpoint.train_step : 0;
}
size_t advpaint_model_parameter_count(const advpaint_model* model) {
  return model ? model->checkpoint.parameter_count() : 0;
}
size_t advpaint_model_image_size(const advpaint_model* model) {
  return model ? model->checkpoint.config.image_size : 0;
}

advpaint_status advpaint_protect(const advpaint_model* model, const advpaint_image* image,
                                 const int* boxes, size_t box_count,
                                 const advpaint_attack_config* config, advpaint_iteration_fn hook,
                                 void* user, advpaint_protection** out) {
  return guarded([&] {
    need(model, "model");
    need(image, "image");
    need(config, "config");
    need(out, "out");
    const AttackConfig cfg = to_core(*config);
    StageIterationHook h;
    if (hook) {
      h = [hook, user](std::size_t stage, std::size_t i, const Tensor& d, const Tensor& xa) {
        hook(stage, i, d.data().data(), xa.data().data(), d.numel(), user);
      };
    }
    auto p = std::make_unique<advpaint_protection>();
    p->result = protect(model->checkpoint, model->schedule, image->pixels,
                        boxes_of(boxes, box_count), cfg, h);
    p->adversarial.pixels = p->result.adversarial;
    p->delta.pixels = p->result.delta;
    p->initial_delta.pixels = p->result.initial_delta;
    *out = p.release();
  });
}

void advpaint_protection_free(advpaint_protection* protection) { delete protection; }

const advpaint_image* advpaint_protection_adversarial(const advpaint_protection* p) {
  return p ? &p->adversarial : nullptr;
}
const advpaint_image* advpaint_protection_delta(const advpaint_protection* p) {
  return p ? &p->delta : nullptr;
}
const advpaint_image* advpaint_protection_initial_delta(const advpaint_protection* p) {
  return p ? &p->initial_delta : nullptr;
}
size_t advpaint_protection_stage_count(const advpaint_protection* p) {
  return p ? p->result.stages.size() : 0;
}
const char* advpaint_protection_stage_label(const advpaint_protection* p, size_t stage) {
  if (p == nullptr || stage >= p->result.stages.size()) return nullptr;
  return p->result.stages[stage].label.c_str();
}
const double* advpaint_protection_stage_losses(const advpaint_protection* p, size_t stage,
                                               size_t* length) {
  if (p == nullptr || stage >= p->result.stages.size()) {
    if (length) *length = 0;
    return nullptr;
  }
  const auto& trace = p->result.stages[stage].loss_trace;
  if (length) *length = trace.size();
  return trace.data();
}
double advpaint_protection_stage_final_loss(const advpaint_protection* p, size_t stage) {
  if (p == nullptr || stage >= p->result.stages.size()) return 0.0;
  return p->result.stages[stage].final_loss;
}

advpaint_status advpaint_protection_save(const advpaint_protection* p, const char* path) {
  return guarded([&] {
    need(p, "protection");
    need(path, "path");
    p->result.save(path);
  });
}

advpaint_status advpaint_inpaint(const advpaint_model* model, const advpaint_image* image,
                                 const advpaint_image* mask, const int* prompt,
                                 size_t prompt_length, const advpaint_sampler_config* config,
                                 advpaint_image** out) {
  return guarded([&] {
    need(model, "model");
    need(image, "image");
    need(config, "config");
    need(out, "out");
    const std::vector<int> tokens = tokens_of(prompt, prompt_length);
    Tensor result = inpaint_sample(model->checkpoint, model->schedule, image->pixels,
                                   mask_of(mask), tokens, to_core(*config));
    *out = new advpaint_image{std::move(result), {}};
  });
}

advpaint_status advpaint_attention_map(const advpaint_model* model, const advpaint_image* image,
                                       const advpaint_image* mask, const int* prompt,
                                       size_t prompt_length, size_t layer, const char* branch,
                                       int64_t timestep, uint64_t seed, advpaint_image** out,
                                       int* degenerate) {
  return guarded([&] {
    need(model, "model");
    need(image, "image");
    need(branch, "branch");
    need(out, "out");
    const Checkpoint& ck = model->checkpoint;
    const Branch b = parse_branch(branch);
    PassSetup setup;
    setup.ck = &ck;
    setup.sched = &model->schedule;
    setup.timestep = timestep < 0 ? model->schedule.train_steps : static_cast<std::size_t>(timestep);
    setup.hole = mask_of(mask);
    setup.tokens = pad_prompt(tokens_of(prompt, prompt_length), ck.config);
    const std::size_t ls = ck.config.latent_size();
    setup.eps = Tensor({ck.config.latent_channels, ls, ls});
    Rng rng(derive_seed(seed, 0x7a95));
    for (double& v : setup.eps.data()) v = rng.normal();
    const HeatMap map = attention_pca_map(clean_taps(image->pixels, setup), layer, b, seed);
    if (degenerate) *degenerate = map.degenerate ? 1 : 0;
    *out = new advpaint_image{map.map.reshaped({1, map.map.extent(0), map.map.extent(1)}), {}};
  });
}

advpaint_status advpaint_evaluate(const advpaint_model* model, const char* plan_path,
                                  const char* out_dir, size_t* rows, size_t* failures) {
  return guarded([&] {
    need(model, "model");
    need(plan_path, "plan_path");
    need(out_dir, "out_dir");
    const ExperimentPlan plan = load_plan(plan_path);
    const ExperimentReport report = run_experiment(plan, model->checkpoint, model->schedule);
    write_report(report, out_dir);
    if (rows) *rows = report.rows.size();
    if (failures) *failures = report.failures.size();
  });
}

advpaint_status advpaint_shift_mask(const advpaint_image* mask, const int* box, double rho,
                                    uint64_t seed, int max_shift, advpaint_image** out,
                                    int* in_out) {
  return guarded([&] {
    need(box, "box");
    need(out, "out");
    const MaskSpec m = mask_of(mask);
    const Box b{box[0], box[1], box[2], box[3]};
    validate_box(b, m.width(), m.height());
    require(m.width() == m.height(), ErrorCode::kDimension, "mask must be square");
    const Box opt = enlarge_box(b, rho, m.width(), m.height());
    Rng rng(seed);
    const ShiftedMask s = random_shift_mask(m, opt, rng, max_shift);
    if (in_out) *in_out = s.in_out == InOut::kIn ? 1 : 0;
    const Tensor& g = s.mask.grid;
    *out = new advpaint_image{g.reshaped({1, g.extent(0), g.extent(1)}), {in_out_name(s.in_out)}};
  });
}

advpaint_status advpaint_gradcheck(uint64_t seed, double step, advpaint_gradcheck_fn report,
                                   void* user, double* max_rel_error) {
  return guarded([&] {
    GradcheckProgress cb;
    if (report) {
      cb = [report, user](const GradcheckItem& item) {
        report(item.name.c_str(), item.max_rel_error, user);
      };
    }
    const GradcheckReport r = run_gradcheck_suite(seed, step, 20, cb);
    if (max_rel_error) *max_rel_error = r.max_rel_error;
  });
}

}  // extern "C"
