#include "eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <mutex>
#include <thread>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "eval/metrics.hpp"
#include "io/container.hpp"

namespace advpaint {
namespace {

constexpr const char* kRandomObjective = "random";

// FNV-1a: a portable string hash for per-row seeds.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ImageOutcome {
  std::vector<MetricRow> rows;
  std::vector<ProtectionRecord> protections;
  std::vector<std::string> failures;
};

PassSetup tap_setup(const Checkpoint& ck, const NoiseSchedule& sched, const ExperimentPlan& plan,
                    const PlanImage& img, const MaskSpec& mask, const std::vector<int>& prompt) {
  PassSetup setup;
  setup.ck = &ck;
  setup.sched = &sched;
  setup.timestep = plan.attack.timestep.value_or(sched.train_steps);
  setup.hole = mask;
  setup.tokens = pad_prompt(prompt, ck.config);
  const std::size_t ls = ck.config.latent_size();
  setup.eps = Tensor({ck.config.latent_channels, ls, ls});
  Rng rng(derive_seed(plan.seed, fnv1a(img.id + "/taps")));
  for (double& v : setup.eps.data()) v = rng.normal();
  return setup;
}

ImageOutcome run_image(const ExperimentPlan& plan, const Checkpoint& ck,
                       const NoiseSchedule& sched, const PlanImage& img) {
  ImageOutcome outcome;
  const std::size_t size = ck.config.image_size;
  std::vector<PlanMask> masks;
  try {
    masks = plan_masks(plan, img, size);
  } catch (const Error& ex) {
    outcome.failures.push_back(img.id + ": " + ex.what());
    return outcome;
  }
  const Box opt_box = optimization_box(img.boxes, plan.attack.rho, size);

  struct PromptCase {
    std::vector<int> tokens;
    std::string label;
  };
  std::vector<PromptCase> prompts;
  for (const auto& p : plan.prompts) {
    PromptCase pc{p.own ? img.prompt : p.tokens, {}};
    pc.label = format_prompt(pc.tokens);
    prompts.push_back(std::move(pc));
  }

  // Clean inpaintings and taps, shared by every objective.
  std::map<std::pair<std::size_t, std::size_t>, Tensor> clean_out;
  std::map<std::pair<std::size_t, std::size_t>, TapValues> clean_tap;
  auto sampler_for = [&](const PlanMask& m, const PromptCase& p) {
    SamplerConfig sc = plan.sampler;
    sc.seed = derive_seed(plan.sampler.seed, fnv1a(img.id + "/" + m.id + "/" + p.label));
    return sc;
  };

  for (const auto& objective : plan.objectives) {
    for (StageMode mode : plan.stages) {
      const std::string stage_name = stage_mode_name(mode);
      AttackConfig ac = plan.attack;
      ac.stages = mode;
      ac.seed = derive_seed(plan.attack.seed, fnv1a(img.id));
      ac.prompt = plan.attack_own_prompt ? img.prompt : std::vector<int>{};
      Tensor x_adv;
      try {
        if (objective == kRandomObjective) {
          x_adv = apply_delta(img.image, random_delta(img.image, img.boxes, ac));
        } else {
          ac.objective = parse_objective(objective);
          const ProtectionResult pr = protect(ck, sched, img.image, img.boxes, ac);
          x_adv = pr.adversarial;
          ProtectionRecord rec{img.id, objective, stage_name, {}, {}};
          for (const auto& st : pr.stages) {
            rec.initial_losses.push_back(st.loss_trace.front());
            rec.final_losses.push_back(st.final_loss);
          }
          outcome.protections.push_back(std::move(rec));
        }
      } catch (const Error& ex) {
        outcome.failures.push_back(img.id + "/" + objective + "/" + stage_name + ": " + ex.what());
        continue;
      }
      Tensor x_in = x_adv;
      if (plan.purify_sigma)
        x_in = gaussian_purify(x_adv, *plan.purify_sigma, derive_seed(plan.seed, fnv1a(img.id)));

      for (std::size_t mi = 0; mi < masks.size(); ++mi) {
        const PlanMask& m = masks[mi];
        for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
          const PromptCase& p = prompts[pi];
          MetricRow row;
          row.image_id = img.id;
          row.mask_id = m.id;
          row.prompt = p.label;
          row.objective = objective;
          row.stages = stage_name;
          try {
            row.in_out = m.mask.hole_area() == 0 ? "none"
                                                 : in_out_name(classify_in_out(m.mask, opt_box));
            const auto key = std::make_pair(mi, pi);
            const SamplerConfig sc = sampler_for(m, p);
            const PassSetup setup = tap_setup(ck, sched, plan, img, m.mask, p.tokens);
            if (!clean_out.count(key)) {
              clean_out.emplace(key, inpaint_sample(ck, sched, img.image, m.mask, p.tokens, sc));
              clean_tap.emplace(key, clean_taps(img.image, setup));
            }
            const Tensor adv_out = inpaint_sample(ck, sched, x_in, m.mask, p.tokens, sc);
            const TapValues adv_tap = clean_taps(x_in, setup);
            row.psnr_adv_db = psnr(img.image, x_adv);
            row.attention_divergence =
                attention_divergence(clean_tap.at(key), adv_tap, ck.config.heads);
            row.hole_deviation_vs_clean = hole_deviation(adv_out, clean_out.at(key), m.mask);
            row.hole_deviation_vs_original = hole_deviation(adv_out, img.image, m.mask);
            row.latent_l2 = latent_l2(ck.config, x_adv, img.image);
            outcome.rows.push_back(std::move(row));
          } catch (const Error& ex) {
            outcome.failures.push_back(row.key() + ": " + ex.what());
          }
        }
      }
    }
  }
  return outcome;
}

struct Stats {
  double sum = 0.0, min = 0.0, max = 0.0;
  std::size_t count = 0;
  void add(double v) {
    min = count == 0 ? v : std::min(min, v);
    max = count == 0 ? v : std::max(max, v);
    sum += v;
    ++count;
  }
};

nlohmann::ordered_json stats_json(const std::vector<const MetricRow*>& rows) {
  Stats psnr_s, div_s, hc_s, ho_s, l2_s;
  for (const MetricRow* r : rows) {
    psnr_s.add(r->psnr_adv_db);
    div_s.add(r->attention_divergence);
    hc_s.add(r->hole_deviation_vs_clean);
    ho_s.add(r->hole_deviation_vs_original);
    l2_s.add(r->latent_l2);
  }
  auto one = [](const Stats& s) {
    nlohmann::ordered_json j;
    j["mean"] = s.count ? s.sum / static_cast<double>(s.count) : 0.0;
    j["min"] = s.min;
    j["max"] = s.max;
    return j;
  };
  nlohmann::ordered_json j;
  j["count"] = rows.size();
  j["psnr_adv_db"] = one(psnr_s);
  j["attention_divergence"] = one(div_s);
  j["hole_deviation_vs_clean"] = one(hc_s);
  j["hole_deviation_vs_original"] = one(ho_s);
  j["latent_l2"] = one(l2_s);
  return j;
}

}  // namespace

void ExperimentPlan::validate() const {
  require(!images.empty(), ErrorCode::kConfig, "experiment plan has no images");
  require(!masks.empty(), ErrorCode::kConfig, "experiment plan has no masks");
  require(!prompts.empty(), ErrorCode::kConfig, "experiment plan has no prompts");
  require(!objectives.empty(), ErrorCode::kConfig, "experiment plan has no objectives");
  require(!stages.empty(), ErrorCode::kConfig, "experiment plan has no stage modes");
  for (const auto& m : masks)
    require(m == "seg" || m == "bbox" || m == "inverted" || m == "shifted", ErrorCode::kConfig,
            "unknown mask generator '" + m + "'");
  for (const auto& o : objectives) {
    if (o == kRandomObjective) continue;
    try {
      parse_objective(o);
    } catch (const Error& ex) {
      fail(ErrorCode::kConfig, ex.what());
    }
  }
  require(threads >= 1, ErrorCode::kConfig, "threads must be at least 1");
  require(max_shift >= 1, ErrorCode::kConfig, "max_shift must be at least 1");
  require(!purify_sigma || *purify_sigma >= 0.0, ErrorCode::kConfig,
          "purify_sigma must be non-negative");
  attack.validate();
}

std::string MetricRow::key() const {
  return image_id + "|" + mask_id + "|" + prompt + "|" + objective + "|" + stages;
}

Box optimization_box(const std::vector<Box>& boxes, double rho, std::size_t size) {
  require(!boxes.empty(), ErrorCode::kInvalidArgument, "image has no boxes");
  Box hull = enlarge_box(boxes[0], rho, size, size);
  for (std::size_t i = 1; i < boxes.size(); ++i) {
    const Box b = enlarge_box(boxes[i], rho, size, size);
    hull = {std::min(hull.x0, b.x0), std::min(hull.y0, b.y0), std::max(hull.x1, b.x1),
            std::max(hull.y1, b.y1)};
  }
  return hull;
}

std::vector<PlanMask> plan_masks(const ExperimentPlan& plan, const PlanImage& img,
                                 std::size_t size) {
  require(!img.boxes.empty(), ErrorCode::kInvalidArgument, "image " + img.id + " has no boxes");
  std::vector<PlanMask> out;
  const MaskSpec box_mask = box_to_mask(img.boxes[0], true, size, size);
  MaskSpec base = box_mask;
  if (img.segmentation) base = *img.segmentation;
  for (const auto& kind : plan.masks) {
    if (kind == "seg") {
      out.push_back({"seg", base});
    } else if (kind == "bbox") {
      out.push_back({"bbox", box_mask});
    } else if (kind == "inverted") {
      out.push_back({"inverted", box_mask.inverted()});
    } else if (kind == "shifted") {
      const Box opt = optimization_box(img.boxes, plan.attack.rho, size);
      Rng rng(derive_seed(plan.seed, fnv1a(img.id + "/shift")));
      std::size_t n_in = 0, n_out = 0;
      for (std::size_t a = 0; a < plan.shift_attempts; ++a) {
        if (n_in >= plan.shifts_per_class && n_out >= plan.shifts_per_class) break;
        ShiftedMask s = random_shift_mask(base, opt, rng, plan.max_shift);
        if (s.in_out == InOut::kIn && n_in < plan.shifts_per_class)
          out.push_back({"shift-in" + std::to_string(n_in++), std::move(s.mask)});
        else if (s.in_out == InOut::kOut && n_out < plan.shifts_per_class)
          out.push_back({"shift-out" + std::to_string(n_out++), std::move(s.mask)});
      }
    }
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const Checkpoint& ck,
                                const NoiseSchedule& sched) {
  plan.validate();
  ck.require_trained();
  std::vector<ImageOutcome> outcomes(plan.images.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.images.size(); i = next++)
      outcomes[i] = run_image(plan, ck, sched, plan.images[i]);
  };
  const std::size_t threads = std::min(plan.threads, plan.images.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentReport report;
  for (auto& o : outcomes) {
    for (auto& r : o.rows) report.rows.push_back(std::move(r));
    for (auto& p : o.protections) report.protections.push_back(std::move(p));
    for (auto& f : o.failures) report.failures.push_back(std::move(f));
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const MetricRow& a, const MetricRow& b) { return a.key() < b.key(); });
  std::sort(report.protections.begin(), report.protections.end(),
            [](const ProtectionRecord& a, const ProtectionRecord& b) {
              return std::tie(a.image_id, a.objective, a.stages) <
                     std::tie(b.image_id, b.objective, b.stages);
            });
  std::sort(report.failures.begin(), report.failures.end());
  std::size_t masks_total = 0;
  for (const auto& img : plan.images) {
    try {
      masks_total += plan_masks(plan, img, ck.config.image_size).size();
    } catch (const Error&) {
    }
  }
  report.planned_rows =
      masks_total * plan.prompts.size() * plan.objectives.size() * plan.stages.size();
  return report;
}

std::string format_prompt(const std::vector<int>& tokens) {
  if (tokens.empty()) return "null";
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(tokens[i]);
  }
  return s;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "image_id,mask_id,in_out,prompt,objective,stages,psnr_adv_db,attention_divergence,"
      "hole_deviation_vs_clean,hole_deviation_vs_original,latent_l2\n";
  for (const auto& r : report.rows) {
    out += r.image_id + "," + r.mask_id + "," + r.in_out + "," + r.prompt + "," + r.objective +
           "," + r.stages + "," + format_double(r.psnr_adv_db) + "," +
           format_double(r.attention_divergence) + "," + format_double(r.hole_deviation_vs_clean) +
           "," + format_double(r.hole_deviation_vs_original) + "," + format_double(r.latent_l2) +
           "\n";
  }
  return out;
}

std::string report_summary_json(const ExperimentReport& report) {
  std::map<std::string, std::vector<const MetricRow*>> by_objective, by_group;
  for (const auto& r : report.rows) {
    by_objective[r.objective].push_back(&r);
    by_group[r.objective + "/" + r.stages].push_back(&r);
  }
  nlohmann::ordered_json j;
  j["rows"] = report.rows.size();
  j["planned_rows"] = report.planned_rows;
  j["failures"] = report.failures;
  nlohmann::ordered_json objectives = nlohmann::ordered_json::object();
  for (const auto& [name, rows] : by_objective) objectives[name] = stats_json(rows);
  j["objectives"] = std::move(objectives);
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (const auto& [name, rows] : by_group) groups[name] = stats_json(rows);
  j["groups"] = std::move(groups);
  nlohmann::ordered_json protections = nlohmann::ordered_json::array();
  for (const auto& p : report.protections)
    protections.push_back({{"image_id", p.image_id},
                           {"objective", p.objective},
                           {"stages", p.stages},
                           {"initial_losses", p.initial_losses},
                           {"final_losses", p.final_losses}});
  j["protections"] = std::move(protections);
  return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create report directory " + out_dir.string());
  const std::string csv = report_csv(report);
  const std::string json = report_summary_json(report);
  write_file_bytes(out_dir / "rows.csv",
                   std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  write_file_bytes(out_dir / "summary.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
}

std::vector<PlanImage> plan_images_from_dataset(const std::vector<ShapeSample>& samples) {
  std::vector<PlanImage> out;
  char buf[24];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%05zu", i);
    const ShapeSample& s = samples[i];
    out.push_back({buf, s.image, {s.bbox}, s.prompt(), s.segmentation});
  }
  return out;
}

ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  require(j.is_object(), ErrorCode::kConfig, "experiment plan must be a JSON object");
  reject_unknown_keys(j,
                      {"dataset", "ids", "count", "masks", "prompts", "objectives", "stages",
                       "attack", "sampler", "seed", "threads", "max_shift", "shifts_per_class",
                       "shift_attempts", "purify_sigma", "attack_prompt"},
                      "experiment");
  ExperimentPlan plan;
  try {
    require(j.contains("dataset"), ErrorCode::kConfig, "experiment plan needs a dataset");
    std::filesystem::path dir = j.at("dataset").get<std::string>();
    if (dir.is_relative()) dir = base_dir / dir;
    const std::size_t count = j.value("count", std::size_t{0});
    std::vector<ShapeSample> samples = load_dataset(dir, count);
    std::vector<PlanImage> images = plan_images_from_dataset(samples);
    if (j.contains("ids")) {
      const auto ids = j.at("ids").get<std::vector<std::string>>();
      std::vector<PlanImage> chosen;
      for (const auto& id : ids) {
        auto it = std::find_if(images.begin(), images.end(),
                               [&](const PlanImage& p) { return p.id == id; });
        require(it != images.end(), ErrorCode::kConfig, "dataset has no image " + id);
        chosen.push_back(*it);
      }
      images = std::move(chosen);
    }
    plan.images = std::move(images);
    if (j.contains("masks")) plan.masks = j.at("masks").get<std::vector<std::string>>();
    if (j.contains("prompts")) {
      plan.prompts.clear();
      for (const auto& p : j.at("prompts")) {
        if (p.is_string()) {
          require(p.get<std::string>() == "own", ErrorCode::kConfig,
                  "prompt entries are token lists or \"own\"");
          plan.prompts.push_back({true, {}});
        } else {
          plan.prompts.push_back({false, p.get<std::vector<int>>()});
        }
      }
    }
    if (j.contains("objectives")) plan.objectives = j.at("objectives").get<std::vector<std::string>>();
    if (j.contains("stages")) {
      plan.stages.clear();
      for (const auto& s : j.at("stages")) plan.stages.push_back(parse_stage_mode(s.get<std::string>()));
    }
    if (j.contains("attack")) apply_attack_json(j.at("attack"), plan.attack);
    if (j.contains("sampler")) apply_sampler_json(j.at("sampler"), plan.sampler);
    plan.seed = j.value("seed", plan.seed);
    plan.threads = j.value("threads", plan.threads);
    plan.max_shift = j.value("max_shift", plan.max_shift);
    plan.shifts_per_class = j.value("shifts_per_class", plan.shifts_per_class);
    plan.shift_attempts = j.value("shift_attempts", plan.shift_attempts);
    if (j.contains("purify_sigma")) plan.purify_sigma = j.at("purify_sigma").get<double>();
    if (j.contains("attack_prompt")) {
      const auto ap = j.at("attack_prompt").get<std::string>();
      require(ap == "own" || ap == "null", ErrorCode::kConfig, "attack_prompt must be own or null");
      plan.attack_own_prompt = ap == "own";
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kConfig, std::string("experiment plan: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kInvalidArgument) fail(ErrorCode::kConfig, ex.what());
    throw;
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kConfig, "plan " + path.string() + " is not valid JSON: " + ex.what());
  }
  return plan_from_json(j, path.parent_path());
}

}  // namespace advpaint
