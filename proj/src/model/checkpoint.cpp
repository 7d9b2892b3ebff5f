#include "model/checkpoint.hpp"

#include <json.hpp>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace advpaint {
namespace {

constexpr const char* kConfigEntry = "__config__";
constexpr const char* kMetaEntry = "__meta__";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void add_linear(std::vector<std::pair<std::string, Shape>>& out, const std::string& name,
                std::size_t in, std::size_t outw, bool bias) {
  out.emplace_back(name + ".w", Shape{in, outw});
  if (bias) out.emplace_back(name + ".b", Shape{outw});
}

void add_conv(std::vector<std::pair<std::string, Shape>>& out, const std::string& name,
              std::size_t cin, std::size_t cout, std::size_t k) {
  out.emplace_back(name + ".w", Shape{cout, cin, k, k});
  out.emplace_back(name + ".b", Shape{cout});
}

void add_norm(std::vector<std::pair<std::string, Shape>>& out, const std::string& name,
              std::size_t c) {
  out.emplace_back(name + ".gamma", Shape{c});
  out.emplace_back(name + ".beta", Shape{c});
}

void add_block(std::vector<std::pair<std::string, Shape>>& out, const DenoiserConfig& cfg,
               const std::string& name, std::size_t cin, std::size_t cout) {
  add_norm(out, name + ".res.norm1", cin);
  add_conv(out, name + ".res.conv1", cin, cout, 3);
  add_linear(out, name + ".res.temb", cfg.time_dim, cout, true);
  add_norm(out, name + ".res.norm2", cout);
  add_conv(out, name + ".res.conv2", cout, cout, 3);
  if (cin != cout) add_conv(out, name + ".res.skip", cin, cout, 1);

  add_norm(out, name + ".self.norm", cout);
  add_linear(out, name + ".self.q", cout, cout, false);
  add_linear(out, name + ".self.k", cout, cout, false);
  add_linear(out, name + ".self.v", cout, cout, false);
  add_linear(out, name + ".self.out", cout, cout, true);

  add_norm(out, name + ".cross.norm", cout);
  add_linear(out, name + ".cross.q", cout, cout, false);
  add_linear(out, name + ".cross.k", cfg.context_dim, cout, false);
  add_linear(out, name + ".cross.v", cfg.context_dim, cout, false);
  add_linear(out, name + ".cross.out", cout, cout, true);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const DenoiserConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t hi = cfg.width_hi;
  const std::size_t lo = cfg.width_lo;
  add_linear(out, "time.fc1", cfg.time_dim, cfg.time_dim, true);
  add_linear(out, "time.fc2", cfg.time_dim, cfg.time_dim, true);
  out.emplace_back("context.embed", Shape{cfg.vocab, cfg.context_dim});
  add_conv(out, "stem", cfg.in_channels(), hi, 3);
  add_block(out, cfg, "down16", hi, hi);
  add_block(out, cfg, "down8", hi, lo);
  add_conv(out, "merge8", lo + hi, lo, 1);
  add_block(out, cfg, "up8", lo, lo);
  add_conv(out, "merge16", lo + hi, hi, 1);
  add_block(out, cfg, "up16", hi, hi);
  add_norm(out, "head.norm", hi);
  add_conv(out, "head.conv", hi, cfg.latent_channels, 3);
  return out;
}

Checkpoint Checkpoint::initialize(const DenoiserConfig& config, std::uint64_t seed,
                                  const InitOptions& options) {
  Checkpoint ck;
  ck.config = config;
  ck.seed = seed;
  Rng rng(derive_seed(seed, 0x1417));
  for (const auto& [name, shape] : parameter_layout(config)) {
    Tensor t(shape, 0.0);
    if (ends_with(name, ".gamma")) {
      t.fill(1.0);
    } else if (ends_with(name, ".b") || ends_with(name, ".beta")) {
      // zero
    } else if (name == "head.conv.w" && options.zero_head) {
      // zero
    } else {
      for (double& v : t.data()) v = rng.normal(0.0, options.stddev);
    }
    ck.weights.emplace(name, std::move(t));
  }
  return ck;
}

void Checkpoint::validate() const {
  const auto layout = parameter_layout(config);
  require(weights.size() == layout.size(), ErrorCode::kCheckpoint,
          "checkpoint has " + std::to_string(weights.size()) + " weights, config needs " +
              std::to_string(layout.size()));
  for (const auto& [name, shape] : layout) {
    auto it = weights.find(name);
    require(it != weights.end(), ErrorCode::kCheckpoint, "checkpoint is missing weight " + name);
    require(it->second.shape() == shape, ErrorCode::kCheckpoint,
            "weight " + name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                shape_str(shape));
    require(it->second.all_finite(), ErrorCode::kCheckpoint, "weight " + name + " is not finite");
  }
}

void Checkpoint::require_trained() const {
  require(train_step > 0, ErrorCode::kCheckpoint, "checkpoint is untrained (train_step = 0)");
}

const Tensor& Checkpoint::weight(const std::string& name) const {
  auto it = weights.find(name);
  require(it != weights.end(), ErrorCode::kCheckpoint, "no weight named " + name);
  return it->second;
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : weights) n += t.numel();
  return n;
}

std::vector<ContainerEntry> Checkpoint::to_entries() const {
  std::vector<ContainerEntry> entries;
  entries.push_back(ContainerEntry::from_string(kConfigEntry, config.to_json()));
  nlohmann::ordered_json meta;
  meta["train_step"] = train_step;
  meta["seed"] = seed;
  entries.push_back(ContainerEntry::from_string(kMetaEntry, meta.dump()));
  for (const auto& [name, t] : weights) entries.push_back(ContainerEntry::from_tensor(name, t));
  return entries;
}

Checkpoint Checkpoint::from_entries(const std::vector<ContainerEntry>& entries) {
  Checkpoint ck;
  bool have_config = false;
  bool have_meta = false;
  try {
    for (const auto& e : entries) {
      if (e.name == kConfigEntry) {
        ck.config = DenoiserConfig::from_json(e.to_string());
        have_config = true;
      } else if (e.name == kMetaEntry) {
        const auto meta = nlohmann::json::parse(e.to_string());
        ck.train_step = meta.at("train_step").get<std::uint64_t>();
        ck.seed = meta.at("seed").get<std::uint64_t>();
        have_meta = true;
      } else {
        ck.weights.emplace(e.name, e.to_tensor());
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kCheckpoint, std::string("checkpoint metadata: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kFormat || ex.code() == ErrorCode::kConfig)
      fail(ErrorCode::kCheckpoint, std::string("checkpoint: ") + ex.what());
    throw;
  }
  require(have_config, ErrorCode::kCheckpoint, "checkpoint has no config entry");
  require(have_meta, ErrorCode::kCheckpoint, "checkpoint has no meta entry");
  ck.validate();
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  validate();
  write_container_file(path, to_entries());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return from_entries(read_container_file(path));
}

}  // namespace advpaint
