#include "model/config.hpp"

#include <json.hpp>
#include <set>

#include "core/error.hpp"

namespace advpaint {

DenoiserConfig DenoiserConfig::toy() {
  DenoiserConfig c;
  c.image_size = 16;
  c.width_hi = 8;
  c.width_lo = 8;
  c.time_dim = 16;
  c.context_dim = 8;
  return c;
}

void DenoiserConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kConfig, "denoiser config: " + what);
  };
  check(image_channels >= 1, "image_channels must be positive");
  check(patch >= 1 && image_size % patch == 0, "image_size must be a multiple of patch");
  check(latent_size() % 2 == 0, "latent size must be even");
  check(latent_channels >= image_channels, "latent_channels must cover image_channels");
  check(latent_channels <= image_channels * patch * patch, "latent_channels exceed patch size");
  check(heads >= 1 && width_hi % heads == 0 && width_lo % heads == 0,
        "widths must be divisible by heads");
  check(seq_len >= 1 && vocab >= 2, "need a sequence and a vocabulary with a null token");
  check(time_dim >= 2 && time_dim % 2 == 0, "time_dim must be even");
  check(context_dim >= 1, "context_dim must be positive");
}

std::string DenoiserConfig::to_json() const {
  nlohmann::ordered_json j;
  j["image_channels"] = image_channels;
  j["image_size"] = image_size;
  j["patch"] = patch;
  j["latent_channels"] = latent_channels;
  j["width_hi"] = width_hi;
  j["width_lo"] = width_lo;
  j["heads"] = heads;
  j["seq_len"] = seq_len;
  j["vocab"] = vocab;
  j["time_dim"] = time_dim;
  j["context_dim"] = context_dim;
  j["codec_seed"] = codec_seed;
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("denoiser config: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kConfig, "denoiser config must be an object");
  static const std::set<std::string> known = {
      "image_channels", "image_size", "patch",       "latent_channels", "width_hi",   "width_lo",
      "heads",          "seq_len",    "vocab",       "time_dim",        "context_dim", "codec_seed"};
  for (const auto& item : j.items()) {
    require(known.count(item.key()) == 1, ErrorCode::kConfig,
            "denoiser config: unknown key '" + item.key() + "'");
  }
  DenoiserConfig c;
  try {
    c.image_channels = j.value("image_channels", c.image_channels);
    c.image_size = j.value("image_size", c.image_size);
    c.patch = j.value("patch", c.patch);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.width_hi = j.value("width_hi", c.width_hi);
    c.width_lo = j.value("width_lo", c.width_lo);
    c.heads = j.value("heads", c.heads);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.vocab = j.value("vocab", c.vocab);
    c.time_dim = j.value("time_dim", c.time_dim);
    c.context_dim = j.value("context_dim", c.context_dim);
    c.codec_seed = j.value("codec_seed", c.codec_seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace advpaint
