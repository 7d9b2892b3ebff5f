#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace advpaint {

/// Shape of the inpainting denoiser. standard() is the 32x32 model; toy() is
/// an 8-wide variant used for gradient checks.
struct DenoiserConfig {
  std::size_t image_channels = 3;
  std::size_t image_size = 32;
  std::size_t patch = 2;
  std::size_t latent_channels = 4;
  std::size_t width_hi = 32;  // full latent resolution
  std::size_t width_lo = 64;  // half latent resolution
  std::size_t heads = 2;
  std::size_t seq_len = 4;
  std::size_t vocab = 8;
  std::size_t time_dim = 64;
  std::size_t context_dim = 32;
  std::uint64_t codec_seed = 0x5eed0001;

  static constexpr std::size_t kLayers = 4;

  std::size_t latent_size() const { return image_size / patch; }
  std::size_t in_channels() const { return 2 * latent_channels + 1; }

  static DenoiserConfig standard() { return {}; }
  static DenoiserConfig toy();

  /// kConfig on inconsistent settings.
  void validate() const;

  std::string to_json() const;
  /// Rejects unknown keys (kConfig).
  static DenoiserConfig from_json(const std::string& text);

  bool operator==(const DenoiserConfig&) const = default;
};

}  // namespace advpaint
