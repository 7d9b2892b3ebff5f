#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tensor/tensor.hpp"

namespace advpaint {

// Binary P6 (RGB) and P5 (grey) images with maxval 255. Pixels map linearly
// to [0, 1]; writing rounds half up and clamps.

struct PnmImage {
  Tensor pixels;                       // C x H x W, C = 3 for P6, 1 for P5
  std::vector<std::string> comments;   // header comment lines, without '#'
};

PnmImage decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Tensor& image, const std::string& comment = {});

/// 3 x H x W.
Tensor ppm_read(const std::filesystem::path& path);
void ppm_write(const std::filesystem::path& path, const Tensor& image);

/// 1 x H x W.
Tensor pgm_read(const std::filesystem::path& path);
PnmImage pgm_read_with_comments(const std::filesystem::path& path);
void pgm_write(const std::filesystem::path& path, const Tensor& image,
               const std::string& comment = {});

std::uint8_t quantize_unit(double v);

}  // namespace advpaint
