#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "region/masks.hpp"

namespace advpaint {

enum class ShapeClass : int { kDisk = 1, kSquare = 2, kTriangle = 3 };
const char* shape_class_name(ShapeClass c);

/// Colour tokens follow the class tokens in the vocabulary.
inline constexpr int kFirstColorToken = 4;
inline constexpr int kColorCount = 4;

struct ShapeSample {
  Tensor image;          // 3 x S x S in [0, 1], every value a multiple of 1/255
  ShapeClass shape = ShapeClass::kDisk;
  int color_token = kFirstColorToken;
  MaskSpec segmentation;  // hole = shape pixels
  Box bbox;               // tight hull of the segmentation
  std::uint64_t seed = 0;

  std::vector<int> prompt() const { return {static_cast<int>(shape), color_token}; }
};

/// Deterministic in `seed`. One flat-coloured shape on a flat grey background,
/// rendered with hard edges.
ShapeSample render_shape_sample(std::uint64_t seed, std::size_t size = 32);

/// Sample `index` of a dataset generated from `master_seed`.
ShapeSample dataset_sample(std::uint64_t master_seed, std::size_t index, std::size_t size = 32);

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t image_size = 0;
  std::vector<std::string> ids;
};

/// Writes NNNNN.ppm, NNNNN.mask.pgm (255 = keep, 0 = shape), NNNNN.meta.json
/// and manifest.json. kInvalidArgument for count 0, kIo if unwritable.
DatasetManifest gen_dataset(std::size_t count, std::uint64_t seed,
                            const std::filesystem::path& out_dir, std::size_t size = 32);

/// Reads a directory written by gen_dataset.
std::vector<ShapeSample> load_dataset(const std::filesystem::path& dir, std::size_t limit = 0);

enum class MaskBranch { kRectangle, kBox, kInvertedBox, kAllKeep };

/// Training-time mask: 0.4 random rectangle (sides 8..24), 0.4 the shape box,
/// 0.1 its inverse, 0.1 all-keep.
MaskSpec random_training_mask(Rng& rng, const Box& bbox, std::size_t size = 32,
                              MaskBranch* branch = nullptr);

}  // namespace advpaint
