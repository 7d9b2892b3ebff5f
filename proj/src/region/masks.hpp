#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "tensor/tensor.hpp"

namespace advpaint {

/// Pixel box with inclusive-exclusive bounds.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Box&) const = default;
};

std::string box_str(const Box& b);
/// kInvalidArgument unless 0 <= x0 < x1 <= width and likewise for y.
void validate_box(const Box& b, std::size_t width, std::size_t height);

enum class MaskOrigin { kSegmentation, kBox, kInvertedBox, kShifted, kCustom };

const char* mask_origin_name(MaskOrigin o);

/// Binary H x W grid, 1 = keep (context), 0 = hole (to be inpainted).
struct MaskSpec {
  Tensor grid;
  MaskOrigin origin = MaskOrigin::kCustom;
  std::optional<Box> source_box;

  std::size_t height() const { return grid.extent(0); }
  std::size_t width() const { return grid.extent(1); }
  bool is_hole(std::size_t y, std::size_t x) const { return grid.at(y, x) == 0.0; }
  std::size_t hole_area() const;
  /// Tight hull of the hole; nullopt for an empty hole.
  std::optional<Box> hole_bbox() const;

  MaskSpec inverted() const;
  /// The grid repeated over `channels` (C x H x W), for x (x) m.
  Tensor broadcast(std::size_t channels) const;

  /// Validates that `grid` is H x W (or 1 x H x W) and binary (kInvalidArgument).
  static MaskSpec from_grid(const Tensor& grid, MaskOrigin origin = MaskOrigin::kCustom,
                            std::optional<Box> source_box = std::nullopt);
  static MaskSpec all_keep(std::size_t width, std::size_t height);
};

/// Scales width and height by rho about the center (rounded half up), then
/// clamps to the canvas. kInvalidArgument for rho < 1.
Box enlarge_box(const Box& b, double rho, std::size_t width, std::size_t height);

/// hole_inside: 0 inside the box and 1 outside; otherwise the inverse.
MaskSpec box_to_mask(const Box& b, bool hole_inside, std::size_t width, std::size_t height);

enum class InOut { kIn, kOut };
const char* in_out_name(InOut v);

/// kIn iff every hole pixel lies in opt_box. kContract for an empty hole.
InOut classify_in_out(const MaskSpec& m, const Box& opt_box);

struct ShiftedMask {
  MaskSpec mask;
  InOut in_out = InOut::kIn;
  int dx = 0;
  int dy = 0;
};

/// Translates the hole by (dx, dy); hole pixels leaving the canvas are dropped.
MaskSpec translate_hole(const MaskSpec& m, int dx, int dy);

/// dx, dy uniform in [-max_shift, max_shift]. Draws that push the whole hole
/// off-canvas are redrawn.
ShiftedMask random_shift_mask(const MaskSpec& m, const Box& opt_box, Rng& rng, int max_shift);

/// Perturbation support: support(y, x) = 1 inside the region.
struct Region {
  Tensor support;  // H x W
  std::optional<Box> box;
  std::string label;

  std::size_t area() const;
};

/// [enlarged box 1, ..., enlarged box n, leftover]. Overlaps go to the earliest
/// box, so the regions partition the canvas.
std::vector<Region> multi_object_regions(const std::vector<Box>& boxes, double rho,
                                         std::size_t width, std::size_t height);

inline constexpr double kDefaultRho = 1.2;
inline constexpr int kDefaultMaxShift = 6;

}  // namespace advpaint
