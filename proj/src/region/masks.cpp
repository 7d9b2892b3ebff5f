#include "region/masks.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace advpaint {

std::string box_str(const Box& b) {
  return "(" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) +
         "," + std::to_string(b.y1) + ")";
}

void validate_box(const Box& b, std::size_t width, std::size_t height) {
  const bool ok = b.x0 >= 0 && b.y0 >= 0 && b.x0 < b.x1 && b.y0 < b.y1 &&
                  static_cast<std::size_t>(b.x1) <= width && static_cast<std::size_t>(b.y1) <= height;
  require(ok, ErrorCode::kInvalidArgument,
          "box " + box_str(b) + " invalid for a " + std::to_string(width) + "x" +
              std::to_string(height) + " canvas");
}

const char* mask_origin_name(MaskOrigin o) {
  switch (o) {
    case MaskOrigin::kSegmentation: return "segmentation";
    case MaskOrigin::kBox: return "box";
    case MaskOrigin::kInvertedBox: return "inverted-box";
    case MaskOrigin::kShifted: return "shifted";
    case MaskOrigin::kCustom: return "custom";
  }
  return "custom";
}

std::size_t MaskSpec::hole_area() const {
  std::size_t n = 0;
  for (double v : grid.data()) n += (v == 0.0);
  return n;
}

std::optional<Box> MaskSpec::hole_bbox() const {
  int x0 = INT32_MAX, y0 = INT32_MAX, x1 = -1, y1 = -1;
  for (std::size_t y = 0; y < height(); ++y)
    for (std::size_t x = 0; x < width(); ++x) {
      if (!is_hole(y, x)) continue;
      x0 = std::min(x0, static_cast<int>(x));
      y0 = std::min(y0, static_cast<int>(y));
      x1 = std::max(x1, static_cast<int>(x) + 1);
      y1 = std::max(y1, static_cast<int>(y) + 1);
    }
  if (x1 < 0) return std::nullopt;
  return Box{x0, y0, x1, y1};
}

MaskSpec MaskSpec::inverted() const {
  MaskSpec m = *this;
  for (double& v : m.grid.data()) v = 1.0 - v;
  if (origin == MaskOrigin::kBox) m.origin = MaskOrigin::kInvertedBox;
  else if (origin == MaskOrigin::kInvertedBox) m.origin = MaskOrigin::kBox;
  return m;
}

Tensor MaskSpec::broadcast(std::size_t channels) const {
  const std::size_t hw = grid.numel();
  Tensor out({channels, height(), width()});
  for (std::size_t c = 0; c < channels; ++c)
    std::copy(grid.data().begin(), grid.data().end(), out.data().begin() + static_cast<long>(c * hw));
  return out;
}

MaskSpec MaskSpec::from_grid(const Tensor& grid, MaskOrigin origin, std::optional<Box> source_box) {
  Tensor g = grid;
  if (g.rank() == 3 && g.extent(0) == 1) g = g.reshaped({g.extent(1), g.extent(2)});
  require(g.rank() == 2, ErrorCode::kInvalidArgument,
          "mask grid must be HxW, got " + shape_str(grid.shape()));
  for (double v : g.data()) {
    require(v == 0.0 || v == 1.0, ErrorCode::kInvalidArgument, "mask is not binary");
  }
  MaskSpec m;
  m.grid = std::move(g);
  m.origin = origin;
  m.source_box = source_box;
  return m;
}

MaskSpec MaskSpec::all_keep(std::size_t width, std::size_t height) {
  MaskSpec m;
  m.grid = Tensor({height, width}, 1.0);
  m.origin = MaskOrigin::kCustom;
  return m;
}

Box enlarge_box(const Box& b, double rho, std::size_t width, std::size_t height) {
  require(rho >= 1.0, ErrorCode::kInvalidArgument, "rho must be >= 1");
  validate_box(b, width, height);
  auto grow = [rho](int lo, int hi, int limit) {
    const double center = 0.5 * (lo + hi);
    const double span = std::floor((hi - lo) * rho + 0.5);
    const double start = std::floor(center - 0.5 * span + 0.5);
    const int new_lo = static_cast<int>(std::max(0.0, start));
    const int new_hi = static_cast<int>(std::min(static_cast<double>(limit), start + span));
    return std::pair{new_lo, new_hi};
  };
  auto [x0, x1] = grow(b.x0, b.x1, static_cast<int>(width));
  auto [y0, y1] = grow(b.y0, b.y1, static_cast<int>(height));
  return Box{x0, y0, x1, y1};
}

MaskSpec box_to_mask(const Box& b, bool hole_inside, std::size_t width, std::size_t height) {
  validate_box(b, width, height);
  MaskSpec m;
  m.grid = Tensor({height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const bool inside = b.contains(static_cast<int>(x), static_cast<int>(y));
      m.grid.at(y, x) = (inside == hole_inside) ? 0.0 : 1.0;
    }
  m.origin = hole_inside ? MaskOrigin::kBox : MaskOrigin::kInvertedBox;
  m.source_box = b;
  return m;
}

const char* in_out_name(InOut v) { return v == InOut::kIn ? "m_in" : "m_out"; }

InOut classify_in_out(const MaskSpec& m, const Box& opt_box) {
  const auto hull = m.hole_bbox();
  require(hull.has_value(), ErrorCode::kContract, "classify_in_out on a mask with an empty hole");
  // Every hole pixel inside the box <=> the hole's tight hull inside the box.
  const bool inside = hull->x0 >= opt_box.x0 && hull->y0 >= opt_box.y0 &&
                      hull->x1 <= opt_box.x1 && hull->y1 <= opt_box.y1;
  return inside ? InOut::kIn : InOut::kOut;
}

MaskSpec translate_hole(const MaskSpec& m, int dx, int dy) {
  MaskSpec out = MaskSpec::all_keep(m.width(), m.height());
  const int w = static_cast<int>(m.width()), h = static_cast<int>(m.height());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m.is_hole(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      out.grid.at(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx)) = 0.0;
    }
  out.origin = MaskOrigin::kShifted;
  out.source_box = m.source_box;
  return out;
}

ShiftedMask random_shift_mask(const MaskSpec& m, const Box& opt_box, Rng& rng, int max_shift) {
  require(max_shift >= 1, ErrorCode::kInvalidArgument, "max_shift must be >= 1");
  require(m.hole_area() > 0, ErrorCode::kContract, "random_shift_mask on an empty hole");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int dx = static_cast<int>(rng.uniform_int(-max_shift, max_shift));
    const int dy = static_cast<int>(rng.uniform_int(-max_shift, max_shift));
    MaskSpec shifted = translate_hole(m, dx, dy);
    if (shifted.hole_area() == 0) continue;
    const InOut cls = classify_in_out(shifted, opt_box);
    return ShiftedMask{std::move(shifted), cls, dx, dy};
  }
  fail(ErrorCode::kContract, "random_shift_mask: every shift left the hole empty");
}

std::size_t Region::area() const {
  std::size_t n = 0;
  for (double v : support.data()) n += (v != 0.0);
  return n;
}

std::vector<Region> multi_object_regions(const std::vector<Box>& boxes, double rho,
                                         std::size_t width, std::size_t height) {
  require(!boxes.empty(), ErrorCode::kInvalidArgument, "multi_object_regions needs a box");
  Tensor taken({height, width}, 0.0);
  std::vector<Region> regions;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box e = enlarge_box(boxes[i], rho, width, height);
    Region r{Tensor({height, width}, 0.0), e, "object-" + std::to_string(i + 1)};
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x) {
        const auto yy = static_cast<std::size_t>(y), xx = static_cast<std::size_t>(x);
        if (taken.at(yy, xx) != 0.0) continue;
        taken.at(yy, xx) = 1.0;
        r.support.at(yy, xx) = 1.0;
      }
    regions.push_back(std::move(r));
  }
  Region rest{Tensor({height, width}, 0.0), std::nullopt, "background"};
  for (std::size_t i = 0; i < taken.numel(); ++i) rest.support[i] = taken[i] == 0.0 ? 1.0 : 0.0;
  regions.push_back(std::move(rest));
  return regions;
}

}  // namespace advpaint
