#include "data/shapes.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "core/error.hpp"
#include "io/container.hpp"
#include "io/pnm.hpp"

namespace advpaint {
namespace {

// 8-bit levels so that images survive a PPM round trip unchanged.
constexpr std::array<std::array<int, 3>, kColorCount> kPalette{{
    {230, 38, 38},   // red
    {38, 204, 51},   // green
    {51, 77, 230},   // blue
    {242, 217, 26},  // yellow
}};

std::string sample_id(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%05zu", index);
  return buf;
}

Tensor render_coverage(ShapeClass shape, Rng& rng, std::size_t size) {
  const int s = static_cast<int>(size);
  Tensor cover({size, size}, 0.0);
  switch (shape) {
    case ShapeClass::kDisk: {
      const int r = static_cast<int>(rng.uniform_int(4, s / 4 + 1));
      const int cx = static_cast<int>(rng.uniform_int(r, s - r));
      const int cy = static_cast<int>(rng.uniform_int(r, s - r));
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const double dx = x + 0.5 - cx;
          const double dy = y + 0.5 - cy;
          if (dx * dx + dy * dy <= static_cast<double>(r) * r) cover.at(y, x) = 1.0;
        }
      break;
    }
    case ShapeClass::kSquare: {
      const int side = static_cast<int>(rng.uniform_int(8, s / 2 + 2));
      const int x0 = static_cast<int>(rng.uniform_int(0, s - side));
      const int y0 = static_cast<int>(rng.uniform_int(0, s - side));
      for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) cover.at(y, x) = 1.0;
      break;
    }
    case ShapeClass::kTriangle: {
      // Apex at the top centre of a base x height frame.
      const int base = static_cast<int>(rng.uniform_int(8, s / 2 + 2));
      const int height = static_cast<int>(rng.uniform_int(8, s / 2 + 2));
      const int x0 = static_cast<int>(rng.uniform_int(0, s - base));
      const int y0 = static_cast<int>(rng.uniform_int(0, s - height));
      const double apex_x = x0 + base / 2.0;
      for (int y = y0; y < y0 + height; ++y)
        for (int x = x0; x < x0 + base; ++x) {
          const double py = (y + 0.5 - y0) / height;  // 0 at apex, 1 at base
          const double half = 0.5 * base * py;
          if (std::abs(x + 0.5 - apex_x) <= half) cover.at(y, x) = 1.0;
        }
      break;
    }
  }
  return cover;
}

}  // namespace

const char* shape_class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::kDisk: return "disk";
    case ShapeClass::kSquare: return "square";
    case ShapeClass::kTriangle: return "triangle";
  }
  return "?";
}

ShapeSample render_shape_sample(std::uint64_t seed, std::size_t size) {
  require(size >= 16, ErrorCode::kInvalidArgument, "shape images must be at least 16 pixels");
  Rng rng(seed);
  ShapeSample s;
  s.seed = seed;
  s.shape = static_cast<ShapeClass>(rng.uniform_int(1, 3));
  const int color = static_cast<int>(rng.uniform_int(0, kColorCount - 1));
  s.color_token = kFirstColorToken + color;
  const double grey = static_cast<double>(rng.uniform_int(77, 179)) / 255.0;

  Tensor cover = render_coverage(s.shape, rng, size);
  s.image = Tensor({3, size, size}, grey);
  Tensor keep({size, size}, 1.0);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      if (cover.at(y, x) == 0.0) continue;
      keep.at(y, x) = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s.image.at(c, y, x) = kPalette[color][c] / 255.0;
    }
  s.segmentation = MaskSpec::from_grid(keep, MaskOrigin::kSegmentation);
  const auto hull = s.segmentation.hole_bbox();
  require(hull.has_value(), ErrorCode::kContract, "rendered shape is empty");
  s.bbox = *hull;
  s.segmentation.source_box = s.bbox;
  return s;
}

ShapeSample dataset_sample(std::uint64_t master_seed, std::size_t index, std::size_t size) {
  return render_shape_sample(derive_seed(master_seed, index), size);
}

DatasetManifest gen_dataset(std::size_t count, std::uint64_t seed,
                            const std::filesystem::path& out_dir, std::size_t size) {
  require(count >= 1, ErrorCode::kInvalidArgument, "dataset count must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec && std::filesystem::is_directory(out_dir), ErrorCode::kIo,
          "cannot create dataset directory " + out_dir.string());

  DatasetManifest manifest{seed, size, {}};
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const ShapeSample s = dataset_sample(seed, i, size);
    const std::string id = sample_id(i);
    ppm_write(out_dir / (id + ".ppm"), s.image);
    pgm_write(out_dir / (id + ".mask.pgm"), s.segmentation.grid);

    nlohmann::ordered_json meta;
    meta["id"] = id;
    meta["class_id"] = static_cast<int>(s.shape);
    meta["class_name"] = shape_class_name(s.shape);
    meta["color_token"] = s.color_token;
    meta["prompt"] = s.prompt();
    meta["bbox"] = {s.bbox.x0, s.bbox.y0, s.bbox.x1, s.bbox.y1};
    meta["seed"] = s.seed;
    const std::string text = meta.dump(2) + "\n";
    write_file_bytes(out_dir / (id + ".meta.json"),
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));

    entries.push_back({{"id", id},
                       {"image", id + ".ppm"},
                       {"mask", id + ".mask.pgm"},
                       {"meta", id + ".meta.json"}});
    manifest.ids.push_back(id);
  }
  nlohmann::ordered_json root;
  root["count"] = count;
  root["seed"] = seed;
  root["image_size"] = size;
  root["entries"] = std::move(entries);
  const std::string text = root.dump(2) + "\n";
  write_file_bytes(out_dir / "manifest.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return manifest;
}

std::vector<ShapeSample> load_dataset(const std::filesystem::path& dir, std::size_t limit) {
  const auto bytes = read_file_bytes(dir / "manifest.json");
  std::vector<ShapeSample> out;
  try {
    const auto root = nlohmann::json::parse(bytes.begin(), bytes.end());
    for (const auto& e : root.at("entries")) {
      if (limit != 0 && out.size() >= limit) break;
      const auto meta_bytes = read_file_bytes(dir / e.at("meta").get<std::string>());
      const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
      ShapeSample s;
      s.image = ppm_read(dir / e.at("image").get<std::string>());
      const Tensor mask = pgm_read(dir / e.at("mask").get<std::string>());
      s.shape = static_cast<ShapeClass>(meta.at("class_id").get<int>());
      s.color_token = meta.at("color_token").get<int>();
      const auto bb = meta.at("bbox");
      s.bbox = {bb.at(0).get<int>(), bb.at(1).get<int>(), bb.at(2).get<int>(), bb.at(3).get<int>()};
      s.seed = meta.at("seed").get<std::uint64_t>();
      s.segmentation = MaskSpec::from_grid(mask, MaskOrigin::kSegmentation, s.bbox);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kFormat, "dataset " + dir.string() + ": " + ex.what());
  }
  require(!out.empty(), ErrorCode::kInvalidArgument, "dataset " + dir.string() + " is empty");
  return out;
}

MaskSpec random_training_mask(Rng& rng, const Box& bbox, std::size_t size, MaskBranch* branch) {
  const double u = rng.uniform();
  MaskBranch b;
  MaskSpec m;
  if (u < 0.4) {
    b = MaskBranch::kRectangle;
    const int s = static_cast<int>(size);
    const int w = static_cast<int>(rng.uniform_int(8, std::min(24, s)));
    const int h = static_cast<int>(rng.uniform_int(8, std::min(24, s)));
    const int x0 = static_cast<int>(rng.uniform_int(0, s - w));
    const int y0 = static_cast<int>(rng.uniform_int(0, s - h));
    m = box_to_mask({x0, y0, x0 + w, y0 + h}, true, size, size);
  } else if (u < 0.8) {
    b = MaskBranch::kBox;
    m = box_to_mask(bbox, true, size, size);
  } else if (u < 0.9) {
    b = MaskBranch::kInvertedBox;
    m = box_to_mask(bbox, false, size, size);
  } else {
    b = MaskBranch::kAllKeep;
    m = MaskSpec::all_keep(size, size);
  }
  if (branch) *branch = b;
  return m;
}

}  // namespace advpaint
