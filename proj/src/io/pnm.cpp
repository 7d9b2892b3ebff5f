#include "io/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "core/error.hpp"
#include "io/container.hpp"

namespace advpaint {
namespace {

constexpr std::uint64_t kMaxPixels = 1ULL << 28;

class HeaderParser {
 public:
  HeaderParser(std::span<const std::uint8_t> b, std::vector<std::string>& comments)
      : b_(b), comments_(comments) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const auto c = static_cast<unsigned char>(b_[pos_]);
      if (c == '#') {
        std::string line;
        ++pos_;
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') line += static_cast<char>(b_[pos_++]);
        if (!line.empty() && line.front() == ' ') line.erase(0, 1);
        comments_.push_back(line);
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    std::uint64_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::uint64_t>(b_[pos_++] - '0');
      if (++digits > 12) fail(ErrorCode::kSizeOverflow, std::string("PNM ") + what + " too large");
    }
    if (digits == 0) fail(ErrorCode::kFormat, std::string("PNM header: missing ") + what);
    return v;
  }

  void single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      fail(ErrorCode::kFormat, "PNM header: expected whitespace before pixel data");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> b_;
  std::vector<std::string>& comments_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t quantize_unit(double v) {
  require(std::isfinite(v), ErrorCode::kNumeric, "non-finite pixel value");
  const double s = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

PnmImage decode_pnm(std::span<const std::uint8_t> bytes) {
  PnmImage img;
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail(ErrorCode::kFormat, "PNM header: expected P5 or P6 magic");
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderParser p(bytes, img.comments);
  p.advance(2);
  const std::uint64_t width = p.number("width");
  const std::uint64_t height = p.number("height");
  const std::uint64_t maxval = p.number("maxval");
  if (width == 0 || height == 0) fail(ErrorCode::kFormat, "PNM header: zero dimension");
  if (maxval != 255) fail(ErrorCode::kFormat, "PNM header: maxval must be 255");
  if (width > kMaxPixels / height || width * height > kMaxPixels / channels) {
    fail(ErrorCode::kSizeOverflow, "PNM dimensions overflow");
  }
  p.single_whitespace();
  const std::uint64_t n = width * height * channels;
  if (bytes.size() - p.pos() < n) fail(ErrorCode::kTruncated, "PNM payload truncated");
  img.pixels = Tensor({channels, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  const std::size_t h = height, w = width;
  const std::uint8_t* data = bytes.data() + p.pos();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        img.pixels.at(c, y, x) = data[(y * w + x) * channels + c] / 255.0;
      }
  return img;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image, const std::string& comment) {
  require(image.rank() == 3 && (image.extent(0) == 1 || image.extent(0) == 3),
          ErrorCode::kDimension, "PNM image must be 1xHxW or 3xHxW, got " + shape_str(image.shape()));
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::string header = c == 3 ? "P6\n" : "P5\n";
  if (!comment.empty()) header += "# " + comment + "\n";
  header += std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(quantize_unit(image.at(ch, y, x)));
  return out;
}

Tensor ppm_read(const std::filesystem::path& path) {
  PnmImage img = decode_pnm(read_file_bytes(path));
  require(img.pixels.extent(0) == 3, ErrorCode::kFormat, path.string() + " is not a P6 image");
  return std::move(img.pixels);
}

void ppm_write(const std::filesystem::path& path, const Tensor& image) {
  require(image.rank() == 3 && image.extent(0) == 3, ErrorCode::kDimension,
          "PPM needs a 3xHxW image, got " + shape_str(image.shape()));
  write_file_bytes(path, encode_pnm(image));
}

PnmImage pgm_read_with_comments(const std::filesystem::path& path) {
  PnmImage img = decode_pnm(read_file_bytes(path));
  require(img.pixels.extent(0) == 1, ErrorCode::kFormat, path.string() + " is not a P5 image");
  return img;
}

Tensor pgm_read(const std::filesystem::path& path) {
  return std::move(pgm_read_with_comments(path).pixels);
}

void pgm_write(const std::filesystem::path& path, const Tensor& image, const std::string& comment) {
  Tensor img = image.rank() == 2 ? image.reshaped({1, image.extent(0), image.extent(1)}) : image;
  require(img.rank() == 3 && img.extent(0) == 1, ErrorCode::kDimension,
          "PGM needs a 1xHxW image, got " + shape_str(image.shape()));
  write_file_bytes(path, encode_pnm(img, comment));
}

}  // namespace advpaint
