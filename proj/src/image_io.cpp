#include "tegan/image_io.hpp"

#include <png.h>

#include <cmath>
#include <string>

#include "tegan/errors.hpp"

namespace tegan {

std::uint8_t to_byte(float value) noexcept {
  const double scaled = (static_cast<double>(value) + 1.0) * 0.5 * 255.0;
  const double rounded = std::round(scaled);  // half away from zero
  if (!(rounded > 0.0)) return 0;
  if (rounded > 255.0) return 255;
  return static_cast<std::uint8_t>(rounded);
}

float from_byte(std::uint8_t value) noexcept { return static_cast<float>(value) / 255.0f * 2.0f - 1.0f; }

torch::Tensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  const auto h = static_cast<std::int64_t>(image.height);
  const auto w = static_cast<std::int64_t>(image.width);
  auto out = torch::empty({3, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) acc[c][y][x] = from_byte(buffer[static_cast<std::size_t>((y * w + x) * 3 + c)]);
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw DimensionError("write_png expects a [3, H, W] image");
  auto img = image.detach().to(torch::kFloat32).contiguous();
  const auto h = img.size(1);
  const auto w = img.size(2);
  auto acc = img.accessor<float, 3>();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h * w * 3));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) buffer[static_cast<std::size_t>((y * w + x) * 3 + c)] = to_byte(acc[c][y][x]);
    }
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(w);
  out.height = static_cast<png_uint_32>(h);
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write PNG '" + path.string() + "': " + out.message);
  }
}

torch::Tensor tile_grid(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(0) < 1) throw DimensionError("tile_grid expects a non-empty [N, C, H, W] batch");
  const auto n = images.size(0);
  const auto cols = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const auto rows = (n + cols - 1) / cols;
  const auto c = images.size(1), h = images.size(2), w = images.size(3);
  auto grid = torch::full({c, rows * h, cols * w}, -1.0f);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = i / cols, q = i % cols;
    grid.slice(1, r * h, (r + 1) * h).slice(2, q * w, (q + 1) * w).copy_(images[i]);
  }
  return grid;
}

}  // namespace tegan
