#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace tegan {

// [-1, 1] -> [0, 255] affine map, rounded half away from zero and saturated.
std::uint8_t to_byte(float value) noexcept;
float from_byte(std::uint8_t value) noexcept;

// 8-bit RGB PNG <-> float tensor [3, H, W] in [-1, 1].
torch::Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// Tile [N, 3, H, W] images row-major into a ceil(sqrt(N))-column grid.
torch::Tensor tile_grid(const torch::Tensor& images);

}  // namespace tegan
