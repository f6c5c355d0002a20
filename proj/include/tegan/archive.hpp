#pragma once

#include <cstdint>
#include <string>

#include <torch/torch.h>

namespace tegan {

// Strings and integers stored as tensors inside torch archives.
void write_string(torch::serialize::OutputArchive& archive, const std::string& key, const std::string& value);
std::string read_string(torch::serialize::InputArchive& archive, const std::string& key);
void write_u64(torch::serialize::OutputArchive& archive, const std::string& key, std::uint64_t value);
std::uint64_t read_u64(torch::serialize::InputArchive& archive, const std::string& key);

// Throws FormatError unless the archive's "format" entry equals `tag`.
void require_format(torch::serialize::InputArchive& archive, const std::string& tag, const std::string& path);

}  // namespace tegan
