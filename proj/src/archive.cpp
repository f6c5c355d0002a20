#include "tegan/archive.hpp"

#include <cstring>

#include "tegan/errors.hpp"

namespace tegan {

void write_string(torch::serialize::OutputArchive& archive, const std::string& key, const std::string& value) {
  auto t = torch::empty({static_cast<std::int64_t>(value.size())}, torch::kUInt8);
  if (!value.empty()) std::memcpy(t.data_ptr<std::uint8_t>(), value.data(), value.size());
  archive.write(key, t);
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  torch::Tensor t;
  if (!archive.try_read(key, t)) throw FormatError("archive is missing '" + key + "'");
  t = t.contiguous();
  if (t.scalar_type() != torch::kUInt8) throw FormatError("archive entry '" + key + "' is not a string");
  return {reinterpret_cast<const char*>(t.data_ptr<std::uint8_t>()), static_cast<std::size_t>(t.numel())};
}

void write_u64(torch::serialize::OutputArchive& archive, const std::string& key, std::uint64_t value) {
  // Stored bitwise in an int64 tensor.
  std::int64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  archive.write(key, torch::tensor({bits}, torch::kInt64));
}

std::uint64_t read_u64(torch::serialize::InputArchive& archive, const std::string& key) {
  torch::Tensor t;
  if (!archive.try_read(key, t) || t.numel() != 1 || t.scalar_type() != torch::kInt64) {
    throw FormatError("archive is missing integer '" + key + "'");
  }
  const auto bits = t.item<std::int64_t>();
  std::uint64_t value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

void require_format(torch::serialize::InputArchive& archive, const std::string& tag, const std::string& path) {
  const auto found = read_string(archive, "format");
  if (found != tag) throw FormatError("'" + path + "' has format '" + found + "', expected '" + tag + "'");
}

}  // namespace tegan
