#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "tegan/transition.hpp"

namespace tegan {

// Synthetic shapes: [shape, size, hue_bit_1, hue_bit_2, brightness].
inline constexpr std::size_t kShapeAttributeCount = 5;
const std::vector<std::string>& shape_attribute_names();

struct Canvas {
  std::int64_t height = 32;
  std::int64_t width = 32;
};

struct ShapeSpec {
  AttributeVector attributes;
  std::uint64_t nuisance_seed = 0;
};

// RGB [3, H, W] in [-1, 1]: one filled shape on a noisy dark background.
// Deterministic in (spec, canvas). ConfigError if H or W < 16.
torch::Tensor render(const ShapeSpec& spec, Canvas canvas);

// Set of attribute indices changed by a transition, as a bitmask.
using Signature = std::uint32_t;

Signature signature_of(const AttributeVector& a_x, const AttributeVector& a_y);
Signature signature_of(const Transition& t);
std::string signature_string(Signature s);

// A signature is held out when it changes every index of at least one group.
struct HoldoutSpec {
  std::vector<Signature> groups;

  bool excludes(Signature s) const;
  std::string to_string() const;
  nlohmann::json to_json() const;

  // "0,1;2,4" -> groups {0,1} and {2,4}. ConfigError on malformed text or
  // indices >= attribute_count.
  static HoldoutSpec parse(const std::string& text, std::size_t attribute_count);
  static HoldoutSpec default_spec();
};

std::vector<Signature> permitted_signatures(std::size_t attribute_count, const HoldoutSpec& holdout);

struct TripletSample {
  torch::Tensor x;  // [3, H, W]
  torch::Tensor y;  // [3, H, W]
  Transition t;     // (a_y - a_x) / 2
  AttributeVector a_x;
  AttributeVector a_y;
};

TripletSample make_triplet(const AttributeVector& a_x, const AttributeVector& a_y, std::uint64_t seed_x,
                           std::uint64_t seed_y, Canvas canvas);

struct TripletBatch {
  torch::Tensor x;  // [B, 3, H, W]
  torch::Tensor y;  // [B, 3, H, W]
  torch::Tensor t;  // [B, d]
  std::vector<AttributeVector> a_x;
  std::vector<AttributeVector> a_y;

  std::int64_t size() const { return x.defined() ? x.size(0) : 0; }
};

TripletBatch stack_triplets(const std::vector<TripletSample>& samples);
TripletBatch gather_triplets(const std::vector<TripletSample>& samples, const std::vector<std::size_t>& indices);

struct DatasetSplit {
  std::vector<TripletSample> train;
  std::vector<TripletSample> test;
  HoldoutSpec holdout;
  Canvas canvas;
  std::vector<std::string> attribute_names;
  std::uint64_t seed = 0;

  std::size_t attribute_count() const { return attribute_names.size(); }
  // DataError if any training triplet carries a held-out signature.
  void check_holdout() const;
};

struct SyntheticConfig {
  std::int64_t train_count = 4096;
  std::int64_t test_count = 512;
  std::uint64_t seed = 0;
  Canvas canvas;
  HoldoutSpec holdout = HoldoutSpec::default_spec();
};

// Training triplets cycle through the permitted signatures; test triplets
// cycle through every signature, held-out ones first. Each triplet is a pure
// function of (seed, split, index).
DatasetSplit generate_synthetic(const SyntheticConfig& config);

// Uniform draws with replacement from the training listing.
TripletBatch sample_batch(const DatasetSplit& split, std::int64_t batch, std::mt19937_64& rng);

struct WrongTriplets {
  torch::Tensor wrong_t;  // [B, d], t_x != t per row
  torch::Tensor wrong_y;  // [B, 3, H, W], attributes differ from a_x + 2t
};

WrongTriplets make_wrong_triplets(const TripletBatch& batch, std::mt19937_64& rng);

// CelebA-style attribute listing.
struct AttributeTable {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, AttributeVector>> rows;
};

AttributeTable parse_attr_file(std::istream& in);
AttributeTable load_attr_file(const std::filesystem::path& path);
void write_attr_file(std::ostream& out, const AttributeTable& table);
void write_attr_file(const std::filesystem::path& path, const AttributeTable& table);

// images/*.png + attrs.txt + manifest.json.
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split, const nlohmann::json& extra_manifest = {});
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace tegan
