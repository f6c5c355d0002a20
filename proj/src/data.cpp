#include "tegan/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "tegan/errors.hpp"
#include "tegan/image_io.hpp"
#include "tegan/rng.hpp"

namespace fs = std::filesystem;

namespace tegan {

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kHues[4] = {
    {1.00, 0.15, 0.15},  // (-1,-1) red
    {0.15, 1.00, 0.15},  // (-1,+1) green
    {0.15, 0.15, 1.00},  // (+1,-1) blue
    {1.00, 1.00, 0.15},  // (+1,+1) yellow
};

constexpr double kBackgroundLevel = 0.10;
constexpr double kBackgroundNoise = 0.02;
constexpr double kDimScale = 0.55;
constexpr int kJitter = 3;

AttributeVector random_attributes(std::size_t k, std::mt19937_64& rng) {
  std::vector<int> bits(k);
  for (auto& b : bits) b = (rng() >> 63) ? 1 : -1;
  return AttributeVector(std::move(bits));
}

AttributeVector apply_signature(const AttributeVector& a, Signature s) {
  auto bits = a.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (s & (1u << i)) bits[i] = -bits[i];
  }
  return AttributeVector(std::move(bits));
}

std::string image_name(const char* split, std::size_t index, char side) {
  std::ostringstream os;
  os << split << '_' << std::setw(6) << std::setfill('0') << index << '_' << side << ".png";
  return os.str();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

const std::vector<std::string>& shape_attribute_names() {
  static const std::vector<std::string> names = {"shape", "size", "hue_bit_1", "hue_bit_2", "brightness"};
  return names;
}

torch::Tensor render(const ShapeSpec& spec, Canvas canvas) {
  if (canvas.height < 16 || canvas.width < 16) throw ConfigError("canvas must be at least 16x16");
  if (spec.attributes.size() != kShapeAttributeCount) {
    throw DimensionError("shape spec needs " + std::to_string(kShapeAttributeCount) + " attributes");
  }
  const auto& a = spec.attributes;
  std::mt19937_64 rng(spec.nuisance_seed);
  const int dx = static_cast<int>(uniform_index(rng, 2 * kJitter + 1)) - kJitter;
  const int dy = static_cast<int>(uniform_index(rng, 2 * kJitter + 1)) - kJitter;
  const double extent = static_cast<double>(std::min(canvas.height, canvas.width));
  const double radius = (a[1] > 0 ? 0.30 : 0.14) * extent;
  const double half_side = radius * std::sqrt(M_PI) / 2.0;  // square of equal area
  const double cx = (static_cast<double>(canvas.width) - 1.0) / 2.0 + dx;
  const double cy = (static_cast<double>(canvas.height) - 1.0) / 2.0 + dy;
  const Rgb hue = kHues[(a[2] > 0 ? 2 : 0) + (a[3] > 0 ? 1 : 0)];
  const double level = a[4] > 0 ? 1.0 : kDimScale;

  auto out = torch::empty({3, canvas.height, canvas.width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (std::int64_t y = 0; y < canvas.height; ++y) {
    for (std::int64_t x = 0; x < canvas.width; ++x) {
      const double noise = (2.0 * uniform01(rng) - 1.0) * kBackgroundNoise;
      const double px = static_cast<double>(x) - cx;
      const double py = static_cast<double>(y) - cy;
      const bool inside = a[0] > 0 ? (px * px + py * py <= radius * radius)
                                   : (std::abs(px) <= half_side && std::abs(py) <= half_side);
      Rgb v{kBackgroundLevel + noise, kBackgroundLevel + noise, kBackgroundLevel + noise};
      if (inside) v = {hue.r * level, hue.g * level, hue.b * level};
      acc[0][y][x] = static_cast<float>(2.0 * v.r - 1.0);
      acc[1][y][x] = static_cast<float>(2.0 * v.g - 1.0);
      acc[2][y][x] = static_cast<float>(2.0 * v.b - 1.0);
    }
  }
  return out;
}

Signature signature_of(const AttributeVector& a_x, const AttributeVector& a_y) {
  if (a_x.size() != a_y.size()) throw DimensionError("attribute vectors differ in length");
  if (a_x.size() > 32) throw DimensionError("signatures support at most 32 attributes");
  Signature s = 0;
  for (std::size_t i = 0; i < a_x.size(); ++i) {
    if (a_x[i] != a_y[i]) s |= 1u << i;
  }
  return s;
}

Signature signature_of(const Transition& t) {
  const auto v = t.to_vector();
  if (v.size() > 32) throw DimensionError("signatures support at most 32 attributes");
  Signature s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) s |= 1u << i;
  }
  return s;
}

std::string signature_string(Signature s) {
  std::string out;
  for (unsigned i = 0; i < 32; ++i) {
    if (!(s & (1u << i))) continue;
    if (!out.empty()) out += ",";
    out += std::to_string(i);
  }
  return out;
}

bool HoldoutSpec::excludes(Signature s) const {
  return std::any_of(groups.begin(), groups.end(), [s](Signature g) { return g != 0 && (s & g) == g; });
}

std::string HoldoutSpec::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i) out += ";";
    out += signature_string(groups[i]);
  }
  return out;
}

nlohmann::json HoldoutSpec::to_json() const {
  auto arr = nlohmann::json::array();
  for (auto g : groups) {
    auto idx = nlohmann::json::array();
    for (unsigned i = 0; i < 32; ++i) {
      if (g & (1u << i)) idx.push_back(i);
    }
    arr.push_back(idx);
  }
  return arr;
}

HoldoutSpec HoldoutSpec::parse(const std::string& text, std::size_t attribute_count) {
  HoldoutSpec spec;
  const auto tail = text.find_last_not_of(" \t");
  if (tail == std::string::npos) return spec;
  if (text[tail] == ';' || text[tail] == ',') throw ConfigError("dangling separator in holdout spec '" + text + "'");
  std::stringstream groups(text);
  for (std::string group; std::getline(groups, group, ';');) {
    Signature sig = 0;
    std::stringstream items(group);
    for (std::string item; std::getline(items, item, ',');) {
      const auto first = item.find_first_not_of(" \t");
      const auto last = item.find_last_not_of(" \t");
      if (first == std::string::npos) throw ConfigError("empty index in holdout spec '" + text + "'");
      item = item.substr(first, last - first + 1);
      if (item.empty() || !std::all_of(item.begin(), item.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ConfigError("invalid index '" + item + "' in holdout spec '" + text + "'");
      }
      const auto index = std::stoul(item);
      if (index >= attribute_count || index >= 32) {
        throw ConfigError("holdout index " + item + " exceeds attribute count " + std::to_string(attribute_count));
      }
      sig |= 1u << index;
    }
    if (sig == 0) throw ConfigError("empty group in holdout spec '" + text + "'");
    spec.groups.push_back(sig);
  }
  return spec;
}

HoldoutSpec HoldoutSpec::default_spec() { return HoldoutSpec{{0b00011u, 0b10100u}}; }

std::vector<Signature> permitted_signatures(std::size_t attribute_count, const HoldoutSpec& holdout) {
  if (attribute_count > 20) throw DimensionError("signature enumeration supports at most 20 attributes");
  std::vector<Signature> out;
  for (Signature s = 0; s < (1u << attribute_count); ++s) {
    if (!holdout.excludes(s)) out.push_back(s);
  }
  return out;
}

TripletSample make_triplet(const AttributeVector& a_x, const AttributeVector& a_y, std::uint64_t seed_x,
                           std::uint64_t seed_y, Canvas canvas) {
  TripletSample s;
  s.x = render({a_x, seed_x}, canvas);
  s.y = render({a_y, seed_y}, canvas);
  s.t = normalize_attribute_difference(transition_from_attributes(a_x, a_y));
  s.a_x = a_x;
  s.a_y = a_y;
  return s;
}

TripletBatch gather_triplets(const std::vector<TripletSample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("cannot build an empty batch");
  std::vector<torch::Tensor> xs, ys, ts;
  TripletBatch b;
  for (auto i : indices) {
    const auto& s = samples.at(i);
    xs.push_back(s.x);
    ys.push_back(s.y);
    ts.push_back(s.t.values);
    b.a_x.push_back(s.a_x);
    b.a_y.push_back(s.a_y);
  }
  b.x = torch::stack(xs);
  b.y = torch::stack(ys);
  b.t = torch::stack(ts);
  return b;
}

TripletBatch stack_triplets(const std::vector<TripletSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather_triplets(samples, idx);
}

void DatasetSplit::check_holdout() const {
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (holdout.excludes(signature_of(train[i].a_x, train[i].a_y))) {
      throw DataError("training triplet " + std::to_string(i) + " carries a held-out signature");
    }
  }
}

DatasetSplit generate_synthetic(const SyntheticConfig& config) {
  if (config.train_count < 1) throw ConfigError("train_count must be >= 1");
  if (config.test_count < 0) throw ConfigError("test_count must be >= 0");
  if (config.canvas.height < 16 || config.canvas.width < 16) throw ConfigError("canvas must be at least 16x16");
  const std::size_t k = kShapeAttributeCount;
  for (auto g : config.holdout.groups) {
    if (g >> k) throw ConfigError("holdout spec references attributes beyond " + std::to_string(k));
  }
  const auto permitted = permitted_signatures(k, config.holdout);
  if (permitted.empty()) throw ConfigError("holdout spec excludes every signature");

  std::vector<Signature> test_order;
  for (Signature s = 0; s < (1u << k); ++s) {
    if (config.holdout.excludes(s)) test_order.push_back(s);
  }
  test_order.insert(test_order.end(), permitted.begin(), permitted.end());

  auto make = [&](std::uint64_t stream, std::size_t index, Signature sig) {
    std::mt19937_64 rng(derive_seed(config.seed, stream, index));
    const auto a_x = random_attributes(k, rng);
    const auto seed_x = rng();
    const auto seed_y = rng();
    return make_triplet(a_x, apply_signature(a_x, sig), seed_x, seed_y, config.canvas);
  };

  DatasetSplit split;
  split.holdout = config.holdout;
  split.canvas = config.canvas;
  split.attribute_names = shape_attribute_names();
  split.seed = config.seed;
  split.train.reserve(static_cast<std::size_t>(config.train_count));
  for (std::size_t i = 0; i < static_cast<std::size_t>(config.train_count); ++i) {
    split.train.push_back(make(streams::kTrainTriplets, i, permitted[i % permitted.size()]));
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(config.test_count); ++i) {
    split.test.push_back(make(streams::kTestTriplets, i, test_order[i % test_order.size()]));
  }
  return split;
}

TripletBatch sample_batch(const DatasetSplit& split, std::int64_t batch, std::mt19937_64& rng) {
  if (split.train.empty()) throw DataError("training split is empty");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, split.train.size()));
  return gather_triplets(split.train, idx);
}

WrongTriplets make_wrong_triplets(const TripletBatch& batch, std::mt19937_64& rng) {
  const auto n = batch.size();
  if (n < 2) throw DataError("wrong triplets need a batch of at least 2");
  constexpr int kMaxAttempts = 100;
  std::vector<std::int64_t> t_src(static_cast<std::size_t>(n)), y_src(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    // Start from the cyclic neighbour and perturb the index on collision.
    std::int64_t j = (i + 1) % n;
    int attempt = 0;
    while (torch::equal(batch.t[j], batch.t[i])) {
      if (++attempt > kMaxAttempts) throw DataError("cannot find a distinct transition for wrong triplet");
      j = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    t_src[static_cast<std::size_t>(i)] = j;

    j = (i + 1) % n;
    attempt = 0;
    while (batch.a_y[static_cast<std::size_t>(j)] == batch.a_y[static_cast<std::size_t>(i)]) {
      if (++attempt > kMaxAttempts) throw DataError("cannot find a mismatched target for wrong triplet");
      j = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    y_src[static_cast<std::size_t>(i)] = j;
  }
  auto t_index = torch::tensor(t_src, torch::kLong);
  auto y_index = torch::tensor(y_src, torch::kLong);
  return {batch.t.index_select(0, t_index), batch.y.index_select(0, y_index)};
}

AttributeTable parse_attr_file(std::istream& in) {
  AttributeTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing image count");
  std::size_t expected = 0;
  try {
    std::size_t pos = 0;
    const auto trimmed = split_ws(line);
    if (trimmed.size() != 1) throw std::invalid_argument("count");
    expected = std::stoul(trimmed[0], &pos);
    if (pos != trimmed[0].size()) throw std::invalid_argument("count");
  } catch (const std::exception&) {
    throw ParseError(1, "image count is not an integer: '" + line + "'");
  }
  if (!std::getline(in, line)) throw ParseError(2, "missing attribute names");
  table.names = split_ws(line);
  if (table.names.empty()) throw ParseError(2, "no attribute names");

  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_ws(line);
    if (fields.size() != table.names.size() + 1) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(table.names.size()) +
                        " attribute values, got " + std::to_string(fields.size() - 1));
    }
    std::vector<int> bits;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (fields[i] == "1" || fields[i] == "+1") {
        bits.push_back(1);
      } else if (fields[i] == "-1") {
        bits.push_back(-1);
      } else {
        throw ParseError(line_no, "attribute value '" + fields[i] + "' is not +1 or -1");
      }
    }
    table.rows.emplace_back(fields[0], AttributeVector(std::move(bits)));
  }
  if (table.rows.size() != expected) {
    throw FormatError("header declares " + std::to_string(expected) + " images, found " +
                      std::to_string(table.rows.size()));
  }
  return table;
}

AttributeTable load_attr_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attribute file '" + path.string() + "'");
  return parse_attr_file(in);
}

void write_attr_file(std::ostream& out, const AttributeTable& table) {
  out << table.rows.size() << '\n';
  for (std::size_t i = 0; i < table.names.size(); ++i) out << (i ? " " : "") << table.names[i];
  out << '\n';
  for (const auto& [name, attrs] : table.rows) {
    if (attrs.size() != table.names.size()) throw DimensionError("attribute row length differs from header");
    out << name;
    for (auto b : attrs.bits()) out << ' ' << b;
    out << '\n';
  }
}

void write_attr_file(const fs::path& path, const AttributeTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write attribute file '" + path.string() + "'");
  write_attr_file(out, table);
  if (!out) throw DataError("failed writing attribute file '" + path.string() + "'");
}

void write_dataset(const fs::path& dir, const DatasetSplit& split, const nlohmann::json& extra_manifest) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw DataError("cannot create dataset directory '" + dir.string() + "': " + ec.message());

  AttributeTable table;
  table.names = split.attribute_names;
  nlohmann::json triplets = {{"train", nlohmann::json::array()}, {"test", nlohmann::json::array()}};
  auto emit = [&](const char* name, const std::vector<TripletSample>& samples) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto xn = image_name(name, i, 'x');
      const auto yn = image_name(name, i, 'y');
      write_png(dir / "images" / xn, samples[i].x);
      write_png(dir / "images" / yn, samples[i].y);
      table.rows.emplace_back(xn, samples[i].a_x);
      table.rows.emplace_back(yn, samples[i].a_y);
      triplets[name].push_back({xn, yn});
    }
  };
  emit("train", split.train);
  emit("test", split.test);
  write_attr_file(dir / "attrs.txt", table);

  nlohmann::json manifest = extra_manifest.is_object() ? extra_manifest : nlohmann::json::object();
  manifest["format"] = "tegan-synth-v1";
  manifest["seed"] = split.seed;
  manifest["canvas"] = {split.canvas.height, split.canvas.width};
  manifest["holdout"] = split.holdout.to_string();
  manifest["holdout_signatures"] = split.holdout.to_json();
  manifest["attribute_names"] = split.attribute_names;
  manifest["train_count"] = split.train.size();
  manifest["test_count"] = split.test.size();
  manifest["triplets"] = triplets;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("cannot write manifest in '" + dir.string() + "'");
}

DatasetSplit load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory '" + dir.string() + "' does not exist");
  const auto table = load_attr_file(dir / "attrs.txt");
  nlohmann::json manifest = nlohmann::json::object();
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("invalid manifest.json: " + std::string(e.what()));
    }
  }

  DatasetSplit split;
  split.attribute_names = table.names;
  split.seed = manifest.value("seed", std::uint64_t{0});
  split.holdout = HoldoutSpec::parse(manifest.value("holdout", std::string{}), table.names.size());

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.rows.size(); ++i) row_of[table.rows[i].first] = i;
  std::map<std::string, torch::Tensor> cache;
  auto image = [&](const std::string& name) -> std::pair<torch::Tensor, AttributeVector> {
    auto it = row_of.find(name);
    if (it == row_of.end()) throw DataError("image '" + name + "' is not listed in attrs.txt");
    auto c = cache.find(name);
    if (c == cache.end()) c = cache.emplace(name, read_png(dir / "images" / name)).first;
    return {c->second, table.rows[it->second].second};
  };
  auto triplet = [&](const std::string& xn, const std::string& yn) {
    auto [x, a_x] = image(xn);
    auto [y, a_y] = image(yn);
    if (x.sizes() != y.sizes()) throw DataError("triplet images '" + xn + "' and '" + yn + "' differ in size");
    TripletSample s{x, y, normalize_attribute_difference(transition_from_attributes(a_x, a_y)), a_x, a_y};
    return s;
  };

  if (manifest.contains("triplets")) {
    for (const auto& pair : manifest["triplets"].value("train", nlohmann::json::array())) {
      split.train.push_back(triplet(pair.at(0), pair.at(1)));
    }
    for (const auto& pair : manifest["triplets"].value("test", nlohmann::json::array())) {
      split.test.push_back(triplet(pair.at(0), pair.at(1)));
    }
  } else {
    // Plain annotated folder: pair every image with a seed-chosen partner.
    if (table.rows.size() < 2) throw DataError("dataset needs at least two images");
    std::mt19937_64 rng(derive_seed(split.seed, streams::kTrainTriplets));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      std::size_t j = uniform_index(rng, table.rows.size() - 1);
      if (j >= i) ++j;
      auto s = triplet(table.rows[i].first, table.rows[j].first);
      const bool held_out = split.holdout.excludes(signature_of(s.a_x, s.a_y));
      (held_out || i % 8 == 7 ? split.test : split.train).push_back(std::move(s));
    }
  }
  if (split.train.empty()) throw DataError("dataset has no training triplets");
  split.canvas = {split.train.front().x.size(1), split.train.front().x.size(2)};
  split.check_holdout();
  return split;
}

}  // namespace tegan
