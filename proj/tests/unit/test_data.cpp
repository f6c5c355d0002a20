#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tegan/data.hpp"
#include "tegan/errors.hpp"
#include "tegan/rng.hpp"

using namespace tegan;
namespace fs = std::filesystem;

namespace {

AttributeVector random_attrs(std::mt19937_64& rng) {
  std::vector<int> bits(5);
  for (auto& b : bits) b = uniform01(rng) < 0.5 ? -1 : 1;
  return AttributeVector(bits);
}

// Foreground: any channel well above the dark background.
torch::Tensor foreground(const torch::Tensor& img) { return std::get<0>(img.max(0)) > -0.5; }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tegan_data_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("rendering is deterministic and validated") {
    const ShapeSpec spec{{1, -1, 1, -1, 1}, 42};
    const auto a = render(spec, {});
    CHECK(a.sizes() == std::vector<std::int64_t>{3, 32, 32});
    CHECK(torch::equal(a, render(spec, {})));
    CHECK(a.min().item<float>() >= -1.0f);
    CHECK(a.max().item<float>() <= 1.0f);
    CHECK_FALSE(torch::equal(a, render({spec.attributes, 43}, {})));
    CHECK_THROWS_AS(render(spec, {15, 32}), ConfigError);
    CHECK_NOTHROW(render(spec, {16, 16}));
  }

  TEST_CASE("size bit scales the foreground area") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
      auto bits = random_attrs(rng).bits();
      bits[1] = 1;
      const auto large = foreground(render({AttributeVector(bits), rng()}, {})).sum().item<double>();
      bits[1] = -1;
      const auto small = foreground(render({AttributeVector(bits), rng()}, {})).sum().item<double>();
      CHECK(large / small >= 2.5);
    }
  }

  TEST_CASE("hue (-1, -1) renders red") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
      auto bits = random_attrs(rng).bits();
      bits[2] = -1;
      bits[3] = -1;
      const auto img = render({AttributeVector(bits), rng()}, {});
      const auto mask = foreground(img);
      const double r = img[0].masked_select(mask).mean().item<double>();
      const double g = img[1].masked_select(mask).mean().item<double>();
      const double b = img[2].masked_select(mask).mean().item<double>();
      CHECK(r > g);
      CHECK(r > b);
    }
  }

  TEST_CASE("triplets carry the halved attribute difference") {
    const AttributeVector a{1, -1, 1, 1, -1};
    CHECK(make_triplet(a, a, 1, 2, {}).t.to_vector() == std::vector<double>{0, 0, 0, 0, 0});
    const auto s = make_triplet(a, a.flipped(1), 1, 2, {});
    CHECK(s.t.to_vector() == std::vector<double>{0, 1, 0, 0, 0});
    CHECK(s.t.kind == TransitionKind::attribute_diff);
    const AttributeVector b{-1, 1, 1, -1, -1};
    CHECK(torch::equal(make_triplet(a, b, 1, 2, {}).t.values, -make_triplet(b, a, 1, 2, {}).t.values));
    CHECK(torch::equal(s.t.values * 2, transition_from_attributes(s.a_x, s.a_y).values));
  }

  TEST_CASE("signatures and holdout specs") {
    CHECK(signature_of(AttributeVector{1, 1, 1}, AttributeVector{-1, 1, -1}) == 0b101u);
    CHECK(signature_string(0b101u) == "0,2");
    const auto spec = HoldoutSpec::parse("0,1;2,4", 5);
    CHECK(spec.groups == std::vector<Signature>{0b00011u, 0b10100u});
    CHECK(spec.excludes(0b00011u));
    CHECK(spec.excludes(0b01011u));
    CHECK_FALSE(spec.excludes(0b00001u));
    CHECK_FALSE(spec.excludes(0b10001u));
    CHECK(spec.to_string() == "0,1;2,4");
    CHECK(HoldoutSpec::parse(spec.to_string(), 5).groups == spec.groups);
    CHECK(HoldoutSpec::parse("", 5).groups.empty());
    CHECK_THROWS_AS(HoldoutSpec::parse("0,x", 5), ConfigError);
    CHECK_THROWS_AS(HoldoutSpec::parse("0,7", 5), ConfigError);
    CHECK_THROWS_AS(HoldoutSpec::parse("0,1;", 5), ConfigError);
    CHECK_THROWS_AS(HoldoutSpec::parse("0,1;;2", 5), ConfigError);
    // Default spec: 8 + 8 - 2 = 14 excluded of 32.
    CHECK(permitted_signatures(5, HoldoutSpec::default_spec()).size() == 18);
  }

  TEST_CASE("synthetic split honours the holdout") {
    SyntheticConfig cfg;
    cfg.train_count = 200;
    cfg.test_count = 40;
    cfg.seed = 3;
    const auto split = generate_synthetic(cfg);
    CHECK(split.train.size() == 200);
    CHECK(split.test.size() == 40);
    CHECK_NOTHROW(split.check_holdout());
    std::set<Signature> test_held;
    for (const auto& s : split.test) {
      const auto sig = signature_of(s.a_x, s.a_y);
      if (cfg.holdout.excludes(sig)) test_held.insert(sig);
      CHECK(torch::equal(s.t.values * 2, transition_from_attributes(s.a_x, s.a_y).values));
    }
    CHECK(test_held.size() == 14);  // every held-out signature has a test triplet

    const auto again = generate_synthetic(cfg);
    for (std::size_t i = 0; i < split.train.size(); i += 17) CHECK(torch::equal(split.train[i].x, again.train[i].x));
    auto bad = split;
    bad.train.push_back(split.test.front());
    CHECK_THROWS_AS(bad.check_holdout(), DataError);
    cfg.train_count = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  }

  TEST_CASE("batch sampling") {
    SyntheticConfig cfg;
    cfg.train_count = 360;
    cfg.test_count = 0;
    const auto split = generate_synthetic(cfg);
    std::mt19937_64 r1(1), r2(1);
    const auto b1 = sample_batch(split, 8, r1);
    const auto b2 = sample_batch(split, 8, r2);
    CHECK(b1.size() == 8);
    CHECK(torch::equal(b1.x, b2.x));
    for (std::size_t i = 0; i < 8; ++i) CHECK_FALSE(split.holdout.excludes(signature_of(b1.a_x[i], b1.a_y[i])));

    // Signature histogram over 10^4 draws against the uniform frequency.
    std::map<Signature, int> hist;
    std::mt19937_64 rng(77);
    for (int k = 0; k < 625; ++k) {
      const auto b = sample_batch(split, 16, rng);
      for (std::size_t i = 0; i < 16; ++i) ++hist[signature_of(b.a_x[i], b.a_y[i])];
    }
    const auto permitted = permitted_signatures(5, split.holdout);
    CHECK(hist.size() == permitted.size());
    const double expected = 10000.0 / static_cast<double>(permitted.size());
    for (auto [sig, count] : hist) {
      CAPTURE(sig);
      CHECK(std::abs(count - expected) <= 0.3 * expected);
    }
    DatasetSplit empty;
    CHECK_THROWS_AS(sample_batch(empty, 4, rng), DataError);
  }

  TEST_CASE("wrong triplets") {
    const AttributeVector a{1, 1, 1, 1, 1};
    const auto s0 = make_triplet(a, a.flipped(0), 1, 2, {});
    const auto s1 = make_triplet(a, a.flipped(3), 3, 4, {});
    const auto pair = stack_triplets({s0, s1});
    std::mt19937_64 rng(0);
    const auto w = make_wrong_triplets(pair, rng);
    CHECK(torch::equal(w.wrong_t[0], pair.t[1]));
    CHECK(torch::equal(w.wrong_t[1], pair.t[0]));

    SyntheticConfig cfg;
    cfg.train_count = 64;
    cfg.test_count = 0;
    const auto split = generate_synthetic(cfg);
    for (int trial = 0; trial < 20; ++trial) {
      const auto b = sample_batch(split, 16, rng);
      const auto wt = make_wrong_triplets(b, rng);
      for (std::int64_t i = 0; i < 16; ++i) {
        CHECK_FALSE(torch::equal(wt.wrong_t[i], b.t[i]));
        // y_x comes from a row whose a_y differs from a_x + 2t = a_y.
        bool matched = false;
        for (std::int64_t j = 0; j < 16; ++j) {
          if (torch::equal(wt.wrong_y[i], b.y[j])) {
            matched = true;
            CHECK_FALSE(b.a_y[static_cast<std::size_t>(j)] == b.a_y[static_cast<std::size_t>(i)]);
          }
        }
        CHECK(matched);
      }
    }
    const auto same = stack_triplets({s0, s0});
    CHECK_THROWS_AS(make_wrong_triplets(same, rng), DataError);
    CHECK_THROWS_AS(make_wrong_triplets(stack_triplets({s0}), rng), DataError);
  }

  TEST_CASE("attribute files") {
    std::istringstream in("1\nsmile young\nimg1.png 1 -1\n");
    const auto table = parse_attr_file(in);
    CHECK(table.names == std::vector<std::string>{"smile", "young"});
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].first == "img1.png");
    CHECK(table.rows[0].second == AttributeVector{1, -1});

    std::istringstream zero("1\na b\nimg1.png 1 0\n");
    try {
      parse_attr_file(zero);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream short_row("1\na b\nimg1.png 1\n");
    CHECK_THROWS_AS(parse_attr_file(short_row), FormatError);
    std::istringstream count("2\na b\nimg1.png 1 1\n");
    CHECK_THROWS_AS(parse_attr_file(count), FormatError);

    // Random round trip, bit-exact text.
    std::mt19937_64 rng(4);
    AttributeTable t;
    t.names = {"a", "b", "c", "d", "e"};
    for (int i = 0; i < 30; ++i) t.rows.emplace_back("f" + std::to_string(i) + ".png", random_attrs(rng));
    std::ostringstream out;
    write_attr_file(out, t);
    std::istringstream back_in(out.str());
    const auto back = parse_attr_file(back_in);
    CHECK(back.names == t.names);
    CHECK((back.rows == t.rows));
    std::ostringstream again;
    write_attr_file(again, back);
    CHECK(again.str() == out.str());
    CHECK(out.str().rfind("30\na b c d e\nf0.png ", 0) == 0);
  }

  TEST_CASE("dataset directory round trip") {
    SyntheticConfig cfg;
    cfg.train_count = 12;
    cfg.test_count = 6;
    cfg.seed = 8;
    cfg.holdout = HoldoutSpec::parse("0,1;2,4", 5);
    const auto split = generate_synthetic(cfg);
    const auto dir = scratch("roundtrip");
    write_dataset(dir, split);
    CHECK(fs::exists(dir / "attrs.txt"));
    CHECK(fs::exists(dir / "manifest.json"));
    const auto loaded = load_dataset(dir);
    REQUIRE(loaded.train.size() == split.train.size());
    REQUIRE(loaded.test.size() == split.test.size());
    CHECK(loaded.holdout.groups == split.holdout.groups);
    CHECK(loaded.seed == 8);
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      CHECK(loaded.train[i].a_x == split.train[i].a_x);
      CHECK(torch::equal(loaded.train[i].t.values, split.train[i].t.values));
      // 8-bit quantization error is at most half a step.
      CHECK((loaded.train[i].x - split.train[i].x).abs().max().item<float>() <= 1.0f / 255.0f + 1e-6f);
    }
    std::ifstream mf(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(mf);
    CHECK(manifest["holdout_signatures"] == nlohmann::json::parse(R"([[0,1],[2,4]])"));
    CHECK_THROWS_AS(load_dataset(dir / "missing"), DataError);
    fs::remove_all(dir);
  }
}
