#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "tegan/data.hpp"
#include "tegan/errors.hpp"
#include "tegan/metrics.hpp"
#include "tegan/rng.hpp"
#include "reference_metrics.hpp"

using namespace tegan;

namespace {

torch::Tensor random_image(torch::Generator& gen, std::int64_t h = 32, std::int64_t w = 32) {
  return torch::rand({3, h, w}, gen, torch::kFloat64) * 2 - 1;
}

// Images whose first pixels store the transition, so mocks can read it back.
torch::Tensor stamp(const torch::Tensor& x, const torch::Tensor& t) {
  auto out = x.clone();
  out.select(1, 0).select(1, 0).select(1, 0).zero_();
  for (std::int64_t k = 0; k < t.size(1); ++k) out.select(1, 0).select(1, 0).select(1, k + 1).copy_(t.select(1, k));
  return out;
}

torch::Tensor read_stamp(const torch::Tensor& y, std::int64_t d) {
  return y.select(1, 0).select(1, 0).slice(1, 1, d + 1).clone();
}

Translator stamping_mock(double offset) {
  return {[](const torch::Tensor& x, const torch::Tensor& t) { return stamp(x, t); },
          [offset](const torch::Tensor&, const torch::Tensor& y) {
            const auto t = read_stamp(y, 5) + offset;
            return TransitionPosterior{t, torch::zeros_like(t)};
          }};
}

TripletBatch stamped_batch(std::int64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TripletSample> samples;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<int> a(5), b(5);
    for (int k = 0; k < 5; ++k) {
      a[k] = uniform01(rng) < 0.5 ? -1 : 1;
      b[k] = uniform01(rng) < 0.5 ? -1 : 1;
    }
    samples.push_back(make_triplet(AttributeVector(a), AttributeVector(b), rng(), rng(), {}));
  }
  auto batch = stack_triplets(samples);
  batch.y = stamp(batch.x, batch.t);
  return batch;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("ssim matches the direct windowed reference") {
    auto gen = make_generator(1);
    for (int i = 0; i < 20; ++i) {
      const auto a = random_image(gen);
      const auto b = (a + 0.3 * torch::randn({3, 32, 32}, gen, torch::kFloat64)).clamp(-1, 1);
      CHECK(std::abs(ssim(a, b) - reference::ssim(a, b)) < 1e-6);
    }
  }

  TEST_CASE("ssim properties") {
    auto gen = make_generator(2);
    const auto a = random_image(gen), b = random_image(gen);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);
    const auto c = torch::full({3, 32, 32}, 0.2, torch::kFloat64);
    CHECK(ssim(c, c + 1e-6 * torch::rand({3, 32, 32}, gen, torch::kFloat64)) >= 0.999);
    CHECK_THROWS_AS(ssim(a, torch::zeros({3, 32, 31})), DimensionError);
    CHECK_THROWS_AS(ssim(torch::zeros({3, 8, 8}), torch::zeros({3, 8, 8})), DimensionError);
  }

  TEST_CASE("psnr analytic values") {
    // Differences of 0.2 in [-1, 1] are 0.1 on the unit range: MSE 0.01.
    const auto a = torch::zeros({3, 16, 16}, torch::kFloat64);
    CHECK(psnr(a, a + 0.2) == doctest::Approx(20.0));
    CHECK(psnr(a, a) == 100.0);
    CHECK(psnr(a - 1, a + 1) == doctest::Approx(0.0));
    auto gen = make_generator(4);
    const auto x = random_image(gen);
    double last = 1e9;
    for (double amp : {0.01, 0.05, 0.1}) {
      const auto noisy = x + amp * (torch::rand({3, 32, 32}, gen, torch::kFloat64) * 2 - 1);
      const double p = psnr(x, noisy);
      CHECK(p < last);
      last = p;
    }
    for (int i = 0; i < 10; ++i) {
      const auto b = random_image(gen);
      CHECK(std::abs(psnr(x, b) - reference::psnr(x, b)) < 1e-9);
    }
    CHECK_THROWS_AS(psnr(a, torch::zeros({3, 16, 15})), DimensionError);
  }

  TEST_CASE("frechet distance analytic cases") {
    const auto zeros = torch::zeros({50, 1}, torch::kFloat64);
    CHECK(frechet_distance(zeros, zeros + 1) == doctest::Approx(1.0).epsilon(1e-12));
    auto gen = make_generator(6);
    const auto f = torch::randn({200, 4}, gen, torch::kFloat64);
    CHECK(std::abs(frechet_distance(f, f)) < 1e-6);
    const auto g = torch::randn({300, 4}, gen, torch::kFloat64) * 1.5 + 0.3;
    CHECK(std::abs(frechet_distance(f, g) - frechet_distance(g, f)) < 1e-6);

    const auto unit = torch::randn({100000, 1}, gen, torch::kFloat64);
    const auto wide = torch::randn({100000, 1}, gen, torch::kFloat64) * 3;
    // Sample-fit tolerance for N = 1e5: stderr of sigma is about sigma / sqrt(2N).
    CHECK(std::abs(frechet_distance(unit, wide) - 4.0) < 0.1);

    CHECK_THROWS_AS(frechet_distance(torch::zeros({1, 2}), torch::zeros({5, 2})), InsufficientSamplesError);
    CHECK_THROWS_AS(frechet_distance(torch::zeros({5, 2}), torch::zeros({5, 3})), DimensionError);
  }

  TEST_CASE("frechet distance against the closed-form 1-D and 2-D reference") {
    auto gen = make_generator(8);
    for (int i = 0; i < 10; ++i) {
      for (std::int64_t dim : {1, 2}) {
        const auto mix_a = torch::randn({dim, dim}, gen, torch::kFloat64);
        const auto mix_b = torch::randn({dim, dim}, gen, torch::kFloat64);
        const auto a = torch::randn({64, dim}, gen, torch::kFloat64).matmul(mix_a) + torch::randn({dim}, gen, torch::kFloat64);
        const auto b = torch::randn({80, dim}, gen, torch::kFloat64).matmul(mix_b) + torch::randn({dim}, gen, torch::kFloat64);
        CAPTURE(i);
        CAPTURE(dim);
        CHECK(std::abs(frechet_distance(a, b) - reference::frechet_closed_form(a, b)) < 1e-5);
      }
    }
  }

  TEST_CASE("transition error on mocks") {
    const auto batch = stamped_batch(6, 3);
    CHECK(transition_error(stamping_mock(0.0), batch) == doctest::Approx(0.0));
    CHECK(transition_error(stamping_mock(0.5), batch) == doctest::Approx(1.0));
    // Permutation invariance.
    const auto perm = torch::tensor(std::vector<std::int64_t>{5, 3, 1, 0, 2, 4});
    TripletBatch shuffled = batch;
    shuffled.x = batch.x.index_select(0, perm);
    shuffled.y = batch.y.index_select(0, perm);
    shuffled.t = batch.t.index_select(0, perm);
    const Translator noisy{[](const torch::Tensor& x, const torch::Tensor& t) { return stamp(x, t); },
                           [](const torch::Tensor& x, const torch::Tensor& y) {
                             const auto t = read_stamp(y, 5) + 0.1 * x.mean({1, 2, 3}).unsqueeze(1);
                             return TransitionPosterior{t, torch::zeros_like(t)};
                           }};
    CHECK(transition_error(noisy, shuffled) == doctest::Approx(transition_error(noisy, batch)).epsilon(1e-6));
    const Translator wrong_dim{[](const torch::Tensor& x, const torch::Tensor&) { return x; },
                               [](const torch::Tensor& x, const torch::Tensor&) {
                                 return TransitionPosterior{torch::zeros({x.size(0), 3}), torch::zeros({x.size(0), 3})};
                               }};
    CHECK_THROWS_AS(transition_error(wrong_dim, batch), DimensionError);
  }

  TEST_CASE("evaluate with an identity generator") {
    SyntheticConfig cfg;
    cfg.train_count = 1;
    cfg.test_count = 20;
    const auto split = generate_synthetic(cfg);
    const Translator identity{[](const torch::Tensor& x, const torch::Tensor&) { return x; },
                              [](const torch::Tensor& x, const torch::Tensor&) {
                                return TransitionPosterior{torch::zeros({x.size(0), 5}), torch::zeros({x.size(0), 5})};
                              }};
    const auto r = evaluate(identity, nullptr, split.test, split.holdout, {-1, 8, 0});
    CHECK(r.ssim_self == doctest::Approx(1.0));
    CHECK(r.psnr_self == 100.0);
    CHECK(r.ssim_cycle == doctest::Approx(1.0));
    CHECK(r.n_evaluated == 20);
    CHECK(r.n_seen + r.n_unseen == 20);
    CHECK(r.n_unseen == 14);
    CHECK(std::isnan(r.attr_acc_seen));
    const auto j = r.to_json();
    for (const char* key : {"ssim_self", "ssim_translate", "psnr_self", "psnr_translate", "frechet_distance",
                            "attr_acc_seen", "attr_acc_unseen", "trans_recons_error"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["attr_acc_seen"].is_null());
    CHECK_THROWS_AS(evaluate(identity, nullptr, {}, split.holdout, {}), DataError);
  }

  TEST_CASE("oracle training, accuracy and persistence") {
    OracleConfig cfg;
    cfg.seed = 0;
    auto [oracle, report] = train_oracle(cfg);
    CHECK(oracle.frozen());
    CHECK(report.min_accuracy >= 0.99);
    CHECK(oracle.features(torch::zeros({2, 3, 32, 32})).sizes() == std::vector<std::int64_t>{2, 64});

    SyntheticConfig sc;
    sc.train_count = 1;
    sc.test_count = 500;
    sc.seed = 123;
    const auto split = generate_synthetic(sc);
    const auto batch = stack_triplets(split.test);
    std::vector<AttributeVector> flipped;
    for (const auto& a : batch.a_y) {
      auto bits = a.bits();
      for (auto& b : bits) b = -b;
      flipped.emplace_back(bits);
    }
    const double acc = attribute_accuracy(oracle, batch.y, batch.a_y);
    CHECK(acc >= 0.99);
    CHECK(attribute_accuracy(oracle, batch.y, flipped) <= 0.01);
    CHECK(attribute_accuracy(oracle, batch.y, flipped) == doctest::Approx(1.0 - acc));
    CHECK_THROWS_AS(attribute_accuracy(oracle, torch::zeros({0, 3, 32, 32}), {}), DataError);

    const auto path = std::filesystem::temp_directory_path() / "tegan_oracle_test.pt";
    oracle.save(path);
    const auto loaded = OracleClassifier::load(path);
    CHECK(loaded.frozen());
    CHECK(loaded.attribute_names() == oracle.attribute_names());
    CHECK(torch::equal(loaded.logits(batch.x), oracle.logits(batch.x)));
    std::filesystem::remove(path);

    OracleClassifier fresh(shape_attribute_names(), {}, 64, 0);
    CHECK_THROWS_AS(attribute_accuracy(fresh, batch.y, batch.a_y), StateError);
  }
}
