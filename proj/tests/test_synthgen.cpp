#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "tsprobe/io_util.hpp"
#include "tsprobe/synthgen.hpp"

using namespace tsprobe;
namespace fs = std::filesystem;

namespace {

ConceptSpec raw_spec(ConceptKind kind, std::size_t length) {
  auto spec = ConceptSpec::defaults(kind, length);
  spec.normalization = Normalization::None;
  return spec;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tsprobe_test_synthgen_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("AR1 with zero innovation noise is identically zero") {
  const auto s = generate_series(raw_spec(ConceptKind::AR1, 128), {{"phi", 0.5}, {"sigma", 0.0}}, 3);
  CHECK(std::all_of(s.values.begin(), s.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("noiseless level shift is an exact step") {
  const auto s = generate_series(raw_spec(ConceptKind::LevelShift, 256),
                                 {{"delta", 5.0}, {"tau", 100.0}, {"noise_std", 0.0}}, 11);
  for (std::size_t t = 0; t < 256; ++t) CHECK(s.values[t] == (t >= 100 ? 5.0 : 0.0));
}

TEST_CASE("a constant-step warp reproduces the base signal") {
  const std::size_t T = 200;
  std::vector<double> base(T);
  for (std::size_t t = 0; t < T; ++t) base[t] = std::sin(2.0 * std::numbers::pi * 0.07 * static_cast<double>(t) + 0.3);
  const std::vector<double> steps(T - 1, 1.7);
  const auto out = warp_resample(base, steps);
  for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(out[t] - base[t]) < 1e-9);
}

TEST_CASE("AR1 lag-1 autocorrelation tracks phi") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    const auto s = generate_series(raw_spec(ConceptKind::AR1, 4096), {{"phi", 0.8}, {"sigma", 1.0}}, seed);
    const double acf = oracle::sample_acf1(s.values);
    CHECK(acf >= 0.75);
    CHECK(acf <= 0.85);
  }
}

TEST_CASE("variance shift segment std ratio") {
  const std::size_t T = 2048;
  for (std::uint64_t seed : {10ull, 20ull, 30ull}) {
    const auto s = generate_series(raw_spec(ConceptKind::VarianceShift, T),
                                   {{"sigma1", 0.7}, {"sigma2", 2.1}, {"tau", 1024.0}}, seed);
    const double ratio = oracle::population_std(s.values, 1024, T) / oracle::population_std(s.values, 0, 1024);
    CHECK(std::abs(ratio / 3.0 - 1.0) < 0.10);
  }
}

TEST_CASE("random walk mean increment recovers mu") {
  const std::size_t T = 4096;
  const double mu = 0.05, sigma = 1.2;
  const auto s = generate_series(raw_spec(ConceptKind::RandomWalk, T), {{"mu", mu}, {"sigma", sigma}}, 77);
  // The first increment is x_0 itself (the walk starts from zero).
  const double mean_step = s.values.back() / static_cast<double>(T);
  CHECK(std::abs(mean_step - mu) < 3.0 * sigma / std::sqrt(static_cast<double>(T)));
}

TEST_CASE("spectral sinusoid without noise stays within its amplitude") {
  const auto s = generate_series(raw_spec(ConceptKind::Spectral, 512),
                                 {{"k", 1.0}, {"freq_1", 0.13}, {"amp_1", 1.0}, {"phase_1", 0.4}, {"noise_std", 0.0}}, 5);
  const double peak = std::abs(*std::max_element(s.values.begin(), s.values.end(),
                                                 [](double a, double b) { return std::abs(a) < std::abs(b); }));
  CHECK(peak <= 1.0);
  CHECK(peak > 0.9);
}

TEST_CASE("Trend OLS slope recovers beta within three standard errors") {
  auto spec = raw_spec(ConceptKind::Trend, 256);
  const auto ds = generate_dataset(spec, 500, 2024);
  const double T = 256.0;
  std::size_t inside = 0;
  double z_sum = 0.0;
  for (const auto& s : ds.series) {
    const double se = s.params.at("noise_std") * std::sqrt(12.0 / (T * T * T - T));
    const double err = oracle::ols_line(s.values).first - s.params.at("beta");
    inside += std::abs(err) < 3.0 * se;
    z_sum += err / se;
  }
  // Under Gaussian noise 99.73% of slopes fall inside the bound.
  CHECK(static_cast<double>(inside) / 500.0 >= 0.99);
  CHECK(std::abs(z_sum / 500.0) < 3.0 / std::sqrt(500.0));
}

TEST_CASE("zscore examples") {
  const std::vector<double> x = {1, 2, 3};
  const auto z = zscore(x);
  CHECK(z.applied == Normalization::ZScore);
  CHECK(std::abs(oracle::mean(z.values)) < 1e-12);
  CHECK(std::abs(oracle::population_std(z.values, 0, 3) - 1.0) < 1e-12);

  const std::vector<double> c = {5, 5, 5};
  const auto zc = zscore(c);
  CHECK(zc.applied == Normalization::None);
  CHECK(zc.values == std::vector<double>{0, 0, 0});

  CHECK_THROWS_AS(zscore(std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("zscore is idempotent") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(2 + trial * 3);
    for (auto& v : x) v = rng.normal(3.0, 10.0);
    const auto once = zscore(x).values;
    const auto twice = zscore(once).values;
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-9);
  }
}

TEST_CASE("default normalization per concept and the z-score invariant") {
  for (auto kind : all_concept_kinds()) {
    const auto spec = ConceptSpec::defaults(kind, 128);
    const bool raw = kind == ConceptKind::LevelShift || kind == ConceptKind::RandomWalk || kind == ConceptKind::VarianceShift;
    CHECK(spec.normalization == (raw ? Normalization::None : Normalization::ZScore));
    const auto ds = generate_dataset(spec, 40, 8);
    for (const auto& s : ds.series) {
      if (s.applied_normalization != Normalization::ZScore) continue;
      CHECK(std::abs(oracle::mean(s.values)) < 1e-9);
      CHECK(std::abs(oracle::population_std(s.values, 0, s.values.size()) - 1.0) < 1e-9);
    }
    if (raw) {
      for (const auto& s : ds.series) CHECK(s.applied_normalization == Normalization::None);
    }
  }
}

TEST_CASE("dataset generation is deterministic and per-series pure") {
  const auto spec = ConceptSpec::defaults(ConceptKind::TimeWarped, 96);
  const auto a = generate_dataset(spec, 30, 123);
  const auto b = generate_dataset(spec, 30, 123);
  const auto c = generate_dataset(spec, 30, 124);
  CHECK(a.values() == b.values());
  CHECK(a.targets == b.targets);
  CHECK(a.is_train == b.is_train);
  CHECK(a.values() != c.values());
  // Series i depends only on (spec, master_seed, i).
  for (std::size_t i : {0u, 17u, 29u}) {
    const auto again = generate_series(spec, a.series[i].params, derive_seed(123, i));
    CHECK(again.values == a.series[i].values);
  }
  const auto longer = generate_dataset(spec, 40, 123);
  for (std::size_t i = 0; i < 30; ++i) CHECK(longer.series[i].values == a.series[i].values);
}

TEST_CASE("80/20 split") {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::AR1, 32), 10, 1);
  const auto train = ds.train_indices();
  const auto val = ds.val_indices();
  CHECK(train.size() == 8);
  CHECK(val.size() == 2);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  CHECK(all.size() == 10);
  CHECK(*all.rbegin() == 9);
  for (std::size_t n : {2u, 5u, 11u, 999u, 1000u}) CHECK(train_count(n) == static_cast<std::size_t>(std::ceil(0.8 * n)));
}

TEST_CASE("sampled parameters respect the configured ranges") {
  for (auto kind : all_concept_kinds()) {
    const std::size_t T = 200;
    const auto spec = ConceptSpec::defaults(kind, T);
    const auto ds = generate_dataset(spec, 200, 4);
    for (const auto& s : ds.series) {
      for (const auto& [key, range] : spec.ranges) {
        if (key == "tau_frac") {
          const double tau = s.params.at("tau");
          CHECK(tau == std::floor(tau));
          CHECK(tau >= std::max(1.0, std::floor(range.lo * T)));
          CHECK(tau <= std::min(T - 1.0, std::floor(range.hi * T)));
        } else if (kind == ConceptKind::Spectral && (key == "freq" || key == "amp")) {
          const int k = static_cast<int>(s.params.at("k"));
          CHECK(k >= 1);
          CHECK(k <= spec.k_max);
          for (int j = 1; j <= k; ++j) {
            const double v = s.params.at(key + "_" + std::to_string(j));
            CHECK(v >= range.lo);
            CHECK(v <= range.hi);
          }
        } else {
          CHECK(s.params.at(key) >= range.lo);
          CHECK(s.params.at(key) <= range.hi);
        }
      }
    }
  }
}

TEST_CASE("targets follow the documented parameter mapping") {
  const std::size_t T = 100;
  CHECK(target_values(ConceptKind::LevelShift, {{"delta", 2.0}, {"tau", 30.0}, {"noise_std", 0.1}}, T) ==
        std::vector<double>{2.0, 0.3});
  CHECK(target_values(ConceptKind::VarianceShift, {{"sigma1", 2.0}, {"sigma2", 3.0}, {"tau", 50.0}}, T) ==
        std::vector<double>{0.5, 1.5});
  const auto mean_freq = target_values(
      ConceptKind::Spectral,
      {{"k", 2.0}, {"freq_1", 0.1}, {"amp_1", 1.0}, {"phase_1", 0.0}, {"freq_2", 0.3}, {"amp_2", 1.0}, {"phase_2", 0.0},
       {"noise_std", 0.0}},
      T);
  CHECK(mean_freq[0] == doctest::Approx(0.2));
  CHECK(target_names(ConceptKind::AR1) == std::vector<std::string>{"phi"});
}

TEST_CASE("invalid specs and parameters are rejected") {
  auto spec = ConceptSpec::defaults(ConceptKind::AR1, 64);
  spec.ranges["phi"] = {-0.5, 1.0};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = ConceptSpec::defaults(ConceptKind::AR1, 64);
  spec.ranges.erase("sigma");
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = ConceptSpec::defaults(ConceptKind::AR1, 1);
  CHECK_THROWS_AS(generate_dataset(spec, 10, 0), ValidationError);

  const auto ar = raw_spec(ConceptKind::AR1, 64);
  CHECK_THROWS_AS(generate_series(ar, {{"phi", 1.0}, {"sigma", 1.0}}, 0), ValidationError);
  CHECK_THROWS_AS(generate_series(ar, {{"phi", 0.5}, {"sigma", -1.0}}, 0), ValidationError);
  CHECK_THROWS_AS(generate_series(ar, {{"phi", 0.5}}, 0), ValidationError);
  CHECK_THROWS_AS(generate_series(ar, {{"phi", 0.5}, {"sigma", 1.0}, {"extra", 1.0}}, 0), ValidationError);
  const auto ls = raw_spec(ConceptKind::LevelShift, 64);
  CHECK_THROWS_AS(generate_series(ls, {{"delta", 1.0}, {"tau", 64.0}, {"noise_std", 0.0}}, 0), ValidationError);
  CHECK_THROWS_AS(generate_series(ls, {{"delta", 1.0}, {"tau", 2.5}, {"noise_std", 0.0}}, 0), ValidationError);
  const auto vs = raw_spec(ConceptKind::VarianceShift, 64);
  CHECK_THROWS_AS(generate_series(vs, {{"sigma1", 0.0}, {"sigma2", 1.0}, {"tau", 10.0}}, 0), ValidationError);
  CHECK_THROWS_AS(parse_concept_kind("Sawtooth"), ValidationError);
  CHECK(parse_concept_kind("levelshift") == ConceptKind::LevelShift);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = scratch_dir("roundtrip");
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::Spectral, 48), 25, 31);
  save_dataset(ds, dir, Provenance{"abc123", 31});
  const auto back = load_dataset(dir);
  CHECK(back.size() == 25);
  CHECK(back.length() == 48);
  CHECK(back.is_train == ds.is_train);
  CHECK(back.target_names == ds.target_names);
  CHECK(back.targets == ds.targets);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.series[i].params == ds.series[i].params);
    CHECK(back.series[i].seed == ds.series[i].seed);
    for (std::size_t t = 0; t < 48; ++t) CHECK(back.series[i].values[t] == static_cast<float>(ds.series[i].values[t]));
  }
  CHECK(fs::file_size(dir / "series.f32") == 25 * 48 * 4);
  const auto meta = io::read_json(dir / "meta.json");
  CHECK(meta.at("provenance").at("config_hash") == "abc123");
  CHECK(meta.at("master_seed") == 31);
  CHECK(io::read_file(dir / "targets.csv").rfind("# config_hash=abc123 seed=31\n", 0) == 0);

  fs::resize_file(dir / "series.f32", 100);
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  fs::remove_all(dir);
}
