#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/toy_encoder.hpp"
#include "tsprobe/tsem.hpp"

using namespace tsprobe;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

ToyEncoderConfig small_toy() {
  ToyEncoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  return cfg;
}

double population_variance(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); }

Eigen::MatrixXd val_rows(const Eigen::MatrixXd& m, const std::vector<bool>& is_train) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < is_train.size(); ++i)
    if (!is_train[i]) idx.push_back(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  return out;
}

}  // namespace

TEST_CASE("exact line is recovered without regularization") {
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 0, 1, 2;
  y << 0, 2, 4;
  for (bool standardize : {false, true}) {
    const auto p = fit_probe(x, y, ProbeConfig{0.0, standardize});
    CHECK(p.raw_weights()(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(p.raw_bias()(0)) <= 1e-12);
    CHECK(eval_probe(p, x, y)(0) <= 1e-24);
  }
}

TEST_CASE("constant targets give zero weights and the constant as bias") {
  const auto x = random_matrix(50, 4, 1);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(50, 1, 3.5);
  const auto p = fit_probe(x, y, ProbeConfig{1e-3, true});
  CHECK(p.weights.norm() <= 1e-8);
  CHECK(p.bias(0) == 3.5);
  CHECK(eval_probe(p, x, y)(0) <= 1e-20);
}

TEST_CASE("closed form matches the gradient-descent oracle on random instances") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(1000 + trial);
    const auto n = static_cast<Eigen::Index>(rng.uniform_int(30, 200));
    const auto d = static_cast<Eigen::Index>(rng.uniform_int(1, 6));
    const auto k = static_cast<Eigen::Index>(rng.uniform_int(1, 3));
    const double lambda = rng.uniform(1e-3, 5.0);
    const bool standardize = trial % 2 == 0;
    Eigen::MatrixXd x = random_matrix(n, d, 2000 + trial);
    x.col(0) *= 7.0;
    const Eigen::MatrixXd y = x * random_matrix(d, k, 3000 + trial) + 0.3 * random_matrix(n, k, 4000 + trial);
    const auto p = fit_probe(x, y, ProbeConfig{lambda, standardize});
    const auto w = oracle::ridge_gradient_descent(x, y, lambda, standardize);
    CHECK((p.weights - w).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("solution satisfies the normal equations") {
  const auto x = random_matrix(200, 5, 5);
  const Eigen::MatrixXd y = random_matrix(200, 2, 6);
  const double lambda = 0.5;
  const auto p = fit_probe(x, y, ProbeConfig{lambda, true});
  const Eigen::MatrixXd xs = ((x.rowwise() - p.feature_mean).array().rowwise() / p.feature_std.array()).matrix();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
  Eigen::MatrixXd lhs = xs.transpose() * xs;
  lhs.diagonal().array() += lambda;
  const Eigen::MatrixXd rhs = xs.transpose() * yc;
  CHECK((lhs * p.weights - rhs).norm() / rhs.norm() <= 1e-10);
}

TEST_CASE("training error grows and weight norm shrinks with lambda") {
  const auto x = random_matrix(80, 6, 7);
  const Eigen::MatrixXd y = x * random_matrix(6, 1, 8) + random_matrix(80, 1, 9);
  double prev_mse = -1.0, prev_norm = 1e300;
  for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0}) {
    const auto p = fit_probe(x, y, ProbeConfig{lambda, true});
    const double mse = eval_probe(p, x, y)(0);
    CHECK(mse >= prev_mse - 1e-12);
    CHECK(p.weights.norm() <= prev_norm + 1e-12);
    prev_mse = mse;
    prev_norm = p.weights.norm();
  }
}

TEST_CASE("standardized probes are invariant to feature scaling") {
  const auto x = random_matrix(60, 3, 10);
  const Eigen::MatrixXd y = random_matrix(60, 2, 11);
  Eigen::MatrixXd scaled = x;
  scaled.col(0) *= 1e3;
  scaled.col(2) *= 1e-2;
  const auto a = fit_probe(x, y, ProbeConfig{0.1, true});
  const auto b = fit_probe(scaled, y, ProbeConfig{0.1, true});
  CHECK((a.predict(x) - b.predict(scaled)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("evaluation matches a direct loop and the variance identity") {
  const auto x = random_matrix(40, 3, 12);
  const Eigen::MatrixXd y = random_matrix(40, 2, 13);
  const auto p = fit_probe(x, y, ProbeConfig{0.2, true});
  const auto mse = eval_probe(p, x, y);
  const auto pred = p.predict(x);
  for (Eigen::Index c = 0; c < 2; ++c) CHECK(std::abs(mse(c) - oracle::mse_loop(y, pred, c)) <= 1e-10);

  Probe mean_only = p;
  mean_only.weights.setZero();
  const auto var = eval_probe(mean_only, x, y);
  for (Eigen::Index c = 0; c < 2; ++c) CHECK(std::abs(var(c) - population_variance(y.col(c))) <= 1e-12);

  CHECK_THROWS_AS(eval_probe(p, x, y.leftCols(1)), ValidationError);
}

TEST_CASE("identity-provider Trend probe reaches the raw OLS noise floor") {
  auto spec = ConceptSpec::defaults(ConceptKind::Trend, 256);
  spec.normalization = Normalization::None;
  const auto ds = generate_dataset(spec, 500, 77);
  IdentityProvider provider;
  const auto pooled = embed_pooled(provider, ds.values(), Pooling::Mean);
  const auto sweep = layerwise_sweep(ds, pooled, ProbeConfig{1e-6, true});

  double floor = 0.0;
  const auto val = ds.val_indices();
  for (auto i : val) {
    const double slope = oracle::ols_line(ds.series[i].values).first;
    floor += (slope - ds.targets(static_cast<Eigen::Index>(i), 0)) * (slope - ds.targets(static_cast<Eigen::Index>(i), 0));
  }
  floor /= static_cast<double>(val.size());
  MESSAGE("layer-0 val MSE " << sweep.report.layers[0].val_mse(0) << ", OLS floor " << floor);
  CHECK(sweep.report.layers[0].val_mse(0) <= 1.05 * floor);
}

TEST_CASE("shuffled targets stay at chance level on every layer") {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::AR1, 64), 500, 5);
  ToyEncoder toy(small_toy());
  IdentityProvider identity;
  Eigen::MatrixXd shuffled = ds.targets;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(shuffled.rows()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
  Rng rng(6);
  shuffle(std::span<Eigen::Index>(perm), rng);
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = ds.targets.row(perm[i]);
  const double var = population_variance(val_rows(shuffled, ds.is_train).col(0));

  for (const ActivationProvider* p : std::vector<const ActivationProvider*>{&toy, &identity}) {
    const auto pooled = embed_pooled(*p, ds.values(), Pooling::Mean);
    const auto sweep = layerwise_sweep(shuffled, ds.target_names, ds.is_train, pooled, ProbeConfig{});
    CHECK(sweep.report.layers.size() == p->num_layers());
    for (const auto& layer : sweep.report.layers) CHECK(layer.val_mse(0) >= 0.9 * var);
  }
}

TEST_CASE("sweep report has one row per layer and records the split") {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::LevelShift, 64), 50, 8);
  ToyEncoder toy(small_toy());
  const auto sweep = layerwise_sweep(ds, embed_pooled(toy, ds.values(), Pooling::Mean), ProbeConfig{});
  CHECK(sweep.report.layers.size() == 3);
  CHECK(sweep.probes.size() == 3);
  CHECK(sweep.report.n_train == 40);
  CHECK(sweep.report.n_val == 10);
  CHECK(sweep.report.layers[1].val_mse.size() == 2);
  CHECK(sweep.probes[2].layer == 2);
  CHECK(sweep.probes[0].provider == "toy");
}

TEST_CASE("analyses are agnostic to the provider") {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::Spectral, 64), 60, 9);
  ToyEncoder toy(small_toy());
  IdentityProvider identity;
  const auto acts = encode_batch(toy, ds.values());
  const auto dir = fs::temp_directory_path() / "tsprobe_test_probe_file";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_embeddings(acts, dir / "Spectral.tsem", EmbeddingMeta{"toy", "mean", "Spectral", 9});
  const auto loaded = load_embeddings(dir / "Spectral.tsem");
  fs::remove_all(dir);

  const auto from_toy = layerwise_sweep(ds, pool_all(acts, Pooling::Mean), ProbeConfig{});
  const auto from_file = layerwise_sweep(ds, pool_all(loaded.series, Pooling::Mean), ProbeConfig{});
  const auto from_identity = layerwise_sweep(ds, embed_pooled(identity, ds.values(), Pooling::Mean), ProbeConfig{});
  REQUIRE(from_file.report.layers.size() == from_toy.report.layers.size());
  CHECK(from_identity.report.layers.size() == 2);
  for (std::size_t l = 0; l < from_toy.report.layers.size(); ++l) {
    const double a = from_toy.report.layers[l].val_total(), b = from_file.report.layers[l].val_total();
    CHECK(std::abs(a - b) <= 1e-3 * std::max(1.0, a));
  }
}

TEST_CASE("transfer evaluates frozen probes on composite embeddings") {
  const auto d1 = generate_dataset(ConceptSpec::defaults(ConceptKind::Trend, 64), 100, 10);
  const auto d2 = generate_dataset(ConceptSpec::defaults(ConceptKind::LevelShift, 64), 100, 11);
  IdentityProvider provider;
  const auto e1 = embed_pooled(provider, d1.values(), Pooling::Mean);
  const auto e2 = embed_pooled(provider, d2.values(), Pooling::Mean);
  const auto s1 = layerwise_sweep(d1, e1, ProbeConfig{});
  const auto s2 = layerwise_sweep(d2, e2, ProbeConfig{});
  const auto frozen1 = s1.probes, frozen2 = s2.probes;

  SUBCASE("a composite identical to the first source reproduces its validation error") {
    auto self = compose_functional(d1.values(), SeriesMatrix::Zero(100, 64), FunctionalConfig{});
    self.targets1 = d1.targets;
    self.targets2 = d2.targets;
    self.target_names1 = d1.target_names;
    self.target_names2 = d2.target_names;
    self.is_train = d1.is_train;
    const auto r = probe_transfer(s1.probes, s2.probes, embed_pooled(provider, self.composites, Pooling::Mean), self);
    for (std::size_t l = 0; l < 2; ++l) CHECK(r.c1_mse[l] == s1.report.layers[l].val_mse);
  }

  SUBCASE("linear provider: composite predictions split into the two sources") {
    const auto c = compose_functional(d1, d2, FunctionalConfig{});
    const auto ec = embed_pooled(provider, c.composites, Pooling::Mean);
    const auto r = probe_transfer(s1.probes, s2.probes, ec, c);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& p = s1.probes[l];
      const Eigen::MatrixXd pred =
          p.predict(val_rows(e1.layers[l], c.is_train)) + val_rows(e2.layers[l], c.is_train) * p.raw_weights();
      const auto truth = val_rows(c.targets1, c.is_train);
      CHECK(std::abs(r.c1_mse[l](0) - oracle::mse_loop(truth, pred, 0)) <= 1e-8 * std::max(1.0, r.c1_mse[l](0)));
    }
    CHECK(r.c2_mse.size() == 2);
    CHECK(r.c2_targets == d2.target_names);
  }

  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(s1.probes[l].weights == frozen1[l].weights);
    CHECK(s2.probes[l].bias == frozen2[l].bias);
  }
}

TEST_CASE("transfer refuses probes from another provider or pooling") {
  const auto d1 = generate_dataset(ConceptSpec::defaults(ConceptKind::AR1, 64), 40, 12);
  const auto d2 = generate_dataset(ConceptSpec::defaults(ConceptKind::Trend, 64), 40, 13);
  ToyEncoderConfig cfg = small_toy();
  cfg.n_layers = 1;
  ToyEncoder toy(cfg);
  IdentityProvider identity;
  const auto s1 = layerwise_sweep(d1, embed_pooled(identity, d1.values(), Pooling::Mean), ProbeConfig{});
  const auto s2 = layerwise_sweep(d2, embed_pooled(identity, d2.values(), Pooling::Mean), ProbeConfig{});
  const auto c = compose_functional(d1, d2, FunctionalConfig{});
  CHECK_THROWS_AS(probe_transfer(s1.probes, s2.probes, embed_pooled(toy, c.composites, Pooling::Mean), c),
                  ValidationError);
  CHECK_THROWS_AS(probe_transfer(s1.probes, s2.probes, embed_pooled(identity, c.composites, Pooling::Max), c),
                  ValidationError);
}

TEST_CASE("suffix cropping keeps the trailing samples") {
  SeriesMatrix m(2, 16);
  for (Eigen::Index t = 0; t < 16; ++t) {
    m(0, t) = static_cast<double>(t);
    m(1, t) = t >= 10 ? 1.0 : 0.0;  // level shift at tau = 10
  }
  const auto quarter = crop_suffix(m, 0.25);
  CHECK(quarter.cols() == 4);
  CHECK(quarter(0, 0) == 12.0);
  CHECK(quarter(0, 3) == 15.0);
  CHECK(quarter.row(1).minCoeff() == 1.0);
  const auto half = crop_suffix(m, 0.5);
  CHECK(half(1, 1) == 0.0);
  CHECK(half(1, 2) == 1.0);
  CHECK(crop_suffix(m, 1.0) == m);
  CHECK_THROWS_AS(crop_suffix(m, 0.0), ValidationError);
  CHECK_THROWS_AS(crop_suffix(m, 0.05), ValidationError);
}

TEST_CASE("context ablation at full length reproduces the sweep") {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::LevelShift, 64), 60, 14);
  ToyEncoder toy(small_toy());
  const auto sweep = layerwise_sweep(ds, embed_pooled(toy, ds.values(), Pooling::Mean), ProbeConfig{});
  const auto grid = context_ablation(ds, toy, sweep.probes, kDefaultFractions, Pooling::Mean);
  CHECK(grid.total_mse.rows() == 3);
  CHECK(grid.total_mse.cols() == 4);
  CHECK(grid.per_target.size() == 2);
  for (Eigen::Index l = 0; l < 3; ++l) {
    CHECK(grid.total_mse(l, 3) == sweep.report.layers[static_cast<std::size_t>(l)].val_total());
    CHECK(grid.per_target[1](l, 3) == sweep.report.layers[static_cast<std::size_t>(l)].val_mse(1));
  }
  CHECK_THROWS_AS(context_ablation(ds, toy, sweep.probes, {0.1}, Pooling::Mean), ValidationError);
  CHECK_THROWS_AS(context_ablation(ds, toy, sweep.probes, {0.5, 0.25}, Pooling::Mean), ValidationError);
}

TEST_CASE("probe files round trip") {
  const auto x = random_matrix(30, 4, 15);
  const Eigen::MatrixXd y = random_matrix(30, 2, 16);
  auto p = fit_probe(x, y, ProbeConfig{0.3, true});
  p.layer = 3;
  p.target_names = {"a", "b"};
  p.provider = "toy";
  p.pooling = Pooling::Last;
  const auto path = fs::temp_directory_path() / "tsprobe_test_probe.probe";
  save_probe(p, path);
  const auto q = load_probe(path);
  fs::remove(path);
  CHECK(q.layer == 3);
  CHECK(q.target_names == p.target_names);
  CHECK(q.provider == "toy");
  CHECK(q.pooling == Pooling::Last);
  CHECK(q.ridge_lambda == 0.3);
  CHECK((q.weights - p.weights).cwiseAbs().maxCoeff() <= 1e-6 * p.weights.cwiseAbs().maxCoeff());
  CHECK((q.predict(x) - p.predict(x)).cwiseAbs().maxCoeff() <= 1e-5);
}
