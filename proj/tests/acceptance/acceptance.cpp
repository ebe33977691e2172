// Acceptance checks: one PASS/FAIL line per primary criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include <Eigen/QR>

#include "oracles.hpp"
#include "tsprobe/compose.hpp"
#include "tsprobe/config.hpp"
#include "tsprobe/dimred.hpp"
#include "tsprobe/pipeline.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/simgeo.hpp"
#include "tsprobe/toy_encoder.hpp"

using namespace tsprobe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto start = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail << " [exception: " << e.what() << "]";
  }
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  if (limit_s > 0.0 && elapsed >= limit_s) {
    c.ok = false;
    c.detail << " [runtime " << elapsed << " s exceeds " << limit_s << " s]";
  }
  if (!c.ok) ++failures;
  std::cout << (c.ok ? "PASS " : "FAIL ") << name << " (" << elapsed << " s)" << c.detail.str() << std::endl;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

ConceptSpec raw_spec(ConceptKind kind, std::size_t length) {
  auto spec = ConceptSpec::defaults(kind, length);
  spec.normalization = Normalization::None;
  return spec;
}

double population_variance(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().mean(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void generator_statistics(Check& c) {
  double acf_min = 1.0, acf_max = -1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = generate_series(raw_spec(ConceptKind::AR1, 4096), {{"phi", 0.8}, {"sigma", 1.0}}, seed);
    const double acf = oracle::sample_acf1(s.values);
    acf_min = std::min(acf_min, acf);
    acf_max = std::max(acf_max, acf);
  }
  c.require(acf_min >= 0.75 && acf_max <= 0.85, "AR1 lag-1 ACF in [0.75, 0.85]");
  c.detail << " acf=[" << acf_min << ", " << acf_max << "]";

  double worst = 0.0;
  for (std::uint64_t seed : {10ull, 20ull, 30ull}) {
    const auto s = generate_series(raw_spec(ConceptKind::VarianceShift, 2048),
                                   {{"sigma1", 0.7}, {"sigma2", 2.1}, {"tau", 1024.0}}, seed);
    const double ratio = oracle::population_std(s.values, 1024, 2048) / oracle::population_std(s.values, 0, 1024);
    worst = std::max(worst, std::abs(ratio / 3.0 - 1.0));
  }
  c.require(worst < 0.10, "VarianceShift ratio within 10%");
  c.detail << " ratio_err=" << worst;

  const auto ds = generate_dataset(raw_spec(ConceptKind::Trend, 256), 500, 2024);
  const double T = 256.0;
  std::size_t inside = 0;
  double z_sum = 0.0;
  for (const auto& s : ds.series) {
    const double se = s.params.at("noise_std") * std::sqrt(12.0 / (T * T * T - T));
    const double err = oracle::ols_line(s.values).first - s.params.at("beta");
    inside += std::abs(err) < 3.0 * se;
    z_sum += err / se;
  }
  c.require(inside >= 495 && std::abs(z_sum / 500.0) < 3.0 / std::sqrt(500.0), "Trend slopes within 3 SE");
  c.detail << " trend_inside=" << inside << "/500";
}

void composition_exactness(Check& c) {
  SeriesMatrix t1(1000, 128), t2(1000, 128);
  Rng rng(5);
  for (Eigen::Index i = 0; i < 1000; ++i)
    for (Eigen::Index t = 0; t < 128; ++t) {
      t1(i, t) = 100.0 * rng.normal();
      t2(i, t) = 0.01 * rng.normal() + 3.0;
    }
  const auto comp = compose_structured(t1, t2, StructuredConfig{}, 9);
  std::size_t continuity = 0, branch = 0;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    const auto& bp = comp.breakpoints[static_cast<std::size_t>(i)];
    const auto a = static_cast<Eigen::Index>(bp.a), b = static_cast<Eigen::Index>(bp.b);
    const double d1 = t1(i, a) - t2(i, a);
    const double d2 = t2(i, b) - t1(i, b) + d1;
    continuity += comp.composites(i, a) != t1(i, a);
    for (Eigen::Index t = 0; t < 128; ++t) {
      if (t == a) continue;
      const double expect = t < a ? t1(i, t) : t < b ? t2(i, t) + d1 : t1(i, t) + d2;
      branch += comp.composites(i, t) != expect;
    }
  }
  c.require(continuity == 0, "X[a] == T1[a]");
  c.require(branch == 0, "three-branch definition");

  Breakpoints bp{2, 5, 0.0, 0.0};
  const auto zero = interleave(std::vector<double>(8, 0.0), std::vector<double>(8, 1.0), bp);
  c.require(zero == std::vector<double>(8, 0.0), "constant sources give zeros");
}

void probe_correctness(Check& c) {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(1000 + trial);
    const auto n = static_cast<Eigen::Index>(rng.uniform_int(30, 200));
    const auto d = static_cast<Eigen::Index>(rng.uniform_int(1, 6));
    const double lambda = rng.uniform(1e-3, 5.0);
    const auto x = random_matrix(n, d, 2000 + trial);
    const Eigen::MatrixXd y = x * random_matrix(d, 2, 3000 + trial) + 0.3 * random_matrix(n, 2, 4000 + trial);
    const bool standardize = trial % 2 == 0;
    const auto p = fit_probe(x, y, ProbeConfig{lambda, standardize});
    worst = std::max(worst, (p.weights - oracle::ridge_gradient_descent(x, y, lambda, standardize)).cwiseAbs().maxCoeff());
  }
  c.require(worst <= 1e-5, "ridge vs gradient descent within 1e-5");
  c.detail << " gd_err=" << worst;

  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::AR1, 64), 500, 5);
  Eigen::MatrixXd shuffled = ds.targets;
  std::vector<Eigen::Index> perm(500);
  for (std::size_t i = 0; i < 500; ++i) perm[i] = static_cast<Eigen::Index>(i);
  Rng rng(6);
  shuffle(std::span<Eigen::Index>(perm), rng);
  for (std::size_t i = 0; i < 500; ++i) shuffled.row(static_cast<Eigen::Index>(i)) = ds.targets.row(perm[i]);
  std::vector<double> val_targets;
  for (auto i : ds.val_indices()) val_targets.push_back(shuffled(static_cast<Eigen::Index>(i), 0));
  const double var = population_variance(Eigen::Map<Eigen::VectorXd>(val_targets.data(), static_cast<Eigen::Index>(val_targets.size())));
  ToyEncoderConfig tc;
  tc.d_model = 32;
  tc.n_layers = 3;
  ToyEncoder toy(tc);
  const auto sweep = layerwise_sweep(shuffled, ds.target_names, ds.is_train, embed_pooled(toy, ds.values(), Pooling::Mean), ProbeConfig{});
  double min_ratio = 1e300;
  for (const auto& l : sweep.report.layers) min_ratio = std::min(min_ratio, l.val_mse(0) / var);
  c.require(min_ratio >= 0.9, "permutation control >= 0.9 x variance");
  c.detail << " perm_ratio=" << min_ratio;

  const auto trend = generate_dataset(raw_spec(ConceptKind::Trend, 256), 500, 77);
  IdentityProvider identity;
  const auto tsweep = layerwise_sweep(trend, embed_pooled(identity, trend.values(), Pooling::Mean), ProbeConfig{1e-6, true});
  double floor = 0.0;
  const auto val = trend.val_indices();
  for (auto i : val) {
    const double e = oracle::ols_line(trend.series[i].values).first - trend.targets(static_cast<Eigen::Index>(i), 0);
    floor += e * e;
  }
  floor /= static_cast<double>(val.size());
  const double ratio = tsweep.report.layers[0].val_mse(0) / floor;
  c.require(ratio <= 1.05, "identity Trend probe <= 1.05 x OLS floor");
  c.detail << " floor_ratio=" << ratio;
}

void cka_properties(Check& c) {
  double self = 0.0, orth = 0.0, gram = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = random_matrix(50, 8, s);
    const auto y = random_matrix(50, 8, 100 + s);
    self = std::max(self, std::abs(cka(x, x) - 1.0));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(8, 8, 200 + s));
    const Eigen::MatrixXd q = qr.householderQ();
    orth = std::max(orth, std::abs(cka(x, x * q) - 1.0));
    gram = std::max(gram, std::abs(cka(x, y) - oracle::cka_gram(x, y)));
  }
  Eigen::MatrixXd a(3, 2), b(3, 2);
  a << 1, 0, 0, 1, 1, 1;
  b << 2, 1, 0, 3, -1, 1;
  gram = std::max(gram, std::abs(cka(a, b) - oracle::cka_gram(a, b)));
  c.require(self <= 1e-10, "self-similarity");
  c.require(orth <= 1e-8, "orthogonal invariance");
  c.require(gram <= 1e-8, "Gram oracle");
  c.detail << " self=" << self << " orth=" << orth << " gram=" << gram;
}

void linearity(Check& c) {
  // Un-normalized sources keep the layer-0 mean away from zero.
  PairSpec pair{raw_spec(ConceptKind::Trend, 256), raw_spec(ConceptKind::LevelShift, 256), FunctionalConfig{}, 31, 32, 200};
  const std::vector<std::size_t> lengths = {32, 64, 128, 256};
  IdentityProvider identity;
  const auto lin = temporal_alignment(pair, lengths, identity, Pooling::Mean);
  const double dev = (lin.cosine_mean.array() - 1.0).abs().maxCoeff();
  c.require(dev <= 1e-6, "identity cosine = 1 at every layer and length");
  ToyEncoderConfig tc;
  tc.d_model = 32;
  tc.n_layers = 3;
  ToyEncoder toy(tc);
  const auto nonlin = temporal_alignment(pair, lengths, toy, Pooling::Mean);
  const double top = nonlin.cosine_mean.maxCoeff();
  c.require(top < 1.0, "toy encoder cosine < 1");
  c.detail << " identity_dev=" << dev << " toy_max=" << top;
}

void context_ablation_check(Check& c) {
  const auto ds = generate_dataset(ConceptSpec::defaults(ConceptKind::LevelShift, 256), 300, 41);
  ToyEncoderConfig tc;
  tc.d_model = 32;
  tc.n_layers = 3;
  ToyEncoder toy(tc);
  const auto sweep = layerwise_sweep(ds, embed_pooled(toy, ds.values(), Pooling::Mean), ProbeConfig{});
  const auto grid = context_ablation(ds, toy, sweep.probes, {0.25, 0.5, 0.75, 1.0}, Pooling::Mean);
  c.require(grid.total_mse.rows() == 4 && grid.total_mse.cols() == 4, "grid shape (L+1) x 4");
  bool same = true;
  for (std::size_t l = 0; l < sweep.report.layers.size(); ++l) {
    same = same && grid.total_mse(static_cast<Eigen::Index>(l), 3) == sweep.report.layers[l].val_total();
    for (std::size_t t = 0; t < grid.per_target.size(); ++t)
      same = same && grid.per_target[t](static_cast<Eigen::Index>(l), 3) == sweep.report.layers[l].val_mse(static_cast<Eigen::Index>(t));
  }
  c.require(same, "fraction 1.0 bitwise equal to the full-context report");
}

void dimred_check(Check& c) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 1, 1, 2, 2, 0, 1;
  const auto p = pca(x, 2);
  const auto e = oracle::symmetric_eigen_2x2(0.6875, 0.5, 0.5);
  const double pca_err = std::max({std::abs(p.explained_variance(0) - e.lambda1), std::abs(p.explained_variance(1) - e.lambda2),
                                   std::abs(std::abs(p.components.col(0).dot(e.v1)) - 1.0),
                                   std::abs(std::abs(p.components.col(1).dot(e.v2)) - 1.0)});
  c.require(pca_err <= 1e-10, "PCA 2x2 eigen oracle");

  const auto data = random_matrix(150, 8, 51);
  const auto aff = tsne_affinities(data, 20.0);
  const double row_err = (aff.conditional.rowwise().sum().array() - 1.0).abs().maxCoeff();
  c.require(row_err <= 1e-8, "t-SNE P rows sum to 1");
  TsneOptions opt;
  opt.perplexity = 20.0;
  opt.iterations = 500;
  opt.seed = 3;
  const auto t = tsne(data, opt);
  std::size_t increases = 0;
  for (std::size_t it = opt.exaggeration_iters + 1; it < t.objective_trace.size(); ++it)
    increases += t.objective_trace[it] > t.objective_trace[it - 1];
  c.require(increases == 0, "post-exaggeration KL non-increasing");

  const std::size_t k = 15;
  const auto g = umap_graph(data, k);
  double residual = 0.0;
  for (const auto& m : g.memberships) {
    double s = 0.0;
    for (double w : m) s += w;
    residual = std::max(residual, std::abs(s - std::log2(static_cast<double>(k))));
  }
  c.require(residual < 1e-4, "UMAP smooth-kNN residual");
  c.detail << " pca_err=" << pca_err << " row_err=" << row_err << " kl_increases=" << increases
           << " knn_residual=" << residual;
}

void pipeline_determinism(Check& c) {
  const fs::path src(TSPROBE_SOURCE_DIR);
  const auto work = fs::temp_directory_path() / "tsprobe_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const auto a = load_config(src / "configs" / "example.json", {{"output_dir", (work / "example_a").string()}});
  const auto b = load_config(src / "configs" / "example.json", {{"output_dir", (work / "example_b").string()}});
  run_pipeline(a);
  run_pipeline(b);
  std::size_t csvs = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "example_a")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    ++csvs;
    const auto other = work / "example_b" / fs::relative(e.path(), work / "example_a");
    differing += !fs::exists(other) || slurp(e.path()) != slurp(other);
  }
  c.require(csvs > 0 && differing == 0, "example CSVs byte-identical");
  c.detail << " csv_files=" << csvs << " differing=" << differing;

  const auto full = load_config(src / "configs" / "full.json", {{"output_dir", (work / "full").string()}});
  c.require(full.concepts.size() == 7 && full.n_series == 1000 && full.length == 256 &&
                full.provider.kind == ProviderKind::Toy,
            "full config is 7 concepts, N=1000, T=256, toy encoder");
  const auto start = Clock::now();
  const auto summary = run_pipeline(full);
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  c.require(elapsed < 600.0, "full pipeline under 10 minutes");
  c.require(summary["totals"]["artifact_classes"] == 7, "full pipeline writes all artifact classes");
  c.detail << " full_run=" << elapsed << "s";
  fs::remove_all(work);
}

}  // namespace

int main() {
  criterion("generator statistics", 10.0, generator_statistics);
  criterion("composition exactness", 5.0, composition_exactness);
  criterion("probe correctness", 60.0, probe_correctness);
  criterion("cka properties", 0.0, cka_properties);
  criterion("linearity end-to-end", 0.0, linearity);
  criterion("context ablation", 0.0, context_ablation_check);
  criterion("dimensionality reduction", 0.0, dimred_check);
  criterion("pipeline determinism and full-run budget", 0.0, pipeline_determinism);
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
