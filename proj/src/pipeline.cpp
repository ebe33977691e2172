#include "tsprobe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tsprobe/io_util.hpp"
#include "tsprobe/serialize.hpp"
#include "tsprobe/simgeo.hpp"
#include "tsprobe/tsem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe {

std::uint64_t concept_seed(const ExperimentConfig& cfg, std::size_t concept_index) {
  return derive_seed(cfg.master_seed, kConceptStream + concept_index);
}

std::unique_ptr<ActivationProvider> make_provider(const ProviderConfig& cfg) {
  switch (cfg.kind) {
    case ProviderKind::Toy: return std::make_unique<ToyEncoder>(cfg.toy);
    case ProviderKind::Identity: return std::make_unique<IdentityProvider>();
    case ProviderKind::File: break;
  }
  throw ValidationError("a file provider only supplies stored embeddings and cannot encode new series");
}

namespace {

class Run {
 public:
  Run(const ExperimentConfig& cfg, const fs::path& root, std::ostream* log)
      : cfg_(cfg), root_(root), log_(log), provenance_{cfg.hash, cfg.master_seed} {}

  json execute();

 private:
  void stage(const std::string& name) {
    stages_.push_back(name);
    if (log_) *log_ << "[tsprobe] " << name << '\n' << std::flush;
  }

  void add_artifact(const std::string& cls, const fs::path& path) {
    artifacts_[cls].push_back(fs::relative(path, root_).generic_string());
  }

  io::CsvWriter csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    io::CsvWriter w(path);
    w.comment(provenance_comment(provenance_));
    return w;
  }

  void generate();
  void compose();
  void embed();
  void sweep();
  void cka_stage();
  void transfer();
  void ablation();
  void arithmetic();
  void alignment();
  void dimred();

  const ExperimentConfig& cfg_;
  fs::path root_;
  std::ostream* log_;
  Provenance provenance_;

  std::unique_ptr<ActivationProvider> provider_;
  std::vector<ConceptDataset> datasets_;
  std::vector<CompositeDataset> composites_;
  std::vector<PooledEmbeddings> pooled_;
  std::vector<PooledEmbeddings> composite_pooled_;
  std::vector<SweepResult> sweeps_;

  std::vector<std::string> stages_;
  std::vector<std::string> dataset_dirs_;
  std::vector<std::string> composite_dirs_;
  std::map<std::string, std::vector<std::string>> artifacts_;
  json projections_ = json::array();
  json notes_ = json::array();
};

void Run::generate() {
  stage("generate");
  datasets_.resize(cfg_.concepts.size());
  for (std::size_t i = 0; i < cfg_.concepts.size(); ++i) {
    const auto& c = cfg_.concepts[i];
    datasets_[i] = generate_dataset(c.spec, cfg_.n_series, concept_seed(cfg_, i));
    const auto dir = root_ / "datasets" / c.name;
    fs::create_directories(dir);
    save_dataset(datasets_[i], dir, provenance_);
    dataset_dirs_.push_back(fs::relative(dir, root_).generic_string());
  }
}

void Run::compose() {
  if (cfg_.compositions.empty()) return;
  stage("compose");
  for (std::size_t k = 0; k < cfg_.compositions.size(); ++k) {
    const auto& pair = cfg_.compositions[k];
    const auto& ds1 = datasets_[static_cast<std::size_t>(cfg_.find_concept(pair.c1) - cfg_.concepts.data())];
    const auto& ds2 = datasets_[static_cast<std::size_t>(cfg_.find_concept(pair.c2) - cfg_.concepts.data())];
    composites_.push_back(pair.mode == CompositionMode::Structured
                              ? compose_structured(ds1, ds2, pair.structured,
                                                   derive_seed(cfg_.master_seed, kCompositionStream + k))
                              : compose_functional(ds1, ds2, pair.functional));
    const auto dir = root_ / "composites" / pair.label();
    fs::create_directories(dir);
    save_composite(composites_.back(), dir, provenance_);
    composite_dirs_.push_back(fs::relative(dir, root_).generic_string());
  }
}

void Run::embed() {
  stage("embed");
  pooled_.resize(datasets_.size());
  if (cfg_.provider.kind == ProviderKind::File) {
    for (std::size_t i = 0; i < datasets_.size(); ++i) {
      const auto path = cfg_.provider.directory / (cfg_.concepts[i].name + ".tsem");
      const auto loaded = load_embeddings(path);
      if (loaded.series.size() != datasets_[i].size())
        throw ValidationError("'" + path.string() + "' holds " + std::to_string(loaded.series.size()) +
                              " series but concept '" + cfg_.concepts[i].name + "' has " +
                              std::to_string(datasets_[i].size()));
      pooled_[i] = pool_all(loaded.series, cfg_.pooling);
      pooled_[i].provider = cfg_.provider.label();
    }
    return;
  }
  provider_ = make_provider(cfg_.provider);
  for (std::size_t i = 0; i < datasets_.size(); ++i)
    pooled_[i] = embed_pooled(*provider_, datasets_[i].values(), cfg_.pooling);
  if (cfg_.analyses.transfer || cfg_.analyses.arithmetic)
    for (const auto& c : composites_) composite_pooled_.push_back(embed_pooled(*provider_, c.composites, cfg_.pooling));
}

void Run::sweep() {
  stage("sweep");
  const auto path = root_ / "probe_report.csv";
  auto out = csv(path);
  out.header({"concept", "layer", "target", "split", "mse"});
  for (std::size_t i = 0; i < datasets_.size(); ++i) {
    sweeps_.push_back(layerwise_sweep(datasets_[i], pooled_[i], cfg_.probe));
    const auto& report = sweeps_.back().report;
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
      const auto& score = report.layers[l];
      for (const auto& [split, mse] : {std::pair{"train", &score.train_mse}, std::pair{"val", &score.val_mse}}) {
        for (std::size_t t = 0; t < report.target_names.size(); ++t)
          out.row(cfg_.concepts[i].name, l, report.target_names[t], split, (*mse)(static_cast<Eigen::Index>(t)));
        out.row(cfg_.concepts[i].name, l, "total", split, mse->sum());
      }
    }
  }
  add_artifact("probe_report", path);
}

void Run::cka_stage() {
  stage("cka");
  for (std::size_t i = 0; i < datasets_.size(); ++i) {
    const auto m = cka_layer_matrix(pooled_[i]);
    const auto path = root_ / "cka" / cfg_.concepts[i].name / "cka_matrix.csv";
    auto out = csv(path);
    out.header({"layer_i", "layer_j", "value"});
    for (Eigen::Index r = 0; r < m.values.rows(); ++r)
      for (Eigen::Index c = 0; c < m.values.cols(); ++c)
        out.row(m.layers[static_cast<std::size_t>(r)], m.layers[static_cast<std::size_t>(c)], m.values(r, c));
    add_artifact("cka_matrix", path);
  }
}

void Run::transfer() {
  stage("transfer");
  const auto path = root_ / "transfer.csv";
  auto out = csv(path);
  out.header({"pair", "layer", "source", "concept", "target", "mse"});
  for (std::size_t k = 0; k < composites_.size(); ++k) {
    const auto& pair = cfg_.compositions[k];
    const auto i1 = static_cast<std::size_t>(cfg_.find_concept(pair.c1) - cfg_.concepts.data());
    const auto i2 = static_cast<std::size_t>(cfg_.find_concept(pair.c2) - cfg_.concepts.data());
    const auto result = probe_transfer(sweeps_[i1].probes, sweeps_[i2].probes, composite_pooled_[k], composites_[k]);
    for (std::size_t l = 0; l < result.c1_mse.size(); ++l) {
      for (std::size_t t = 0; t < result.c1_targets.size(); ++t)
        out.row(pair.label(), l, "c1", pair.c1, result.c1_targets[t], result.c1_mse[l](static_cast<Eigen::Index>(t)));
      for (std::size_t t = 0; t < result.c2_targets.size(); ++t)
        out.row(pair.label(), l, "c2", pair.c2, result.c2_targets[t], result.c2_mse[l](static_cast<Eigen::Index>(t)));
    }
  }
  add_artifact("transfer", path);
}

void Run::ablation() {
  stage("ablation");
  const auto path = root_ / "context_grid.csv";
  auto out = csv(path);
  out.header({"concept", "layer", "fraction", "target", "mse"});
  for (std::size_t i = 0; i < datasets_.size(); ++i) {
    const auto grid =
        context_ablation(datasets_[i], *provider_, sweeps_[i].probes, cfg_.ablation_fractions, cfg_.pooling);
    for (Eigen::Index l = 0; l < grid.total_mse.rows(); ++l) {
      for (std::size_t f = 0; f < grid.fractions.size(); ++f) {
        const auto fi = static_cast<Eigen::Index>(f);
        for (std::size_t t = 0; t < grid.target_names.size(); ++t)
          out.row(cfg_.concepts[i].name, static_cast<std::size_t>(l), grid.fractions[f], grid.target_names[t],
                  grid.per_target[t](l, fi));
        out.row(cfg_.concepts[i].name, static_cast<std::size_t>(l), grid.fractions[f], "total", grid.total_mse(l, fi));
      }
    }
  }
  add_artifact("context_grid", path);
}

void Run::arithmetic() {
  stage("arithmetic");
  const auto path = root_ / "composition.csv";
  auto out = csv(path);
  out.header({"pair", "mode", "layer", "cosine_mean", "cosine_std", "reldist_mean", "reldist_std", "used", "skipped"});
  for (std::size_t k = 0; k < composites_.size(); ++k) {
    const auto& pair = cfg_.compositions[k];
    const auto [part1, part2] = mixed_parts(composites_[k]);
    const auto e1 = embed_pooled(*provider_, part1, cfg_.pooling);
    const auto e2 = embed_pooled(*provider_, part2, cfg_.pooling);
    const auto analysis = vector_arithmetic(e1, e2, composite_pooled_[k]);
    for (std::size_t l = 0; l < analysis.layers.size(); ++l) {
      const auto& s = analysis.layers[l];
      out.row(pair.label(), to_string(pair.mode), l, s.cosine_mean, s.cosine_std, s.reldist_mean, s.reldist_std, s.used,
              s.skipped);
      if (s.skipped > 0)
        notes_.push_back(pair.label() + " layer " + std::to_string(l) + ": " + std::to_string(s.skipped) +
                         " series skipped in vector arithmetic (zero-norm embedding)");
    }
  }
  add_artifact("composition", path);
}

void Run::alignment() {
  stage("alignment");
  const auto path = root_ / "alignment.csv";
  auto out = csv(path);
  out.header({"pair", "layer", "length", "cosine_mean"});
  for (const auto& pair : cfg_.compositions) {
    if (pair.mode != CompositionMode::Functional) {
      notes_.push_back(pair.label() + ": structured pair skipped in temporal alignment");
      continue;
    }
    const auto i1 = static_cast<std::size_t>(cfg_.find_concept(pair.c1) - cfg_.concepts.data());
    const auto i2 = static_cast<std::size_t>(cfg_.find_concept(pair.c2) - cfg_.concepts.data());
    PairSpec spec{cfg_.concepts[i1].spec, cfg_.concepts[i2].spec, pair.functional,
                  concept_seed(cfg_, i1),   concept_seed(cfg_, i2),   cfg_.n_series};
    const auto table = temporal_alignment(spec, cfg_.alignment_lengths, *provider_, cfg_.pooling);
    for (Eigen::Index l = 0; l < table.cosine_mean.rows(); ++l)
      for (std::size_t k = 0; k < table.lengths.size(); ++k)
        out.row(pair.label(), static_cast<std::size_t>(l), table.lengths[k],
                table.cosine_mean(l, static_cast<Eigen::Index>(k)));
  }
  add_artifact("alignment", path);
}

void Run::dimred() {
  stage("dimred");
  for (std::size_t ci = 0; ci < datasets_.size(); ++ci) {
    const auto& pooled = pooled_[ci];
    const auto& ds = datasets_[ci];
    const std::size_t n_layers = pooled.num_layers();
    std::vector<std::size_t> layers = cfg_.dimred.layers;
    if (layers.empty()) {
      layers = {0, n_layers / 2, n_layers - 1};
      layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    }
    for (auto l : layers)
      if (l >= n_layers)
        throw ValidationError("dimred.layers: layer " + std::to_string(l) + " does not exist (" +
                              std::to_string(n_layers) + " layers)");

    // Evenly spaced rows, coloured by the concept's first probe target.
    const std::size_t N = ds.size();
    const std::size_t points = std::min(N, cfg_.dimred.max_points);
    std::vector<std::size_t> ids(points);
    std::vector<double> color(points);
    for (std::size_t k = 0; k < points; ++k) {
      ids[k] = k * N / points;
      color[k] = ds.targets(static_cast<Eigen::Index>(ids[k]), 0);
    }
    const auto& color_target = ds.target_names.front();

    for (auto l : layers) {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(points), pooled.layers[l].cols());
      for (std::size_t k = 0; k < points; ++k)
        x.row(static_cast<Eigen::Index>(k)) = pooled.layers[l].row(static_cast<Eigen::Index>(ids[k]));
      const auto d = x.cols();

      for (const auto& method : cfg_.dimred.methods) {
        Projection2D proj;
        const auto seed = derive_seed(cfg_.master_seed, kDimredStream + ci * 1024 + l);
        if (method == "pca") {
          const auto k = static_cast<std::size_t>(std::min<Eigen::Index>({2, d, x.rows() - 1}));
          const auto res = pca(x, k);
          proj.method = "pca";
          proj.coords = Eigen::MatrixXd::Zero(x.rows(), 2);
          proj.coords.leftCols(static_cast<Eigen::Index>(k)) = res.projected;
          proj.hyperparameters = {{"components", static_cast<double>(k)}};
          for (Eigen::Index c = 0; c < res.explained_ratio.size(); ++c)
            proj.hyperparameters["explained_ratio_" + std::to_string(c)] = res.explained_ratio(c);
        } else if (method == "tsne") {
          auto opt = cfg_.dimred.tsne;
          opt.seed = seed;
          proj = tsne(x, opt);
        } else {
          auto opt = cfg_.dimred.umap;
          opt.seed = seed;
          proj = umap(x, opt);
        }
        const auto dir = root_ / "projections" / cfg_.concepts[ci].name / (method + "_layer" + std::to_string(l));
        fs::create_directories(dir);
        write_projection_csv(dir / "projection.csv", proj, color, ids, provenance_comment(provenance_));
        write_projection_svg(dir / "projection.svg", proj, color,
                             cfg_.concepts[ci].name + " " + method + " layer " + std::to_string(l) + ", colour = " +
                                 color_target + " (" + provenance_comment(provenance_) + ")");
        add_artifact("projection", dir / "projection.csv");
        add_artifact("projection", dir / "projection.svg");
        json entry = {{"concept", cfg_.concepts[ci].name},
                      {"method", method},
                      {"layer", l},
                      {"points", points},
                      {"color_by", color_target},
                      {"hyperparameters", proj.hyperparameters}};
        if (!proj.objective_trace.empty()) entry["final_objective"] = proj.objective_trace.back();
        projections_.push_back(entry);
      }
    }
  }
}

std::size_t count_files(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) ++n;
  return n;
}

json Run::execute() {
  const auto& a = cfg_.analyses;
  generate();
  compose();
  embed();
  if (a.sweep) sweep();
  if (a.cka) cka_stage();
  if (a.transfer) transfer();
  if (a.ablation) ablation();
  if (a.arithmetic) arithmetic();
  if (a.alignment) alignment();
  if (a.dimred) dimred();

  std::size_t probes = 0;
  for (const auto& s : sweeps_) probes += s.probes.size();
  json artifacts = json::object();
  for (const char* cls : kArtifactClasses)
    if (artifacts_.contains(cls)) artifacts[cls] = artifacts_[cls];

  json summary = {
      {"format", "tsprobe-run"},
      {"version", 1},
      {"provenance", provenance_json(provenance_)},
      {"provider", cfg_.provider.label()},
      {"pooling", to_string(cfg_.pooling)},
      {"n_series", cfg_.n_series},
      {"stages", stages_},
      {"datasets", dataset_dirs_},
      {"composites", composite_dirs_},
      {"artifacts", artifacts},
      {"projections", projections_},
      {"notes", notes_},
      {"totals",
       {{"datasets", dataset_dirs_.size() + composite_dirs_.size()},
        {"probes", probes},
        {"matrices", artifacts_["cka_matrix"].size()},
        {"artifact_classes", artifacts.size()},
        {"files", count_files(root_)}}},
  };
  io::write_json(root_ / "summary.json", summary);
  return summary;
}

}  // namespace

json run_pipeline(const ExperimentConfig& cfg, const RunOptions& options) {
  const fs::path target = fs::absolute(cfg.output_dir).lexically_normal();
  const fs::path final_dir = target.filename().empty() ? target.parent_path() : target;
  std::error_code ec;
  if (fs::exists(final_dir, ec) && !(fs::is_directory(final_dir) && fs::is_empty(final_dir)) && !options.overwrite)
    throw ValidationError("output_dir: '" + final_dir.string() + "' exists and is not empty");

  const fs::path staging = final_dir.parent_path() / ("." + final_dir.filename().string() + ".staging");
  fs::remove_all(staging);
  fs::create_directories(staging);
  const auto started = std::chrono::steady_clock::now();
  json summary;
  try {
    Run run(cfg, staging, options.log);
    summary = run.execute();
    fs::remove_all(final_dir);
    fs::rename(staging, final_dir);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  if (options.log) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    *options.log << "[tsprobe] wrote " << final_dir.string() << " in " << elapsed.count() << " s\n";
  }
  return summary;
}

}  // namespace tsprobe
