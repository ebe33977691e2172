// tsprobe command-line interface.
//
// Exit codes: 0 success, 2 invalid input or configuration, 1 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsprobe/compose.hpp"
#include "tsprobe/config.hpp"
#include "tsprobe/dimred.hpp"
#include "tsprobe/embed.hpp"
#include "tsprobe/io_util.hpp"
#include "tsprobe/pipeline.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/serialize.hpp"
#include "tsprobe/simgeo.hpp"
#include "tsprobe/synthgen.hpp"
#include "tsprobe/tsem.hpp"

namespace fs = std::filesystem;
using namespace tsprobe;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string provider = "toy";
  std::string pooling = "mean";
};

std::unique_ptr<ActivationProvider> provider_from_flag(const std::string& name) {
  if (name == "toy") return std::make_unique<ToyEncoder>(ToyEncoderConfig{});
  if (name == "identity") return std::make_unique<IdentityProvider>();
  throw ValidationError("--provider: expected toy or identity, got '" + name + "'");
}

/// Pooled embeddings of a batch, either re-encoded or read from a TSEM file.
PooledEmbeddings pooled_for(const SeriesMatrix& batch, const std::string& embeddings, const Common& c) {
  const auto pooling = parse_pooling(c.pooling);
  if (!embeddings.empty()) {
    const auto loaded = load_embeddings(embeddings);
    if (loaded.series.size() != static_cast<std::size_t>(batch.rows()))
      throw ValidationError("--embeddings: file holds " + std::to_string(loaded.series.size()) + " series, dataset has " +
                            std::to_string(batch.rows()));
    auto pooled = pool_all(loaded.series, pooling);
    pooled.provider = loaded.meta.provider.empty() ? "file" : loaded.meta.provider;
    return pooled;
  }
  return embed_pooled(*provider_from_flag(c.provider), batch, pooling);
}

std::vector<Probe> load_probe_dir(const fs::path& dir) {
  std::vector<Probe> probes;
  for (std::size_t l = 0; fs::exists(dir / ("layer_" + std::to_string(l) + ".probe")); ++l)
    probes.push_back(load_probe(dir / ("layer_" + std::to_string(l) + ".probe")));
  if (probes.empty()) throw ValidationError("no layer_<l>.probe files in '" + dir.string() + "'");
  return probes;
}

Provenance cli_provenance(std::uint64_t seed) { return Provenance{std::nullopt, seed}; }

io::CsvWriter open_csv(const fs::path& path, std::uint64_t seed) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::CsvWriter w(path);
  w.comment(provenance_comment(cli_provenance(seed)));
  return w;
}

void require_out(const Common& c) {
  if (c.out.empty()) throw ValidationError("--out is required");
}

void add_common(CLI::App* cmd, Common& c, bool provider) {
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--out", c.out, "Output path");
  if (provider) {
    cmd->add_option("--provider", c.provider, "Activation provider: toy | identity");
    cmd->add_option("--pooling", c.pooling, "Token pooling: mean | last | max");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept probing workbench for time-series encoders"};
  app.require_subcommand(1);
  Common c;

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a concept dataset");
  std::string gen_concept = "AR1", gen_norm;
  std::size_t gen_n = 1000, gen_len = 256;
  gen->add_option("--concept", gen_concept, "Concept kind");
  gen->add_option("--n", gen_n, "Number of series");
  gen->add_option("--length", gen_len, "Series length");
  gen->add_option("--normalization", gen_norm, "none | zscore (default depends on the concept)");
  add_common(gen, c, false);

  // compose
  auto* comp = app.add_subcommand("compose", "Compose two datasets");
  std::string comp_ds1, comp_ds2, comp_mode = "functional";
  std::vector<double> comp_alpha_range, comp_beta_range;
  bool comp_normalize = false;
  std::optional<double> comp_alpha;
  comp->add_option("--ds1", comp_ds1, "First dataset directory")->required();
  comp->add_option("--ds2", comp_ds2, "Second dataset directory")->required();
  comp->add_option("--mode", comp_mode, "structured | functional");
  comp->add_option("--alpha-range", comp_alpha_range, "Breakpoint a range (fractions of T)")->expected(2);
  comp->add_option("--beta-range", comp_beta_range, "Breakpoint b range (fractions of T)")->expected(2);
  comp->add_flag("--normalize", comp_normalize, "z-score sources before mixing");
  comp->add_option("--alpha", comp_alpha, "Mixing weight");
  add_common(comp, c, false);

  // embed
  auto* emb = app.add_subcommand("embed", "Encode a dataset and write TSEM activations");
  std::string emb_dataset;
  emb->add_option("--dataset", emb_dataset, "Dataset or composite directory")->required();
  add_common(emb, c, true);

  // probe
  auto* prb = app.add_subcommand("probe", "Layer-wise probe sweep");
  std::string prb_dataset, prb_embeddings;
  ProbeConfig prb_cfg;
  bool prb_raw = false;
  prb->add_option("--dataset", prb_dataset, "Dataset directory")->required();
  prb->add_option("--embeddings", prb_embeddings, "TSEM file (instead of re-encoding)");
  prb->add_option("--lambda", prb_cfg.ridge_lambda, "Ridge penalty");
  prb->add_flag("--no-standardize", prb_raw, "Center features without scaling");
  add_common(prb, c, true);

  // transfer
  auto* trf = app.add_subcommand("transfer", "Evaluate frozen probes on a composite");
  std::string trf_p1, trf_p2, trf_comp;
  trf->add_option("--probes1", trf_p1, "Probe directory of the first concept")->required();
  trf->add_option("--probes2", trf_p2, "Probe directory of the second concept")->required();
  trf->add_option("--composite", trf_comp, "Composite directory")->required();
  add_common(trf, c, true);

  // ablate
  auto* abl = app.add_subcommand("ablate", "Context-length ablation");
  std::string abl_dataset, abl_probes;
  std::vector<double> abl_fractions = kDefaultFractions;
  abl->add_option("--dataset", abl_dataset, "Dataset directory")->required();
  abl->add_option("--probes", abl_probes, "Probe directory")->required();
  abl->add_option("--fractions", abl_fractions, "Context fractions (ascending, ending with 1)");
  add_common(abl, c, true);

  // cka
  auto* ck = app.add_subcommand("cka", "Layer x layer CKA matrix");
  std::string ck_dataset, ck_embeddings;
  ck->add_option("--dataset", ck_dataset, "Dataset directory")->required();
  ck->add_option("--embeddings", ck_embeddings, "TSEM file (instead of re-encoding)");
  add_common(ck, c, true);

  // arithmetic
  auto* ari = app.add_subcommand("arithmetic", "Vector arithmetic on a functional composite");
  std::string ari_ds1, ari_ds2;
  bool ari_normalize = false;
  std::optional<double> ari_alpha;
  ari->add_option("--ds1", ari_ds1, "First dataset directory")->required();
  ari->add_option("--ds2", ari_ds2, "Second dataset directory")->required();
  ari->add_flag("--normalize", ari_normalize, "z-score sources before mixing");
  ari->add_option("--alpha", ari_alpha, "Mixing weight");
  add_common(ari, c, true);

  // align
  auto* aln = app.add_subcommand("align", "Vector arithmetic across sequence lengths");
  std::string aln_c1 = "Trend", aln_c2 = "LevelShift";
  std::size_t aln_n = 1000;
  std::vector<std::size_t> aln_lengths = kDefaultAlignmentLengths;
  bool aln_normalize = false;
  aln->add_option("--concept1", aln_c1, "First concept kind");
  aln->add_option("--concept2", aln_c2, "Second concept kind");
  aln->add_option("--n", aln_n, "Series per length");
  aln->add_option("--lengths", aln_lengths, "Sequence lengths");
  aln->add_flag("--normalize", aln_normalize, "z-score sources before mixing");
  add_common(aln, c, true);

  // dimred
  auto* dr = app.add_subcommand("dimred", "2-D projection of one layer");
  std::string dr_dataset, dr_embeddings, dr_method = "umap";
  std::size_t dr_layer = 0;
  TsneOptions dr_tsne;
  UmapOptions dr_umap;
  dr->add_option("--dataset", dr_dataset, "Dataset directory")->required();
  dr->add_option("--embeddings", dr_embeddings, "TSEM file (instead of re-encoding)");
  dr->add_option("--layer", dr_layer, "Layer index");
  dr->add_option("--method", dr_method, "pca | tsne | umap");
  dr->add_option("--perplexity", dr_tsne.perplexity, "t-SNE perplexity");
  dr->add_option("--iterations", dr_tsne.iterations, "t-SNE iterations");
  dr->add_option("--neighbors", dr_umap.n_neighbors, "UMAP neighbours");
  dr->add_option("--epochs", dr_umap.epochs, "UMAP epochs");
  add_common(dr, c, true);

  // run / validate
  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  std::optional<std::uint64_t> run_seed;
  std::string run_out, run_provider, run_pooling;
  bool run_force = false;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--seed", run_seed, "Override master_seed");
  run->add_option("--out", run_out, "Override output_dir");
  run->add_option("--provider", run_provider, "Override provider");
  run->add_option("--pooling", run_pooling, "Override pooling");
  run->add_flag("--force", run_force, "Replace an existing output directory");

  auto* val = app.add_subcommand("validate", "Validate an experiment config");
  val->add_option("config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      require_out(c);
      auto spec = ConceptSpec::defaults(parse_concept_kind(gen_concept), gen_len);
      if (!gen_norm.empty()) spec.normalization = parse_normalization(gen_norm);
      spec.validate();
      const auto ds = generate_dataset(spec, gen_n, c.seed);
      fs::create_directories(c.out);
      save_dataset(ds, c.out, cli_provenance(c.seed));
    } else if (comp->parsed()) {
      require_out(c);
      const auto ds1 = load_dataset(comp_ds1);
      const auto ds2 = load_dataset(comp_ds2);
      CompositeDataset out;
      if (comp_mode == "structured") {
        StructuredConfig cfg;
        if (!comp_alpha_range.empty()) cfg.alpha_low = comp_alpha_range[0], cfg.alpha_high = comp_alpha_range[1];
        if (!comp_beta_range.empty()) cfg.beta_low = comp_beta_range[0], cfg.beta_high = comp_beta_range[1];
        out = compose_structured(ds1, ds2, cfg, c.seed);
      } else if (comp_mode == "functional") {
        out = compose_functional(ds1, ds2, FunctionalConfig{comp_normalize, comp_alpha});
      } else {
        throw ValidationError("--mode: expected structured or functional");
      }
      fs::create_directories(c.out);
      save_composite(out, c.out, cli_provenance(c.seed));
    } else if (emb->parsed()) {
      require_out(c);
      const bool composite = fs::exists(fs::path(emb_dataset) / "targets_c1.csv");
      const SeriesMatrix batch = composite ? load_composite(emb_dataset).composites : load_dataset(emb_dataset).values();
      const auto provider = provider_from_flag(c.provider);
      const auto acts = encode_batch(*provider, batch);
      if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
      save_embeddings(acts, c.out, EmbeddingMeta{provider->name(), c.pooling, emb_dataset, c.seed});
    } else if (prb->parsed()) {
      require_out(c);
      const auto ds = load_dataset(prb_dataset);
      prb_cfg.standardize_features = !prb_raw;
      const auto result = layerwise_sweep(ds, pooled_for(ds.values(), prb_embeddings, c), prb_cfg);
      fs::create_directories(c.out);
      auto out = open_csv(fs::path(c.out) / "probe_report.csv", c.seed);
      out.header({"layer", "target", "split", "mse"});
      for (std::size_t l = 0; l < result.report.layers.size(); ++l) {
        const auto& s = result.report.layers[l];
        for (std::size_t t = 0; t < result.report.target_names.size(); ++t) {
          out.row(l, result.report.target_names[t], "train", s.train_mse(static_cast<Eigen::Index>(t)));
          out.row(l, result.report.target_names[t], "val", s.val_mse(static_cast<Eigen::Index>(t)));
        }
        save_probe(result.probes[l], fs::path(c.out) / ("layer_" + std::to_string(l) + ".probe"));
      }
    } else if (trf->parsed()) {
      require_out(c);
      const auto composite = load_composite(trf_comp);
      const auto pooled = pooled_for(composite.composites, "", c);
      const auto result = probe_transfer(load_probe_dir(trf_p1), load_probe_dir(trf_p2), pooled, composite);
      auto out = open_csv(c.out, c.seed);
      out.header({"layer", "source", "target", "mse"});
      for (std::size_t l = 0; l < result.c1_mse.size(); ++l) {
        for (std::size_t t = 0; t < result.c1_targets.size(); ++t)
          out.row(l, "c1", result.c1_targets[t], result.c1_mse[l](static_cast<Eigen::Index>(t)));
        for (std::size_t t = 0; t < result.c2_targets.size(); ++t)
          out.row(l, "c2", result.c2_targets[t], result.c2_mse[l](static_cast<Eigen::Index>(t)));
      }
    } else if (abl->parsed()) {
      require_out(c);
      const auto ds = load_dataset(abl_dataset);
      const auto grid = context_ablation(ds, *provider_from_flag(c.provider), load_probe_dir(abl_probes), abl_fractions,
                                         parse_pooling(c.pooling));
      auto out = open_csv(c.out, c.seed);
      out.header({"layer", "fraction", "mse"});
      for (Eigen::Index l = 0; l < grid.total_mse.rows(); ++l)
        for (std::size_t f = 0; f < grid.fractions.size(); ++f)
          out.row(static_cast<std::size_t>(l), grid.fractions[f], grid.total_mse(l, static_cast<Eigen::Index>(f)));
    } else if (ck->parsed()) {
      require_out(c);
      const auto ds = load_dataset(ck_dataset);
      const auto m = cka_layer_matrix(pooled_for(ds.values(), ck_embeddings, c));
      auto out = open_csv(c.out, c.seed);
      std::vector<std::string> header = {"layer"};
      for (auto l : m.layers) header.push_back(std::to_string(l));
      out.header(header);
      for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        std::vector<double> row(m.values.row(r).begin(), m.values.row(r).end());
        row.insert(row.begin(), static_cast<double>(m.layers[static_cast<std::size_t>(r)]));
        out.row(std::span<const double>(row));
      }
    } else if (ari->parsed()) {
      require_out(c);
      const auto composite =
          compose_functional(load_dataset(ari_ds1), load_dataset(ari_ds2), FunctionalConfig{ari_normalize, ari_alpha});
      const auto [p1, p2] = mixed_parts(composite);
      const auto analysis =
          vector_arithmetic(pooled_for(p1, "", c), pooled_for(p2, "", c), pooled_for(composite.composites, "", c));
      auto out = open_csv(c.out, c.seed);
      out.header({"layer", "cosine_mean", "cosine_std", "reldist_mean", "reldist_std", "used", "skipped"});
      for (std::size_t l = 0; l < analysis.layers.size(); ++l) {
        const auto& s = analysis.layers[l];
        out.row(l, s.cosine_mean, s.cosine_std, s.reldist_mean, s.reldist_std, s.used, s.skipped);
      }
    } else if (aln->parsed()) {
      require_out(c);
      PairSpec pair{ConceptSpec::defaults(parse_concept_kind(aln_c1)),
                    ConceptSpec::defaults(parse_concept_kind(aln_c2)),
                    FunctionalConfig{aln_normalize, std::nullopt},
                    derive_seed(c.seed, 0),
                    derive_seed(c.seed, 1),
                    aln_n};
      const auto table = temporal_alignment(pair, aln_lengths, *provider_from_flag(c.provider), parse_pooling(c.pooling));
      auto out = open_csv(c.out, c.seed);
      out.header({"layer", "length", "cosine_mean"});
      for (Eigen::Index l = 0; l < table.cosine_mean.rows(); ++l)
        for (std::size_t k = 0; k < table.lengths.size(); ++k)
          out.row(static_cast<std::size_t>(l), table.lengths[k], table.cosine_mean(l, static_cast<Eigen::Index>(k)));
    } else if (dr->parsed()) {
      require_out(c);
      const auto ds = load_dataset(dr_dataset);
      const auto pooled = pooled_for(ds.values(), dr_embeddings, c);
      if (dr_layer >= pooled.num_layers()) throw ValidationError("--layer: out of range");
      const Eigen::MatrixXd& x = pooled.layers[dr_layer];
      Projection2D proj;
      if (dr_method == "pca") {
        const auto res = pca(x, 2);
        proj.method = "pca";
        proj.coords = res.projected;
      } else if (dr_method == "tsne") {
        dr_tsne.seed = c.seed;
        proj = tsne(x, dr_tsne);
      } else if (dr_method == "umap") {
        dr_umap.seed = c.seed;
        proj = umap(x, dr_umap);
      } else {
        throw ValidationError("--method: expected pca, tsne or umap");
      }
      std::vector<double> color(static_cast<std::size_t>(ds.targets.rows()));
      for (std::size_t i = 0; i < color.size(); ++i) color[i] = ds.targets(static_cast<Eigen::Index>(i), 0);
      std::vector<std::size_t> ids(color.size());
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
      const fs::path out_path = c.out;
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      write_projection_csv(out_path, proj, color, ids, provenance_comment(cli_provenance(c.seed)));
      auto svg = out_path;
      write_projection_svg(svg.replace_extension(".svg"), proj, color, dr_method + " layer " + std::to_string(dr_layer));
    } else if (run->parsed()) {
      nlohmann::json overrides = nlohmann::json::object();
      if (run_seed) overrides["master_seed"] = *run_seed;
      if (!run_out.empty()) overrides["output_dir"] = run_out;
      if (!run_provider.empty()) overrides["provider"] = run_provider;
      if (!run_pooling.empty()) overrides["pooling"] = run_pooling;
      const auto cfg = load_config(config_path, overrides);
      RunOptions options;
      options.overwrite = run_force;
      options.log = &std::cerr;
      const auto summary = run_pipeline(cfg, options);
      std::cout << summary["totals"].dump() << '\n';
    } else if (val->parsed()) {
      const auto errors = validate_config_file(config_path);
      if (errors.empty()) {
        std::cout << "ok\n";
        return 0;
      }
      for (const auto& e : errors) std::cerr << e << '\n';
      return 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
