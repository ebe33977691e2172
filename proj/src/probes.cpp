#include "tsprobe/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "tsprobe/io_util.hpp"

namespace tsprobe {

namespace {

constexpr double kMinFeatureStd = 1e-12;

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string("probe ") + what + " contain non-finite values");
}

Eigen::MatrixXd transform(const Probe& probe, const Eigen::MatrixXd& features) {
  return (features.rowwise() - probe.feature_mean).array().rowwise() / probe.feature_std.array();
}

void check_compatible(const Probe& probe, const PooledEmbeddings& pooled) {
  if (probe.provider != pooled.provider || probe.pooling != pooled.pooling)
    throw ValidationError("probe trained on provider '" + probe.provider + "' (" + std::string(to_string(probe.pooling)) +
                          " pooling) cannot be evaluated on '" + pooled.provider + "' (" +
                          std::string(to_string(pooled.pooling)) + " pooling) embeddings");
}

Eigen::MatrixXd rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

std::vector<std::size_t> val_rows(const std::vector<bool>& is_train) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < is_train.size(); ++i)
    if (!is_train[i]) out.push_back(i);
  return out;
}

}  // namespace

void ProbeConfig::validate() const {
  if (!std::isfinite(ridge_lambda) || ridge_lambda < 0.0) throw ValidationError("ridge lambda must be finite and >= 0");
}

Eigen::MatrixXd Probe::raw_weights() const { return weights.array().colwise() / feature_std.transpose().array(); }

Eigen::RowVectorXd Probe::raw_bias() const { return bias - feature_mean * raw_weights(); }

Eigen::MatrixXd Probe::predict(const Eigen::MatrixXd& features) const {
  if (features.cols() != weights.rows())
    throw ValidationError("probe expects " + std::to_string(weights.rows()) + " features, got " +
                          std::to_string(features.cols()));
  Eigen::MatrixXd out = transform(*this, features) * weights;
  out.rowwise() += bias;
  return out;
}

Probe fit_probe(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, const ProbeConfig& cfg) {
  cfg.validate();
  if (features.rows() < 2) throw ValidationError("probe fit needs at least two training rows");
  if (features.rows() != targets.rows()) throw ValidationError("probe features and targets differ in row count");
  if (features.cols() == 0 || targets.cols() == 0) throw ValidationError("probe fit needs non-empty features and targets");
  require_finite(features, "features");
  require_finite(targets, "targets");

  Probe probe;
  probe.ridge_lambda = cfg.ridge_lambda;
  probe.feature_mean = features.colwise().mean();
  if (cfg.standardize_features) {
    const Eigen::MatrixXd centered = features.rowwise() - probe.feature_mean;
    probe.feature_std = (centered.colwise().squaredNorm() / static_cast<double>(features.rows())).cwiseSqrt();
    probe.feature_std = probe.feature_std.cwiseMax(kMinFeatureStd);
  } else {
    probe.feature_std = Eigen::RowVectorXd::Ones(features.cols());
  }

  const Eigen::MatrixXd x = transform(probe, features);
  probe.bias = targets.colwise().mean();
  const Eigen::MatrixXd y = targets.rowwise() - probe.bias;

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += cfg.ridge_lambda;
  const Eigen::MatrixXd rhs = x.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw Error("ridge system factorization failed");
  probe.weights = ldlt.solve(rhs);
  if (!probe.weights.allFinite()) throw Error("ridge solve produced non-finite weights (singular system, try lambda > 0)");
  return probe;
}

Eigen::RowVectorXd eval_probe(const Probe& probe, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
  if (targets.cols() != probe.weights.cols() || features.rows() != targets.rows())
    throw ValidationError("probe evaluation dimension mismatch");
  if (features.rows() == 0) throw ValidationError("probe evaluation on zero rows");
  const Eigen::MatrixXd residual = targets - probe.predict(features);
  return residual.colwise().squaredNorm() / static_cast<double>(features.rows());
}

SweepResult layerwise_sweep(const Eigen::MatrixXd& targets, const std::vector<std::string>& target_names,
                            const std::vector<bool>& is_train, const PooledEmbeddings& pooled,
                            const ProbeConfig& cfg) {
  if (pooled.num_series() != static_cast<std::size_t>(targets.rows()) || is_train.size() != pooled.num_series())
    throw ValidationError("pooled embeddings, targets and split disagree in series count");
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < is_train.size(); ++i) (is_train[i] ? train : val).push_back(i);
  if (val.empty()) throw ValidationError("validation split is empty");

  const Eigen::MatrixXd y_train = rows(targets, train);
  const Eigen::MatrixXd y_val = rows(targets, val);

  SweepResult out;
  out.report.target_names = target_names;
  out.report.n_train = train.size();
  out.report.n_val = val.size();
  out.report.provider = pooled.provider;
  out.probes.resize(pooled.num_layers());
  out.report.layers.resize(pooled.num_layers());
  // Layers are independent; the order of fits does not affect results.
  for (std::size_t l = 0; l < pooled.num_layers(); ++l) {
    const Eigen::MatrixXd x_train = rows(pooled.layers[l], train);
    Probe probe = fit_probe(x_train, y_train, cfg);
    probe.layer = l;
    probe.target_names = target_names;
    probe.provider = pooled.provider;
    probe.pooling = pooled.pooling;
    out.report.layers[l].train_mse = eval_probe(probe, x_train, y_train);
    out.report.layers[l].val_mse = eval_probe(probe, rows(pooled.layers[l], val), y_val);
    out.probes[l] = std::move(probe);
  }
  return out;
}

SweepResult layerwise_sweep(const ConceptDataset& dataset, const PooledEmbeddings& pooled, const ProbeConfig& cfg) {
  return layerwise_sweep(dataset.targets, dataset.target_names, dataset.is_train, pooled, cfg);
}

TransferResult probe_transfer(const std::vector<Probe>& c1_probes, const std::vector<Probe>& c2_probes,
                              const PooledEmbeddings& composite, const CompositeDataset& data) {
  if (c1_probes.size() != composite.num_layers() || c2_probes.size() != composite.num_layers())
    throw ValidationError("probe count does not match the composite embedding layer count");
  if (composite.num_series() != data.size()) throw ValidationError("composite embeddings and dataset differ in size");
  const auto val = val_rows(data.is_train);
  if (val.empty()) throw ValidationError("composite validation split is empty");

  TransferResult out;
  out.c1_targets = data.target_names1;
  out.c2_targets = data.target_names2;
  const Eigen::MatrixXd y1 = rows(data.targets1, val);
  const Eigen::MatrixXd y2 = rows(data.targets2, val);
  for (std::size_t l = 0; l < composite.num_layers(); ++l) {
    check_compatible(c1_probes[l], composite);
    check_compatible(c2_probes[l], composite);
    const Eigen::MatrixXd x = rows(composite.layers[l], val);
    out.c1_mse.push_back(eval_probe(c1_probes[l], x, y1));
    out.c2_mse.push_back(eval_probe(c2_probes[l], x, y2));
  }
  return out;
}

SeriesMatrix crop_suffix(const SeriesMatrix& batch, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("crop fraction must lie in (0, 1]");
  const auto T = batch.cols();
  const auto keep = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(T)));
  if (keep < 1) throw ValidationError("crop keeps no samples");
  return batch.rightCols(keep);
}

ContextAblationGrid context_ablation(const ConceptDataset& dataset, const ActivationProvider& provider,
                                     const std::vector<Probe>& probes, const std::vector<double>& fractions,
                                     Pooling pooling) {
  if (fractions.empty()) throw ValidationError("context ablation needs at least one fraction");
  if (!std::is_sorted(fractions.begin(), fractions.end()) ||
      std::adjacent_find(fractions.begin(), fractions.end()) != fractions.end())
    throw ValidationError("context fractions must be strictly increasing");
  if (fractions.back() != 1.0) throw ValidationError("context fractions must include 1.0");
  const auto T = static_cast<double>(dataset.length());
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("context fractions must lie in (0, 1]");
    if (static_cast<std::size_t>(std::floor(f * T)) < provider.min_length())
      throw ValidationError("fraction " + io::format_double(f) + " keeps fewer samples than the provider minimum of " +
                            std::to_string(provider.min_length()));
  }
  if (probes.size() != provider.num_layers()) throw ValidationError("probe count does not match provider layers");

  const auto val = dataset.val_indices();
  const Eigen::MatrixXd y_val = rows(dataset.targets, val);
  SeriesMatrix val_series(static_cast<Eigen::Index>(val.size()), static_cast<Eigen::Index>(dataset.length()));
  for (std::size_t r = 0; r < val.size(); ++r) {
    const auto& v = dataset.series[val[r]].values;
    val_series.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  ContextAblationGrid grid;
  grid.fractions = fractions;
  grid.target_names = dataset.target_names;
  const auto L = static_cast<Eigen::Index>(probes.size());
  const auto F = static_cast<Eigen::Index>(fractions.size());
  grid.total_mse = Eigen::MatrixXd::Zero(L, F);
  grid.per_target.assign(dataset.target_names.size(), Eigen::MatrixXd::Zero(L, F));
  for (Eigen::Index f = 0; f < F; ++f) {
    const auto pooled = embed_pooled(provider, crop_suffix(val_series, fractions[static_cast<std::size_t>(f)]), pooling);
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto& probe = probes[static_cast<std::size_t>(l)];
      check_compatible(probe, pooled);
      const auto mse = eval_probe(probe, pooled.layers[static_cast<std::size_t>(l)], y_val);
      grid.total_mse(l, f) = mse.sum();
      for (Eigen::Index t = 0; t < mse.size(); ++t) grid.per_target[static_cast<std::size_t>(t)](l, f) = mse(t);
    }
  }
  return grid;
}

void save_probe(const Probe& probe, const std::filesystem::path& path) {
  const nlohmann::json header = {{"format", "tsprobe-probe"},
                                 {"version", 1},
                                 {"d", probe.weights.rows()},
                                 {"k", probe.weights.cols()},
                                 {"ridge_lambda", probe.ridge_lambda},
                                 {"layer", probe.layer},
                                 {"target_names", probe.target_names},
                                 {"provider", probe.provider},
                                 {"pooling", std::string(to_string(probe.pooling))}};
  const auto text = header.dump();
  std::string buffer;
  io::append_u32(buffer, static_cast<std::uint32_t>(text.size()));
  buffer += text;
  for (Eigen::Index r = 0; r < probe.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < probe.weights.cols(); ++c) io::append_f32(buffer, static_cast<float>(probe.weights(r, c)));
  for (const auto* vec : {&probe.bias, &probe.feature_mean, &probe.feature_std})
    for (Eigen::Index i = 0; i < vec->size(); ++i) io::append_f32(buffer, static_cast<float>((*vec)(i)));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
}

Probe load_probe(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const auto where = "'" + path.string() + "': ";
  if (bytes.size() < 4) throw FormatError(where + "truncated probe file");
  const auto header_len = io::read_u32(bytes, 0);
  if (bytes.size() < 4u + header_len) throw FormatError(where + "truncated probe header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(4, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(where + e.what());
  }
  if (header.value("format", "") != "tsprobe-probe") throw FormatError(where + "not a probe file");
  const auto d = header.at("d").get<Eigen::Index>();
  const auto k = header.at("k").get<Eigen::Index>();
  const auto expected = 4u + header_len + 4u * static_cast<std::size_t>(d * k + k + 2 * d);
  if (bytes.size() != expected) throw FormatError(where + "size mismatch between header and payload");

  Probe probe;
  probe.ridge_lambda = header.at("ridge_lambda").get<double>();
  probe.layer = header.at("layer").get<std::size_t>();
  probe.target_names = header.at("target_names").get<std::vector<std::string>>();
  probe.provider = header.at("provider").get<std::string>();
  probe.pooling = parse_pooling(header.at("pooling").get<std::string>());
  std::size_t offset = 4u + header_len;
  auto next = [&] {
    const float v = io::read_f32(bytes, offset);
    offset += 4;
    return static_cast<double>(v);
  };
  probe.weights.resize(d, k);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < k; ++c) probe.weights(r, c) = next();
  probe.bias.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) probe.bias(i) = next();
  probe.feature_mean.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) probe.feature_mean(i) = next();
  probe.feature_std.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) probe.feature_std(i) = next();
  return probe;
}

}  // namespace tsprobe
