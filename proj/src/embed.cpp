#include "tsprobe/embed.hpp"

#include <cmath>

#include "tsprobe/parallel.hpp"

namespace tsprobe {

std::string_view to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::Mean: return "mean";
    case Pooling::Last: return "last";
    case Pooling::Max: return "max";
  }
  return "?";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "last") return Pooling::Last;
  if (name == "max") return Pooling::Max;
  throw ValidationError("unknown pooling '" + std::string(name) + "' (expected mean, last or max)");
}

PooledEmbeddings PooledEmbeddings::select(std::span<const std::size_t> indices) const {
  PooledEmbeddings out;
  out.pooling = pooling;
  out.provider = provider;
  for (const auto& layer : layers) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(indices.size()), layer.cols());
    for (std::size_t r = 0; r < indices.size(); ++r)
      sub.row(static_cast<Eigen::Index>(r)) = layer.row(static_cast<Eigen::Index>(indices[r]));
    out.layers.push_back(std::move(sub));
  }
  return out;
}

LayerActivations IdentityProvider::encode(std::span<const double> series) const {
  const auto T = static_cast<Eigen::Index>(series.size());
  if (T == 0) throw ValidationError("identity provider: empty series");
  LayerActivations acts;
  acts.provider = name();
  acts.layers.emplace_back(Eigen::Map<const Eigen::VectorXd>(series.data(), T));

  const auto W = static_cast<Eigen::Index>(kWindow);
  const Eigen::Index S = (T + W - 1) / W;
  Eigen::MatrixXd windows(S, W);
  for (Eigen::Index s = 0; s < S; ++s) {
    double running = 0.0;
    for (Eigen::Index j = 0; j < W; ++j) {
      const Eigen::Index t = s * W + j;
      running += t < T ? series[static_cast<std::size_t>(t)] : 0.0;
      windows(s, j) = running / static_cast<double>(j + 1);
    }
  }
  acts.layers.push_back(std::move(windows));
  return acts;
}

Eigen::RowVectorXd pool(const Eigen::MatrixXd& tokens, Pooling pooling) {
  if (tokens.rows() == 0) throw ValidationError("cannot pool zero tokens");
  switch (pooling) {
    case Pooling::Mean: return tokens.colwise().mean();
    case Pooling::Last: return tokens.row(tokens.rows() - 1);
    case Pooling::Max: return tokens.colwise().maxCoeff();
  }
  return {};
}

std::vector<Eigen::RowVectorXd> pool(const LayerActivations& acts, Pooling pooling) {
  std::vector<Eigen::RowVectorXd> out;
  out.reserve(acts.layers.size());
  for (const auto& layer : acts.layers) out.push_back(pool(layer, pooling));
  return out;
}

std::vector<LayerActivations> encode_batch(const ActivationProvider& provider, const SeriesMatrix& batch) {
  std::vector<LayerActivations> out(static_cast<std::size_t>(batch.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    out[i] = provider.encode({batch.row(row).data(), static_cast<std::size_t>(batch.cols())});
    out[i].series_id = i;
  });
  return out;
}

PooledEmbeddings pool_all(std::span<const LayerActivations> acts, Pooling pooling) {
  PooledEmbeddings out;
  out.pooling = pooling;
  if (acts.empty()) return out;
  out.provider = acts.front().provider;
  const auto N = static_cast<Eigen::Index>(acts.size());
  for (std::size_t l = 0; l < acts.front().num_layers(); ++l) {
    Eigen::MatrixXd layer(N, acts.front().layers[l].cols());
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto& a = acts[static_cast<std::size_t>(i)];
      if (a.num_layers() != acts.front().num_layers() || a.layers[l].cols() != layer.cols())
        throw ValidationError("activations disagree in layer count or width across series");
      layer.row(i) = pool(a.layers[l], pooling);
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

PooledEmbeddings embed_pooled(const ActivationProvider& provider, const SeriesMatrix& batch, Pooling pooling) {
  const auto N = static_cast<std::size_t>(batch.rows());
  if (N == 0) throw ValidationError("cannot embed an empty batch");
  if (static_cast<std::size_t>(batch.cols()) < provider.min_length())
    throw ValidationError(provider.name() + ": series shorter than the provider minimum of " +
                          std::to_string(provider.min_length()));
  std::vector<std::vector<Eigen::RowVectorXd>> pooled(N);
  parallel_for(N, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    pooled[i] = pool(provider.encode({batch.row(row).data(), static_cast<std::size_t>(batch.cols())}), pooling);
  });

  PooledEmbeddings out;
  out.pooling = pooling;
  out.provider = provider.name();
  for (std::size_t l = 0; l < pooled.front().size(); ++l) {
    Eigen::MatrixXd layer(static_cast<Eigen::Index>(N), pooled.front()[l].size());
    for (std::size_t i = 0; i < N; ++i) layer.row(static_cast<Eigen::Index>(i)) = pooled[i][l];
    out.layers.push_back(std::move(layer));
  }
  return out;
}

}  // namespace tsprobe
