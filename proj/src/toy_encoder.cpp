#include "tsprobe/toy_encoder.hpp"

#include <cmath>
#include <numbers>

namespace tsprobe {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-5;

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  // Fill in row-major order so the draw sequence does not depend on storage.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = kInitStd * rng.normal();
  return m;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

}  // namespace

void ToyEncoderConfig::validate() const {
  if (patch_len == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || mlp_ratio == 0)
    throw ValidationError("toy encoder dimensions must be positive");
  if (d_model % n_heads != 0) throw ValidationError("toy encoder d_model must be divisible by n_heads");
}

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

Eigen::MatrixXd sinusoidal_positions(std::size_t tokens, std::size_t d_model) {
  Eigen::MatrixXd pe(static_cast<Eigen::Index>(tokens), static_cast<Eigen::Index>(d_model));
  for (std::size_t s = 0; s < tokens; ++s) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(s) / std::pow(10000.0, exponent);
      pe(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

ToyEncoder::ToyEncoder(const ToyEncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  const auto d = static_cast<Eigen::Index>(cfg_.d_model);
  const auto hidden = static_cast<Eigen::Index>(cfg_.d_model * cfg_.mlp_ratio);
  patch_proj_ = gaussian(static_cast<Eigen::Index>(cfg_.patch_len), d, rng);
  patch_bias_ = Eigen::VectorXd::Zero(d);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    Block b;
    b.wq = gaussian(d, d, rng);
    b.wk = gaussian(d, d, rng);
    b.wv = gaussian(d, d, rng);
    b.wo = gaussian(d, d, rng);
    b.w1 = gaussian(d, hidden, rng);
    b.b1 = Eigen::VectorXd::Zero(hidden);
    b.w2 = gaussian(hidden, d, rng);
    b.b2 = Eigen::VectorXd::Zero(d);
    blocks_.push_back(std::move(b));
  }
}

Eigen::MatrixXd ToyEncoder::attention(const Eigen::MatrixXd& x, const Block& block, ForwardTrace* trace) const {
  const auto S = x.rows();
  const auto heads = static_cast<Eigen::Index>(cfg_.n_heads);
  const auto dh = static_cast<Eigen::Index>(cfg_.d_model / cfg_.n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Eigen::MatrixXd q = x * block.wq;
  const Eigen::MatrixXd k = x * block.wk;
  const Eigen::MatrixXd v = x * block.wv;
  Eigen::MatrixXd context(S, x.cols());
  for (Eigen::Index h = 0; h < heads; ++h) {
    Eigen::MatrixXd scores = scale * q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    for (Eigen::Index r = 0; r < S; ++r) {
      const double row_max = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - row_max).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    context.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
    if (trace) trace->attention.push_back(std::move(scores));
  }
  return context * block.wo;
}

LayerActivations ToyEncoder::encode(std::span<const double> series, ForwardTrace* trace) const {
  if (series.size() < cfg_.patch_len)
    throw ValidationError("toy encoder: series shorter than one patch (" + std::to_string(cfg_.patch_len) + ")");
  for (double v : series)
    if (!std::isfinite(v)) throw ValidationError("toy encoder: non-finite input value");

  const std::size_t S = num_tokens(series.size());
  const auto P = static_cast<Eigen::Index>(cfg_.patch_len);
  Eigen::MatrixXd patches = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), P);
  for (std::size_t t = 0; t < series.size(); ++t)
    patches(static_cast<Eigen::Index>(t / cfg_.patch_len), static_cast<Eigen::Index>(t % cfg_.patch_len)) = series[t];

  LayerActivations acts;
  acts.provider = name();
  Eigen::MatrixXd x = patches * patch_proj_;
  x.rowwise() += patch_bias_.transpose();
  x += sinusoidal_positions(S, cfg_.d_model);
  acts.layers.push_back(x);

  for (const auto& block : blocks_) {
    Eigen::MatrixXd normed = layer_norm(x);
    x += attention(normed, block, trace);
    if (trace) trace->layer_norm_outputs.push_back(std::move(normed));

    normed = layer_norm(x);
    Eigen::MatrixXd hidden = normed * block.w1;
    hidden.rowwise() += block.b1.transpose();
    hidden = hidden.unaryExpr([](double h) { return gelu(h); });
    Eigen::MatrixXd mlp = hidden * block.w2;
    mlp.rowwise() += block.b2.transpose();
    x += mlp;
    if (trace) trace->layer_norm_outputs.push_back(std::move(normed));
    acts.layers.push_back(x);
  }
  return acts;
}

}  // namespace tsprobe
