#include "tsprobe/tsem.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "tsprobe/io_util.hpp"

namespace tsprobe {

namespace fs = std::filesystem;

std::uint64_t tsem_payload_bytes(const TsemHeader& h) {
  return std::uint64_t{h.n_layers} * h.n_series * h.n_tokens * h.d_model * 4u;
}

fs::path sidecar_path(const fs::path& path) {
  auto out = path;
  out.replace_extension(".meta.json");
  return out;
}

void save_embeddings(std::span<const LayerActivations> acts, const fs::path& path, const EmbeddingMeta& meta) {
  if (acts.empty()) throw ValidationError("save_embeddings: no series");
  const auto& first = acts.front();
  if (first.layers.empty()) throw ValidationError("save_embeddings: no layers");
  const auto S = first.layers.front().rows();
  const auto d = first.layers.front().cols();
  for (const auto& a : acts) {
    if (a.num_layers() != first.num_layers())
      throw ValidationError("save_embeddings: series disagree in layer count");
    for (const auto& layer : a.layers)
      if (layer.rows() != S || layer.cols() != d)
        throw ValidationError("save_embeddings: TSEM requires every layer to share one tokens x dims shape");
  }

  TsemHeader h{static_cast<std::uint32_t>(first.num_layers()), static_cast<std::uint32_t>(acts.size()),
               static_cast<std::uint32_t>(S), static_cast<std::uint32_t>(d), 0};
  std::string buffer = "TSEM";
  buffer.reserve(kTsemHeaderBytes + tsem_payload_bytes(h));
  for (auto v : {kTsemVersion, h.n_layers, h.n_series, h.n_tokens, h.d_model, h.dtype}) io::append_u32(buffer, v);
  for (std::size_t l = 0; l < h.n_layers; ++l)
    for (const auto& a : acts)
      for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index j = 0; j < d; ++j) io::append_f32(buffer, static_cast<float>(a.layers[l](s, j)));

  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  }
  io::write_json(sidecar_path(path), {{"provider", meta.provider},
                                      {"pooling", meta.pooling},
                                      {"source_dataset", meta.source_dataset},
                                      {"seed", meta.seed}});
}

LoadedEmbeddings load_embeddings(const fs::path& path, NonFinitePolicy policy) {
  const std::string bytes = io::read_file(path);
  const auto where = "'" + path.string() + "': ";
  if (bytes.size() < kTsemHeaderBytes) throw FormatError(where + "file too short for a TSEM header");
  if (bytes.compare(0, 4, "TSEM") != 0) throw FormatError(where + "bad magic (expected TSEM)");
  if (io::read_u32(bytes, 4) != kTsemVersion) throw FormatError(where + "unsupported TSEM version");

  LoadedEmbeddings out;
  auto& h = out.header;
  h.n_layers = io::read_u32(bytes, 8);
  h.n_series = io::read_u32(bytes, 12);
  h.n_tokens = io::read_u32(bytes, 16);
  h.d_model = io::read_u32(bytes, 20);
  h.dtype = io::read_u32(bytes, 24);
  if (h.dtype != 0) throw FormatError(where + "unsupported dtype " + std::to_string(h.dtype));
  const auto expected = tsem_payload_bytes(h);
  const auto actual = bytes.size() - kTsemHeaderBytes;
  if (actual != expected)
    throw FormatError(where + "size mismatch: header implies " + std::to_string(expected) + " payload bytes, file has " +
                      std::to_string(actual));

  out.series.resize(h.n_series);
  for (std::uint32_t i = 0; i < h.n_series; ++i) {
    out.series[i].series_id = i;
    out.series[i].layers.assign(h.n_layers, Eigen::MatrixXd(h.n_tokens, h.d_model));
  }
  std::size_t offset = kTsemHeaderBytes;
  for (std::uint32_t l = 0; l < h.n_layers; ++l)
    for (auto& s : out.series)
      for (std::uint32_t t = 0; t < h.n_tokens; ++t)
        for (std::uint32_t j = 0; j < h.d_model; ++j, offset += 4) {
          const float v = io::read_f32(bytes, offset);
          if (!std::isfinite(v)) ++out.non_finite_values;
          s.layers[l](t, j) = v;
        }
  if (out.non_finite_values > 0) {
    if (policy == NonFinitePolicy::Reject)
      throw FormatError(where + std::to_string(out.non_finite_values) + " non-finite payload values");
    std::cerr << "warning: " << where << out.non_finite_values << " non-finite payload values\n";
  }

  const auto sidecar = sidecar_path(path);
  if (fs::exists(sidecar)) {
    const auto j = io::read_json(sidecar);
    out.meta.provider = j.value("provider", "");
    out.meta.pooling = j.value("pooling", "mean");
    out.meta.source_dataset = j.value("source_dataset", "");
    out.meta.seed = j.value("seed", std::uint64_t{0});
  }
  if (out.meta.provider.empty()) out.meta.provider = "file";
  for (auto& s : out.series) s.provider = out.meta.provider;
  return out;
}

}  // namespace tsprobe
