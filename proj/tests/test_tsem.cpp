#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "tsprobe/embed.hpp"
#include "tsprobe/tsem.hpp"

using namespace tsprobe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<LayerActivations> random_acts(std::size_t layers, std::size_t series, std::size_t tokens, std::size_t dims,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LayerActivations> out(series);
  for (std::size_t i = 0; i < series; ++i) {
    out[i].series_id = i;
    out[i].provider = "test";
    for (std::size_t l = 0; l < layers; ++l) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(tokens), static_cast<Eigen::Index>(dims));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<float>(rng.normal());
      out[i].layers.push_back(m);
    }
  }
  return out;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("round trip is bitwise for float32-representable values") {
  TempDir dir("tsprobe_test_tsem_rt");
  const auto acts = random_acts(5, 10, 32, 64, 1);
  const auto path = dir.path / "emb.tsem";
  save_embeddings(acts, path, EmbeddingMeta{"toy", "mean", "datasets/AR1", 42});
  CHECK(fs::file_size(path) == kTsemHeaderBytes + 5ull * 10 * 32 * 64 * 4);

  const auto back = load_embeddings(path);
  CHECK(back.header.n_layers == 5);
  CHECK(back.header.n_series == 10);
  CHECK(back.header.n_tokens == 32);
  CHECK(back.header.d_model == 64);
  CHECK(tsem_payload_bytes(back.header) == 5ull * 10 * 32 * 64 * 4);
  REQUIRE(back.series.size() == 10);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t l = 0; l < 5; ++l) CHECK(back.series[i].layers[l] == acts[i].layers[l]);
  CHECK(back.meta.provider == "toy");
  CHECK(back.meta.source_dataset == "datasets/AR1");
  CHECK(back.meta.seed == 42);
}

TEST_CASE("header is little-endian with the documented fields") {
  TempDir dir("tsprobe_test_tsem_header");
  const auto path = dir.path / "h.tsem";
  save_embeddings(random_acts(2, 3, 4, 5, 2), path, EmbeddingMeta{});
  const auto bytes = read_all(path);
  REQUIRE(bytes.size() >= kTsemHeaderBytes);
  CHECK(bytes.substr(0, 4) == "TSEM");
  const auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 2);
  CHECK(u32(12) == 3);
  CHECK(u32(16) == 4);
  CHECK(u32(20) == 5);
  CHECK(u32(24) == 0);
}

TEST_CASE("corrupt files raise format errors") {
  TempDir dir("tsprobe_test_tsem_bad");
  const auto path = dir.path / "e.tsem";
  save_embeddings(random_acts(2, 3, 4, 5, 3), path, EmbeddingMeta{});
  const auto good = read_all(path);

  write_all(path, good.substr(0, good.size() - 4));
  CHECK_THROWS_AS(load_embeddings(path), FormatError);

  write_all(path, good + "xxxx");
  CHECK_THROWS_AS(load_embeddings(path), FormatError);

  auto bad = good;
  bad[0] = 'X';
  write_all(path, bad);
  CHECK_THROWS_AS(load_embeddings(path), FormatError);

  bad = good;
  bad[4] = 2;
  write_all(path, bad);
  CHECK_THROWS_AS(load_embeddings(path), FormatError);

  bad = good;
  bad[24] = 1;
  write_all(path, bad);
  CHECK_THROWS_AS(load_embeddings(path), FormatError);

  write_all(path, good.substr(0, 10));
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
}

TEST_CASE("non-finite payload values are rejected or counted") {
  TempDir dir("tsprobe_test_tsem_nan");
  const auto path = dir.path / "n.tsem";
  save_embeddings(random_acts(1, 2, 2, 2, 4), path, EmbeddingMeta{});
  auto bytes = read_all(path);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + kTsemHeaderBytes + 4, &nan, 4);
  write_all(path, bytes);
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
  const auto warned = load_embeddings(path, NonFinitePolicy::Warn);
  CHECK(warned.non_finite_values == 1);
}

TEST_CASE("ragged layers cannot be stored") {
  TempDir dir("tsprobe_test_tsem_ragged");
  IdentityProvider p;
  std::vector<LayerActivations> acts = {p.encode(std::vector<double>(16, 1.0))};
  CHECK_THROWS_AS(save_embeddings(acts, dir.path / "r.tsem", EmbeddingMeta{}), ValidationError);

  auto mixed = random_acts(2, 2, 4, 4, 5);
  mixed[1].layers[1] = Eigen::MatrixXd::Zero(3, 4);
  CHECK_THROWS_AS(save_embeddings(mixed, dir.path / "m.tsem", EmbeddingMeta{}), ValidationError);
}

TEST_CASE("sidecar sits next to the blob and is optional") {
  TempDir dir("tsprobe_test_tsem_sidecar");
  const auto path = dir.path / "layers.tsem";
  CHECK(sidecar_path(path) == dir.path / "layers.meta.json");
  save_embeddings(random_acts(1, 1, 1, 1, 6), path, EmbeddingMeta{"identity", "max", "x", 7});
  CHECK(fs::exists(dir.path / "layers.meta.json"));
  CHECK(load_embeddings(path).meta.pooling == "max");
  fs::remove(dir.path / "layers.meta.json");
  CHECK_NOTHROW(load_embeddings(path));
}
