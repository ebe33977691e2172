#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tsprobe::io {

/// Shortest decimal representation that round-trips the double.
std::string format_double(double value);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Small CSV writer. Lines beginning with '#' are provenance comments that
/// read_csv skips.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  void comment(std::string_view text);
  void header(std::initializer_list<std::string_view> columns);
  void header(const std::vector<std::string>& columns);
  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((write_cell(cells, first)), ...);
    out_ << '\n';
  }
  void row(std::span<const double> cells);

 private:
  void write_cell(double v, bool& first) { sep(first), out_ << format_double(v); }
  void write_cell(std::string_view v, bool& first) { sep(first), out_ << v; }
  void write_cell(const std::string& v, bool& first) { sep(first), out_ << v; }
  void write_cell(const char* v, bool& first) { sep(first), out_ << v; }
  template <typename I>
    requires std::is_integral_v<I>
  void write_cell(I v, bool& first) {
    sep(first), out_ << v;
  }
  void sep(bool& first) {
    if (!first) out_ << ',';
    first = false;
  }
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

std::string read_file(const std::filesystem::path& path);

/// Little-endian float32 helpers.
void append_u32(std::string& buffer, std::uint32_t value);
void append_f32(std::string& buffer, float value);
std::uint32_t read_u32(std::string_view bytes, std::size_t offset);
float read_f32(std::string_view bytes, std::size_t offset);

void write_f32_file(const std::filesystem::path& path, std::span<const double> values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

}  // namespace tsprobe::io
