#include "tsprobe/io_util.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tsprobe/error.hpp"

namespace tsprobe::io {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("failed to format number");
  return std::string(buf, end);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw Error("cannot open '" + path.string() + "' for writing");
}

void CsvWriter::comment(std::string_view text) { out_ << "# " << text << '\n'; }

void CsvWriter::header(std::initializer_list<std::string_view> columns) {
  bool first = true;
  for (auto c : columns) write_cell(c, first);
  out_ << '\n';
}

void CsvWriter::header(const std::vector<std::string>& columns) {
  bool first = true;
  for (const auto& c : columns) write_cell(c, first);
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> cells) {
  bool first = true;
  for (double c : cells) write_cell(c, first);
  out_ << '\n';
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      table.header = split_line(line);
      have_header = true;
    } else {
      table.rows.push_back(split_line(line));
      if (table.rows.back().size() != table.header.size())
        throw FormatError("'" + path.string() + "': row width does not match header");
    }
  }
  if (!have_header) throw FormatError("'" + path.string() + "' has no header");
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << value.dump(2) << '\n';
}

void append_u32(std::string& buffer, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) buffer.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

void append_f32(std::string& buffer, float value) { append_u32(buffer, std::bit_cast<std::uint32_t>(value)); }

std::uint32_t read_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

float read_f32(std::string_view bytes, std::size_t offset) { return std::bit_cast<float>(read_u32(bytes, offset)); }

void write_f32_file(const std::filesystem::path& path, std::span<const double> values) {
  std::string buffer;
  buffer.reserve(values.size() * 4);
  for (double v : values) append_f32(buffer, static_cast<float>(v));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() % 4 != 0) throw FormatError("'" + path.string() + "': size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_f32(bytes, 4 * i);
  return out;
}

}  // namespace tsprobe::io
