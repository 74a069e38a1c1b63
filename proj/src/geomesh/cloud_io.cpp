#include "occlume/geomesh/cloud_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "occlume/common/error.hpp"

namespace occlume::geomesh {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

void put_f32(std::string& out, double value) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

float get_f32(std::string_view bytes, std::size_t offset) {
  return std::bit_cast<float>(get_u32(bytes, offset));
}

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line_no = 0;

  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  }
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_number(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("malformed number '" + std::string(tok) + "'", line);
  }
  return v;
}

float parse_float(std::string_view tok, std::size_t line) {
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("malformed number '" + std::string(tok) + "'", line);
  }
  return v;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::string encode_pcb(const PointCloud& pc) {
  std::string out = "PCB1";
  out.reserve(8 + pc.size() * 12);
  put_u32(out, static_cast<std::uint32_t>(pc.size()));
  for (const auto& p : pc.points) {
    put_f32(out, p.x());
    put_f32(out, p.y());
    put_f32(out, p.z());
  }
  return out;
}

PointCloud decode_pcb(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != "PCB1") {
    throw ParseError("not a PCB1 point cloud");
  }
  const std::uint32_t count = get_u32(bytes, 4);
  if (bytes.size() != 8 + static_cast<std::size_t>(count) * 12) {
    throw ParseError("PCB1 size mismatch: header declares " + std::to_string(count) + " points");
  }
  PointCloud pc;
  pc.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = 8 + i * 12;
    pc.points.emplace_back(get_f32(bytes, off), get_f32(bytes, off + 4), get_f32(bytes, off + 8));
  }
  return pc;
}

void write_pcb(const std::filesystem::path& path, const PointCloud& pc) {
  write_file(path, encode_pcb(pc));
}

PointCloud read_pcb(const std::filesystem::path& path) { return decode_pcb(read_file(path)); }

std::string encode_xyz(const PointCloud& pc) {
  std::string out;
  char buf[96];
  for (const auto& p : pc.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  return out;
}

PointCloud decode_xyz(std::string_view text) {
  PointCloud pc;
  LineReader reader{text};
  std::string_view line;
  while (reader.next(line)) {
    auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    if (toks.size() < 3) throw ParseError("expected 'x y z'", reader.line_no);
    pc.points.emplace_back(parse_number(toks[0], reader.line_no), parse_number(toks[1], reader.line_no),
                           parse_number(toks[2], reader.line_no));
  }
  return pc;
}

void write_xyz(const std::filesystem::path& path, const PointCloud& pc) {
  write_file(path, encode_xyz(pc));
}

PointCloud read_xyz(const std::filesystem::path& path) { return decode_xyz(read_file(path)); }

std::string encode_ply(const PointCloud& pc) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(pc.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[96];
  for (const auto& p : pc.points) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(p.x())),
                  static_cast<double>(static_cast<float>(p.y())),
                  static_cast<double>(static_cast<float>(p.z())));
    out += buf;
  }
  return out;
}

PointCloud decode_ply(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  if (!reader.next(line) || line != "ply") throw ParseError("missing 'ply' magic", 1);
  std::size_t vertex_count = 0;
  std::size_t property_count = 0;
  bool single_precision = false;
  bool in_vertex = false;
  bool header_done = false;
  while (reader.next(line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") {
        throw ParseError("only ASCII PLY is supported", reader.line_no);
      }
    } else if (toks[0] == "element") {
      in_vertex = toks.size() >= 3 && toks[1] == "vertex";
      if (in_vertex) {
        vertex_count = static_cast<std::size_t>(parse_number(toks[2], reader.line_no));
      }
    } else if (toks[0] == "property") {
      if (in_vertex && property_count++ == 0) {
        single_precision = toks.size() >= 2 && (toks[1] == "float" || toks[1] == "float32");
      }
    } else if (toks[0] == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError("truncated PLY header", reader.line_no);
  if (vertex_count > 0 && property_count < 3) {
    throw ParseError("PLY vertex element needs x y z", reader.line_no);
  }
  PointCloud pc;
  pc.points.reserve(vertex_count);
  while (pc.size() < vertex_count) {
    if (!reader.next(line)) throw ParseError("truncated PLY body", reader.line_no + 1);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 3) throw ParseError("expected 'x y z'", reader.line_no);
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      p[k] = single_precision ? parse_float(toks[k], reader.line_no) : parse_number(toks[k], reader.line_no);
    }
    pc.points.push_back(p);
  }
  return pc;
}

void write_ply(const std::filesystem::path& path, const PointCloud& pc) {
  write_file(path, encode_ply(pc));
}

PointCloud read_ply(const std::filesystem::path& path) { return decode_ply(read_file(path)); }

}  // namespace occlume::geomesh
