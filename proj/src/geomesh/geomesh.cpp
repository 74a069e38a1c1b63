#include "occlume/geomesh/geomesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"

namespace occlume::geomesh {
namespace {

struct Token {
  std::string_view text;
  std::size_t line;
};

// Splits into whitespace-separated tokens, dropping `#` comments.
std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else {
      const std::size_t start = i;
      while (i < text.size() && text[i] != '\n' && text[i] != ' ' && text[i] != '\t' &&
             text[i] != '\r' && text[i] != '#') {
        ++i;
      }
      tokens.push_back({text.substr(start, i - start), line});
    }
  }
  return tokens;
}

class TokenCursor {
 public:
  explicit TokenCursor(std::vector<Token> tokens, std::size_t last_line)
      : tokens_(std::move(tokens)), last_line_(last_line) {}

  bool done() const { return pos_ >= tokens_.size(); }
  std::size_t line() const { return done() ? last_line_ : tokens_[pos_].line; }

  const Token& next(const char* what) {
    if (done()) throw ParseError(std::string("truncated file: expected ") + what, last_line_);
    return tokens_[pos_++];
  }

  void skip_rest_of_line(std::size_t line) {
    while (!done() && tokens_[pos_].line == line) ++pos_;
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t last_line_;
};

long long parse_count(const Token& tok, const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
  if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size() || v < 0) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(tok.text) + "'",
                     tok.line);
  }
  return v;
}

double parse_real(const Token& tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
  if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size() || !std::isfinite(v)) {
    throw ParseError("malformed coordinate '" + std::string(tok.text) + "'", tok.line);
  }
  return v;
}

}  // namespace

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

void Mesh::validate() const {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& tri = faces[f];
    for (auto idx : tri) {
      if (idx >= vertices.size()) {
        throw InvalidArgument("face " + std::to_string(f) + " index " + std::to_string(idx) +
                              " out of range");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw InvalidArgument("face " + std::to_string(f) + " has repeated indices");
    }
  }
}

Mesh parse_off(std::string_view text) {
  const std::size_t last_line =
      static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;
  TokenCursor cur(tokenize(text), last_line);

  const Token& magic = cur.next("OFF header");
  if (magic.text.substr(0, 3) != "OFF") {
    throw ParseError("missing OFF header", magic.line);
  }

  long long counts[3] = {0, 0, 0};
  std::size_t have = 0;
  if (magic.text.size() > 3) {
    // ModelNet40 quirk: "OFF490 552 0" glues the first count to the magic.
    Token rest{magic.text.substr(3), magic.line};
    counts[have++] = parse_count(rest, "vertex count");
  }
  while (have < 3) {
    const Token& t = cur.next("element counts");
    counts[have] = parse_count(t, have == 0 ? "vertex count" : have == 1 ? "face count"
                                                                          : "edge count");
    ++have;
  }

  Mesh mesh;
  const auto nv = static_cast<std::size_t>(counts[0]);
  const auto nf = static_cast<std::size_t>(counts[1]);
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const Token& x = cur.next("vertex coordinate");
    const Token& y = cur.next("vertex coordinate");
    const Token& z = cur.next("vertex coordinate");
    if (y.line != x.line || z.line != x.line) {
      throw ParseError("vertex " + std::to_string(i) + " needs 3 coordinates on one line", x.line);
    }
    mesh.vertices.emplace_back(parse_real(x), parse_real(y), parse_real(z));
    cur.skip_rest_of_line(x.line);
  }

  mesh.faces.reserve(nf);
  std::vector<std::uint32_t> poly;
  for (std::size_t f = 0; f < nf; ++f) {
    const Token& n_tok = cur.next("face");
    const long long n = parse_count(n_tok, "face arity");
    if (n < 3) throw ParseError("face with fewer than 3 vertices", n_tok.line);
    poly.clear();
    for (long long j = 0; j < n; ++j) {
      const Token& t = cur.next("face index");
      if (t.line != n_tok.line) {
        throw ParseError("face " + std::to_string(f) + " is missing indices", n_tok.line);
      }
      const long long idx = parse_count(t, "face index");
      if (static_cast<std::size_t>(idx) >= nv) {
        throw ParseError("face index " + std::to_string(idx) + " out of range (" +
                             std::to_string(nv) + " vertices)",
                         t.line);
      }
      poly.push_back(static_cast<std::uint32_t>(idx));
    }
    cur.skip_rest_of_line(n_tok.line);
    for (std::size_t j = 1; j + 1 < poly.size(); ++j) {
      const std::array<std::uint32_t, 3> tri{poly[0], poly[j], poly[j + 1]};
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
      mesh.faces.push_back(tri);
    }
  }
  return mesh;
}

std::string write_off(const Mesh& mesh) {
  std::string out = "OFF\n" + std::to_string(mesh.vertices.size()) + " " +
                    std::to_string(mesh.faces.size()) + " 0\n";
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out += buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "3 %u %u %u\n", f[0], f[1], f[2]);
    out += buf;
  }
  return out;
}

Mesh load_off(const std::string& path) {
  try {
    return parse_off(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
  if (pc.empty()) throw InvalidArgument("normalize_unit_sphere: empty point cloud");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : pc.points) centroid += p;
  centroid /= static_cast<double>(pc.size());
  double max_norm = 0.0;
  for (const auto& p : pc.points) max_norm = std::max(max_norm, (p - centroid).norm());
  const double scale = 1.0 / std::max(max_norm, 1e-12);
  PointCloud out;
  out.label = pc.label;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) out.points.push_back((p - centroid) * scale);
  return out;
}

PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  mesh.validate();
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidArgument("sample_surface: mesh has zero surface area");

  CounterRng rng(seed, "surface");
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    // Zero-area faces share their predecessor's cumulative value and are never hit.
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double s = std::sqrt(rng.uniform());
    const double r = rng.uniform();
    const double wa = 1.0 - s;
    const double wb = s * (1.0 - r);
    const double wc = s * r;
    out.points.push_back(wa * mesh.vertices[f[0]] + wb * mesh.vertices[f[1]] +
                         wc * mesh.vertices[f[2]]);
  }
  return out;
}

ClassCatalog::ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<int>(i)).second) {
      throw InvalidArgument("duplicate class name '" + names_[i] + "'");
    }
  }
}

const std::string& ClassCatalog::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw InvalidArgument("class id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

int ClassCatalog::id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw InvalidArgument("unknown class '" + name + "'");
  return it->second;
}

}  // namespace occlume::geomesh
