#include "occlume/occlusion/generate.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "occlume/common/error.hpp"
#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/geomesh/geomesh.hpp"
#include "occlume/sampling/sampling.hpp"

namespace fs = std::filesystem;

namespace occlume::occlusion {
namespace {

constexpr const char* kManifestMagic = "# occlume-manifest v1";
constexpr const char* kBuildStamp = ".build.cfg";

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::uint64_t parse_u64(std::string_view s, std::size_t line, const char* what, int base = 10) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

std::string view_suffix(std::size_t view) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "_v%02zu", view);
  return buf;
}

struct MeshEntry {
  std::string class_name;
  int class_id = 0;
  std::string sample_id;  // class/split/stem
  fs::path file;
  std::string cloud_stem;  // clouds/<class>/<split>_<stem>
};

std::vector<MeshEntry> discover_meshes(const fs::path& root, std::vector<std::string>& classes) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("mesh root is not a readable directory: " + root.string());
  classes.clear();
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());

  std::vector<MeshEntry> meshes;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root / classes[c])) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) {
        return static_cast<char>(std::tolower(ch));
      });
      if (ext == ".off") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const fs::path rel = fs::relative(f, root);
      MeshEntry m;
      m.class_name = classes[c];
      m.class_id = static_cast<int>(c);
      m.file = f;
      std::string flat;
      const fs::path inner = fs::relative(f.parent_path(), root / classes[c]);
      for (const auto& part : inner) {
        if (part == ".") continue;
        flat += part.string() + "_";
      }
      m.sample_id = (rel.parent_path() / f.stem()).generic_string();
      m.cloud_stem = (fs::path("clouds") / classes[c] / (flat + f.stem().string())).generic_string();
      meshes.push_back(std::move(m));
    }
  }
  return meshes;
}

bool existing_cloud_ok(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return false;
  const auto size = fs::file_size(path, ec);
  return !ec && size == 8 + expected * 12;
}

void write_atomically(const fs::path& path, const geomesh::PointCloud& pc) {
  fs::path tmp = path;
  tmp += ".tmp";
  geomesh::write_pcb(tmp, pc);
  fs::rename(tmp, path);
}

}  // namespace

void GenerationConfig::validate() const {
  intrinsics.validate();
  if (density == 0) throw InvalidArgument("generation config: density must be > 0");
  if (points == 0) throw InvalidArgument("generation config: points must be > 0");
  if (!(radius > 1.0)) throw InvalidArgument("generation config: camera must be outside the unit sphere");
}

GenerationConfig GenerationConfig::from_kv(const KvConfig& kv) {
  GenerationConfig c;
  c.density = static_cast<std::size_t>(kv.get_int("density", static_cast<std::int64_t>(c.density)));
  c.intrinsics.width = static_cast<int>(kv.get_int("width", c.intrinsics.width));
  c.intrinsics.height = static_cast<int>(kv.get_int("height", c.intrinsics.height));
  c.intrinsics.fx = kv.get_double("fx", c.intrinsics.fx);
  c.intrinsics.fy = kv.get_double("fy", c.intrinsics.fy);
  c.intrinsics.u0 = kv.get_double("u0", c.intrinsics.width / 2.0);
  c.intrinsics.v0 = kv.get_double("v0", c.intrinsics.height / 2.0);
  c.radius = kv.get_double("radius", c.radius);
  c.points = static_cast<std::size_t>(kv.get_int("points", static_cast<std::int64_t>(c.points)));
  c.min_pixels =
      static_cast<std::size_t>(kv.get_int("threshold", static_cast<std::int64_t>(c.min_pixels)));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

KvConfig GenerationConfig::to_kv() const {
  KvConfig kv;
  kv.set("density", static_cast<std::int64_t>(density));
  kv.set("width", static_cast<std::int64_t>(intrinsics.width));
  kv.set("height", static_cast<std::int64_t>(intrinsics.height));
  kv.set("fx", intrinsics.fx);
  kv.set("fy", intrinsics.fy);
  kv.set("u0", intrinsics.u0);
  kv.set("v0", intrinsics.v0);
  kv.set("radius", radius);
  kv.set("points", static_cast<std::int64_t>(points));
  kv.set("threshold", static_cast<std::int64_t>(min_pixels));
  kv.set("seed", static_cast<std::int64_t>(seed));
  return kv;
}

std::optional<PointCloud> occlude_cloud(const PointCloud& dense, const Extrinsics& view,
                                        const GenerationConfig& cfg, std::uint64_t seed) {
  const DepthMap dm = project_zbuffer(dense, view, cfg.intrinsics);
  if (dm.filled() < std::max<std::size_t>(cfg.min_pixels, 1)) return std::nullopt;
  PointCloud visible = reconstruct(dm, view, cfg.intrinsics);

  PointCloud out;
  out.label = dense.label;
  if (visible.size() >= cfg.points) {
    const auto sel = sampling::farthest_point_sample(visible.view(), cfg.points, 0);
    out.points = sampling::gather(visible.view(), sel);
  } else {
    out.points = visible.points;
    CounterRng rng(seed, "pad");
    while (out.size() < cfg.points) {
      out.points.push_back(visible.points[rng.below(visible.size())]);
    }
  }
  return out;
}

std::optional<PointCloud> make_occluded(const Mesh& mesh, const Extrinsics& view,
                                        const GenerationConfig& cfg, std::uint64_t seed) {
  PointCloud dense;
  try {
    dense = geomesh::sample_surface(mesh, cfg.density, derive_seed(seed, "dense"));
  } catch (const InvalidArgument&) {
    return std::nullopt;  // no surface to see
  }
  return occlude_cloud(geomesh::normalize_unit_sphere(dense), view, cfg, seed);
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [s](const auto& r) { return r.split == s; }));
}

std::string DatasetManifest::serialize() const {
  std::string out = std::string(kManifestMagic) + "\n";
  out += "# cfg_hash=" + hex64(cfg_hash) + "\n";
  out += "# seed=" + std::to_string(seed) + "\n";
  out += "# skipped=" + std::to_string(skipped) + "\n";
  out += "# classes=";
  for (std::size_t i = 0; i < classes.size(); ++i) out += (i ? "," : "") + classes[i];
  out += "\n";
  for (const auto& r : records) {
    out += r.sample_id + "\t" + std::to_string(r.class_id) + "\t" + std::to_string(r.view) +
           "\t" + split_name(r.split) + "\t" + r.path + "\t" + std::to_string(r.count) + "\n";
  }
  return out;
}

DatasetManifest DatasetManifest::parse(std::string_view text) {
  DatasetManifest m;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_magic = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line == kManifestMagic) {
        saw_magic = true;
      } else if (line.starts_with("# cfg_hash=")) {
        m.cfg_hash = parse_u64(line.substr(11), line_no, "cfg hash", 16);
      } else if (line.starts_with("# seed=")) {
        m.seed = parse_u64(line.substr(7), line_no, "seed");
      } else if (line.starts_with("# skipped=")) {
        m.skipped = parse_u64(line.substr(10), line_no, "skip count");
      } else if (line.starts_with("# classes=")) {
        std::string names(line.substr(10));
        std::istringstream in(names);
        std::string item;
        while (std::getline(in, item, ',')) m.classes.push_back(item);
      }
      continue;
    }
    if (!saw_magic) throw ParseError("missing manifest header", line_no);
    const auto cols = split_tabs(line);
    if (cols.size() != 6) throw ParseError("expected 6 tab-separated columns", line_no);
    ManifestRecord r;
    r.sample_id = std::string(cols[0]);
    r.class_id = static_cast<int>(parse_u64(cols[1], line_no, "class id"));
    r.view = parse_u64(cols[2], line_no, "view index");
    try {
      r.split = parse_split(std::string(cols[3]));
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
    r.path = std::string(cols[4]);
    r.count = parse_u64(cols[5], line_no, "point count");
    if (!m.classes.empty() && static_cast<std::size_t>(r.class_id) >= m.classes.size()) {
      throw ParseError("class id out of range", line_no);
    }
    m.records.push_back(std::move(r));
  }
  if (!saw_magic) throw ParseError("missing manifest header");
  return m;
}

void DatasetManifest::save(const fs::path& path) const { geomesh::write_file(path, serialize()); }

DatasetManifest DatasetManifest::load(const fs::path& path) {
  return parse(geomesh::read_file(path));
}

void DatasetManifest::verify(const fs::path& root) const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.path).second) throw Error("manifest lists " + r.path + " twice");
    if (split_for_view(r.view) != r.split) {
      throw Error("manifest record " + r.path + " violates the view-parity split");
    }
    const auto pc = geomesh::read_pcb(root / r.path);
    if (pc.size() != r.count) {
      throw Error("manifest record " + r.path + " declares " + std::to_string(r.count) +
                  " points, file has " + std::to_string(pc.size()));
    }
  }
}

BuildReport build_dataset(const fs::path& mesh_root, const fs::path& out_dir,
                          const GenerationConfig& cfg) {
  cfg.validate();
  std::vector<std::string> classes;
  const auto meshes = discover_meshes(mesh_root, classes);
  const ViewRig rig = dodecahedron_rig(cfg.radius);
  const KvConfig cfg_kv = cfg.to_kv();
  const std::uint64_t cfg_hash = cfg_kv.hash();

  fs::create_directories(out_dir);
  const fs::path stamp = out_dir / kBuildStamp;
  bool resumable = false;
  if (fs::exists(stamp)) {
    resumable = geomesh::read_file(stamp) == cfg_kv.to_string();
  }
  geomesh::write_file(stamp, cfg_kv.to_string());

  struct ViewOutcome {
    bool written = false;
    bool reused = false;
  };
  std::vector<std::vector<ViewOutcome>> outcomes(meshes.size(),
                                                 std::vector<ViewOutcome>(rig.size()));
  std::vector<std::exception_ptr> errors(meshes.size());

  parallel_for(meshes.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        const auto& entry = meshes[i];
        const std::uint64_t mesh_seed = derive_seed(cfg.seed, "mesh", fnv1a(entry.sample_id));
        std::optional<PointCloud> dense;
        for (std::size_t v = 0; v < rig.size(); ++v) {
          const fs::path path = out_dir / (entry.cloud_stem + view_suffix(v + 1) + ".pcb");
          if (resumable && existing_cloud_ok(path, cfg.points)) {
            outcomes[i][v] = {true, true};
            continue;
          }
          if (!dense) {
            const Mesh mesh = geomesh::load_off(entry.file.string());
            try {
              dense = geomesh::normalize_unit_sphere(geomesh::sample_surface(
                  mesh, cfg.density, derive_seed(mesh_seed, "dense")));
            } catch (const InvalidArgument&) {
              dense = PointCloud{};  // zero-area mesh: every view is unprojectable
            }
          }
          std::optional<PointCloud> cloud;
          if (!dense->empty()) {
            cloud = occlude_cloud(*dense, rig.views[v], cfg, derive_seed(mesh_seed, "view", v + 1));
          }
          if (cloud) {
            write_atomically(path, *cloud);
            outcomes[i][v].written = true;
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BuildReport report;
  auto& manifest = report.manifest;
  manifest.cfg_hash = cfg_hash;
  manifest.seed = cfg.seed;
  manifest.classes = classes;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    for (std::size_t v = 0; v < rig.size(); ++v) {
      const std::size_t view = v + 1;
      if (!outcomes[i][v].written) {
        report.skipped.push_back({meshes[i].sample_id, view});
        continue;
      }
      report.reused += outcomes[i][v].reused ? 1 : 0;
      ManifestRecord r;
      r.sample_id = meshes[i].sample_id;
      r.class_id = meshes[i].class_id;
      r.view = view;
      r.split = split_for_view(view);
      r.path = meshes[i].cloud_stem + view_suffix(view) + ".pcb";
      r.count = cfg.points;
      manifest.records.push_back(std::move(r));
    }
  }
  manifest.skipped = report.skipped.size();
  manifest.save(out_dir / "manifest.tsv");
  return report;
}

}  // namespace occlume::occlusion
