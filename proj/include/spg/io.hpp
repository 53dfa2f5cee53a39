#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spg/errors.hpp"
#include "spg/generation.hpp"
#include "spg/geometry.hpp"
#include "spg/network.hpp"
#include "spg/supervision.hpp"

// On-disk formats. All binary values are little-endian.
//
// Cloud file (.spgc)
//   "SPGC" | u16 version=1 | u16 prop_count F | u8 has_confidence |
//   u64 point_count | u64 semantic_boundary | point_count * (3+F[+1]) f32
//
// Targets file (.spgt)
//   "SPGT" | u16 version=1 | grid: 3 f64 origin, 3 f64 voxel size, 3 i64 dims |
//   u8 area mode | i32 radius | u16 F | u64 voxel count |
//   per voxel: i64 index, u8 y_f, u8 category, u8 hidden, u8 valid, 3 f64 chi, F f64 f |
//   u64 hidden count | hidden i64 indices | embedded cloud file (post-hiding cloud)
//
// Checkpoint (.spgk)
//   "SPGK" | u16 version=1 | u64 step | u32 tensor count |
//   per tensor: u16 name length, name bytes, u16 rank, rank * u32 dims, numel f32

namespace spg::io {

namespace fs = std::filesystem;

inline constexpr std::uint16_t kFormatVersion = 1;

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void magic(const char (&m)[5]) { bytes(m, 4); }

  template <typename U>
  void uint(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(U));
  }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw DataError("unexpected end of file");
  }
  void expect_magic(const char (&m)[5]) {
    char buf[4];
    bytes(buf, 4);
    if (std::memcmp(buf, m, 4) != 0) throw DataError(std::string("bad magic, expected ") + m);
  }

  template <typename U>
  U uint() {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

 private:
  std::istream& is_;
};

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return is;
}

inline void check_version(std::uint16_t v, const char* what) {
  if (v != kFormatVersion) throw DataError(std::string("unsupported ") + what + " version " + std::to_string(v));
}

}  // namespace detail

/// In-memory image of a cloud file. `points` carries every stored channel,
/// including the confidence channel when present.
struct CloudFile {
  PointCloud points;
  std::uint16_t prop_count = 0;
  bool has_confidence = false;
  std::uint64_t semantic_boundary = 0;

  static CloudFile plain(const PointCloud& cloud) {
    return {cloud, static_cast<std::uint16_t>(cloud.prop_count()), false, cloud.size()};
  }
  static CloudFile augmented(const AugmentedCloud& aug) {
    return {aug.points(), static_cast<std::uint16_t>(aug.source_prop_count()), aug.has_confidence(),
            aug.semantic_begin()};
  }
  AugmentedCloud to_augmented() const {
    return AugmentedCloud(points, static_cast<std::size_t>(semantic_boundary), has_confidence);
  }

  friend bool operator==(const CloudFile&, const CloudFile&) = default;
};

inline void write_cloud(std::ostream& os, const CloudFile& f) {
  if (f.points.prop_count() != f.prop_count + (f.has_confidence ? 1u : 0u)) throw InvariantError("cloud channel count");
  if (f.semantic_boundary > f.points.size()) throw InvariantError("semantic boundary beyond point count");
  detail::Writer w(os);
  w.magic("SPGC");
  w.uint<std::uint16_t>(kFormatVersion);
  w.uint<std::uint16_t>(f.prop_count);
  w.uint<std::uint8_t>(f.has_confidence ? 1 : 0);
  w.uint<std::uint64_t>(f.points.size());
  w.uint<std::uint64_t>(f.semantic_boundary);
  for (float v : f.points.values()) w.f32(v);
}

inline CloudFile read_cloud(std::istream& is) {
  detail::Reader r(is);
  r.expect_magic("SPGC");
  detail::check_version(r.uint<std::uint16_t>(), "cloud file");
  CloudFile f;
  f.prop_count = r.uint<std::uint16_t>();
  const auto conf = r.uint<std::uint8_t>();
  if (conf > 1) throw DataError("bad confidence flag");
  f.has_confidence = conf == 1;
  const auto n = r.uint<std::uint64_t>();
  f.semantic_boundary = r.uint<std::uint64_t>();
  if (f.semantic_boundary > n) throw DataError("semantic boundary beyond point count");
  const std::size_t stride = 3 + f.prop_count + (f.has_confidence ? 1 : 0);
  f.points = PointCloud(stride - 3);
  std::vector<float> rec(stride);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (auto& v : rec) v = r.f32();
    f.points.push_record(rec);
  }
  return f;
}

inline void save_cloud(const fs::path& path, const CloudFile& f) {
  auto os = detail::open_out(path);
  write_cloud(os, f);
  if (!os) throw DataError("write failed: " + path.string());
}

inline CloudFile load_cloud(const fs::path& path) {
  auto is = detail::open_in(path);
  return read_cloud(is);
}

// ---------------------------------------------------------------------------
// Scene files

inline nlohmann::json box_to_json(const OrientedBox& b) {
  return {{"cx", b.cx},       {"cy", b.cy},         {"cz", b.cz},   {"length", b.length},
          {"width", b.width}, {"height", b.height}, {"yaw", b.yaw}, {"class_id", b.class_id}};
}

inline OrientedBox box_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("box must be an object");
  static const char* kKeys[] = {"cx", "cy", "cz", "length", "width", "height", "yaw", "class_id"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* s) { return k == s; }) == std::end(kKeys)) {
      throw DataError("unknown box field '" + k + "'");
    }
  }
  auto num = [&](const char* k) {
    if (!j.contains(k) || !j.at(k).is_number()) throw DataError(std::string("box field '") + k + "' must be a number");
    return j.at(k).get<double>();
  };
  OrientedBox b{num("cx"), num("cy"), num("cz"), num("length"), num("width"), num("height"), num("yaw"), 0};
  if (!j.contains("class_id") || !j.at("class_id").is_number_integer()) throw DataError("box class_id must be an integer");
  b.class_id = j.at("class_id").get<int>();
  b.validate();
  return b;
}

/// Writes `<json_path>` plus the cloud next to it as `<stem>.spgc`.
inline void save_scene(const fs::path& json_path, const Scene& scene) {
  const fs::path cloud_name = json_path.stem().string() + ".spgc";
  save_cloud(json_path.parent_path() / cloud_name, CloudFile::plain(scene.cloud));
  nlohmann::json j;
  j["cloud"] = cloud_name.string();
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : scene.boxes) j["boxes"].push_back(box_to_json(b));
  j["meta"] = scene.meta;
  auto os = detail::open_out(json_path);
  os << j.dump(2) << '\n';
  if (!os) throw DataError("write failed: " + json_path.string());
}

inline Scene load_scene(const fs::path& json_path) {
  auto is = detail::open_in(json_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(json_path.string() + ": scene must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "cloud" && k != "boxes" && k != "meta") throw DataError(json_path.string() + ": unknown field '" + k + "'");
  }
  if (!j.contains("cloud") || !j["cloud"].is_string()) throw DataError(json_path.string() + ": 'cloud' must be a path");
  if (!j.contains("boxes") || !j["boxes"].is_array()) throw DataError(json_path.string() + ": 'boxes' must be an array");
  Scene s;
  fs::path cloud_path = j["cloud"].get<std::string>();
  if (cloud_path.is_relative()) cloud_path = json_path.parent_path() / cloud_path;
  auto cf = load_cloud(cloud_path);
  if (cf.has_confidence) throw DataError(cloud_path.string() + ": scene clouds carry no confidence channel");
  s.cloud = std::move(cf.points);
  for (const auto& b : j["boxes"]) s.boxes.push_back(box_from_json(b));
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw DataError(json_path.string() + ": 'meta' must be an object");
    for (const auto& [k, v] : j["meta"].items()) {
      if (!v.is_string()) throw DataError(json_path.string() + ": meta values must be strings");
      s.meta[k] = v.get<std::string>();
    }
  }
  return s;
}

/// Scene JSON files in a directory (sorted), or the single file given.
inline std::vector<fs::path> list_scenes(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else if (fs::is_regular_file(p)) {
    out.push_back(p);
  } else {
    throw DataError("no such scene file or directory: " + p.string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Supervision targets

inline void write_targets(std::ostream& os, const SupervisionTargets& t) {
  detail::Writer w(os);
  w.magic("SPGT");
  w.uint<std::uint16_t>(kFormatVersion);
  for (double v : {t.spec.origin.x, t.spec.origin.y, t.spec.origin.z}) w.f64(v);
  for (double v : {t.spec.voxel_size.x, t.spec.voxel_size.y, t.spec.voxel_size.z}) w.f64(v);
  for (auto d : t.spec.dims) w.i64(d);
  w.uint<std::uint8_t>(t.area.mode == AreaMode::kVoxel3d ? 0 : 1);
  w.i32(t.area.radius);
  const std::size_t F = t.observed.prop_count();
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(F));
  w.uint<std::uint64_t>(t.voxels.size());
  for (const auto& v : t.voxels) {
    w.i64(v.voxel);
    w.uint<std::uint8_t>(v.y_f);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(v.category));
    w.uint<std::uint8_t>(v.hidden);
    w.uint<std::uint8_t>(v.target.valid);
    w.f64(v.target.chi_bar.x);
    w.f64(v.target.chi_bar.y);
    w.f64(v.target.chi_bar.z);
    for (std::size_t k = 0; k < F; ++k) w.f64(v.target.valid ? v.target.f_bar.at(k) : 0.0);
  }
  w.uint<std::uint64_t>(t.hidden.size());
  for (auto h : t.hidden) w.i64(h);
  write_cloud(os, CloudFile::plain(t.observed));
}

inline SupervisionTargets read_targets(std::istream& is) {
  detail::Reader r(is);
  r.expect_magic("SPGT");
  detail::check_version(r.uint<std::uint16_t>(), "targets file");
  SupervisionTargets t;
  t.spec.origin = {r.f64(), r.f64(), r.f64()};
  t.spec.voxel_size = {r.f64(), r.f64(), r.f64()};
  for (auto& d : t.spec.dims) d = r.i64();
  t.spec.validate();
  const auto mode = r.uint<std::uint8_t>();
  if (mode > 1) throw DataError("bad area mode");
  t.area.mode = mode == 0 ? AreaMode::kVoxel3d : AreaMode::kBev2d;
  t.area.radius = r.i32();
  const std::size_t F = r.uint<std::uint16_t>();
  const auto n = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    VoxelTarget v;
    v.voxel = r.i64();
    v.y_f = r.uint<std::uint8_t>() != 0;
    const auto cat = r.uint<std::uint8_t>();
    if (cat > 3) throw DataError("bad voxel category");
    v.category = static_cast<VoxelCategory>(cat);
    v.hidden = r.uint<std::uint8_t>() != 0;
    v.target.valid = r.uint<std::uint8_t>() != 0;
    v.target.chi_bar = {r.f64(), r.f64(), r.f64()};
    std::vector<double> f(F);
    for (auto& x : f) x = r.f64();
    if (v.target.valid) v.target.f_bar = std::move(f);
    t.area.voxels.push_back(v.voxel);
    t.voxels.push_back(std::move(v));
  }
  const auto nh = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < nh; ++i) t.hidden.push_back(r.i64());
  auto cf = read_cloud(is);
  if (cf.has_confidence || cf.prop_count != F) throw DataError("targets file: embedded cloud mismatch");
  t.observed = std::move(cf.points);
  return t;
}

inline void save_targets(const fs::path& path, const SupervisionTargets& t) {
  auto os = detail::open_out(path);
  write_targets(os, t);
  if (!os) throw DataError("write failed: " + path.string());
}

inline SupervisionTargets load_targets(const fs::path& path) {
  auto is = detail::open_in(path);
  return read_targets(is);
}

// ---------------------------------------------------------------------------
// Checkpoints

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  detail::Writer w(os);
  w.magic("SPGK");
  w.uint<std::uint16_t>(kFormatVersion);
  w.uint<std::uint64_t>(c.step);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (shape_numel(t.shape) != t.values.size()) throw InvariantError("checkpoint tensor " + t.name + " size");
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(t.shape.size()));
    for (auto d : t.shape) w.uint<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::Reader r(is);
  r.expect_magic("SPGK");
  detail::check_version(r.uint<std::uint16_t>(), "checkpoint");
  Checkpoint c;
  c.step = r.uint<std::uint64_t>();
  const auto n = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name.resize(r.uint<std::uint16_t>());
    r.bytes(t.name.data(), t.name.size());
    const auto rank = r.uint<std::uint16_t>();
    for (std::uint16_t k = 0; k < rank; ++k) t.shape.push_back(r.uint<std::uint32_t>());
    t.values.resize(shape_numel(t.shape));
    for (auto& v : t.values) v = r.f32();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  auto os = detail::open_out(path);
  write_checkpoint(os, c);
  if (!os) throw DataError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  auto is = detail::open_in(path);
  return read_checkpoint(is);
}

template <typename T>
void append_tensors(Checkpoint& c, const std::vector<std::pair<std::string, Tensor<T>>>& named, const std::string& prefix = "") {
  for (const auto& [name, t] : named) {
    NamedTensor nt{prefix + name, t.shape(), {}};
    nt.values.reserve(t.numel());
    for (auto v : t.data()) nt.values.push_back(static_cast<float>(v));
    c.tensors.push_back(std::move(nt));
  }
}

/// Copies checkpoint values into same-named tensors; shapes must match.
template <typename T>
void restore_tensors(const Checkpoint& c, std::vector<std::pair<std::string, Tensor<T>>>& named,
                     const std::string& prefix = "") {
  for (auto& [name, t] : named) {
    const auto* nt = c.find(prefix + name);
    if (!nt) throw DataError("checkpoint lacks tensor " + prefix + name);
    if (nt->shape != t.shape()) {
      throw DataError("checkpoint tensor " + prefix + name + " has shape " + shape_str(nt->shape) + ", model expects " +
                      shape_str(t.shape()));
    }
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(nt->values[i]);
  }
}

// ---------------------------------------------------------------------------
// PLY export for viewing

/// Binary little-endian PLY with x y z confidence and an RGB colour:
/// original points grey, semantic points shading from yellow to red with confidence.
inline void write_ply(std::ostream& os, const AugmentedCloud& aug) {
  const auto& pts = aug.points();
  os << "ply\nformat binary_little_endian 1.0\n"
     << "comment semantic points start at index " << aug.semantic_begin() << "\n"
     << "element vertex " << pts.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\nproperty float confidence\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  detail::Writer w(os);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool semantic = i >= aug.semantic_begin();
    const float conf = aug.has_confidence() ? pts.prop(i, pts.prop_count() - 1) : (semantic ? 0.5f : 1.0f);
    w.f32(pts.x(i));
    w.f32(pts.y(i));
    w.f32(pts.z(i));
    w.f32(conf);
    if (semantic) {
      const float t = std::clamp((1.0f - conf) * 2.0f, 0.0f, 1.0f);
      const auto g = static_cast<std::uint8_t>(200.0f * t);
      w.uint<std::uint8_t>(255);
      w.uint<std::uint8_t>(g);
      w.uint<std::uint8_t>(0);
    } else {
      w.uint<std::uint8_t>(160);
      w.uint<std::uint8_t>(160);
      w.uint<std::uint8_t>(160);
    }
  }
}

inline void save_ply(const fs::path& path, const AugmentedCloud& aug) {
  auto os = detail::open_out(path);
  write_ply(os, aug);
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace spg::io
