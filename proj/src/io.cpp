#include "seedsplat/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace seedsplat {

namespace {

void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

struct FileCloser {
  std::FILE* fp = nullptr;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

}  // namespace

Image read_png(const std::string& path) {
  FileCloser file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (!file.fp) throw DataError("cannot open image: " + path);

  unsigned char header[8];
  if (std::fread(header, 1, 8, file.fp) != 8 || png_sig_cmp(header, 0, 8))
    throw DataError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("failed to initialize PNG reader: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("failed to initialize PNG reader: " + path);
  }

  // libpng reports errors via longjmp back to this point.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG: " + path);
  }

  png_init_io(png, file.fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  // Normalize every input to 8-bit RGB.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG layout: " + path);
  }

  std::vector<unsigned char> row(width * 3);
  Image image(static_cast<int>(width), static_cast<int>(height));
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(static_cast<int>(y), static_cast<int>(x), c) = row[x * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::string& path, const Image& image) {
  if (image.width <= 0 || image.height <= 0)
    throw DataError("cannot write empty image: " + path);
  ensure_parent_dir(path);

  FileCloser file;
  file.fp = std::fopen(path.c_str(), "wb");
  if (!file.fp) throw DataError("cannot open image for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("failed to initialize PNG writer: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("failed to initialize PNG writer: " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG: " + path);
  }

  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

// Scalar PLY property sizes; list properties are not supported.
int ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
      type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double ply_read_scalar(const char* bytes, const std::string& type) {
  auto load = [&](auto value) {
    std::memcpy(&value, bytes, sizeof(value));
    return static_cast<double>(value);
  };
  if (type == "char" || type == "int8") return load(int8_t{});
  if (type == "uchar" || type == "uint8") return load(uint8_t{});
  if (type == "short" || type == "int16") return load(int16_t{});
  if (type == "ushort" || type == "uint16") return load(uint16_t{});
  if (type == "int" || type == "int32") return load(int32_t{});
  if (type == "uint" || type == "uint32") return load(uint32_t{});
  if (type == "float" || type == "float32") return load(float{});
  return load(double{});
}

}  // namespace

std::vector<Vec3> read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open point cloud: " + path);

  auto fail = [&](const std::string& what) -> DataError {
    return DataError(what + ": " + path);
  };

  std::string line;
  if (!std::getline(in, line)) throw fail("empty PLY file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw fail("not a PLY file");

  bool binary = false;
  bool format_seen = false;
  long vertex_count = -1;
  std::vector<std::pair<std::string, std::string>> properties;  // (type, name)
  bool in_vertex_element = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word.empty()) continue;
    if (word == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw fail("unsupported PLY format '" + fmt + "'");
      format_seen = true;
    } else if (word == "element") {
      std::string name;
      long count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        vertex_count = count;
        in_vertex_element = true;
      } else {
        if (vertex_count < 0) throw fail("PLY element '" + name + "' precedes vertices");
        in_vertex_element = false;
      }
    } else if (word == "property") {
      if (!in_vertex_element) continue;  // properties of trailing elements are never read
      std::string type, name;
      ls >> type;
      if (type == "list") throw fail("PLY list properties on vertices are unsupported");
      ls >> name;
      if (ply_type_size(type) == 0) throw fail("unknown PLY property type '" + type + "'");
      properties.emplace_back(type, name);
    } else if (word == "end_header") {
      break;
    } else {
      throw fail("unexpected PLY header line '" + line + "'");
    }
  }
  if (!format_seen) throw fail("PLY header is missing the format line");
  if (vertex_count < 0) throw fail("PLY header is missing the vertex element");
  if (vertex_count == 0) throw fail("empty point cloud");

  int ix = -1, iy = -1, iz = -1;
  for (size_t p = 0; p < properties.size(); ++p) {
    if (properties[p].second == "x") ix = static_cast<int>(p);
    if (properties[p].second == "y") iy = static_cast<int>(p);
    if (properties[p].second == "z") iz = static_cast<int>(p);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw fail("PLY vertices lack x/y/z properties");

  std::vector<Vec3> points;
  points.reserve(static_cast<size_t>(vertex_count));
  if (binary) {
    size_t stride = 0;
    std::vector<size_t> offsets(properties.size());
    for (size_t p = 0; p < properties.size(); ++p) {
      offsets[p] = stride;
      stride += static_cast<size_t>(ply_type_size(properties[p].first));
    }
    std::vector<char> record(stride);
    for (long v = 0; v < vertex_count; ++v) {
      if (!in.read(record.data(), static_cast<std::streamsize>(stride)))
        throw fail("truncated PLY vertex data");
      Vec3 pt(ply_read_scalar(record.data() + offsets[ix], properties[ix].first),
              ply_read_scalar(record.data() + offsets[iy], properties[iy].first),
              ply_read_scalar(record.data() + offsets[iz], properties[iz].first));
      points.push_back(pt);
    }
  } else {
    for (long v = 0; v < vertex_count; ++v) {
      if (!std::getline(in, line)) throw fail("truncated PLY vertex data");
      std::istringstream ls(line);
      std::vector<double> values(properties.size());
      for (size_t p = 0; p < properties.size(); ++p)
        if (!(ls >> values[p])) throw fail("malformed PLY vertex line");
      points.push_back(Vec3(values[ix], values[iy], values[iz]));
    }
  }
  return points;
}

void write_ply(const std::string& path, const std::vector<Vec3>& points) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open point cloud for writing: " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Vec3& p : points) {
    float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                    static_cast<float>(p.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  out.flush();
  if (!out) throw DataError("failed to write point cloud: " + path);
}

std::vector<Camera> read_cameras_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cameras file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse cameras file " + path + ": " + e.what());
  }
  if (!doc.is_array() || doc.empty())
    throw DataError("cameras file must be a non-empty array: " + path);

  std::vector<Camera> cameras;
  std::map<std::string, bool> seen;
  for (size_t i = 0; i < doc.size(); ++i) {
    const nlohmann::json& entry = doc[i];
    std::string where = "camera " + std::to_string(i) + " in " + path;
    try {
      Camera cam;
      cam.id = entry.at("id").get<std::string>();
      if (!cam.id.empty()) where = "camera '" + cam.id + "' in " + path;
      cam.width = entry.at("width").get<int>();
      cam.height = entry.at("height").get<int>();
      cam.fx = entry.at("fx").get<double>();
      cam.fy = entry.at("fy").get<double>();
      cam.cx = entry.at("cx").get<double>();
      cam.cy = entry.at("cy").get<double>();
      const auto& r = entry.at("R");
      const auto& t = entry.at("t");
      if (!r.is_array() || r.size() != 9)
        throw DataError("R must have 9 row-major entries: " + where);
      if (!t.is_array() || t.size() != 3) throw DataError("t must have 3 entries: " + where);
      for (int k = 0; k < 9; ++k) cam.rotation(k / 3, k % 3) = r[k].get<double>();
      for (int k = 0; k < 3; ++k) cam.translation(k) = t[k].get<double>();
      if (entry.contains("split")) cam.split = entry.at("split").get<std::string>();

      if (cam.id.empty()) throw DataError("camera id must be non-empty: " + where);
      if (cam.width <= 0 || cam.height <= 0)
        throw DataError("image dimensions must be positive: " + where);
      if (!(cam.fx > 0) || !(cam.fy > 0))
        throw DataError("focal lengths must be positive: " + where);
      if (!std::isfinite(cam.cx) || !std::isfinite(cam.cy))
        throw DataError("principal point must be finite: " + where);
      if (cam.split != "train" && cam.split != "test")
        throw DataError("split must be 'train' or 'test': " + where);
      cam.validate();
      if (seen.count(cam.id)) throw DataError("duplicate camera id '" + cam.id + "': " + path);
      seen[cam.id] = true;
      cameras.push_back(std::move(cam));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("invalid " + where + ": " + e.what());
    } catch (const DataError& e) {
      std::string msg = e.what();
      if (msg.find(path) == std::string::npos) msg += " (" + where + ")";
      throw DataError(msg);
    }
  }
  return cameras;
}

void write_cameras_json(const std::string& path, const std::vector<Camera>& cameras) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const Camera& cam : cameras) {
    nlohmann::ordered_json entry;
    entry["id"] = cam.id;
    entry["width"] = cam.width;
    entry["height"] = cam.height;
    entry["fx"] = cam.fx;
    entry["fy"] = cam.fy;
    entry["cx"] = cam.cx;
    entry["cy"] = cam.cy;
    std::vector<double> r(9), t(3);
    for (int k = 0; k < 9; ++k) r[k] = cam.rotation(k / 3, k % 3);
    for (int k = 0; k < 3; ++k) t[k] = cam.translation(k);
    entry["R"] = r;
    entry["t"] = t;
    entry["split"] = cam.split;
    doc.push_back(std::move(entry));
  }
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open cameras file for writing: " + path);
  out << doc.dump(2) << "\n";
  out.flush();
  if (!out) throw DataError("failed to write cameras file: " + path);
}

namespace {

// Parses a non-negative integer file stem like "7" or "0007"; -1 otherwise.
long parse_index(const std::string& stem) {
  if (stem.empty() || stem.size() > 9) return -1;
  long value = 0;
  for (char c : stem) {
    if (c < '0' || c > '9') return -1;
    value = value * 10 + (c - '0');
  }
  return value;
}

}  // namespace

std::vector<int> FrameDataset::camera_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < cameras.size(); ++i)
    if (cameras[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

Image FrameDataset::load_frame(int camera_index, int frame_index) const {
  if (camera_index < 0 || camera_index >= static_cast<int>(cameras.size()))
    throw DataError("camera index out of range: " + std::to_string(camera_index));
  if (frame_index < 0 || frame_index >= frame_count)
    throw DataError("frame index out of range: " + std::to_string(frame_index));
  return read_png(image_paths[camera_index][frame_index]);
}

FrameDataset load_dataset(const std::string& root) {
  FrameDataset ds;
  ds.root = root;

  fs::path cameras_path = fs::path(root) / "cameras.json";
  if (!fs::exists(cameras_path))
    throw DataError("missing cameras file: " + cameras_path.string());
  ds.cameras = read_cameras_json(cameras_path.string());

  fs::path frames_dir = fs::path(root) / "frames";
  if (!fs::is_directory(frames_dir))
    throw DataError("missing frames directory: " + frames_dir.string());

  for (const Camera& cam : ds.cameras) {
    fs::path cam_dir = frames_dir / cam.id;
    if (!fs::is_directory(cam_dir))
      throw DataError("missing image directory for camera '" + cam.id + "': " + cam_dir.string());
    std::map<long, std::string> by_index;
    for (const auto& entry : fs::directory_iterator(cam_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      long index = parse_index(entry.path().stem().string());
      if (index < 0)
        throw DataError("image name is not a frame index: " + entry.path().string());
      if (by_index.count(index))
        throw DataError("duplicate frame " + std::to_string(index) + " for camera '" + cam.id +
                        "': " + entry.path().string());
      by_index[index] = entry.path().string();
    }
    if (by_index.empty())
      throw DataError("camera '" + cam.id + "' has no frames: " + cam_dir.string());
    long count = static_cast<long>(by_index.size());
    for (long f = 0; f < count; ++f)
      if (!by_index.count(f))
        throw DataError("camera '" + cam.id + "' is missing frame " + std::to_string(f) + ": " +
                        (cam_dir / (std::to_string(f) + ".png")).string());

    if (ds.image_paths.empty()) {
      ds.frame_count = static_cast<int>(count);
    } else if (static_cast<int>(count) != ds.frame_count) {
      throw DataError("camera '" + cam.id + "' has " + std::to_string(count) +
                      " frames, expected " + std::to_string(ds.frame_count));
    }
    std::vector<std::string> paths;
    for (long f = 0; f < count; ++f) paths.push_back(by_index[f]);
    ds.image_paths.push_back(std::move(paths));
  }

  for (size_t ci = 0; ci < ds.cameras.size(); ++ci) {
    const Camera& cam = ds.cameras[ci];
    for (int f = 0; f < ds.frame_count; ++f) {
      Image img = read_png(ds.image_paths[ci][f]);
      if (img.width != cam.width || img.height != cam.height)
        throw DataError("image " + ds.image_paths[ci][f] + " is " + std::to_string(img.width) +
                        "x" + std::to_string(img.height) + " but camera '" + cam.id +
                        "' expects " + std::to_string(cam.width) + "x" +
                        std::to_string(cam.height));
    }
  }

  fs::path points_dir = fs::path(root) / "points";
  if (!fs::is_directory(points_dir))
    throw DataError("missing points directory: " + points_dir.string());
  for (const auto& entry : fs::directory_iterator(points_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ply") continue;
    std::string stem = entry.path().stem().string();
    if (stem.rfind("frame_", 0) != 0)
      throw DataError("point cloud name is not frame_<index>.ply: " + entry.path().string());
    long index = parse_index(stem.substr(6));
    if (index < 0)
      throw DataError("point cloud name is not frame_<index>.ply: " + entry.path().string());
    if (index >= ds.frame_count)
      throw DataError("point cloud frame " + std::to_string(index) + " is out of range (dataset has " +
                      std::to_string(ds.frame_count) + " frames): " + entry.path().string());
    FramePoints fp;
    fp.frame_index = static_cast<int>(index);
    fp.points = read_ply(entry.path().string());
    ds.point_clouds.push_back(std::move(fp));
  }
  if (ds.point_clouds.empty())
    throw DataError("no point clouds found under " + points_dir.string());
  std::sort(ds.point_clouds.begin(), ds.point_clouds.end(),
            [](const FramePoints& a, const FramePoints& b) { return a.frame_index < b.frame_index; });
  return ds;
}

double default_fusion_voxel(const std::vector<std::vector<Vec3>>& clouds) {
  bool any = false;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& cloud : clouds)
    for (const Vec3& p : cloud) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      any = true;
    }
  if (!any) throw DataError("cannot derive a fusion voxel size from empty point clouds");
  return std::max((hi - lo).norm() / 256.0, 1e-12);
}

std::vector<Vec3> fuse_point_clouds(const std::vector<std::vector<Vec3>>& clouds,
                                    double voxel_size) {
  if (!(voxel_size > 0)) throw DataError("fusion voxel size must be positive");

  struct Entry {
    std::array<int64_t, 3> key;
    Vec3 p;
  };
  std::vector<Entry> entries;
  for (const auto& cloud : clouds)
    for (const Vec3& p : cloud) {
      Entry e;
      for (int c = 0; c < 3; ++c) {
        double cell = std::floor(p[c] / voxel_size);
        if (!(std::abs(cell) < 9e15))
          throw DataError("point coordinates overflow the fusion voxel grid");
        e.key[c] = static_cast<int64_t>(cell);
      }
      e.p = p;
      entries.push_back(e);
    }

  // Canonical order makes the per-voxel sums independent of the input order.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.p.x() != b.p.x()) return a.p.x() < b.p.x();
    if (a.p.y() != b.p.y()) return a.p.y() < b.p.y();
    return a.p.z() < b.p.z();
  });

  std::vector<Vec3> fused;
  size_t i = 0;
  while (i < entries.size()) {
    size_t j = i;
    Vec3 sum = Vec3::Zero();
    while (j < entries.size() && entries[j].key == entries[i].key) {
      sum += entries[j].p;
      ++j;
    }
    fused.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return fused;
}

std::vector<Seed> init_seeds(const std::vector<Vec3>& points, int feature_dim,
                             double fallback_scale, bool* used_fallback) {
  if (points.empty()) throw DataError("cannot initialize seeds from an empty point cloud");
  if (feature_dim <= 0) throw DataError("seed feature dimension must be positive");
  if (!(fallback_scale > 0)) throw DataError("seed fallback scale must be positive");
  if (used_fallback) *used_fallback = false;

  int n = static_cast<int>(points.size());
  std::vector<Seed> seeds(points.size());
  std::vector<double> dist;
  dist.reserve(points.size());
  for (int i = 0; i < n; ++i) {
    Seed& s = seeds[i];
    for (int c = 0; c < 3; ++c) s.position[c] = quantize_f32(points[i][c]);
    s.feature = VecX::Zero(feature_dim);
    double v = fallback_scale;
    if (n >= 4) {
      dist.clear();
      for (int j = 0; j < n; ++j)
        if (j != i) dist.push_back((points[j] - points[i]).norm());
      // Mean distance to the 3 nearest other points, isotropic.
      std::nth_element(dist.begin(), dist.begin() + 2, dist.end());
      double mean = (dist[0] + dist[1] + dist[2]) / 3.0;
      v = mean > 0 ? mean : fallback_scale;
    } else if (used_fallback) {
      *used_fallback = true;
    }
    s.scale = Vec3::Constant(quantize_f32(v));
    s.active = true;
  }
  return seeds;
}

// ---------------------------------------------------------------------------
// Checkpoints. Layout: "LDGS", u32 version, then named sections in a fixed
// order. Each section is u32 name length, name bytes, u64 payload length,
// payload. All multi-byte values are little-endian.
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointVersion = 1;
const char* const kMlpSectionNames[7] = {"mlp.phi", "mlp.fw", "mlp.fmu", "mlp.fo",
                                         "mlp.fq", "mlp.fs", "mlp.fc"};

void put_u8(std::string& b, uint8_t v) { b.push_back(static_cast<char>(v)); }

void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& b, double x) {
  float f = static_cast<float>(x);
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

void put_f64(std::string& b, double x) {
  uint64_t u;
  std::memcpy(&u, &x, 8);
  put_u64(b, u);
}

void put_f32_vector(std::string& b, const std::vector<double>& values) {
  for (double v : values) put_f32(b, v);
}

void add_section(std::string& file, const std::string& name, const std::string& payload) {
  put_u32(file, static_cast<uint32_t>(name.size()));
  file += name;
  put_u64(file, payload.size());
  file += payload;
}

std::string mlp_payload(const Mlp& mlp) {
  std::string p;
  put_u8(p, static_cast<uint8_t>(mlp.activation));
  put_u32(p, static_cast<uint32_t>(mlp.layers.size()));
  for (const DenseLayer& layer : mlp.layers) {
    put_u32(p, static_cast<uint32_t>(layer.in));
    put_u32(p, static_cast<uint32_t>(layer.out));
    put_f32_vector(p, layer.weight.value);
    put_f32_vector(p, layer.bias.value);
  }
  return p;
}

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    data_ = buf.str();
  }

  void read_magic_and_version() {
    if (data_.size() < 8 || data_.compare(0, 4, "LDGS") != 0)
      throw DataError("not a checkpoint (bad magic): " + path_);
    pos_ = 4;
    limit_ = data_.size();
    section_ = "header";
    uint32_t version = u32();
    if (version != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + "): " + path_);
  }

  void enter(const std::string& name) {
    section_ = name;
    limit_ = data_.size();
    if (pos_ + 4 > data_.size()) throw truncated("before section '" + name + "'");
    uint32_t name_len = u32();
    if (pos_ + name_len > data_.size()) throw truncated("before section '" + name + "'");
    std::string found = data_.substr(pos_, name_len);
    pos_ += name_len;
    if (found != name)
      throw DataError("checkpoint section order mismatch (expected '" + name + "', found '" +
                      found + "'): " + path_);
    if (pos_ + 8 > data_.size()) throw truncated("before section '" + name + "'");
    uint64_t size = u64();
    if (pos_ + size > data_.size()) throw truncated("in section '" + name + "'");
    limit_ = pos_ + size;
  }

  void leave() {
    if (pos_ != limit_)
      throw DataError("checkpoint section '" + section_ + "' is malformed: " + path_);
  }

  void expect_eof() const {
    if (pos_ != data_.size()) throw DataError("trailing bytes after checkpoint: " + path_);
  }

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f32() {
    uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
  }

  double f64() {
    uint64_t u = u64();
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }

  std::vector<double> f32_vector(size_t count) {
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = f32();
    return out;
  }

  std::string raw_to_section_end() {
    std::string out = data_.substr(pos_, limit_ - pos_);
    pos_ = limit_;
    return out;
  }

 private:
  DataError truncated(const std::string& where) const {
    return DataError("checkpoint truncated " + where + ": " + path_);
  }

  void need(size_t n) {
    if (pos_ + n > limit_) throw truncated("in section '" + section_ + "'");
  }

  std::string path_;
  std::string data_;
  size_t pos_ = 0;
  size_t limit_ = 0;
  std::string section_;
};

void read_mlp_into(CheckpointReader& r, const std::string& name, Mlp* mlp) {
  r.enter(name);
  auto mismatch = [&]() {
    return DataError("checkpoint section '" + name + "' does not match the stored configuration");
  };
  if (static_cast<OutputActivation>(r.u8()) != mlp->activation) throw mismatch();
  if (r.u32() != mlp->layers.size()) throw mismatch();
  for (DenseLayer& layer : mlp->layers) {
    if (r.u32() != static_cast<uint32_t>(layer.in)) throw mismatch();
    if (r.u32() != static_cast<uint32_t>(layer.out)) throw mismatch();
    layer.weight.value = r.f32_vector(layer.weight.size());
    layer.bias.value = r.f32_vector(layer.bias.size());
  }
  r.leave();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string file;
  file += "LDGS";
  put_u32(file, kCheckpointVersion);

  {
    std::string p;
    for (int c = 0; c < 3; ++c) put_f64(p, ckpt.bounds.aabb_min[c]);
    for (int c = 0; c < 3; ++c) put_f64(p, ckpt.bounds.aabb_max[c]);
    put_f64(p, ckpt.bounds.t_min);
    put_f64(p, ckpt.bounds.t_max);
    put_u32(p, static_cast<uint32_t>(ckpt.bounds.frame_count));
    add_section(file, "bounds", p);
  }
  {
    const FieldConfig& fc = ckpt.stack.config;
    std::string p;
    put_u32(p, static_cast<uint32_t>(fc.feature_dim));
    put_u32(p, static_cast<uint32_t>(fc.hidden_dim));
    put_u32(p, static_cast<uint32_t>(fc.k));
    put_f64(p, fc.tau_alpha);
    put_u8(p, fc.no_static ? 1 : 0);
    add_section(file, "fieldconfig", p);
  }
  {
    const SeedStore& s = ckpt.seeds;
    std::string p;
    put_u32(p, static_cast<uint32_t>(s.count()));
    put_u32(p, static_cast<uint32_t>(s.feature_dim));
    put_f32_vector(p, s.positions);
    put_f32_vector(p, s.features.value);
    put_f32_vector(p, s.scales.value);
    for (uint8_t a : s.active) put_u8(p, a);
    add_section(file, "seeds", p);
  }
  {
    const HashFieldConfig& hc = ckpt.stack.hash.config();
    std::string p;
    put_u32(p, static_cast<uint32_t>(hc.levels));
    put_u32(p, static_cast<uint32_t>(hc.features_per_entry));
    put_u32(p, hc.table_size);
    put_u32(p, hc.base_resolution);
    put_u32(p, hc.max_resolution);
    put_u32(p, hc.time_base_resolution);
    put_u32(p, hc.time_max_resolution);
    add_section(file, "hashconfig", p);
  }
  {
    std::string p;
    put_f32_vector(p, ckpt.stack.hash.table());
    add_section(file, "hashtable", p);
  }
  const Mlp* mlps[7] = {&ckpt.stack.phi, &ckpt.stack.f_w, &ckpt.stack.f_mu, &ckpt.stack.f_o,
                        &ckpt.stack.f_q, &ckpt.stack.f_s, &ckpt.stack.f_c};
  for (int m = 0; m < 7; ++m) add_section(file, kMlpSectionNames[m], mlp_payload(*mlps[m]));
  add_section(file, "configecho", ckpt.config_echo);

  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  out.flush();
  if (!out) throw DataError("failed to write checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  CheckpointReader r(path);
  r.read_magic_and_version();

  Checkpoint ckpt;
  r.enter("bounds");
  for (int c = 0; c < 3; ++c) ckpt.bounds.aabb_min[c] = r.f64();
  for (int c = 0; c < 3; ++c) ckpt.bounds.aabb_max[c] = r.f64();
  ckpt.bounds.t_min = r.f64();
  ckpt.bounds.t_max = r.f64();
  ckpt.bounds.frame_count = static_cast<int>(r.u32());
  r.leave();

  FieldConfig field_config;
  r.enter("fieldconfig");
  field_config.feature_dim = static_cast<int>(r.u32());
  field_config.hidden_dim = static_cast<int>(r.u32());
  field_config.k = static_cast<int>(r.u32());
  field_config.tau_alpha = r.f64();
  field_config.no_static = r.u8() != 0;
  r.leave();
  if (field_config.feature_dim <= 0 || field_config.hidden_dim <= 0 || field_config.k <= 0)
    throw DataError("checkpoint section 'fieldconfig' has non-positive dimensions: " + path);

  r.enter("seeds");
  uint32_t seed_count = r.u32();
  uint32_t feature_dim = r.u32();
  if (feature_dim != static_cast<uint32_t>(field_config.feature_dim))
    throw DataError("checkpoint section 'seeds' feature size disagrees with 'fieldconfig': " +
                    path);
  ckpt.seeds.feature_dim = static_cast<int>(feature_dim);
  ckpt.seeds.positions = r.f32_vector(static_cast<size_t>(seed_count) * 3);
  ckpt.seeds.features.value = r.f32_vector(static_cast<size_t>(seed_count) * feature_dim);
  ckpt.seeds.features.m1.assign(ckpt.seeds.features.value.size(), 0.0);
  ckpt.seeds.features.m2.assign(ckpt.seeds.features.value.size(), 0.0);
  ckpt.seeds.scales.value = r.f32_vector(static_cast<size_t>(seed_count) * 3);
  ckpt.seeds.scales.m1.assign(ckpt.seeds.scales.value.size(), 0.0);
  ckpt.seeds.scales.m2.assign(ckpt.seeds.scales.value.size(), 0.0);
  ckpt.seeds.active.resize(seed_count);
  for (uint32_t i = 0; i < seed_count; ++i) ckpt.seeds.active[i] = r.u8();
  r.leave();

  HashFieldConfig hash_config;
  r.enter("hashconfig");
  hash_config.levels = static_cast<int>(r.u32());
  hash_config.features_per_entry = static_cast<int>(r.u32());
  hash_config.table_size = r.u32();
  hash_config.base_resolution = r.u32();
  hash_config.max_resolution = r.u32();
  hash_config.time_base_resolution = r.u32();
  hash_config.time_max_resolution = r.u32();
  r.leave();

  Rng scratch_rng(0);
  ckpt.stack = FieldStack::create(field_config, hash_config, scratch_rng);

  r.enter("hashtable");
  std::vector<double> table = r.f32_vector(ckpt.stack.hash.table().size());
  r.leave();
  ckpt.stack.hash.table() = std::move(table);

  Mlp* mlps[7] = {&ckpt.stack.phi, &ckpt.stack.f_w, &ckpt.stack.f_mu, &ckpt.stack.f_o,
                  &ckpt.stack.f_q, &ckpt.stack.f_s, &ckpt.stack.f_c};
  for (int m = 0; m < 7; ++m) {
    read_mlp_into(r, kMlpSectionNames[m], mlps[m]);
    for (DenseLayer& layer : mlps[m]->layers) {
      layer.weight.m1.assign(layer.weight.size(), 0.0);
      layer.weight.m2.assign(layer.weight.size(), 0.0);
      layer.weight.step = 0;
      layer.bias.m1.assign(layer.bias.size(), 0.0);
      layer.bias.m2.assign(layer.bias.size(), 0.0);
      layer.bias.step = 0;
    }
  }

  r.enter("configecho");
  ckpt.config_echo = r.raw_to_section_end();
  r.leave();
  r.expect_eof();
  return ckpt;
}

}  // namespace seedsplat
