#pragma once

#include <string>
#include <vector>

#include "seedsplat/common.hpp"
#include "seedsplat/fields.hpp"
#include "seedsplat/scene.hpp"

namespace seedsplat {

// 8-bit RGB PNG decode. Palette, gray and 16-bit files are expanded to 8-bit
// RGB; an alpha channel is stripped. Throws DataError naming the path.
Image read_png(const std::string& path);

// 8-bit RGB PNG encode; values are clamped to [0,1] and rounded.
void write_png(const std::string& path, const Image& image);

// Reads vertex positions from an ASCII or binary-little-endian PLY. Extra
// vertex properties are skipped. Throws DataError naming the path; a file
// with zero vertices reports "empty point cloud".
std::vector<Vec3> read_ply(const std::string& path);

// Writes positions as binary-little-endian PLY with float32 x, y, z.
void write_ply(const std::string& path, const std::vector<Vec3>& points);

// Camera list serialization. The JSON is an array of objects with fields
// id, width, height, fx, fy, cx, cy, R (9 entries, row-major world-to-camera
// rotation) and t (3 entries), plus an optional split ("train" or "test").
std::vector<Camera> read_cameras_json(const std::string& path);
void write_cameras_json(const std::string& path, const std::vector<Camera>& cameras);

// One per-frame calibration point cloud.
struct FramePoints {
  int frame_index = 0;
  std::vector<Vec3> points;
};

// A capture on disk:
//   root/cameras.json
//   root/frames/<camera id>/<frame index>.png   (every camera, every frame)
//   root/points/frame_<frame index>.ply         (at least one frame)
// Images are validated against the camera dimensions at load time but read
// again on demand to keep the dataset handle small.
struct FrameDataset {
  std::string root;
  std::vector<Camera> cameras;
  std::vector<std::vector<std::string>> image_paths;  // [camera][frame]
  std::vector<FramePoints> point_clouds;              // sorted by frame_index
  int frame_count = 0;

  std::vector<int> camera_indices(const std::string& split) const;
  Image load_frame(int camera_index, int frame_index) const;
};

FrameDataset load_dataset(const std::string& root);

// Default fusion voxel edge: 1/256 of the diagonal of the union's AABB.
double default_fusion_voxel(const std::vector<std::vector<Vec3>>& clouds);

// Merges per-frame clouds into one deduplicated cloud: the union is bucketed
// into voxels and each occupied voxel contributes the centroid of its
// points. The result is independent of the input order.
std::vector<Vec3> fuse_point_clouds(const std::vector<std::vector<Vec3>>& clouds,
                                    double voxel_size);

// Builds the initial seed set from a fused cloud: position at the point,
// zero static feature, and an isotropic scale equal to the mean distance to
// the 3 nearest other points. With fewer than 4 points every scale falls
// back to `fallback_scale` (used_fallback reports this so callers can warn).
std::vector<Seed> init_seeds(const std::vector<Vec3>& points, int feature_dim,
                             double fallback_scale, bool* used_fallback = nullptr);

// Everything needed to render the model at any (camera, time) query.
struct Checkpoint {
  SceneBounds bounds;
  SeedStore seeds;
  FieldStack stack;
  std::string config_echo;  // human-readable key=value dump of the config
};

// Binary checkpoint, magic "LDGS" + version, little-endian, sectioned. All
// learnable values sit on the float32 grid, so save/load round-trips
// bitwise. Optimizer state is not stored.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace seedsplat
