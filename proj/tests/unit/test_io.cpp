#include <doctest.h>

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "seedsplat/io.hpp"
#include "seedsplat/synthetic.hpp"

using namespace seedsplat;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test run.
fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("seedsplat_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

// Values restricted to the byte grid survive the 8-bit file format exactly.
Image byte_grid_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (double& v : img.data)
    v = static_cast<double>(rng.uniform_index(256)) / 255.0;
  return img;
}

void write_gray_png(const std::string& path, const std::vector<unsigned char>& pixels, int w,
                    int h) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) FAIL("libpng error while writing the gray fixture");
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, const_cast<unsigned char*>(&pixels[y * w]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Checkpoint small_checkpoint(uint64_t seed) {
  Checkpoint ckpt;
  ckpt.bounds.aabb_min = Vec3(-1.25, -0.5, 0.125);
  ckpt.bounds.aabb_max = Vec3(0.75, 2.5, 3.0);
  ckpt.bounds.t_min = 0.0;
  ckpt.bounds.t_max = 1.0;
  ckpt.bounds.frame_count = 7;

  FieldConfig fc;
  fc.feature_dim = 8;
  fc.hidden_dim = 16;
  fc.k = 3;
  fc.tau_alpha = 0.02;
  HashFieldConfig hc;
  hc.levels = 4;
  hc.features_per_entry = 2;
  hc.table_size = 64;
  hc.base_resolution = 2;
  hc.max_resolution = 8;
  hc.time_base_resolution = 1;
  hc.time_max_resolution = 4;

  Rng rng(seed);
  ckpt.stack = FieldStack::create(fc, hc, rng);
  ckpt.seeds.feature_dim = fc.feature_dim;
  for (int s = 0; s < 5; ++s) {
    VecX f(fc.feature_dim);
    for (int i = 0; i < fc.feature_dim; ++i) f[i] = rng.uniform(-1, 1);
    ckpt.seeds.append(Vec3(rng.uniform(-1, 1), rng.uniform(-0.4, 2.4), rng.uniform(0.2, 2.9)), f,
                      Vec3(0.25, 0.5, 0.125));
  }
  ckpt.seeds.active[3] = 0;
  ckpt.config_echo = "iterations=12\nk=3\n";
  return ckpt;
}

bool same_mlp(const Mlp& a, const Mlp& b) {
  if (a.activation != b.activation || a.layers.size() != b.layers.size()) return false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].in != b.layers[l].in || a.layers[l].out != b.layers[l].out) return false;
    if (a.layers[l].weight.value != b.layers[l].weight.value) return false;
    if (a.layers[l].bias.value != b.layers[l].bias.value) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("png round-trips byte-grid values exactly") {
    fs::path dir = scratch_dir("png");
    Image img = byte_grid_image(13, 9, 7);
    std::string path = (dir / "a.png").string();
    write_png(path, img);
    Image back = read_png(path);
    REQUIRE(back.width == 13);
    REQUIRE(back.height == 9);
    CHECK(back.data == img.data);
  }

  TEST_CASE("png write clamps out-of-range values") {
    fs::path dir = scratch_dir("pngclamp");
    Image img(2, 1);
    img.data = {-0.5, 1.5, 0.5, 0.0, 1.0, 0.25};
    std::string path = (dir / "c.png").string();
    write_png(path, img);
    Image back = read_png(path);
    CHECK(back.at(0, 0, 0) == 0.0);
    CHECK(back.at(0, 0, 1) == 1.0);
    CHECK(back.at(0, 1, 1) == 1.0);
  }

  TEST_CASE("png errors name the offending path") {
    fs::path dir = scratch_dir("pngerr");
    std::string missing = (dir / "missing.png").string();
    CHECK_THROWS_WITH_AS(read_png(missing), doctest::Contains(missing.c_str()), DataError);
    std::string garbage = (dir / "garbage.png").string();
    write_file(garbage, "not a png at all");
    CHECK_THROWS_WITH_AS(read_png(garbage), doctest::Contains(garbage.c_str()), DataError);
  }

  TEST_CASE("grayscale pngs expand to identical rgb channels") {
    fs::path dir = scratch_dir("pnggray");
    std::string path = (dir / "g.png").string();
    write_gray_png(path, {0, 51, 102, 255}, 2, 2);
    Image img = read_png(path);
    CHECK(img.at(0, 1, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(img.at(0, 1, 1) == img.at(0, 1, 0));
    CHECK(img.at(0, 1, 2) == img.at(0, 1, 0));
    CHECK(img.at(1, 1, 0) == 1.0);
  }

  TEST_CASE("ply binary round-trips float32 positions exactly") {
    fs::path dir = scratch_dir("ply");
    Rng rng(3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i)
      pts.push_back(Vec3(quantize_f32(rng.uniform(-5, 5)), quantize_f32(rng.uniform(-5, 5)),
                         quantize_f32(rng.uniform(-5, 5))));
    std::string path = (dir / "p.ply").string();
    write_ply(path, pts);
    std::vector<Vec3> back = read_ply(path);
    REQUIRE(back.size() == pts.size());
    for (size_t i = 0; i < pts.size(); ++i) CHECK((back[i] - pts[i]).norm() == 0.0);
  }

  TEST_CASE("ply ascii parses and skips extra properties") {
    fs::path dir = scratch_dir("plyascii");
    std::string path = (dir / "a.ply").string();
    write_file(path,
               "ply\nformat ascii 1.0\ncomment made by hand\n"
               "element vertex 2\n"
               "property float x\nproperty uchar red\nproperty float y\nproperty float z\n"
               "end_header\n"
               "1.5 200 -2.25 0.5\n"
               "0 7 3 -1\n");
    std::vector<Vec3> pts = read_ply(path);
    REQUIRE(pts.size() == 2);
    CHECK((pts[0] - Vec3(1.5, -2.25, 0.5)).norm() == 0.0);
    CHECK((pts[1] - Vec3(0.0, 3.0, -1.0)).norm() == 0.0);
  }

  TEST_CASE("ply binary skips extra properties via the declared strides") {
    fs::path dir = scratch_dir("plybin");
    std::string path = (dir / "b.ply").string();
    std::string body;
    auto put_f32 = [&](float f) {
      char b[4];
      std::memcpy(b, &f, 4);
      body.append(b, 4);
    };
    body.clear();
    put_f32(1.0f);
    body.push_back(static_cast<char>(200));  // uchar intensity, skipped
    put_f32(2.0f);
    put_f32(3.0f);
    put_f32(-1.0f);
    body.push_back(static_cast<char>(17));
    put_f32(0.5f);
    put_f32(0.25f);
    write_file(path,
               "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
               "property float x\nproperty uchar intensity\nproperty float y\nproperty float z\n"
               "end_header\n" +
                   body);
    std::vector<Vec3> pts = read_ply(path);
    REQUIRE(pts.size() == 2);
    CHECK((pts[0] - Vec3(1.0, 2.0, 3.0)).norm() == 0.0);
    CHECK((pts[1] - Vec3(-1.0, 0.5, 0.25)).norm() == 0.0);
  }

  TEST_CASE("ply with zero vertices reports an empty point cloud") {
    fs::path dir = scratch_dir("plyempty");
    std::string path = (dir / "e.ply").string();
    write_file(path,
               "ply\nformat ascii 1.0\nelement vertex 0\n"
               "property float x\nproperty float y\nproperty float z\nend_header\n");
    CHECK_THROWS_WITH_AS(read_ply(path), doctest::Contains("empty point cloud"), DataError);
    CHECK_THROWS_WITH_AS(read_ply(path), doctest::Contains(path.c_str()), DataError);
  }

  TEST_CASE("ply rejects malformed and truncated files") {
    fs::path dir = scratch_dir("plybad");
    std::string not_ply = (dir / "n.ply").string();
    write_file(not_ply, "off\n3 0 0\n");
    CHECK_THROWS_AS(read_ply(not_ply), DataError);

    std::string no_xyz = (dir / "noxyz.ply").string();
    write_file(no_xyz,
               "ply\nformat ascii 1.0\nelement vertex 1\nproperty float u\nproperty float v\n"
               "end_header\n0 0\n");
    CHECK_THROWS_WITH_AS(read_ply(no_xyz), doctest::Contains("x/y/z"), DataError);

    std::string truncated = (dir / "t.ply").string();
    write_file(truncated,
               "ply\nformat binary_little_endian 1.0\nelement vertex 3\n"
               "property float x\nproperty float y\nproperty float z\nend_header\n\x01\x02");
    CHECK_THROWS_WITH_AS(read_ply(truncated), doctest::Contains("truncated"), DataError);

    std::string listprop = (dir / "l.ply").string();
    write_file(listprop,
               "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property list uchar int vertex_indices\nend_header\n0\n");
    CHECK_THROWS_AS(read_ply(listprop), DataError);
  }

  TEST_CASE("cameras json round-trips every field bitwise") {
    fs::path dir = scratch_dir("cams");
    std::vector<Camera> cams;
    cams.push_back(Camera::look_at(Vec3(1.1, 0.3, -2.7), Vec3(0.1, 0.0, 0.2), 64, 48, 55.5,
                                   "front"));
    cams.push_back(Camera::look_at(Vec3(-2.0, 1.0, 0.5), Vec3::Zero(), 32, 32, 40.0, "side"));
    cams[1].split = "test";
    std::string path = (dir / "cameras.json").string();
    write_cameras_json(path, cams);
    std::vector<Camera> back = read_cameras_json(path);
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
      CHECK(back[i].id == cams[i].id);
      CHECK(back[i].width == cams[i].width);
      CHECK(back[i].height == cams[i].height);
      CHECK(back[i].fx == cams[i].fx);
      CHECK(back[i].fy == cams[i].fy);
      CHECK(back[i].cx == cams[i].cx);
      CHECK(back[i].cy == cams[i].cy);
      CHECK((back[i].rotation - cams[i].rotation).norm() == 0.0);
      CHECK((back[i].translation - cams[i].translation).norm() == 0.0);
      CHECK(back[i].split == cams[i].split);
    }
  }

  TEST_CASE("cameras json validation names the offending camera") {
    fs::path dir = scratch_dir("camsbad");
    std::string path = (dir / "cameras.json").string();

    write_file(path, R"([{"id":"a","width":8,"height":8,"fx":4,"fy":4,"cx":4,"cy":4,
      "R":[1,0,0,0,1,0,0,0,2],"t":[0,0,0]}])");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains("'a'"), DataError);

    write_file(path, R"([{"id":"b","width":8,"height":8,"fx":4,"fy":4,"cx":4,"cy":4,
      "R":[1,0,0,0,1,0],"t":[0,0,0]}])");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains("9 row-major"), DataError);

    write_file(path, R"([{"id":"c","width":8,"height":8,"fx":4,"fy":4,"cx":4,"cy":4,
      "R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0],"split":"validation"}])");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains("split"), DataError);

    write_file(path, R"([{"id":"d","width":8,"height":8,"fx":4,"fy":4,"cx":4,"cy":4,
      "R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]},
      {"id":"d","width":8,"height":8,"fx":4,"fy":4,"cx":4,"cy":4,
      "R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}])");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains("duplicate"), DataError);

    write_file(path, R"([{"id":"e","width":8,"height":8,"fx":4,"fy":4,"cx":4,
      "R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}])");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains("'e'"), DataError);

    write_file(path, "[not json");
    CHECK_THROWS_WITH_AS(read_cameras_json(path), doctest::Contains(path.c_str()), DataError);
  }

  TEST_CASE("synthetic dataset loads with consistent shapes") {
    fs::path dir = scratch_dir("dataset");
    SyntheticConfig cfg;
    cfg.width = 16;
    cfg.height = 12;
    cfg.focal = 10.0;
    cfg.camera_count = 3;
    cfg.test_cameras = 1;
    cfg.frame_count = 3;
    cfg.sphere_points = 30;
    cfg.quad_points = 8;
    gen_synthetic(cfg, dir.string());

    FrameDataset ds = load_dataset(dir.string());
    REQUIRE(ds.cameras.size() == 3);
    CHECK(ds.frame_count == 3);
    CHECK(ds.camera_indices("train") == std::vector<int>{0, 1});
    CHECK(ds.camera_indices("test") == std::vector<int>{2});
    REQUIRE(ds.point_clouds.size() == 3);
    CHECK(ds.point_clouds[0].frame_index == 0);
    CHECK(ds.point_clouds[2].frame_index == 2);
    CHECK(ds.point_clouds[1].points.size() == 38);

    Image img = ds.load_frame(1, 2);
    CHECK(img.width == 16);
    CHECK(img.height == 12);
    // The stored frame is the ray-traced view rounded to the byte grid.
    Image gt = render_synthetic_view(cfg, ds.cameras[1], 2.0);
    double max_err = 0;
    for (size_t i = 0; i < img.data.size(); ++i)
      max_err = std::max(max_err, std::abs(img.data[i] - gt.data[i]));
    CHECK(max_err <= 0.5 / 255.0 + 1e-12);
  }

  TEST_CASE("dataset validation errors name the missing piece") {
    fs::path dir = scratch_dir("datasetbad");
    SyntheticConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    cfg.focal = 6.0;
    cfg.camera_count = 2;
    cfg.test_cameras = 0;
    cfg.frame_count = 2;
    cfg.sphere_points = 10;
    cfg.quad_points = 4;
    gen_synthetic(cfg, dir.string());

    SUBCASE("missing cameras.json") {
      fs::remove(dir / "cameras.json");
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("cameras"), DataError);
    }
    SUBCASE("missing frame image") {
      fs::remove(dir / "frames" / "cam1" / "0000.png");
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                           doctest::Contains("missing frame 0"), DataError);
    }
    SUBCASE("frame count mismatch across cameras") {
      Image extra(8, 8, 0.5);
      write_png((dir / "frames" / "cam0" / "0002.png").string(), extra);
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("has 2 frames"),
                           DataError);
    }
    SUBCASE("wrong image dimensions") {
      Image wrong(4, 4, 0.5);
      write_png((dir / "frames" / "cam0" / "0001.png").string(), wrong);
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("4x4"), DataError);
    }
    SUBCASE("no point clouds") {
      fs::remove_all(dir / "points");
      fs::create_directories(dir / "points");
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("point clouds"),
                           DataError);
    }
    SUBCASE("point cloud for a frame outside the range") {
      std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
      write_ply((dir / "points" / "frame_0009.ply").string(), pts);
      CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("out of range"),
                           DataError);
    }
  }

  TEST_CASE("fusion is invariant to cloud and point order") {
    Rng rng(11);
    std::vector<Vec3> a, b, c;
    for (int i = 0; i < 40; ++i) a.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0));
    for (int i = 0; i < 25; ++i) b.push_back(Vec3(rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1)));
    for (int i = 0; i < 31; ++i) c.push_back(Vec3(0.0, rng.uniform(-1, 1), rng.uniform(-1, 1)));

    std::vector<Vec3> fused = fuse_point_clouds({a, b, c}, 0.05);
    std::vector<Vec3> shuffled_b = b;
    std::reverse(shuffled_b.begin(), shuffled_b.end());
    std::vector<Vec3> fused2 = fuse_point_clouds({c, shuffled_b, a}, 0.05);
    REQUIRE(fused.size() == fused2.size());
    for (size_t i = 0; i < fused.size(); ++i) CHECK((fused[i] - fused2[i]).norm() == 0.0);
  }

  TEST_CASE("fusion merges voxel-mates into their centroid") {
    // Both points share the voxel [0.0, 0.5)^3; the third sits far away.
    std::vector<Vec3> cloud = {Vec3(0.1, 0.1, 0.1), Vec3(0.3, 0.1, 0.1), Vec3(5.0, 5.0, 5.0)};
    std::vector<Vec3> fused = fuse_point_clouds({cloud}, 0.5);
    REQUIRE(fused.size() == 2);
    CHECK((fused[0] - Vec3(0.2, 0.1, 0.1)).norm() < 1e-15);
    CHECK((fused[1] - Vec3(5.0, 5.0, 5.0)).norm() == 0.0);
  }

  TEST_CASE("fusion keeps well-separated points and checks the voxel size") {
    std::vector<Vec3> cloud;
    for (int i = 0; i < 9; ++i) cloud.push_back(Vec3(i * 1.0, 0, 0));
    CHECK(fuse_point_clouds({cloud, cloud}, 0.25).size() == 9);
    CHECK_THROWS_AS(fuse_point_clouds({cloud}, 0.0), DataError);
    CHECK(fuse_point_clouds({{}, {}}, 1.0).empty());
  }

  TEST_CASE("default fusion voxel is the bounding diagonal over 256") {
    std::vector<Vec3> cloud = {Vec3(0, 0, 0), Vec3(3, 4, 0)};
    CHECK(default_fusion_voxel({cloud}) == doctest::Approx(5.0 / 256.0).epsilon(1e-12));
    CHECK_THROWS_AS(default_fusion_voxel({{}}), DataError);
  }

  TEST_CASE("seed scales on a unit tetrahedron are exactly one") {
    double h = std::sqrt(3.0) / 2.0;
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, h, 0),
                             Vec3(0.5, h / 3.0, std::sqrt(2.0 / 3.0))};
    bool fallback = true;
    std::vector<Seed> seeds = init_seeds(pts, 4, 0.5, &fallback);
    REQUIRE(seeds.size() == 4);
    CHECK(!fallback);
    for (const Seed& s : seeds) {
      // All three neighbors sit at distance 1, so the mean is exactly 1.
      CHECK(s.scale.x() == doctest::Approx(1.0).epsilon(1e-7));
      CHECK(s.scale.y() == s.scale.x());
      CHECK(s.scale.z() == s.scale.x());
      CHECK(s.feature.size() == 4);
      CHECK(s.feature.norm() == 0.0);
      CHECK(s.active);
    }
  }

  TEST_CASE("seed scales average the three nearest neighbors") {
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0),
                             Vec3(4, 0, 0)};
    std::vector<Seed> seeds = init_seeds(pts, 2, 0.5);
    // Middle point: nearest three at distances 1, 1, 2.
    CHECK(seeds[2].scale.x() == doctest::Approx(4.0 / 3.0).epsilon(1e-7));
    // End point: distances 1, 2, 3.
    CHECK(seeds[0].scale.x() == doctest::Approx(2.0).epsilon(1e-7));
  }

  TEST_CASE("too few points fall back to the provided scale") {
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
    bool fallback = false;
    std::vector<Seed> seeds = init_seeds(pts, 2, 0.25, &fallback);
    CHECK(fallback);
    CHECK(seeds[0].scale.x() == 0.25);
    CHECK(seeds[1].scale.z() == 0.25);
    CHECK_THROWS_AS(init_seeds({}, 2, 0.25), DataError);
  }

  TEST_CASE("checkpoint round-trips bitwise") {
    fs::path dir = scratch_dir("ckpt");
    Checkpoint ckpt = small_checkpoint(21);
    std::string path = (dir / "model.ldgs").string();
    save_checkpoint(path, ckpt);
    Checkpoint back = load_checkpoint(path);

    CHECK((back.bounds.aabb_min - ckpt.bounds.aabb_min).norm() == 0.0);
    CHECK((back.bounds.aabb_max - ckpt.bounds.aabb_max).norm() == 0.0);
    CHECK(back.bounds.t_max == ckpt.bounds.t_max);
    CHECK(back.bounds.frame_count == ckpt.bounds.frame_count);

    CHECK(back.seeds.positions == ckpt.seeds.positions);
    CHECK(back.seeds.features.value == ckpt.seeds.features.value);
    CHECK(back.seeds.scales.value == ckpt.seeds.scales.value);
    CHECK(back.seeds.active == ckpt.seeds.active);
    CHECK(back.seeds.feature_dim == ckpt.seeds.feature_dim);

    CHECK(back.stack.config.k == ckpt.stack.config.k);
    CHECK(back.stack.config.tau_alpha == ckpt.stack.config.tau_alpha);
    CHECK(back.stack.hash.config().table_size == ckpt.stack.hash.config().table_size);
    CHECK(back.stack.hash.table() == ckpt.stack.hash.table());
    CHECK(same_mlp(back.stack.phi, ckpt.stack.phi));
    CHECK(same_mlp(back.stack.f_w, ckpt.stack.f_w));
    CHECK(same_mlp(back.stack.f_mu, ckpt.stack.f_mu));
    CHECK(same_mlp(back.stack.f_o, ckpt.stack.f_o));
    CHECK(same_mlp(back.stack.f_q, ckpt.stack.f_q));
    CHECK(same_mlp(back.stack.f_s, ckpt.stack.f_s));
    CHECK(same_mlp(back.stack.f_c, ckpt.stack.f_c));
    CHECK(back.config_echo == ckpt.config_echo);

    // Saving the loaded model reproduces the file byte for byte.
    std::string path2 = (dir / "model2.ldgs").string();
    save_checkpoint(path2, back);
    CHECK(read_file(path) == read_file(path2));
  }

  TEST_CASE("checkpoint loader rejects foreign and future files") {
    fs::path dir = scratch_dir("ckptbad");
    Checkpoint ckpt = small_checkpoint(4);
    std::string path = (dir / "model.ldgs").string();
    save_checkpoint(path, ckpt);
    std::string bytes = read_file(path);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    std::string p1 = (dir / "magic.ldgs").string();
    write_file(p1, wrong_magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(p1), doctest::Contains("magic"), DataError);

    // Version sits right after the magic, little-endian.
    std::string future = bytes;
    future[4] = 2;
    std::string p2 = (dir / "future.ldgs").string();
    write_file(p2, future);
    CHECK_THROWS_WITH_AS(load_checkpoint(p2), doctest::Contains("unsupported checkpoint version 2"),
                         DataError);

    std::string p3 = (dir / "trailing.ldgs").string();
    write_file(p3, bytes + "extra");
    CHECK_THROWS_WITH_AS(load_checkpoint(p3), doctest::Contains("trailing"), DataError);

    CHECK_THROWS_AS(load_checkpoint((dir / "absent.ldgs").string()), DataError);
  }

  TEST_CASE("checkpoint truncation errors name the section") {
    fs::path dir = scratch_dir("ckpttrunc");
    Checkpoint ckpt = small_checkpoint(9);
    std::string path = (dir / "model.ldgs").string();
    save_checkpoint(path, ckpt);
    std::string bytes = read_file(path);

    // Cut inside the hash table payload.
    size_t table_pos = bytes.find("hashtable");
    REQUIRE(table_pos != std::string::npos);
    std::string p1 = (dir / "t1.ldgs").string();
    write_file(p1, bytes.substr(0, table_pos + 40));
    CHECK_THROWS_WITH_AS(load_checkpoint(p1), doctest::Contains("hashtable"), DataError);

    // Cut inside the last section's payload.
    std::string p2 = (dir / "t2.ldgs").string();
    write_file(p2, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_WITH_AS(load_checkpoint(p2), doctest::Contains("truncated"), DataError);

    // Every prefix must fail cleanly with a truncation or mismatch report.
    for (size_t len : {5ul, 9ul, 60ul, 200ul, bytes.size() / 2, bytes.size() - 1}) {
      std::string p = (dir / ("cut" + std::to_string(len) + ".ldgs")).string();
      write_file(p, bytes.substr(0, len));
      CHECK_THROWS_AS(load_checkpoint(p), DataError);
    }
  }
}
