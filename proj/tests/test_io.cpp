#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fsplat/checkpoint.hpp"
#include "fsplat/dataset.hpp"
#include "fsplat/init.hpp"
#include "fsplat/losses.hpp"
#include "fsplat/synth.hpp"
#include "test_util.hpp"

using namespace fsplat;
using namespace fsplat::testutil;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

SceneModel random_scene(int count, std::uint64_t seed) {
  Rng rng(seed);
  SceneModel scene;
  scene.budget_max = count;
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.center = Vec3(rng.normal(), rng.normal(), rng.normal());
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    p.rotation = q / q.norm();
    p.opacity_raw = rng.normal();
    for (auto& v : p.sh) v = rng.normal();
    p.shape = random_shape(rng);
    scene.primitives.push_back(p);
  }
  scene.sync_aux();
  scene.dome_flags[0] = 1;
  return scene;
}

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("a primitive stores seventy scalars") {
  CHECK(kPrimitiveScalars == 70);
  CHECK(kFreqCount == 6);
}

TEST_CASE("checkpoint round trip is byte identical") {
  TempDir dir("fsplat_ckpt_test");
  SceneModel scene = random_scene(17, 3);
  scene.k_active = 4;
  scene.sh_degree_active = 2;
  quantize_to_checkpoint_precision(scene);

  CheckpointExtra extra;
  extra.iteration = 1234;
  extra.seed = 0xdeadbeef;
  extra.has_adam = true;
  extra.adam.step = 77;
  extra.adam.m.resize(17);
  extra.adam.v.resize(17);
  extra.adam.m[3].center = Vec3(0.5, -0.25, 0.125);

  std::string a = (dir.path / "a.ckpt").string();
  std::string b = (dir.path / "b.ckpt").string();
  save_checkpoint(a, scene, &extra);
  LoadedCheckpoint loaded = load_checkpoint(a);
  CHECK(loaded.scene.primitives.size() == 17);
  CHECK(loaded.scene.k_active == 4);
  CHECK(loaded.scene.sh_degree_active == 2);
  CHECK(loaded.scene.dome_flags[0] == 1);
  CHECK(loaded.extra.iteration == 1234);
  CHECK(loaded.extra.seed == 0xdeadbeef);
  CHECK(loaded.extra.has_adam);
  CHECK(loaded.extra.adam.step == 77);
  CHECK(loaded.extra.adam.m[3].center == Vec3(0.5, -0.25, 0.125));

  save_checkpoint(b, loaded.scene, &loaded.extra);
  CHECK(read_bytes(a) == read_bytes(b));
}

TEST_CASE("checkpoint error cases are distinct") {
  TempDir dir("fsplat_ckpt_err");
  SceneModel scene = random_scene(3, 4);
  std::string path = (dir.path / "x.ckpt").string();
  save_checkpoint(path, scene);

  SUBCASE("bad magic") {
    std::ofstream f(dir.path / "bad.ckpt");
    f << "{\"magic\":\"other\",\"version\":1}\n";
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint((dir.path / "bad.ckpt").string()),
                         doctest::Contains("magic"), DataError);
  }
  SUBCASE("bad version") {
    std::ofstream f(dir.path / "bad.ckpt");
    f << "{\"magic\":\"fsplat\",\"version\":99}\n";
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint((dir.path / "bad.ckpt").string()),
                         doctest::Contains("version"), DataError);
  }
  SUBCASE("truncated records") {
    std::string bytes = read_bytes(path);
    std::ofstream f(dir.path / "bad.ckpt", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint((dir.path / "bad.ckpt").string()),
                         doctest::Contains("size"), DataError);
  }
}

TEST_CASE("png round trip stays within quantization error") {
  TempDir dir("fsplat_png_test");
  Image img(19, 13, 3);
  Rng rng(5);
  for (auto& v : img.data) v = rng.uniform();
  std::string path = (dir.path / "img.png").string();
  save_png(path, img);
  Image back = load_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(std::abs(back.data[i] - img.data[i]) <= 1.0 / 255.0);
  }
}

TEST_CASE("manifest validation") {
  TempDir dir("fsplat_manifest_test");
  SUBCASE("missing cameras") {
    std::ofstream f(dir.path / "manifest.json");
    f << "{}";
    f.close();
    CHECK_THROWS_AS(load_dataset((dir.path / "manifest.json").string()),
                    DataError);
  }
  SUBCASE("image size mismatch") {
    Image img(4, 4, 3);
    save_png((dir.path / "img.png").string(), img);
    std::ofstream f(dir.path / "manifest.json");
    f << R"({"cameras":[{"fx":10,"fy":10,"cx":4,"cy":4,"width":8,"height":8,
         "world_to_camera":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1],
         "image":"img.png"}]})";
    f.close();
    CHECK_THROWS_AS(load_dataset((dir.path / "manifest.json").string()),
                    DataError);
  }
}

TEST_CASE("point initialization") {
  std::vector<Vec3> points = {Vec3(0, 0, 0), Vec3(4, 0, 0)};
  std::vector<Vec3> colors = {Vec3(0.5, 0.5, 0.5), Vec3(1, 0, 0)};
  InitConfig cfg;
  SceneModel scene = init_from_points(points, colors, cfg);
  REQUIRE(scene.primitives.size() == 2);
  CHECK(scene.k_active == 1);
  // sqrt of nearest-neighbour distance 4.
  CHECK(scene.primitives[0].shape.circumradius() == doctest::Approx(2.0));
  CHECK(scene.primitives[1].shape.circumradius() == doctest::Approx(2.0));
  // Gray maps to a zero DC coefficient under the +0.5 offset convention.
  CHECK(scene.primitives[0].sh[0] == doctest::Approx(0.0));
  CHECK(scene.primitives[0].opacity() == doctest::Approx(0.5));
  CHECK(scene.primitives[0].shape.sharpness() == doctest::Approx(1.16));

  // Same seed: same phases.
  SceneModel again = init_from_points(points, colors, cfg);
  CHECK(again.primitives[0].shape.phases == scene.primitives[0].shape.phases);

  CHECK_THROWS_AS(init_from_points({Vec3(0, 0, 0)}, {Vec3(1, 1, 1)}, cfg),
                  DataError);
}

TEST_CASE("fibonacci dome") {
  Vec3 center(1, -2, 0.5);
  auto dome = fibonacci_dome(1000, 3.0, center);
  REQUIRE(dome.size() == 1000);
  for (const Primitive& p : dome) {
    CHECK((p.center - center).norm() == doctest::Approx(3.0).epsilon(1e-9));
    // Normal points at the dome center.
    Vec3 normal = tangent_frame(p.rotation).col(2);
    Vec3 inward = (center - p.center).normalized();
    CHECK(normal.dot(inward) == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Near-uniform spacing: coefficient of variation of nearest-neighbour
  // distances stays small.
  std::vector<double> nn(dome.size(), 1e30);
  for (std::size_t i = 0; i < dome.size(); ++i) {
    for (std::size_t j = 0; j < dome.size(); ++j) {
      if (i == j) continue;
      nn[i] = std::min(nn[i], (dome[i].center - dome[j].center).norm());
    }
  }
  double mean = 0.0;
  for (double d : nn) mean += d;
  mean /= nn.size();
  double var = 0.0;
  for (double d : nn) var += (d - mean) * (d - mean);
  double cv = std::sqrt(var / nn.size()) / mean;
  CHECK(cv < 0.3);

  auto single = fibonacci_dome(1, 2.0, Vec3::Zero());
  REQUIRE(single.size() == 1);
  CHECK(single[0].center.norm() == doctest::Approx(2.0));
}

TEST_CASE("initialization is stable under input permutation") {
  Rng rng(8);
  std::vector<Vec3> points, colors;
  for (int i = 0; i < 12; ++i) {
    points.emplace_back(rng.normal(), rng.normal(), rng.normal());
    colors.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  InitConfig cfg;
  cfg.seed = 42;
  SceneModel a = init_from_points(points, colors, cfg);

  // Reverse the inputs; per-point streams are keyed by slot index, so the
  // same slot still gets the same phases and sorting recovers the scene.
  std::vector<Vec3> rpoints(points.rbegin(), points.rend());
  std::vector<Vec3> rcolors(colors.rbegin(), colors.rend());
  SceneModel b = init_from_points(rpoints, rcolors, cfg);

  auto key = [](const Primitive& p) {
    return std::make_tuple(p.center[0], p.center[1], p.center[2]);
  };
  std::sort(a.primitives.begin(), a.primitives.end(),
            [&](const Primitive& x, const Primitive& y) { return key(x) < key(y); });
  std::sort(b.primitives.begin(), b.primitives.end(),
            [&](const Primitive& x, const Primitive& y) { return key(x) < key(y); });
  for (std::size_t i = 0; i < a.primitives.size(); ++i) {
    CHECK(a.primitives[i].center == b.primitives[i].center);
    CHECK(a.primitives[i].shape.circumradius_raw ==
          b.primitives[i].shape.circumradius_raw);
    CHECK(a.primitives[i].sh[0] == b.primitives[i].sh[0]);
  }
}

TEST_CASE("synthetic scenes are deterministic and self-consistent") {
  SynthSpec spec;
  spec.primitive_count = 12;
  spec.train_views = 2;
  spec.test_views = 1;
  spec.width = spec.height = 48;
  spec.seed = 9;

  SynthResult a = synth_scene(spec);
  SynthResult b = synth_scene(spec);
  REQUIRE(a.dataset.views.size() == 3);
  CHECK(a.dataset.views[0].image.data == b.dataset.views[0].image.data);
  CHECK(a.ground_truth.primitives[5].center ==
        b.ground_truth.primitives[5].center);
  CHECK(a.dataset.test_indices().size() == 1);

  // The ground truth reproduces its own targets exactly.
  RenderConfig rcfg;
  rcfg.background = spec.background;
  for (const auto& view : a.dataset.views) {
    RenderOutput out = render(a.ground_truth, view.camera, rcfg, kFreqCount);
    CHECK(psnr(out.color, view.image) == 100.0);
  }

  // A perturbed model does not.
  SceneModel perturbed = a.ground_truth;
  perturbed.primitives[0].center += Vec3(0.3, 0, 0);
  RenderOutput out =
      render(perturbed, a.dataset.views[0].camera, rcfg, kFreqCount);
  CHECK(psnr(out.color, a.dataset.views[0].image) < 100.0);
}

TEST_CASE("synthetic dataset round trips through the manifest") {
  TempDir dir("fsplat_synth_dir");
  SynthSpec spec;
  spec.primitive_count = 8;
  spec.train_views = 2;
  spec.test_views = 1;
  spec.width = spec.height = 32;
  spec.seed = 11;
  SynthResult result = synth_scene_to_dir(spec, dir.path.string());

  Dataset loaded = load_dataset((dir.path / "manifest.json").string());
  REQUIRE(loaded.views.size() == 3);
  CHECK(loaded.points.size() == 8);
  CHECK(loaded.train_indices().size() == 2);
  // PNG quantization only.
  for (std::size_t v = 0; v < loaded.views.size(); ++v) {
    for (std::size_t i = 0; i < loaded.views[v].image.size(); ++i) {
      CHECK(std::abs(loaded.views[v].image.data[i] -
                     result.dataset.views[v].image.data[i]) <= 1.0 / 255.0);
    }
  }
  LoadedCheckpoint gt = load_checkpoint((dir.path / "gt.ckpt").string());
  CHECK(gt.scene.primitives.size() == 8);
}
