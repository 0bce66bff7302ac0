#include "fsplat/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "fsplat/checkpoint.hpp"
#include "fsplat/rng.hpp"
#include "fsplat/sh.hpp"

namespace fsplat {

namespace {

constexpr double kShC0 = 0.28209479177387814;

Primitive random_primitive(Rng& rng, ShapeFamily family) {
  Primitive p;
  p.center = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                  rng.uniform(-0.6, 0.6));
  // Random orientation biased toward facing outward so most primitives are
  // visible from the camera ring.
  Vec4 q(rng.normal(), 0.35 * rng.normal(), 0.35 * rng.normal(),
         0.35 * rng.normal());
  p.rotation = q / q.norm();
  p.opacity_raw = logit(rng.uniform(0.65, 0.95));
  p.shape.circumradius_raw = std::log(rng.uniform(0.18, 0.42));
  p.shape.sharpness_raw = inverse_softplus(rng.uniform(0.5, 1.5) - kSigmaEps);

  bool lobed = family == ShapeFamily::Lobed ||
               (family == ShapeFamily::Mixed && rng.uniform() < 0.5);
  if (lobed) {
    int lobe_k = 2 + static_cast<int>(rng.uniform_index(4));  // 2..5
    double lobe_mass = rng.uniform(0.25, 0.40);
    double dc_mass = 1.0 - lobe_mass;
    for (int k = 0; k < kFreqCount; ++k) p.shape.amplitudes_raw[k] = 0.0;
    p.shape.amplitudes_raw[0] = std::sqrt(dc_mass);
    p.shape.amplitudes_raw[lobe_k] = std::sqrt(lobe_mass);
    // A whiff of energy elsewhere keeps the optimization landscape honest.
    for (int k = 1; k < kFreqCount; ++k) {
      if (k == lobe_k) continue;
      p.shape.amplitudes_raw[k] = rng.uniform(0.0, 0.05);
    }
  } else {
    p.shape.amplitudes_raw[0] = 1.0;
    for (int k = 1; k < kFreqCount; ++k)
      p.shape.amplitudes_raw[k] = rng.uniform(0.0, 0.02);
  }
  for (int k = 0; k < kFreqCount; ++k)
    p.shape.phases[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);

  Vec3 rgb(rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
           rng.uniform(0.15, 0.95));
  for (int c = 0; c < 3; ++c) p.sh[c * kShBases] = (rgb[c] - 0.5) / kShC0;
  // Mild view dependence in the first band.
  for (int c = 0; c < 3; ++c)
    for (int b = 1; b < 4; ++b)
      p.sh[c * kShBases + b] = 0.08 * rng.normal();
  return p;
}

Camera ring_camera(int index, int total, const SynthSpec& spec, double tilt) {
  Camera cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.fx = cam.fy = 0.9 * spec.width;
  cam.cx = spec.width / 2.0;
  cam.cy = spec.height / 2.0;
  double angle = 2.0 * std::numbers::pi * index / total;
  Vec3 eye(spec.camera_distance * std::cos(angle),
           spec.camera_distance * std::sin(angle),
           tilt * spec.camera_distance);
  cam.world_to_camera = look_at(eye, Vec3::Zero(), Vec3(0, 0, 1));
  return cam;
}

}  // namespace

SynthResult synth_scene(const SynthSpec& spec) {
  Rng rng = Rng::stream(spec.seed, RngStream::Synth);
  SynthResult out;
  out.ground_truth.budget_max = spec.primitive_count;
  out.ground_truth.k_active = kFreqCount;
  out.ground_truth.sh_degree_active = 1;
  for (int i = 0; i < spec.primitive_count; ++i) {
    out.ground_truth.primitives.push_back(random_primitive(rng, spec.family));
  }
  out.ground_truth.sync_aux();

  RenderConfig rcfg;
  rcfg.background = spec.background;
  const int total = spec.train_views + spec.test_views;
  for (int v = 0; v < total; ++v) {
    TrainView view;
    // Interleave test cameras between training ones on the same ring, with
    // alternating elevation for parallax.
    double tilt = (v % 2 == 0) ? 0.25 : 0.45;
    view.camera = ring_camera(v, total, spec, tilt);
    view.held_out = v >= spec.train_views;
    RenderOutput render_out =
        render(out.ground_truth, view.camera, rcfg, kFreqCount);
    view.image = render_out.color;
    std::ostringstream name;
    name << "images/view_" << v << ".png";
    view.name = name.str();
    out.dataset.views.push_back(std::move(view));
  }

  for (const Primitive& p : out.ground_truth.primitives) {
    out.dataset.points.push_back(p.center);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c)
      rgb[c] = clamp01(p.sh[c * kShBases] * kShC0 + 0.5);
    out.dataset.point_colors.push_back(rgb);
  }
  return out;
}

SynthResult synth_scene_to_dir(const SynthSpec& spec, const std::string& dir) {
  SynthResult out = synth_scene(spec);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");

  nlohmann::json manifest;
  manifest["points"] = "points.txt";
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& view : out.dataset.views) {
    nlohmann::json c;
    c["type"] = view.camera.projection == Camera::Projection::Orthographic
                    ? "ortho"
                    : "pinhole";
    c["fx"] = view.camera.fx;
    c["fy"] = view.camera.fy;
    c["cx"] = view.camera.cx;
    c["cy"] = view.camera.cy;
    c["width"] = view.camera.width;
    c["height"] = view.camera.height;
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 4; ++col)
        m.push_back(view.camera.world_to_camera(r, col));
    c["world_to_camera"] = m;
    c["image"] = view.name;
    c["split"] = view.held_out ? "test" : "train";
    cams.push_back(c);
    save_png((fs::path(dir) / view.name).string(), view.image);
  }
  manifest["cameras"] = cams;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";

  save_points_file((fs::path(dir) / "points.txt").string(), out.dataset.points,
                   out.dataset.point_colors);
  save_checkpoint((fs::path(dir) / "gt.ckpt").string(), out.ground_truth);
  return out;
}

}  // namespace fsplat
