#include "fsplat/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace fsplat {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

void pack_primitive(const Primitive& p, std::vector<float>& out) {
  auto push = [&](double v) { out.push_back(static_cast<float>(v)); };
  for (int c = 0; c < 3; ++c) push(p.center[c]);
  for (int c = 0; c < 4; ++c) push(p.rotation[c]);
  push(p.opacity_raw);
  for (double v : p.sh) push(v);
  push(p.shape.circumradius_raw);
  for (double v : p.shape.amplitudes_raw) push(v);
  for (double v : p.shape.phases) push(v);
  push(p.shape.sharpness_raw);
}

Primitive unpack_primitive(const float* rec) {
  Primitive p;
  int i = 0;
  for (int c = 0; c < 3; ++c) p.center[c] = rec[i++];
  for (int c = 0; c < 4; ++c) p.rotation[c] = rec[i++];
  p.opacity_raw = rec[i++];
  for (auto& v : p.sh) v = rec[i++];
  p.shape.circumradius_raw = rec[i++];
  for (auto& v : p.shape.amplitudes_raw) v = rec[i++];
  for (auto& v : p.shape.phases) v = rec[i++];
  p.shape.sharpness_raw = rec[i++];
  return p;
}

void pack_grad(const PrimGrad& g, std::vector<double>& out) {
  for (int c = 0; c < 3; ++c) out.push_back(g.center[c]);
  for (int c = 0; c < 4; ++c) out.push_back(g.rotation[c]);
  out.push_back(g.opacity_raw);
  for (double v : g.sh) out.push_back(v);
  out.push_back(g.circumradius_raw);
  for (double v : g.amplitudes_raw) out.push_back(v);
  for (double v : g.phases) out.push_back(v);
  out.push_back(g.sharpness_raw);
}

PrimGrad unpack_grad(const double* rec) {
  PrimGrad g;
  int i = 0;
  for (int c = 0; c < 3; ++c) g.center[c] = rec[i++];
  for (int c = 0; c < 4; ++c) g.rotation[c] = rec[i++];
  g.opacity_raw = rec[i++];
  for (auto& v : g.sh) v = rec[i++];
  g.circumradius_raw = rec[i++];
  for (auto& v : g.amplitudes_raw) v = rec[i++];
  for (auto& v : g.phases) v = rec[i++];
  g.sharpness_raw = rec[i++];
  return g;
}

}  // namespace

void save_checkpoint(const std::string& path, const SceneModel& scene,
                     const CheckpointExtra* extra) {
  json header;
  header["magic"] = "fsplat";
  header["version"] = kFormatVersion;
  header["freq_count"] = kFreqCount;
  header["sh_degree"] = scene.sh_degree_active;
  header["count"] = scene.primitives.size();
  header["k_active"] = scene.k_active;
  header["budget_max"] = scene.budget_max;
  header["iteration"] = extra ? extra->iteration : 0;
  {
    std::ostringstream os;
    os << "0x" << std::hex << (extra ? extra->seed : 0);
    header["rng_seed"] = os.str();
  }
  json sections = json::array();
  sections.push_back("dome_flags");
  if (extra && extra->has_adam) sections.push_back("adam");
  header["sections"] = sections;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f << header.dump() << "\n";

  std::vector<float> records;
  records.reserve(scene.primitives.size() * kPrimitiveScalars);
  for (const Primitive& p : scene.primitives) pack_primitive(p, records);
  f.write(reinterpret_cast<const char*>(records.data()),
          static_cast<std::streamsize>(records.size() * sizeof(float)));

  std::vector<std::uint8_t> flags(scene.dome_flags);
  flags.resize(scene.primitives.size(), 0);
  f.write(reinterpret_cast<const char*>(flags.data()),
          static_cast<std::streamsize>(flags.size()));

  if (extra && extra->has_adam) {
    std::int64_t step = extra->adam.step;
    f.write(reinterpret_cast<const char*>(&step), sizeof(step));
    std::vector<double> moments;
    moments.reserve(2 * scene.primitives.size() * kPrimitiveScalars);
    for (const PrimGrad& g : extra->adam.m) pack_grad(g, moments);
    for (const PrimGrad& g : extra->adam.v) pack_grad(g, moments);
    f.write(reinterpret_cast<const char*>(moments.data()),
            static_cast<std::streamsize>(moments.size() * sizeof(double)));
  }
  if (!f) throw DataError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw DataError("checkpoint header is not valid JSON");
  }
  if (header.value("magic", "") != std::string("fsplat")) {
    throw DataError("not a model checkpoint (bad magic)");
  }
  if (header.value("version", -1) != kFormatVersion) {
    throw DataError("unsupported checkpoint version");
  }
  if (header.value("freq_count", -1) != kFreqCount) {
    throw DataError("checkpoint frequency count does not match this build");
  }

  LoadedCheckpoint out;
  const std::size_t count = header.value("count", std::size_t{0});
  out.scene.sh_degree_active = header.value("sh_degree", 3);
  out.scene.k_active = header.value("k_active", kFreqCount);
  out.scene.budget_max = header.value("budget_max", count);
  out.extra.iteration = header.value("iteration", 0);
  if (header.contains("rng_seed")) {
    out.extra.seed =
        std::stoull(header["rng_seed"].get<std::string>(), nullptr, 16);
  }

  std::vector<float> records(count * kPrimitiveScalars);
  f.read(reinterpret_cast<char*>(records.data()),
         static_cast<std::streamsize>(records.size() * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != records.size() * sizeof(float)) {
    throw DataError("checkpoint primitive section has wrong size");
  }
  out.scene.primitives.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.scene.primitives.push_back(
        unpack_primitive(records.data() + i * kPrimitiveScalars));
  }
  out.scene.sync_aux();

  for (const auto& section : header.value("sections", json::array())) {
    const std::string name = section.get<std::string>();
    if (name == "dome_flags") {
      std::vector<std::uint8_t> flags(count);
      f.read(reinterpret_cast<char*>(flags.data()),
             static_cast<std::streamsize>(count));
      if (static_cast<std::size_t>(f.gcount()) != count) {
        throw DataError("checkpoint dome-flag section has wrong size");
      }
      out.scene.dome_flags = std::move(flags);
    } else if (name == "adam") {
      out.extra.has_adam = true;
      std::int64_t step = 0;
      f.read(reinterpret_cast<char*>(&step), sizeof(step));
      out.extra.adam.step = step;
      std::vector<double> moments(2 * count * kPrimitiveScalars);
      f.read(reinterpret_cast<char*>(moments.data()),
             static_cast<std::streamsize>(moments.size() * sizeof(double)));
      if (static_cast<std::size_t>(f.gcount()) !=
          moments.size() * sizeof(double)) {
        throw DataError("checkpoint optimizer section has wrong size");
      }
      for (std::size_t i = 0; i < count; ++i)
        out.extra.adam.m.push_back(
            unpack_grad(moments.data() + i * kPrimitiveScalars));
      for (std::size_t i = 0; i < count; ++i)
        out.extra.adam.v.push_back(
            unpack_grad(moments.data() + (count + i) * kPrimitiveScalars));
    } else {
      throw DataError("unknown checkpoint section: " + name);
    }
  }
  return out;
}

void quantize_to_checkpoint_precision(SceneModel& scene) {
  auto q = [](double& v) { v = static_cast<float>(v); };
  for (Primitive& p : scene.primitives) {
    for (int c = 0; c < 3; ++c) q(p.center[c]);
    for (int c = 0; c < 4; ++c) q(p.rotation[c]);
    q(p.opacity_raw);
    for (auto& v : p.sh) q(v);
    q(p.shape.circumradius_raw);
    for (auto& v : p.shape.amplitudes_raw) q(v);
    for (auto& v : p.shape.phases) q(v);
    q(p.shape.sharpness_raw);
  }
}

}  // namespace fsplat
