#include "fsplat/dataset.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace fsplat {

namespace {

using nlohmann::json;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Image load_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("libpng initialization failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> row(png_get_rowbytes(png, info));
  Image img(static_cast<int>(w), static_cast<int>(h), 3);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(static_cast<int>(x), static_cast<int>(y), c) =
            row[3 * x + c] / 255.0;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const std::string& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) {
    throw DataError("save_png expects a 1- or 3-channel image");
  }
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open image for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("libpng initialization failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = img.channels == 3 ? img.at(x, y, c) : img.at(x, y, 0);
        row[3 * x + c] =
            static_cast<png_byte>(std::lround(clamp01(v) * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Dataset load_dataset(const std::string& manifest_path, bool load_images) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("cannot open manifest: " + manifest_path);
  json doc;
  try {
    f >> doc;
  } catch (const json::exception& e) {
    throw DataError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const auto base = std::filesystem::path(manifest_path).parent_path();

  Dataset out;
  if (!doc.contains("cameras") || !doc["cameras"].is_array()) {
    throw DataError("manifest has no cameras array");
  }
  for (const auto& c : doc["cameras"]) {
    TrainView view;
    Camera& cam = view.camera;
    const std::string type = c.value("type", "pinhole");
    cam.projection = type == "ortho" ? Camera::Projection::Orthographic
                                     : Camera::Projection::Perspective;
    cam.fx = c.at("fx").get<double>();
    cam.fy = c.at("fy").get<double>();
    cam.cx = c.at("cx").get<double>();
    cam.cy = c.at("cy").get<double>();
    cam.width = c.at("width").get<int>();
    cam.height = c.at("height").get<int>();
    if (cam.fx <= 0 || cam.fy <= 0) throw DataError("camera focal must be positive");
    const auto& m = c.at("world_to_camera");
    if (!m.is_array() || m.size() != 16) {
      throw DataError("world_to_camera must hold 16 numbers (row-major)");
    }
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 4; ++col)
        cam.world_to_camera(r, col) = m[4 * r + col].get<double>();
    view.name = c.value("image", "");
    view.held_out = c.value("split", "train") == std::string("test");
    if (load_images && !view.name.empty()) {
      view.image = load_png((base / view.name).string());
      if (view.image.width != cam.width || view.image.height != cam.height) {
        throw DataError("image size does not match camera: " + view.name);
      }
    }
    out.views.push_back(std::move(view));
  }

  if (doc.contains("points")) {
    load_points_file((base / doc["points"].get<std::string>()).string(),
                     out.points, out.point_colors);
  }
  return out;
}

void load_points_file(const std::string& path, std::vector<Vec3>& points,
                      std::vector<Vec3>& colors) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open point cloud: " + path);
  points.clear();
  colors.clear();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p, c;
    if (!(ls >> p[0] >> p[1] >> p[2] >> c[0] >> c[1] >> c[2])) {
      throw DataError("malformed point line: " + line);
    }
    points.push_back(p);
    colors.push_back(c);
  }
}

void save_points_file(const std::string& path, const std::vector<Vec3>& points,
                      const std::vector<Vec3>& colors) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write point cloud: " + path);
  for (std::size_t i = 0; i < points.size(); ++i) {
    f << points[i][0] << " " << points[i][1] << " " << points[i][2] << " "
      << colors[i][0] << " " << colors[i][1] << " " << colors[i][2] << "\n";
  }
}

}  // namespace fsplat
