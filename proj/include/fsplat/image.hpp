#pragma once

#include <cstddef>
#include <vector>

#include "fsplat/common.hpp"

namespace fsplat {

// Row-major, channel-interleaved image with values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
};

}  // namespace fsplat
