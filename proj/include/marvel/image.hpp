#pragma once

#include <string>
#include <vector>

#include "marvel/common.hpp"

namespace marvel {

// Grid image: row-major, channel-minor pixels in [0,1].
struct GridImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }

  void validate() const;
};

// Binary image format: "IMGF", u32 height, u32 width, u32 channels,
// f32 little-endian pixels row-major channel-minor.
void write_imgf(const GridImage& img, const std::string& path);
GridImage read_imgf(const std::string& path);

}  // namespace marvel
