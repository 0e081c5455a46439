#include "marvel/image.hpp"

#include <cstring>
#include <fstream>

namespace marvel {

void GridImage::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw ShapeError("image: non-positive dimensions");
  if (pixels.size() != static_cast<size_t>(height) * width * channels)
    throw ShapeError("image: pixel count does not match dimensions");
}

void write_imgf(const GridImage& img, const std::string& path) {
  img.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image for writing: " + path);
  f.write("IMGF", 4);
  uint32_t dims[3] = {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width),
                      static_cast<uint32_t>(img.channels)};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
  if (!f) throw DataError("image write failed: " + path);
}

GridImage read_imgf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "IMGF", 4) != 0) throw ParseError("bad image magic: " + path);
  uint32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!f) throw ParseError("truncated image header: " + path);
  GridImage img;
  img.height = static_cast<int>(dims[0]);
  img.width = static_cast<int>(dims[1]);
  img.channels = static_cast<int>(dims[2]);
  if (img.height <= 0 || img.width <= 0 || img.channels <= 0 ||
      static_cast<uint64_t>(img.height) * img.width * img.channels > (1u << 28))
    throw ParseError("implausible image dimensions: " + path);
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * img.channels);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
  if (!f) throw ParseError("truncated image pixels: " + path);
  return img;
}

}  // namespace marvel
