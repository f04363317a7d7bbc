#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rnav/raster.hpp"

namespace rnav {

/// Grayscale PFM ("Pf"), rows bottom-to-top, scale -1.0 (little endian).
inline void write_pfm(const std::filesystem::path& path, const DepthRaster& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pfm: cannot open " + path.string());
  out << "Pf\n" << raster.width() << " " << raster.height() << "\n-1.0\n";
  for (int j = raster.height() - 1; j >= 0; --j) {
    out.write(reinterpret_cast<const char*>(raster.data() +
                                            static_cast<std::size_t>(j) * raster.width()),
              static_cast<std::streamsize>(raster.width() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write_pfm: write failed on " + path.string());
}

inline DepthRaster read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pfm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "Pf") throw std::runtime_error("read_pfm: not a grayscale PFM");
  int width = 0, height = 0;
  double scale = 0.0;
  in >> width >> height >> scale;
  if (width <= 0 || height <= 0 || scale == 0.0) {
    throw std::runtime_error("read_pfm: malformed header");
  }
  in.get();  // the single whitespace after the scale
  DepthRaster raster(width, height);
  for (int j = height - 1; j >= 0; --j) {
    in.read(reinterpret_cast<char*>(raster.data() +
                                    static_cast<std::size_t>(j) * width),
            static_cast<std::streamsize>(width * sizeof(float)));
  }
  if (!in) throw std::runtime_error("read_pfm: truncated data");
  if (scale > 0.0) {  // big-endian payload
    for (auto& v : raster) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = ((bits & 0xff000000u) >> 24) | ((bits & 0x00ff0000u) >> 8) |
             ((bits & 0x0000ff00u) << 8) | ((bits & 0x000000ffu) << 24);
      std::memcpy(&v, &bits, 4);
    }
  }
  return raster;
}

/// Binary PGM ("P5"), maxval 255; 255 marks a valid pixel.
inline void write_pgm(const std::filesystem::path& path, const MaskRaster& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.data()),
            static_cast<std::streamsize>(mask.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed on " + path.string());
}

inline MaskRaster read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: not a binary PGM");
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw std::runtime_error("read_pgm: malformed header");
  }
  in.get();
  MaskRaster mask(width, height);
  in.read(reinterpret_cast<char*>(mask.data()),
          static_cast<std::streamsize>(mask.size()));
  if (!in) throw std::runtime_error("read_pgm: truncated data");
  return mask;
}

}  // namespace rnav
