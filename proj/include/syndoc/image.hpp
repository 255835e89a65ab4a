// Minimal grayscale raster: PGM round trip, crop, area-average resize.
// Enough image support to feed visual features without an imaging stack.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace syndoc {

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width*height

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x];
  }

  void set(int x, int y, std::uint8_t v) {
    pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + x] = v;
  }

  static Gray8 filled(int w, int h, std::uint8_t v) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Gray8: non-positive size");
    Gray8 img;
    img.width = w;
    img.height = h;
    img.pixels.assign(static_cast<std::size_t>(w) * h, v);
    return img;
  }
};

// Clamped crop: the requested window is intersected with the image, so a
// partially out-of-range box yields the overlapping region.
inline Gray8 crop(const Gray8& img, int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  if (x1 <= x0 || y1 <= y0) return Gray8{};
  Gray8 out = Gray8::filled(x1 - x0, y1 - y0, 0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.set(x - x0, y - y0, img.at(x, y));
  }
  return out;
}

// Box-filter resize: each target pixel averages its source footprint.
// Deterministic integer-free accumulation in double keeps it reproducible.
inline Gray8 resize(const Gray8& img, int out_w, int out_h) {
  if (img.empty()) throw std::invalid_argument("resize: empty source");
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize: non-positive target");
  Gray8 out = Gray8::filled(out_w, out_h, 0);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const int y0 = static_cast<int>(oy * sy);
    const int y1 = std::max(y0 + 1, static_cast<int>((oy + 1) * sy));
    for (int ox = 0; ox < out_w; ++ox) {
      const int x0 = static_cast<int>(ox * sx);
      const int x1 = std::max(x0 + 1, static_cast<int>((ox + 1) * sx));
      double sum = 0.0;
      int count = 0;
      for (int y = y0; y < std::min(y1, img.height); ++y) {
        for (int x = x0; x < std::min(x1, img.width); ++x) {
          sum += img.at(x, y);
          ++count;
        }
      }
      out.set(ox, oy, count == 0 ? 0 : static_cast<std::uint8_t>(sum / count + 0.5));
    }
  }
  return out;
}

inline void fill_rect(Gray8& img, int x0, int y0, int x1, int y1, std::uint8_t v) {
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) img.set(x, y, v);
  }
}

inline void write_pgm(const Gray8& img, const std::filesystem::path& path) {
  if (img.empty()) throw std::invalid_argument("write_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed " + path.string());
}

inline Gray8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: not a P5 file: " + path.string());
  int w = 0;
  int h = 0;
  int maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("read_pgm: bad header: " + path.string());
  }
  in.get();  // single whitespace byte after header
  Gray8 img = Gray8::filled(w, h, 0);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error("read_pgm: truncated pixel data: " + path.string());
  }
  return img;
}

}  // namespace syndoc
