#pragma once

#include <string>
#include <vector>

namespace hav {

// Planar image: data[ch*h*w + y*w + x], values in [0,1], row 0 at the top.
struct Image {
  int w = 0, h = 0, c = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w_, int h_, int c_, double fill = 0.0)
      : w(w_), h(h_), c(c_), data(size_t(w_) * h_ * c_, fill) {}

  double& at(int ch, int y, int x) { return data[(size_t(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const {
    return data[(size_t(ch) * h + y) * w + x];
  }
};

// Minimal PNG io: 8-bit grayscale (c=1) or RGB (c=3), zlib stream with
// uncompressed deflate blocks. The reader accepts only files this writer
// produces. Output is bit-deterministic.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

double psnr(const Image& a, const Image& b);          // capped at 99 dB
double mask_iou(const Image& a, const Image& b, double thresh = 0.5);

} // namespace hav
