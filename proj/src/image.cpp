#include "hav/image.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hav {

namespace {

uint32_t crc_table[256];
bool crc_init_done = false;

void crc_init() {
  for (uint32_t n = 0; n < 256; ++n) {
    uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    crc_table[n] = c;
  }
  crc_init_done = true;
}

uint32_t crc32(const uint8_t* buf, size_t len) {
  if (!crc_init_done) crc_init();
  uint32_t c = 0xffffffffu;
  for (size_t n = 0; n < len; ++n) c = crc_table[(c ^ buf[n]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* buf, size_t len) {
  uint32_t a = 1, b = 0;
  for (size_t n = 0; n < len; ++n) {
    a = (a + buf[n]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_be32(out, uint32_t(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_be32(out, crc32(out.data() + start, out.size() - start));
}

uint8_t quantize(double v) {
  double s = std::round(v * 255.0);
  if (s < 0) s = 0;
  if (s > 255) s = 255;
  return uint8_t(s);
}

} // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw std::runtime_error("write_png: channels must be 1 or 3");

  // raw scanlines: filter byte 0 + samples
  std::vector<uint8_t> raw;
  raw.reserve(size_t(img.h) * (1 + size_t(img.w) * img.c));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) raw.push_back(quantize(img.at(ch, y, x)));
  }

  // zlib with stored deflate blocks
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    size_t n = std::min<size_t>(65535, raw.size() - off);
    bool final = off + n == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(uint8_t(n & 0xff));
    z.push_back(uint8_t(n >> 8));
    z.push_back(uint8_t(~n & 0xff));
    z.push_back(uint8_t((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
    off += n;
    if (final) break;
  }
  put_be32(z, adler32(raw.data(), raw.size()));

  std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, uint32_t(img.w));
  put_be32(ihdr, uint32_t(img.h));
  ihdr.push_back(8);                       // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);      // gray / rgb
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw std::runtime_error("read_png: not a png: " + path);

  auto be32 = [&](size_t p) {
    return (uint32_t(buf[p]) << 24) | (uint32_t(buf[p + 1]) << 16) |
           (uint32_t(buf[p + 2]) << 8) | uint32_t(buf[p + 3]);
  };

  int w = 0, h = 0, channels = 0;
  std::vector<uint8_t> idat;
  size_t p = 8;
  while (p + 8 <= buf.size()) {
    uint32_t len = be32(p);
    std::string type(reinterpret_cast<const char*>(&buf[p + 4]), 4);
    size_t data = p + 8;
    if (data + len > buf.size()) throw std::runtime_error("read_png: truncated");
    if (type == "IHDR") {
      w = int(be32(data));
      h = int(be32(data + 4));
      if (buf[data + 8] != 8) throw std::runtime_error("read_png: bit depth");
      int ct = buf[data + 9];
      channels = ct == 0 ? 1 : ct == 2 ? 3 : -1;
      if (channels < 0) throw std::runtime_error("read_png: color type");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), buf.begin() + data, buf.begin() + data + len);
    } else if (type == "IEND") {
      break;
    }
    p = data + len + 4;
  }
  if (w <= 0 || h <= 0) throw std::runtime_error("read_png: missing IHDR");

  // inflate: stored blocks only (what write_png emits)
  if (idat.size() < 2) throw std::runtime_error("read_png: empty IDAT");
  std::vector<uint8_t> raw;
  size_t q = 2;
  while (true) {
    if (q + 5 > idat.size()) throw std::runtime_error("read_png: bad deflate");
    uint8_t hdr = idat[q];
    if ((hdr >> 1) != 0)
      throw std::runtime_error("read_png: only stored deflate supported");
    size_t n = idat[q + 1] | (size_t(idat[q + 2]) << 8);
    q += 5;
    raw.insert(raw.end(), idat.begin() + q, idat.begin() + q + n);
    q += n;
    if (hdr & 1) break;
  }

  size_t stride = 1 + size_t(w) * channels;
  if (raw.size() != stride * size_t(h))
    throw std::runtime_error("read_png: scanline size mismatch");
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    if (raw[y * stride] != 0)
      throw std::runtime_error("read_png: only filter 0 supported");
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < channels; ++ch)
        img.at(ch, y, x) = raw[y * stride + 1 + size_t(x) * channels + ch] / 255.0;
  }
  return img;
}

double psnr(const Image& a, const Image& b) {
  if (a.w != b.w || a.h != b.h || a.c != b.c)
    throw std::runtime_error("psnr: image shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= double(a.data.size());
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double mask_iou(const Image& a, const Image& b, double thresh) {
  if (a.w != b.w || a.h != b.h)
    throw std::runtime_error("mask_iou: image shape mismatch");
  long inter = 0, uni = 0;
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      bool pa = a.at(0, y, x) >= thresh;
      bool pb = b.at(0, y, x) >= thresh;
      inter += pa && pb;
      uni += pa || pb;
    }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

} // namespace hav
