#include "layergs/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace lgs {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4],
                 const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> head;
  put_be32(head, static_cast<std::uint32_t>(payload.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!payload.empty()) {
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  }
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty()) crc = crc32(crc, payload.data(), payload.size());
  std::vector<std::uint8_t> tail;
  put_be32(tail, static_cast<std::uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("write_png: expected 1 or 3 channels");
  }
  const int w = img.width(), h = img.height(), ch = img.channels();

  std::vector<std::uint8_t> scan;
  scan.reserve(static_cast<std::size_t>(h) * (1 + w * ch));
  for (int y = 0; y < h; ++y) {
    scan.push_back(0);  // filter: none
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) scan.push_back(quantize(img.at(y, x, c)));
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(scan.size()));
  std::vector<std::uint8_t> deflated(bound);
  if (compress2(deflated.data(), &bound, scan.data(),
                static_cast<uLong>(scan.size()), 6) != Z_OK) {
    throw std::runtime_error("write_png: deflate failed");
  }
  deflated.resize(bound);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  static const std::uint8_t magic[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(magic), 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);                                // bit depth
  ihdr.push_back(ch == 3 ? 2 : 0);                  // color type
  ihdr.insert(ihdr.end(), {0, 0, 0});               // compression/filter/interlace
  write_chunk(f, "IHDR", ihdr);
  write_chunk(f, "IDAT", deflated);
  write_chunk(f, "IEND", {});
  if (!f) throw std::runtime_error("write_png: write failed for " + path);
}

void write_pfm(const std::string& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("write_pfm: expected 1 or 3 channels");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pfm: cannot open " + path);
  f << (img.channels() == 3 ? "PF" : "Pf") << "\n"
    << img.width() << " " << img.height() << "\n"
    << "-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = img.height() - 1; y >= 0; --y) {
    std::size_t k = 0;
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        row[k++] = static_cast<float>(img.at(y, x, c));
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("write_pfm: write failed for " + path);
}

Image read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string tag;
  int w = 0, h = 0;
  double scale = 0.0;
  f >> tag >> w >> h >> scale;
  if ((tag != "PF" && tag != "Pf") || w <= 0 || h <= 0 || scale == 0.0) {
    throw std::runtime_error("read_pfm: malformed header in " + path);
  }
  f.get();  // single whitespace after the scale line
  const int ch = (tag == "PF") ? 3 : 1;
  const bool little_endian = scale < 0.0;
  Image img(w, h, ch);
  std::vector<float> row(static_cast<std::size_t>(w) * ch);
  for (int i = 0; i < h; ++i) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f) throw std::runtime_error("read_pfm: truncated data in " + path);
    if (!little_endian) {
      for (auto& v : row) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) |
            (u >> 24);
        std::memcpy(&v, &u, 4);
      }
    }
    const int y = h - 1 - i;  // PFM rows are bottom-up
    std::size_t k = 0;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) img.at(y, x, c) = row[k++];
    }
  }
  return img;
}

}  // namespace lgs
