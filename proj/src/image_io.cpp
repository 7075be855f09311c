#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"
#include "tprs/image.hpp"

namespace tprs {

namespace {

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

uint32_t get_u32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::string& out, const char tag[4], const std::string& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  std::string body(tag, 4);
  body += payload;
  out += body;
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
            static_cast<uInt>(body.size())));
  put_u32(out, crc);
}

std::string zlib_compress(const std::string& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string out(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  out.resize(bound);
  return out;
}

std::string zlib_decompress(const unsigned char* data, size_t len,
                            size_t expected) {
  std::string out(expected, '\0');
  uLongf dest_len = static_cast<uLongf>(expected);
  const int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &dest_len,
                            data, static_cast<uLong>(len));
  if (rc != Z_OK || dest_len != expected) {
    throw std::runtime_error("corrupt PNG: inflate failed");
  }
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

}  // namespace

FundusImage FundusImage::create(int width, int height, int channels, double fill) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    throw std::invalid_argument("image must be WxH with 1 or 3 channels");
  }
  FundusImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<size_t>(width) * height * channels, fill);
  return img;
}

void FundusImage::clamp01() {
  for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
}

bool FundusImage::valid() const {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) return false;
  if (pixels.size() != static_cast<size_t>(width) * height * channels) return false;
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

FundusImage luminance(const FundusImage& img) {
  if (img.channels == 1) return img;
  FundusImage out = FundusImage::create(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                     0.114 * img.at(y, x, 2);
  return out;
}

std::vector<uint8_t> quantize8(const FundusImage& img) {
  std::vector<uint8_t> q(img.pixels.size());
  for (size_t i = 0; i < q.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    q[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return q;
}

void write_png(const std::string& path, const FundusImage& img) {
  if (!img.valid()) throw std::invalid_argument("write_png: invalid image");
  const auto q = quantize8(img);
  const int bpp = img.channels;
  const size_t stride = static_cast<size_t>(img.width) * bpp;

  // filter 0 (none) every scanline; synthetic fundus data compresses fine
  std::string raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(q.data() + y * stride), stride);
  }

  std::string png(reinterpret_cast<const char*>(kPngSig), 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);           // color type
  ihdr.push_back(0);                                   // compression
  ihdr.push_back(0);                                   // filter
  ihdr.push_back(0);                                   // no interlace
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", zlib_compress(raw));
  append_chunk(png, "IEND", "");
  atomic_write_bytes(path, png);
}

FundusImage read_png(const std::string& path) {
  const std::string bytes = read_bytes(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(p, kPngSig, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path);
  }
  size_t off = 8;
  int width = 0, height = 0, channels = 0, file_channels = 0;
  std::string idat;
  bool saw_ihdr = false, saw_iend = false;
  while (off + 8 <= bytes.size()) {
    const uint32_t len = get_u32(p + off);
    if (off + 12 + len > bytes.size()) {
      throw std::runtime_error("truncated PNG: " + path);
    }
    const char* tag = bytes.data() + off + 4;
    const unsigned char* payload = p + off + 8;
    if (std::memcmp(tag, "IHDR", 4) == 0) {
      width = static_cast<int>(get_u32(payload));
      height = static_cast<int>(get_u32(payload + 4));
      const int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8 || interlace != 0) {
        throw std::runtime_error("unsupported PNG (need 8-bit non-interlaced)");
      }
      switch (color) {
        case 0: file_channels = 1; channels = 1; break;
        case 2: file_channels = 3; channels = 3; break;
        case 6: file_channels = 4; channels = 3; break;  // drop alpha
        default: throw std::runtime_error("unsupported PNG color type");
      }
      saw_ihdr = true;
    } else if (std::memcmp(tag, "IDAT", 4) == 0) {
      idat.append(reinterpret_cast<const char*>(payload), len);
    } else if (std::memcmp(tag, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }
    off += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || width <= 0 || height <= 0) {
    throw std::runtime_error("corrupt PNG: " + path);
  }

  const size_t stride = static_cast<size_t>(width) * file_channels;
  const std::string raw = zlib_decompress(
      reinterpret_cast<const unsigned char*>(idat.data()), idat.size(),
      (stride + 1) * height);

  // undo per-scanline filters
  std::vector<uint8_t> pix(stride * height);
  const int bpp = file_channels;
  for (int y = 0; y < height; ++y) {
    const auto* line = reinterpret_cast<const unsigned char*>(raw.data()) +
                       static_cast<size_t>(y) * (stride + 1);
    const int filter = line[0];
    uint8_t* cur = pix.data() + static_cast<size_t>(y) * stride;
    const uint8_t* up = y > 0 ? cur - stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int x = line[1 + i];
      const int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
      int v;
      switch (filter) {
        case 0: v = x; break;
        case 1: v = x + a; break;
        case 2: v = x + b; break;
        case 3: v = x + (a + b) / 2; break;
        case 4: v = x + paeth(a, b, c); break;
        default: throw std::runtime_error("corrupt PNG: bad filter byte");
      }
      cur[i] = static_cast<uint8_t>(v & 0xFF);
    }
  }

  FundusImage img = FundusImage::create(width, height, channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) =
            pix[(static_cast<size_t>(y) * width + x) * file_channels + c] / 255.0;
  return img;
}

void write_pnm(const std::string& path, const FundusImage& img) {
  if (!img.valid()) throw std::invalid_argument("write_pnm: invalid image");
  const auto q = quantize8(img);
  std::ostringstream head;
  head << (img.channels == 1 ? "P5" : "P6") << "\n"
       << img.width << " " << img.height << "\n255\n";
  std::string out = head.str();
  out.append(reinterpret_cast<const char*>(q.data()), q.size());
  atomic_write_bytes(path, out);
}

FundusImage read_pnm(const std::string& path) {
  const std::string bytes = read_bytes(path);
  std::istringstream in(bytes);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  if ((magic != "P5" && magic != "P6") || maxv != 255 || w <= 0 || h <= 0) {
    throw std::runtime_error("unsupported PNM file: " + path);
  }
  in.get();  // single whitespace after header
  const int channels = magic == "P5" ? 1 : 3;
  const size_t need = static_cast<size_t>(w) * h * channels;
  const size_t data_off = static_cast<size_t>(in.tellg());
  if (bytes.size() - data_off < need) {
    throw std::runtime_error("truncated PNM: " + path);
  }
  FundusImage img = FundusImage::create(w, h, channels);
  for (size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[data_off + i]) / 255.0;
  }
  return img;
}

void write_image(const std::string& path, const FundusImage& img) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".png") return write_png(path, img);
  if (ext == ".ppm" || ext == ".pgm") return write_pnm(path, img);
  throw std::invalid_argument("unsupported image extension: " + ext);
}

FundusImage read_image(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm") return read_pnm(path);
  throw std::invalid_argument("unsupported image extension: " + ext);
}

}  // namespace tprs
