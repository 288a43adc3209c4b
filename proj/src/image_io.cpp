#include "geomask/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace geomask {
namespace {

namespace fs = std::filesystem;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return f;
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

struct RawImage {
  int width = 0;
  int height = 0;
  int depth = 8;
  std::vector<std::uint16_t> samples;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

RawImage read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error(ErrorKind::IoFailure, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  RawImage raw;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  volatile bool unsupported = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::CorruptFile, path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    unsupported = true;
  } else {
    raw.width = static_cast<int>(w);
    raw.height = static_cast<int>(h);
    raw.depth = depth;
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (unsupported)
    throw Error(ErrorKind::UnsupportedFormat,
                path.string() + ": only 8/16-bit single-channel grayscale PNG is supported");
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    raw.samples[i] = raw.depth == 8
                         ? buffer[i]
                         : static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  }
  return raw;
}

void write_png(const RawImage& raw, const fs::path& path) {
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error(ErrorKind::IoFailure, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  const std::size_t bytes = raw.depth == 8 ? 1 : 2;
  std::vector<png_byte> buffer(static_cast<std::size_t>(raw.width) * raw.height * bytes);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (bytes == 1) {
      buffer[i] = static_cast<png_byte>(raw.samples[i]);
    } else {
      buffer[2 * i] = static_cast<png_byte>(raw.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(raw.samples[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * raw.width * bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::IoFailure, path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, raw.width, raw.height, raw.depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// P5 header: magic, width, height, maxval separated by whitespace, comments allowed.
RawImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic == "P6" || magic == "P3") throw Error(ErrorKind::UnsupportedFormat, path.string() + ": color PPM");
  if (magic.size() == 2 && magic[0] == 'P' && magic[1] >= '1' && magic[1] <= '7')
    if (magic != "P5") throw Error(ErrorKind::UnsupportedFormat, path.string() + ": not a binary PGM");
  if (magic != "P5") throw Error(ErrorKind::CorruptFile, path.string() + ": neither PNG nor PGM");
  RawImage raw;
  int maxval = 0;
  try {
    raw.width = std::stoi(next_token());
    raw.height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorKind::CorruptFile, path.string() + ": malformed PGM header");
  }
  if (raw.width < 1 || raw.height < 1) throw Error(ErrorKind::CorruptFile, path.string() + ": bad dimensions");
  if (maxval != 255 && maxval != 65535)
    throw Error(ErrorKind::UnsupportedFormat, path.string() + ": PGM maxval must be 255 or 65535");
  raw.depth = maxval == 255 ? 8 : 16;
  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
  const std::size_t bytes = raw.depth == 8 ? 1 : 2;
  std::vector<unsigned char> buffer(n * bytes);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  if (static_cast<std::size_t>(in.gcount()) != buffer.size())
    throw Error(ErrorKind::CorruptFile, path.string() + ": truncated pixel data");
  raw.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    raw.samples[i] = bytes == 1 ? buffer[i] : static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  return raw;
}

void write_pgm(const RawImage& raw, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "P5\n" << raw.width << ' ' << raw.height << '\n' << (raw.depth == 8 ? 255 : 65535) << '\n';
  for (std::uint16_t s : raw.samples) {
    if (raw.depth == 8) {
      out.put(static_cast<char>(s));
    } else {
      out.put(static_cast<char>(s >> 8));
      out.put(static_cast<char>(s & 0xff));
    }
  }
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

RawImage read_raw(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::IoFailure, "no such file: " + path.string());
  return has_png_signature(path) ? read_png(path) : read_pgm(path);
}

bool wants_pgm(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".pgm";
}

void write_raw(const RawImage& raw, const fs::path& path) {
  if (wants_pgm(path))
    write_pgm(raw, path);
  else
    write_png(raw, path);
}

}  // namespace

GrayImage read_image(const fs::path& path) {
  const RawImage raw = read_raw(path);
  const double scale = raw.depth == 8 ? 255.0 : 65535.0;
  GrayImage img(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      img(x, y) = static_cast<float>(raw.samples[static_cast<std::size_t>(y) * raw.width + x] / scale);
  return img;
}

BitDepth read_bit_depth(const fs::path& path) {
  return read_raw(path).depth == 8 ? BitDepth::Eight : BitDepth::Sixteen;
}

void write_image(const GrayImage& img, const fs::path& path, BitDepth depth) {
  RawImage raw;
  raw.width = img.width();
  raw.height = img.height();
  raw.depth = static_cast<int>(depth);
  const double maxval = depth == BitDepth::Eight ? 255.0 : 65535.0;
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const double v = std::clamp(static_cast<double>(img(x, y)), 0.0, 1.0);
      raw.samples[static_cast<std::size_t>(y) * raw.width + x] = static_cast<std::uint16_t>(std::lround(v * maxval));
    }
  }
  write_raw(raw, path);
}

void write_mask(const BinaryMask& mask, const fs::path& path) {
  RawImage raw;
  raw.width = mask.width();
  raw.height = mask.height();
  raw.depth = 8;
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      raw.samples[static_cast<std::size_t>(y) * raw.width + x] = mask.get(x, y) ? 255 : 0;
  write_raw(raw, path);
}

BinaryMask read_mask(const fs::path& path) {
  const RawImage raw = read_raw(path);
  BinaryMask mask(raw.width, raw.height);
  const std::uint16_t half = raw.depth == 8 ? 128 : 32768;
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      mask.set(x, y, raw.samples[static_cast<std::size_t>(y) * raw.width + x] >= half);
  return mask;
}

}  // namespace geomask
