// SPDX-License-Identifier: Apache-2.0
#include "ip3d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ip3d::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open PNG", path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG decode error", path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr,
               nullptr, nullptr);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);

  std::vector<uint8_t> raw(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(static_cast<int>(height), static_cast<int>(width), channels);
  if (bit_depth == 16) {
    for (png_uint_32 y = 0; y < height; ++y) {
      const uint8_t* row = raw.data() + y * row_bytes;
      for (size_t i = 0; i < width * static_cast<size_t>(channels); ++i) {
        const unsigned v = (unsigned(row[2 * i]) << 8) | row[2 * i + 1];
        out[y * width * channels + i] = v / 65535.0;
      }
    }
  } else if (bit_depth == 8) {
    for (png_uint_32 y = 0; y < height; ++y) {
      const uint8_t* row = raw.data() + y * row_bytes;
      for (size_t i = 0; i < width * static_cast<size_t>(channels); ++i) {
        out[y * width * channels + i] = row[i] / 255.0;
      }
    }
  } else {
    fail("unsupported PNG bit depth", path);
  }
  return out;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3 && image.channels() != 4) {
    throw std::invalid_argument("write_png: channels must be 1, 3 or 4");
  }
  if (image.height() <= 0 || image.width() <= 0) {
    throw std::invalid_argument("write_png: empty image");
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open PNG for writing", path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG encode error", path);
  }

  const int color_type = image.channels() == 1   ? PNG_COLOR_TYPE_GRAY
                         : image.channels() == 3 ? PNG_COLOR_TYPE_RGB
                                               : PNG_COLOR_TYPE_RGBA;
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(image.width()) * image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (size_t i = 0; i < row.size(); ++i) {
      const double v =
          std::clamp(image[y * row.size() + i], 0.0, 1.0);
      row[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

std::string header_field(const std::string& header, const std::string& key) {
  const auto kpos = header.find("'" + key + "'");
  if (kpos == std::string::npos) fail("NPY header missing key", key);
  auto at = header.find(':', kpos);
  if (at == std::string::npos) fail("malformed NPY header", key);
  ++at;
  while (at < header.size() && header[at] == ' ') ++at;
  size_t end = at;
  if (header[at] == '\'') {
    end = header.find('\'', at + 1) + 1;
  } else if (header[at] == '(') {
    end = header.find(')', at) + 1;
  } else {
    while (end < header.size() && header[end] != ',' && header[end] != '}') {
      ++end;
    }
  }
  return header.substr(at, end - at);
}

}  // namespace

Image read_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open NPY", path);

  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    fail("not a NPY file", path);
  }
  uint8_t ver[2];
  in.read(reinterpret_cast<char*>(ver), 2);
  uint32_t header_len = 0;
  if (ver[0] == 1) {
    uint8_t b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (uint32_t(b[1]) << 8);
  } else {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
                 (uint32_t(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) fail("truncated NPY header", path);

  const std::string descr = header_field(header, "descr");
  const std::string order = header_field(header, "fortran_order");
  if (order.find("True") != std::string::npos) {
    fail("fortran-order NPY not supported", path);
  }
  const bool f32 = descr.find("f4") != std::string::npos;
  const bool f64 = descr.find("f8") != std::string::npos;
  if (!f32 && !f64) fail("NPY dtype must be float32/float64", path);

  std::string shape = header_field(header, "shape");
  std::vector<long> dims;
  for (size_t i = 0; i < shape.size();) {
    if (std::isdigit(static_cast<unsigned char>(shape[i]))) {
      size_t used = 0;
      dims.push_back(std::stol(shape.substr(i), &used));
      i += used;
    } else {
      ++i;
    }
  }
  if (dims.size() != 2 && dims.size() != 3) {
    fail("NPY shape must have 2 or 3 dims", path);
  }
  const long h = dims[0], w = dims[1];
  const long c = dims.size() == 3 ? dims[2] : 1;
  if (h <= 0 || w <= 0 || c <= 0) fail("bad NPY shape", path);

  Image out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  const size_t count = out.size();
  if (f64) {
    in.read(reinterpret_cast<char*>(out.data()), count * sizeof(double));
  } else {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), count * sizeof(float));
    std::copy(buf.begin(), buf.end(), out.data());
  }
  if (!in) fail("truncated NPY data", path);
  return out;
}

void write_npy(const std::string& path, const Image& image) {
  std::ostringstream dict;
  dict << "{'descr': '<f8', 'fortran_order': False, 'shape': ("
       << image.height() << ", " << image.width() << ", " << image.channels()
       << "), }";
  std::string header = dict.str();
  const size_t base = 10;
  size_t padded = ((base + header.size() + 1 + 63) / 64) * 64;
  header.append(padded - base - header.size() - 1, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open NPY for writing", path);
  out.write("\x93NUMPY\x01\x00", 8);
  const uint16_t hlen = static_cast<uint16_t>(header.size());
  const uint8_t lo = hlen & 0xff, hi = hlen >> 8;
  out.put(static_cast<char>(lo));
  out.put(static_cast<char>(hi));
  out.write(header.data(), header.size());
  out.write(reinterpret_cast<const char*>(image.data()),
            image.size() * sizeof(double));
  if (!out) fail("NPY write failed", path);
}

}  // namespace ip3d::io
