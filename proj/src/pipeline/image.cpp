#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fdlite/errors.hpp"
#include "fdlite/pipeline.hpp"

namespace fdlite::pipeline {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
  if (w < 1 || h < 1) throw DataError("image dimensions must be positive");
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Next header token of a PNM file, skipping whitespace and comments.
long ppm_token(const std::string& b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  long v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000) throw FormatError("PPM header value out of range");
    ++pos;
  }
  if (pos == start) throw FormatError("corrupt PPM header");
  return v;
}

}  // namespace

RgbImage decode_ppm(const std::string& b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '6') throw FormatError("not a binary PPM (P6) file");
  std::size_t pos = 2;
  const long w = ppm_token(b, pos);
  const long h = ppm_token(b, pos);
  const long maxval = ppm_token(b, pos);
  if (w < 1 || h < 1) throw FormatError("PPM dimensions must be positive");
  if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported");
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    throw FormatError("corrupt PPM header");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (b.size() - pos < need) {
    throw FormatError("truncated PPM: expected " + std::to_string(need) + " pixel bytes, found " +
                      std::to_string(b.size() - pos));
  }
  RgbImage img(static_cast<int>(w), static_cast<int>(h));
  std::memcpy(img.pixels.data(), b.data() + pos, need);
  return img;
}

RgbImage decode_png(const std::string& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("corrupt PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("corrupt PNG: " + msg);
  }
  return img;
}

RgbImage decode_image(const std::string& bytes) {
  static const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw FormatError("unsupported image format (expected PPM P6 or PNG)");
}

RgbImage load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

std::string encode_png(const RgbImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void save_image(const RgbImage& image, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  const std::string bytes = ext == ".png" ? encode_png(image) : encode_ppm(image);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

RgbImage flip_horizontal(const RgbImage& image) {
  RgbImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      std::memcpy(out.px(image.width - 1 - x, y), image.px(x, y), 3);
    }
  }
  return out;
}

TensorBuf resize_bilinear(const RgbImage& image, int width, int height) {
  if (width < 1 || height < 1) throw DataError("resize target must be positive");
  TensorBuf out({1, height, width, 3});
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int n_out, int n_in, double s) {
    std::vector<Tap> t(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      double src = (o + 0.5) * s - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, n_in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto tx = taps(width, image.width, sx);
  const auto ty = taps(height, image.height, sy);
  float* dst = out.data().data();
  for (int y = 0; y < height; ++y) {
    const auto& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const auto& vx = tx[static_cast<std::size_t>(x)];
      const auto* p00 = image.px(vx.i0, vy.i0);
      const auto* p01 = image.px(vx.i1, vy.i0);
      const auto* p10 = image.px(vx.i0, vy.i1);
      const auto* p11 = image.px(vx.i1, vy.i1);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + (p01[c] - p00[c]) * vx.f;
        const double bot = p10[c] + (p11[c] - p10[c]) * vx.f;
        *dst++ = static_cast<float>(top + (bot - top) * vy.f);
      }
    }
  }
  return out;
}

std::pair<int, int> resized_size(int width, int height, int target) {
  if (target < 32) throw ConfigError("short-edge target must be at least 32, got " + std::to_string(target));
  const bool landscape = width >= height;
  const std::int64_t shorter = landscape ? height : width;
  const std::int64_t longer = landscape ? width : height;
  const auto scaled = static_cast<int>((longer * target + shorter - 1) / shorter);
  return landscape ? std::make_pair(scaled, target) : std::make_pair(target, scaled);
}

Preprocessed preprocess(const RgbImage& image, int target) {
  const auto [w, h] = resized_size(image.width, image.height, target);
  Preprocessed p;
  p.tensor = resize_bilinear(image, w, h);
  p.scale = static_cast<double>(target) / std::min(image.width, image.height);
  auto d = p.tensor.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = static_cast<float>(d[i] - kChannelMeans[i % 3]);
  }
  return p;
}

}  // namespace fdlite::pipeline
