#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "leancnn/error.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

// Decoded 8-bit image, interleaved, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

struct PreprocessConfig {
  std::size_t target_size = 224;
  // ITU-R BT.601 luma weights.
  double red_weight = 0.299;
  double green_weight = 0.587;
  double blue_weight = 0.114;
  std::size_t blur_kernel = 5;  // odd; 0 or 1 disables blurring
  double blur_sigma = 1.0;
  // Applied after scaling to [0,1]: (v - mean) / std. Identity by default.
  double normalize_mean = 0.0;
  double normalize_std = 1.0;

  void validate() const {
    if (target_size < 8 || target_size % 2 != 0)
      throw ConfigError("preprocess: target size must be even and at least 8");
    if (blur_kernel > 1 && blur_kernel % 2 == 0) throw ConfigError("preprocess: blur kernel size must be odd");
    if (blur_kernel > 1 && !(blur_sigma > 0.0)) throw ConfigError("preprocess: blur sigma must be positive");
    if (!(normalize_std > 0.0)) throw ConfigError("preprocess: normalization std must be positive");
  }
};

namespace image_detail {

inline bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

inline bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff; }

inline Image decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw DataError("data error: cannot decode PNG " + name + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("data error: cannot decode PNG " + name + ": " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// No object with a non-trivial destructor may be created between setjmp and
// a possible longjmp inside this function.
inline bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, Image& out, char* message) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::copy(err.message, err.message + JMSG_LENGTH_MAX, message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.channels = static_cast<std::size_t>(cinfo.output_components);
  out.pixels.resize(out.width * out.height * out.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * out.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline Image decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name) {
  Image out;
  char message[JMSG_LENGTH_MAX] = {};
  if (!decode_jpeg_raw(bytes, out, message))
    throw DataError("data error: cannot decode JPEG " + name + ": " + message);
  return out;
}

}  // namespace image_detail

// PNG or JPEG, chosen by signature. `name` only labels errors.
inline Image decode_image(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>") {
  if (image_detail::is_png(bytes)) return image_detail::decode_png(bytes, name);
  if (image_detail::is_jpeg(bytes)) return image_detail::decode_jpeg(bytes, name);
  throw DataError("data error: " + name + " is neither PNG nor JPEG");
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("data error: cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ConfigError("encode_png: 1 or 3 channels required");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw DataError(std::string("encode_png: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw DataError(std::string("encode_png: ") + img.message);
  out.resize(size);
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---- pixel pipeline (float planes, values in [0,255]) ----------------------

// [H,W] luma. Gray inputs pass through unchanged.
inline Tensor<float> to_grayscale(const Image& image, const PreprocessConfig& cfg = {}) {
  if (image.width == 0 || image.height == 0) throw DataError("data error: empty image");
  Tensor<float> out(Shape{image.height, image.width});
  const std::size_t n = image.width * image.height;
  if (image.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = image.pixels[i];
    return out;
  }
  if (image.channels != 3) throw DataError("data error: unsupported channel count " + std::to_string(image.channels));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = image.pixels.data() + 3 * i;
    out[i] = static_cast<float>(cfg.red_weight * p[0] + cfg.green_weight * p[1] + cfg.blue_weight * p[2]);
  }
  return out;
}

/// Bilinear resize with half-pixel centers: the source coordinate of output
/// pixel d is (d + 0.5) * in/out - 0.5, clamped to the image. Equal sizes are
/// an exact copy.
inline Tensor<float> resize_bilinear(const Tensor<float>& plane, std::size_t out_h, std::size_t out_w) {
  if (plane.rank() != 2) throw ShapeError("resize expects an [H,W] plane");
  const std::size_t in_h = plane.dim(0), in_w = plane.dim(1);
  if (in_h == out_h && in_w == out_w) return plane;
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(in_h, out_h), tx = taps(in_w, out_w);
  Tensor<float> out(Shape{out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const float* r0 = plane.data() + ty[y].lo * in_w;
    const float* r1 = plane.data() + ty[y].hi * in_w;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double top = r0[tx[x].lo] + (r0[tx[x].hi] - static_cast<double>(r0[tx[x].lo])) * tx[x].frac;
      const double bot = r1[tx[x].lo] + (r1[tx[x].hi] - static_cast<double>(r1[tx[x].lo])) * tx[x].frac;
      out[y * out_w + x] = static_cast<float>(top + (bot - top) * ty[y].frac);
    }
  }
  return out;
}

// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw ConfigError("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  std::vector<double> k(size);
  const double center = static_cast<double>(size / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable Gaussian blur with replicated-edge borders.
inline Tensor<float> gaussian_blur(const Tensor<float>& plane, std::size_t size, double sigma) {
  if (plane.rank() != 2) throw ShapeError("blur expects an [H,W] plane");
  if (size <= 1) return plane;
  const auto k = gaussian_kernel(size, sigma);
  const auto r = static_cast<std::ptrdiff_t>(size / 2);
  const auto H = static_cast<std::ptrdiff_t>(plane.dim(0)), W = static_cast<std::ptrdiff_t>(plane.dim(1));
  std::vector<double> tmp(plane.size());
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t j = -r; j <= r; ++j)
        acc += k[static_cast<std::size_t>(j + r)] * plane[static_cast<std::size_t>(y * W + std::clamp(x + j, std::ptrdiff_t{0}, W - 1))];
      tmp[static_cast<std::size_t>(y * W + x)] = acc;
    }
  Tensor<float> out(plane.shape());
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t j = -r; j <= r; ++j)
        acc += k[static_cast<std::size_t>(j + r)] * tmp[static_cast<std::size_t>(std::clamp(y + j, std::ptrdiff_t{0}, H - 1) * W + x)];
      out[static_cast<std::size_t>(y * W + x)] = static_cast<float>(acc);
    }
  return out;
}

/// Decoded image -> [1, S, S] model input: grayscale, bilinear resize to
/// S x S, Gaussian blur, scale to [0,1], then optional standardization.
inline Tensor<float> preprocess(const Image& image, const PreprocessConfig& cfg = {}) {
  cfg.validate();
  Tensor<float> plane = to_grayscale(image, cfg);
  plane = resize_bilinear(plane, cfg.target_size, cfg.target_size);
  plane = gaussian_blur(plane, cfg.blur_kernel, cfg.blur_sigma);
  for (float& v : plane.values())
    v = static_cast<float>((static_cast<double>(v) / 255.0 - cfg.normalize_mean) / cfg.normalize_std);
  return std::move(plane).reshaped(Shape{1, cfg.target_size, cfg.target_size});
}

inline Tensor<float> preprocess(std::span<const std::uint8_t> bytes, const PreprocessConfig& cfg = {},
                                const std::string& name = "<memory>") {
  return preprocess(decode_image(bytes, name), cfg);
}

}  // namespace leancnn
