#pragma once

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "cnnf/data/image.hpp"

namespace cnnf {

// PNG and JPEG, decoded to 8-bit RGB. Anything else is rejected.
enum class ImageCodec { png, jpeg, unknown };

inline ImageCodec sniff_codec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), sizeof sig);
  const auto got = in.gcount();
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (got == 8 && std::memcmp(sig, png_sig, 8) == 0) return ImageCodec::png;
  if (got >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return ImageCodec::jpeg;
  return ImageCodec::unknown;
}

namespace detail {

inline Image rgb_bytes_to_image(const std::vector<unsigned char>& px, std::size_t h, std::size_t w) {
  Image img({1, h, w, 3});
  for (std::size_t i = 0; i < px.size(); ++i) img[i] = static_cast<float>(px[i]);
  return img;
}

inline Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw InvalidImageError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw InvalidImageError(path.string() + ": zero-dimension image");
  }
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw InvalidImageError(path.string() + ": " + msg);
  }
  return rgb_bytes_to_image(px, image.height, image.width);
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!file) throw InvalidImageError(path.string() + ": cannot open");
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  std::vector<unsigned char> px;
  std::size_t h = 0, w = 0;
  // no C++ objects with destructors are created between setjmp and longjmp
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw InvalidImageError(path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = cinfo.output_height;
  w = cinfo.output_width;
  px.resize(h * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (h == 0 || w == 0) throw InvalidImageError(path.string() + ": zero-dimension image");
  return rgb_bytes_to_image(px, h, w);
}

}  // namespace detail

inline Image read_image(const std::filesystem::path& path) {
  switch (sniff_codec(path)) {
    case ImageCodec::png: return detail::read_png(path);
    case ImageCodec::jpeg: return detail::read_jpeg(path);
    default: throw InvalidImageError(path.string() + ": unsupported image codec (expected PNG or JPEG)");
  }
}

// Writes an 8-bit RGB PNG; values are rounded and clamped to [0, 255].
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.empty() || img.n() != 1 || img.c() != 3) throw InvalidImageError("write_png: expected a (1,h,w,3) image");
  std::vector<unsigned char> px(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    px[i] = static_cast<unsigned char>(std::clamp(std::nearbyint(static_cast<double>(img[i])), 0.0, 255.0));
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w());
  image.height = static_cast<png_uint_32>(img.h());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw FormatError(path.string() + ": " + image.message);
}

}  // namespace cnnf
