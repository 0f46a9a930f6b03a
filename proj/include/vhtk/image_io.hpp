#pragma once
// PNG/JPEG file handling on top of libpng's simplified API and libjpeg's
// in-memory codec. JPEG encode/decode is exposed separately because the
// jpeg-compression perturbation needs the round trip (and its exact encoded
// bytes) without touching disk.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "vhtk/image.hpp"

namespace vhtk {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::uint8_t* data,
                             std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed: " + path);
}

inline bool looks_like_png(const std::uint8_t* data, std::size_t size) {
  static const std::uint8_t magic[4] = {0x89, 'P', 'N', 'G'};
  return size >= 4 && std::memcmp(data, magic, 4) == 0;
}

inline bool looks_like_jpeg(const std::uint8_t* data, std::size_t size) {
  return size >= 2 && data[0] == 0xFF && data[1] == 0xD8;
}

namespace detail {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_trampoline(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

}  // namespace detail

// Baseline sequential JPEG with libjpeg's default 4:2:0 subsampling.
inline std::vector<std::uint8_t> jpeg_encode(const ImageTensor& img, int quality) {
  if (quality < 1 || quality > 100) throw Error("jpeg quality must be in [1,100]");
  const std::vector<std::uint8_t> rgb = to_bytes(img);

  jpeg_compress_struct cinfo;
  detail::JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = detail::jpeg_error_trampoline;

  unsigned char* outbuf = nullptr;
  unsigned long outsize = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (outbuf) free(outbuf);
    throw IoError(std::string("jpeg encode failed: ") + err.message);
  }

  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &outbuf, &outsize);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = kChannels;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(img.width) * kChannels;
  while (cinfo.next_scanline < cinfo.image_height) {
    const JSAMPLE* row = rgb.data() + cinfo.next_scanline * stride;
    JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  std::vector<std::uint8_t> bytes(outbuf, outbuf + outsize);
  free(outbuf);
  return bytes;
}

inline ImageTensor jpeg_decode(const std::uint8_t* data, std::size_t size) {
  jpeg_decompress_struct dinfo;
  detail::JpegErrorMgr err;
  dinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = detail::jpeg_error_trampoline;

  std::vector<std::uint8_t> rgb;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&dinfo);
    throw IoError(std::string("jpeg decode failed: ") + err.message);
  }

  jpeg_create_decompress(&dinfo);
  jpeg_mem_src(&dinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&dinfo, TRUE);
  dinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&dinfo);
  const int h = static_cast<int>(dinfo.output_height);
  const int w = static_cast<int>(dinfo.output_width);
  const std::size_t stride = static_cast<std::size_t>(w) * kChannels;
  rgb.resize(static_cast<std::size_t>(h) * stride);
  while (dinfo.output_scanline < dinfo.output_height) {
    JSAMPROW rows[1] = {rgb.data() + dinfo.output_scanline * stride};
    jpeg_read_scanlines(&dinfo, rows, 1);
  }
  jpeg_finish_decompress(&dinfo);
  jpeg_destroy_decompress(&dinfo);

  return from_bytes(h, w, rgb.data());
}

inline ImageTensor png_decode(const std::uint8_t* data, std::size_t size) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data, size))
    throw IoError(std::string("png decode failed: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(std::string("png decode failed: ") + image.message);
  }
  return from_bytes(static_cast<int>(image.height), static_cast<int>(image.width),
                    rgb.data());
}

inline void write_png(const std::string& path, const ImageTensor& img) {
  const std::vector<std::uint8_t> rgb = to_bytes(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw IoError(std::string("png write failed: ") + path + ": " + image.message);
}

// Decodes by content sniffing, not extension.
inline ImageTensor read_image(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (looks_like_png(bytes.data(), bytes.size())) return png_decode(bytes.data(), bytes.size());
  if (looks_like_jpeg(bytes.data(), bytes.size())) return jpeg_decode(bytes.data(), bytes.size());
  throw IoError("unsupported image format (expected PNG or JPEG): " + path);
}

}  // namespace vhtk
