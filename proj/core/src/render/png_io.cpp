#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "meshfield/errors.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

namespace {

std::vector<std::uint8_t> to_bytes(const ag::Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("png: expected H x W x 3 image, got " + ag::shape_str(image.shape()));
  }
  auto v = image.data();
  std::vector<std::uint8_t> bytes(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  return bytes;
}

png_image rgb_image(const ag::Tensor& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = PNG_FORMAT_RGB;
  return img;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ag::Tensor& image) {
  auto bytes = to_bytes(image);
  png_image img = rgb_image(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const ag::Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ag::Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(std::string("png decode failed: ") + img.message);
  }
  std::vector<double> v(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) v[i] = buf[i] / 255.0;
  return ag::Tensor::from_vector({img.height, img.width, 3}, std::move(v));
}

ag::Tensor read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace meshfield
