#include "drnet/image.hpp"

#include <png.h>

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "drnet/error.hpp"

namespace drnet {

RasterImage::RasterImage(std::size_t width, std::size_t height, std::size_t channels, std::uint8_t fill)
    : width(width), height(height), channels(channels), data(width * height * channels, fill) {}

namespace {

RasterImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError(path.string() + ": " + image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  RasterImage img(image.width, image.height, gray ? 1 : 3);
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError(path.string() + ": " + msg);
  }
  return img;
}

// Binary PGM/PPM with maxval <= 255.
RasterImage read_pnm(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1'000'000) break;
    }
    if (!any) throw DataError(path.string() + ": malformed PNM header");
    return v;
  };
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError(path.string() + ": unsupported PNM header");
  ++pos;  // single whitespace before the raster
  RasterImage img(static_cast<std::size_t>(w), static_cast<std::size_t>(h), channels);
  if (bytes.size() < pos + img.data.size()) throw DataError(path.string() + ": truncated PNM raster");
  std::copy_n(bytes.begin() + static_cast<long>(pos), img.data.size(), img.data.begin());
  if (maxval != 255)
    for (auto& v : img.data) v = static_cast<std::uint8_t>(std::min<long>(255, (v * 255 + maxval / 2) / maxval));
  return img;
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return read_pnm(path, bytes);
  throw DataError(path.string() + ": unrecognized image format");
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
  if (!img.valid() || (img.channels != 1 && img.channels != 3)) throw DataError("cannot write invalid image " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr))
    throw DataError(path.string() + ": " + image.message);
}

void write_pnm(const std::filesystem::path& path, const RasterImage& img) {
  if (!img.valid() || (img.channels != 1 && img.channels != 3)) throw DataError("cannot write invalid image " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_image(const std::filesystem::path& path, const RasterImage& img) {
  if (path.extension() == ".png")
    write_png(path, img);
  else
    write_pnm(path, img);
}

}  // namespace drnet
