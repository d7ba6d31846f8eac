#include "gdsr/raster_io.hpp"

#include <png.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace gdsr {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'S', 'R'};
constexpr uint32_t kVersion = 1;
constexpr int64_t kMaxPixels = int64_t{1} << 31;

static_assert(std::endian::native == std::endian::little,
              "raster format i/o assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open for writing: " + path.string());
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw DataError("write failed: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw DataError("cannot open: " + path_);
  }
  template <typename T>
  T get(const char* what) {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_)
      throw DataError(path_ + ": truncated file reading " + what + " at byte offset " +
                      std::to_string(offset_));
    offset_ += sizeof(T);
    return v;
  }
  void get_bytes(void* p, size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_)
      throw DataError(path_ + ": truncated file reading " + what + " at byte offset " +
                      std::to_string(offset_));
    offset_ += n;
  }
  int64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  int64_t offset_ = 0;
};

void write_header(Writer& w, uint8_t kind, uint16_t channels, uint32_t height,
                  uint32_t width, double cell_size) {
  w.put_bytes(kMagic, 4);
  w.put<uint32_t>(kVersion);
  w.put<uint8_t>(kind);
  w.put<uint16_t>(channels);
  w.put<uint32_t>(height);
  w.put<uint32_t>(width);
  w.put<double>(cell_size);
}

}  // namespace

void write_raster(const HeightRaster& raster, const std::filesystem::path& path) {
  raster.validate();
  if (raster.has_nodata())
    throw DataError("write_raster: rasters with nodata are not serializable");
  Writer w(path);
  write_header(w, 0, 1, static_cast<uint32_t>(raster.height),
               static_cast<uint32_t>(raster.width), raster.cell_size);
  w.put_bytes(raster.values.data(), sizeof(float) * raster.values.size());
  w.finish(path);
}

void write_raster(const GuideRaster& raster, const std::filesystem::path& path) {
  raster.validate();
  Writer w(path);
  write_header(w, 1, static_cast<uint16_t>(raster.channels),
               static_cast<uint32_t>(raster.height), static_cast<uint32_t>(raster.width),
               1.0);
  w.put_bytes(raster.values.data(), sizeof(float) * raster.values.size());
  w.finish(path);
}

AnyRaster read_raster(const std::filesystem::path& path) {
  Reader in(path);
  char magic[4];
  in.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(in.path() + ": bad magic bytes at byte offset 0");
  uint32_t version = in.get<uint32_t>("version");
  if (version != kVersion)
    throw DataError(in.path() + ": unsupported version " + std::to_string(version) +
                    " at byte offset 4");
  uint8_t kind = in.get<uint8_t>("kind");
  if (kind > 1)
    throw DataError(in.path() + ": unknown raster kind " + std::to_string(kind) +
                    " at byte offset 8");
  uint16_t channels = in.get<uint16_t>("channels");
  uint32_t height = in.get<uint32_t>("height");
  uint32_t width = in.get<uint32_t>("width");
  double cell_size = in.get<double>("cell_size");

  constexpr uint32_t kMaxDim = 1u << 20;
  if (channels == 0 || height == 0 || width == 0 || height > kMaxDim || width > kMaxDim ||
      int64_t{height} * width * channels > kMaxPixels)
    throw DataError(in.path() + ": dimension overflow (" + std::to_string(height) + "x" +
                    std::to_string(width) + "x" + std::to_string(channels) +
                    ") at byte offset 11");
  int64_t count = int64_t{height} * width * channels;
  if (kind == 0 && channels != 1)
    throw DataError(in.path() + ": height raster must have 1 channel, found " +
                    std::to_string(channels));

  Eigen::ArrayXf values(count);
  in.get_bytes(values.data(), sizeof(float) * static_cast<size_t>(count), "payload");
  if (!values.allFinite())
    throw DataError(in.path() + ": non-finite value in payload");

  if (kind == 0) {
    HeightRaster r;
    r.height = static_cast<int>(height);
    r.width = static_cast<int>(width);
    r.cell_size = cell_size;
    r.values = std::move(values);
    r.validate();
    return r;
  }
  GuideRaster g;
  g.height = static_cast<int>(height);
  g.width = static_cast<int>(width);
  g.channels = static_cast<int>(channels);
  g.values = std::move(values);
  g.validate();
  return g;
}

HeightRaster read_height_raster(const std::filesystem::path& path) {
  AnyRaster any = read_raster(path);
  if (auto* h = std::get_if<HeightRaster>(&any)) return std::move(*h);
  throw DataError(path.string() + ": expected a height raster, found a guide");
}

GuideRaster read_guide_raster(const std::filesystem::path& path) {
  AnyRaster any = read_raster(path);
  if (auto* g = std::get_if<GuideRaster>(&any)) return std::move(*g);
  throw DataError(path.string() + ": expected a guide raster, found a height raster");
}

GuideRaster read_guide_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw DataError("cannot open: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("png reader initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError(path.string() + ": malformed png");
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);

  // Normalize everything to 8-bit gray or RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = static_cast<int>(png_get_channels(png, info));
  std::vector<uint8_t> row(static_cast<size_t>(width) * channels);

  GuideRaster g(static_cast<int>(height), static_cast<int>(width), channels);
  for (png_uint_32 r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 c = 0; c < width; ++c)
      for (int ch = 0; ch < channels; ++ch)
        g.at(static_cast<int>(r), static_cast<int>(c), ch) =
            static_cast<float>(row[c * channels + ch]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return g;
}

}  // namespace gdsr
