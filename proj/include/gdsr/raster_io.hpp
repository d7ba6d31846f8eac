#pragma once

#include <filesystem>
#include <variant>

#include "gdsr/raster.hpp"

namespace gdsr {

/// Raster container format, little-endian:
///   magic "GDSR" (4 bytes), version u32 = 1, kind u8 (0 height, 1 guide),
///   channels u16, height u32, width u32, cell_size f64, then
///   height*width*channels f32 values, row-major and channel-interleaved.
///
/// Round trips are bit-exact for finite float32 payloads. Malformed files
/// raise DataError naming the byte offset of the fault.

void write_raster(const HeightRaster& raster, const std::filesystem::path& path);
void write_raster(const GuideRaster& raster, const std::filesystem::path& path);

using AnyRaster = std::variant<HeightRaster, GuideRaster>;
AnyRaster read_raster(const std::filesystem::path& path);

/// Typed readers; throw DataError when the file holds the other kind.
HeightRaster read_height_raster(const std::filesystem::path& path);
GuideRaster read_guide_raster(const std::filesystem::path& path);

/// Convenience import of an 8-bit PNG (gray, RGB or RGBA; alpha dropped)
/// as a guide with intensities scaled to [0, 1]. One-way: there is no PNG
/// export.
GuideRaster read_guide_png(const std::filesystem::path& path);

}  // namespace gdsr
