#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "gdsr/raster.hpp"

namespace gdsr {

/// Parameters of the procedural urban scene generator. Scenes are square
/// (extent x extent pixels): smooth random terrain plus rectangular
/// buildings with flat or gabled roofs, and a 3-channel pseudo-optical
/// guide whose albedo edges coincide with building footprints.
struct SceneParams {
  uint64_t seed = 0;
  int extent = 256;
  double cell_size = 0.5;
  int building_count_min = 6;
  int building_count_max = 14;
  double building_height_min = 4.0;
  double building_height_max = 25.0;
  double terrain_amplitude = 6.0;
  double terrain_smoothness = 48.0;  // correlation length in pixels

  void validate() const;
};

/// Degradation model applied to a high-resolution scene to synthesize its
/// low-resolution counterpart: grayscale morphological opening (removes
/// thin high structures), Gaussian blur, block-average decimation, then
/// additive Gaussian noise.
struct DegradationParams {
  int factor = 10;
  double blur_sigma = 1.5;
  double noise_sigma = 0.8;
  int erosion_radius = 2;

  void validate() const;
};

struct Building {
  double cx, cy;              // center, pixel coordinates
  double half_len, half_wid;  // half extents in pixels along the rotated axes
  double angle;               // radians
  double height;              // meters above the footprint's terrain maximum
  bool gabled;
  double base_elev;
};

/// Full generator output, including ground truth the tests read back.
struct Scene {
  HeightRaster dsm;
  GuideRaster guide;
  HeightRaster terrain;
  std::vector<Building> buildings;
};

Scene generate_scene_detail(const SceneParams& params);

/// Deterministic (seed, params) -> (height raster, guide raster).
std::pair<HeightRaster, GuideRaster> generate_scene(const SceneParams& params);

/// Applies the degradation pipeline; HR dims must divide by the factor.
/// noise_seed drives the additive noise stream.
HeightRaster degrade(const HeightRaster& hr, const DegradationParams& params,
                     uint64_t noise_seed = 0);

struct ManifestEntry {
  std::string id;
  std::string hr_path;
  std::string lr_path;
  std::string guide_path;
  uint64_t seed = 0;
};

/// Line format: "<id> <hr_path> <lr_path> <guide_path> <seed>"; paths are
/// relative to the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

struct DatasetManifests {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

/// Writes HR DSM, LR DSM and guide per sample plus one manifest per split.
/// Sample seeds derive from the scene seed and the split, so the splits
/// are disjoint by construction and re-runs are reproducible.
DatasetManifests generate_dataset(int n_train, int n_test, const SceneParams& scene,
                                  const DegradationParams& degr,
                                  const std::filesystem::path& out_dir);

}  // namespace gdsr
