#include "gdsr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gdsr/raster_io.hpp"
#include "gdsr/resample.hpp"
#include "gdsr/rng.hpp"

namespace gdsr {

namespace {

// Substream tags for the per-purpose random streams.
enum Stream : uint64_t {
  kTerrain = 10,
  kTint = 11,
  kBuildings = 12,
  kTexNoise = 13,
  kDegradeNoise = 20,
};

constexpr double kTexNoiseSigma = 0.002;
constexpr double kAmbient = 0.35;

HeightRaster smooth_field(uint64_t seed, uint64_t stream, int extent, double smoothness,
                          double cell_size) {
  int coarse = std::max(2, static_cast<int>(std::ceil(extent / smoothness))) + 3;
  HeightRaster grid(coarse, coarse, 1.0);
  CounterRng rng(seed, stream);
  for (Eigen::Index i = 0; i < grid.values.size(); ++i)
    grid.values(i) = static_cast<float>(rng.normal());
  HeightRaster field = bicubic_resample(grid, extent, extent);
  field.cell_size = cell_size;
  return field;
}

struct Footprint {
  std::vector<int> pixels;  // flat indices
  std::vector<double> shape;  // roof profile in [0,1], parallel to pixels
  double max_shape = 0.0;
};

Footprint rasterize(const Building& b, int extent) {
  Footprint fp;
  const double ca = std::cos(b.angle), sa = std::sin(b.angle);
  const double reach = std::hypot(b.half_len, b.half_wid);
  const int r0 = std::max(0, static_cast<int>(std::floor(b.cy - reach)));
  const int r1 = std::min(extent - 1, static_cast<int>(std::ceil(b.cy + reach)));
  const int c0 = std::max(0, static_cast<int>(std::floor(b.cx - reach)));
  const int c1 = std::min(extent - 1, static_cast<int>(std::ceil(b.cx + reach)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dx = c - b.cx, dy = r - b.cy;
      const double u = dx * ca + dy * sa;
      const double v = -dx * sa + dy * ca;
      if (std::abs(u) > b.half_len || std::abs(v) > b.half_wid) continue;
      // Gabled roofs slope from a ridge along the long axis down to half
      // height at the eaves; flat roofs are 1 everywhere.
      double s = b.gabled ? 1.0 - 0.5 * std::abs(v) / b.half_wid : 1.0;
      fp.pixels.push_back(r * extent + c);
      fp.shape.push_back(s);
      fp.max_shape = std::max(fp.max_shape, s);
    }
  }
  return fp;
}

}  // namespace

void SceneParams::validate() const {
  if (extent < 32) throw ConfigError("scene: extent must be >= 32");
  if (!(cell_size > 0)) throw ConfigError("scene: cell_size must be positive");
  if (building_count_min < 0 || building_count_max < building_count_min)
    throw ConfigError("scene: building count range is empty or negative");
  if (building_height_min < 0 || building_height_max < building_height_min)
    throw ConfigError("scene: building height range is empty or negative");
  if (terrain_amplitude < 0) throw ConfigError("scene: terrain_amplitude must be >= 0");
  if (!(terrain_smoothness >= 1)) throw ConfigError("scene: terrain_smoothness must be >= 1");
}

void DegradationParams::validate() const {
  if (factor < 2) throw ConfigError("degradation: factor must be >= 2");
  if (blur_sigma < 0 || noise_sigma < 0)
    throw ConfigError("degradation: sigmas must be >= 0");
  if (erosion_radius < 0) throw ConfigError("degradation: erosion_radius must be >= 0");
}

Scene generate_scene_detail(const SceneParams& params) {
  params.validate();
  const int n = params.extent;

  Scene scene;
  if (params.terrain_amplitude > 0) {
    scene.terrain = smooth_field(params.seed, kTerrain, n, params.terrain_smoothness,
                                 params.cell_size);
    scene.terrain.values *= static_cast<float>(params.terrain_amplitude);
  } else {
    scene.terrain = HeightRaster(n, n, params.cell_size, 0.0f);
  }
  scene.dsm = scene.terrain;

  // Buildings: rejection-sampled against bounding-circle overlap so roofs
  // never stack, with a bounded number of attempts per building.
  CounterRng brng(params.seed, kBuildings);
  const int count =
      static_cast<int>(brng.uniform_int(params.building_count_min, params.building_count_max));
  const double margin = 0.1 * n;
  std::vector<int> owner(static_cast<size_t>(n) * n, -1);
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      Building b;
      b.cx = brng.uniform(margin, n - margin);
      b.cy = brng.uniform(margin, n - margin);
      b.half_len = brng.uniform(4.0, std::min(20.0, n / 8.0));
      b.half_wid = brng.uniform(3.0, std::max(3.5, 0.8 * b.half_len));
      b.angle = brng.uniform() < 0.5 ? (brng.uniform() < 0.5 ? 0.0 : M_PI / 2)
                                     : brng.uniform(0.0, M_PI);
      b.height = brng.uniform(params.building_height_min, params.building_height_max);
      b.gabled = brng.uniform() < 0.4;

      const double reach = std::hypot(b.half_len, b.half_wid) + 1.5;
      bool clear = true;
      for (const auto& other : scene.buildings) {
        const double other_reach = std::hypot(other.half_len, other.half_wid) + 1.5;
        if (std::hypot(other.cx - b.cx, other.cy - b.cy) < reach + other_reach) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;

      Footprint fp = rasterize(b, n);
      if (fp.pixels.empty() || fp.max_shape <= 0.0) continue;
      double base = -std::numeric_limits<double>::infinity();
      for (int idx : fp.pixels) base = std::max(base, double(scene.terrain.values(idx)));
      b.base_elev = base;
      for (size_t k = 0; k < fp.pixels.size(); ++k) {
        // Normalizing by the rasterized maximum pins the tallest roof pixel
        // at exactly base + height.
        const double z = base + b.height * (fp.shape[k] / fp.max_shape);
        scene.dsm.values(fp.pixels[k]) =
            std::max(scene.dsm.values(fp.pixels[k]), static_cast<float>(z));
        owner[static_cast<size_t>(fp.pixels[k])] = static_cast<int>(scene.buildings.size());
      }
      scene.buildings.push_back(b);
      break;
    }
  }

  // Guide: per-pixel albedo (ground tint or per-building color) shaded by a
  // DSM hillshade, plus a little sensor noise.
  scene.guide = GuideRaster(n, n, 3);
  HeightRaster tint = smooth_field(params.seed, kTint, n, 24.0, params.cell_size);
  const double ground[3] = {0.32, 0.36, 0.30};
  std::vector<std::array<double, 3>> colors(scene.buildings.size());
  {
    CounterRng crng(params.seed, kBuildings + 100);
    for (size_t i = 0; i < colors.size(); ++i) {
      // Alternate bright and dark roofs so footprint edges always contrast
      // with the ground.
      const double offset = (i % 2 == 0 ? 1.0 : -1.0) * crng.uniform(0.18, 0.42);
      for (int ch = 0; ch < 3; ++ch)
        colors[i][ch] = std::clamp(ground[ch] + offset + crng.uniform(-0.05, 0.05), 0.02, 0.98);
    }
  }

  // Hillshade with light from the northwest at 45 degrees elevation.
  const double azimuth = 315.0 * M_PI / 180.0, elevation = 45.0 * M_PI / 180.0;
  const double lx = std::cos(elevation) * std::sin(azimuth);
  const double ly = -std::cos(elevation) * std::cos(azimuth);
  const double lz = std::sin(elevation);
  CounterRng trng(params.seed, kTexNoise);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int cm = std::max(0, c - 1), cp = std::min(n - 1, c + 1);
      const int rm = std::max(0, r - 1), rp = std::min(n - 1, r + 1);
      const double gx = (scene.dsm.at(r, cp) - scene.dsm.at(r, cm)) /
                        ((cp - cm) * params.cell_size);
      const double gy = (scene.dsm.at(rp, c) - scene.dsm.at(rm, c)) /
                        ((rp - rm) * params.cell_size);
      const double norm = std::sqrt(gx * gx + gy * gy + 1.0);
      const double shade = std::max(0.0, (-gx * lx - gy * ly + lz) / norm);
      const int who = owner[static_cast<size_t>(r) * n + c];
      for (int ch = 0; ch < 3; ++ch) {
        double albedo = who >= 0 ? colors[static_cast<size_t>(who)][ch]
                                 : ground[ch] + 0.04 * tint.at(r, c);
        double v = albedo * (kAmbient + (1.0 - kAmbient) * shade) +
                   kTexNoiseSigma * trng.normal();
        scene.guide.at(r, c, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return scene;
}

std::pair<HeightRaster, GuideRaster> generate_scene(const SceneParams& params) {
  Scene s = generate_scene_detail(params);
  return {std::move(s.dsm), std::move(s.guide)};
}

namespace {

/// Grayscale erode (take_min) or dilate over a disk of the given radius.
HeightRaster morph_disk(const HeightRaster& src, int radius, bool take_min) {
  if (radius == 0) return src;
  std::vector<std::pair<int, int>> disk;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disk.emplace_back(dy, dx);
  HeightRaster out = src;
  for (int r = 0; r < src.height; ++r) {
    for (int c = 0; c < src.width; ++c) {
      float best = src.at(r, c);
      for (auto [dy, dx] : disk) {
        const int rr = r + dy, cc = c + dx;
        if (rr < 0 || rr >= src.height || cc < 0 || cc >= src.width) continue;
        const float v = src.at(rr, cc);
        best = take_min ? std::min(best, v) : std::max(best, v);
      }
      out.at(r, c) = best;
    }
  }
  return out;
}

HeightRaster gaussian_blur(const HeightRaster& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= total;

  // Separable passes with edge replication.
  Array2Dd tmp(src.height, src.width);
  for (int r = 0; r < src.height; ++r)
    for (int c = 0; c < src.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] *
               src.at(r, std::clamp(c + i, 0, src.width - 1));
      tmp(r, c) = acc;
    }
  HeightRaster out = src;
  for (int r = 0; r < src.height; ++r)
    for (int c = 0; c < src.width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<size_t>(i + radius)] * tmp(std::clamp(r + i, 0, src.height - 1), c);
      out.at(r, c) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace

HeightRaster degrade(const HeightRaster& hr, const DegradationParams& params,
                     uint64_t noise_seed) {
  params.validate();
  hr.validate();
  if (hr.has_nodata()) throw DataError("degrade: rasters with nodata are unsupported");
  if (hr.height % params.factor != 0 || hr.width % params.factor != 0)
    throw DataError("degrade: dims " + std::to_string(hr.height) + "x" +
                    std::to_string(hr.width) + " not divisible by factor " +
                    std::to_string(params.factor));

  // Opening = erode then dilate: removes structures thinner than the disk.
  HeightRaster x = morph_disk(morph_disk(hr, params.erosion_radius, true),
                              params.erosion_radius, false);
  x = gaussian_blur(x, params.blur_sigma);

  const int f = params.factor;
  HeightRaster lr(hr.height / f, hr.width / f, hr.cell_size * f);
  const double inv = 1.0 / (static_cast<double>(f) * f);
  for (int r = 0; r < lr.height; ++r)
    for (int c = 0; c < lr.width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) acc += x.at(r * f + i, c * f + j);
      lr.at(r, c) = static_cast<float>(acc * inv);
    }

  if (params.noise_sigma > 0) {
    CounterRng rng(noise_seed, kDegradeNoise);
    for (Eigen::Index i = 0; i < lr.values.size(); ++i)
      lr.values(i) += static_cast<float>(rng.normal() * params.noise_sigma);
  }
  return lr;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.id >> e.hr_path >> e.lr_path >> e.guide_path >> e.seed))
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed manifest line");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& e : entries)
    out << e.id << " " << e.hr_path << " " << e.lr_path << " " << e.guide_path << " "
        << e.seed << "\n";
  if (!out) throw DataError("manifest write failed: " + path.string());
}

DatasetManifests generate_dataset(int n_train, int n_test, const SceneParams& scene,
                                  const DegradationParams& degr,
                                  const std::filesystem::path& out_dir) {
  if (n_train < 1 || n_test < 1)
    throw ConfigError("generate_dataset: sample counts must be >= 1");
  scene.validate();
  degr.validate();
  std::filesystem::create_directories(out_dir);

  auto make_split = [&](const char* split, uint64_t tag, int count) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
      SceneParams sp = scene;
      sp.seed = derive_seed(scene.seed, {tag, static_cast<uint64_t>(i)});
      auto [hr, guide] = generate_scene(sp);
      HeightRaster lr = degrade(hr, degr, derive_seed(sp.seed, {kDegradeNoise}));

      ManifestEntry e;
      std::ostringstream id;
      id << split << "_" << i;
      e.id = id.str();
      e.hr_path = e.id + "_hr.gdsr";
      e.lr_path = e.id + "_lr.gdsr";
      e.guide_path = e.id + "_guide.gdsr";
      e.seed = sp.seed;
      write_raster(hr, out_dir / e.hr_path);
      write_raster(lr, out_dir / e.lr_path);
      write_raster(guide, out_dir / e.guide_path);
      entries.push_back(std::move(e));
    }
    return entries;
  };

  DatasetManifests m;
  m.train_manifest = out_dir / "train_manifest.txt";
  m.test_manifest = out_dir / "test_manifest.txt";
  write_manifest(make_split("train", 1, n_train), m.train_manifest);
  write_manifest(make_split("test", 2, n_test), m.test_manifest);
  return m;
}

}  // namespace gdsr
