#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdsr/config.hpp"
#include "gdsr/metrics.hpp"
#include "gdsr/raster.hpp"
#include "gdsr/tensor.hpp"

namespace gdsr {

struct NamedArray {
  std::string name;
  Shape shape;
  Eigen::ArrayXf values;
};

/// Serialized model: every named parameter, the normalization statistics,
/// and enough bookkeeping (config digest, step count, sampler state) to
/// reject mismatched configs and reproduce identical inference.
struct ModelCheckpoint {
  uint32_t version = 1;
  uint64_t config_digest = 0;
  NormStats stats;
  int64_t train_steps = 0;
  uint64_t rng_seed = 0;
  uint64_t rng_counter = 0;
  std::vector<NamedArray> params;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);

/// Loads and verifies version and config digest; a digest mismatch means
/// the checkpoint was trained under a semantically different config and is
/// refused rather than silently reused.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path, uint64_t expected_digest);

struct TrainLogRow {
  int iter = 0;
  double loss = 0.0;
  double test_rmse = 0.0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<TrainLogRow> log;
  double first_loss = 0.0;
  double last_loss = 0.0;
  int iterations_run = 0;
};

/// End-to-end training per the configured ablation mode. Each iteration
/// samples a batch, bicubic-upsamples, normalizes with the crop-local mean
/// and global std, runs refinement and diffusion, and minimizes
/// L1(refined, gt) + L1(diffused, gt) with Adam. Periodically scores test
/// RMSE and early-stops after `patience` evaluations without a relative
/// improvement of `min_rel_improvement`; the best-scoring parameters are
/// kept. Numeric faults abort with the failing iteration index.
TrainResult train(const PipelineConfig& config, const std::filesystem::path& train_manifest,
                  const std::filesystem::path& test_manifest,
                  std::ostream* progress = nullptr);

/// Sliding-window inference: bicubic-upsample onto the guide grid, process
/// overlapping tiles (normalize with the tile-local mean, refine, diffuse
/// per mode, denormalize), and blend overlaps with a separable
/// raised-cosine weight. bicubic_only bypasses the networks entirely.
HeightRaster infer(const PipelineConfig& config, const ModelCheckpoint& ckpt,
                   const HeightRaster& lr, const GuideRaster& guide, Mode mode);

struct SampleEval {
  std::string id;
  MetricsReport metrics;
};

struct EvalResult {
  std::vector<SampleEval> samples;
  MetricsReport mean;          // per-sample metrics averaged
  MetricsReport bicubic_mean;  // bicubic baseline on the same samples

  /// Per-sample CSV: one header line plus one row per sample.
  std::string to_csv() const;
};

/// Runs inference over the whole manifest and aggregates metrics, plus the
/// bicubic baseline row for the same samples. The checkpoint may be null
/// only for bicubic_only.
EvalResult evaluate(const PipelineConfig& config, const ModelCheckpoint* ckpt,
                    const std::filesystem::path& test_manifest, Mode mode);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log);

/// Tiling geometry, exposed for the blending tests: tile start offsets
/// covering [0, full), and the per-pixel weight profile of one tile.
std::vector<int> tile_starts(int full, int tile, int overlap);
Eigen::ArrayXd tile_weight_profile(int tile, int ramp);

}  // namespace gdsr
