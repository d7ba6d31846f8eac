#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gdsr/diffusion.hpp"
#include "gdsr/refine_net.hpp"
#include "gdsr/synthgen.hpp"

namespace gdsr {

enum class Mode { kFull, kRefineOnly, kDiffusionOnly, kBicubicOnly };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct TrainerParams {
  double lr = 5e-5;
  int batch_size = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_iters = 5000;
  int eval_every = 250;
  int patience = 5;                    // evals without improvement before stopping
  double min_rel_improvement = 1e-3;   // 0.1%
  uint64_t seed = 0;
  int train_crop = 0;   // 0 = train on the full patch
  int eval_subset = 0;  // 0 = score the whole test split at every eval
};

struct DatasetParams {
  int n_train = 200;
  int n_test = 40;
};

/// Everything the pipeline needs, parseable from a line-oriented
/// "key = value" file. `digest()` hashes the fields that define the model
/// semantics (data, architecture, diffusion, trainer); evaluation-time
/// knobs (tiling, inference step count, mode) are excluded so a checkpoint
/// can be evaluated under different tilings but never under a different
/// model.
struct PipelineConfig {
  SceneParams scene;
  DegradationParams degradation;
  RefineNetConfig refine;
  DiffusionParams diffusion;
  TrainerParams trainer;
  DatasetParams dataset;

  int tile_size = 256;
  int tile_overlap = 64;
  int infer_steps = -1;  // -1: use diffusion.n_steps_total at inference
  bool learned_diffusion_features = false;
  int diffusion_feature_dim = 8;
  Mode mode = Mode::kFull;

  void validate() const;
  uint64_t digest() const;
  std::string serialize() const;
  int inference_steps() const { return infer_steps < 0 ? diffusion.n_steps_total : infer_steps; }

  static PipelineConfig desk_scale();
  static PipelineConfig paper_scale();
  static PipelineConfig parse_file(const std::filesystem::path& path);
  static PipelineConfig parse_string(const std::string& text);
};

}  // namespace gdsr
