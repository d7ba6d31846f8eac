#include "gdsr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "gdsr/diffusion.hpp"
#include "gdsr/nn_ops.hpp"
#include "gdsr/optimizer.hpp"
#include "gdsr/raster_io.hpp"
#include "gdsr/refine_net.hpp"
#include "gdsr/resample.hpp"
#include "gdsr/rng.hpp"
#include "gdsr/synthgen.hpp"

namespace gdsr {

namespace {

using Sf = float;

struct Nets {
  RefineNet<Sf> refine;
  std::optional<DiffusionFeatureEncoder<Sf>> encoder;
};

Nets build_nets(const PipelineConfig& config, uint64_t seed) {
  Nets nets;
  nets.refine = RefineNet<Sf>::build(config.refine, derive_seed(seed, {1}));
  if (config.learned_diffusion_features)
    nets.encoder = DiffusionFeatureEncoder<Sf>::build(
        config.refine.guide_channels, config.diffusion_feature_dim, derive_seed(seed, {2}));
  return nets;
}

std::vector<Parameter<Sf>*> all_parameters(Nets& nets) {
  std::vector<Parameter<Sf>*> out = nets.refine.parameters();
  if (nets.encoder)
    for (auto* p : nets.encoder->parameters()) out.push_back(p);
  return out;
}

ModelCheckpoint checkpoint_from_nets(Nets& nets, const PipelineConfig& config,
                                     const NormStats& stats, int64_t steps,
                                     uint64_t rng_seed, uint64_t rng_counter) {
  ModelCheckpoint ckpt;
  ckpt.config_digest = config.digest();
  ckpt.stats = stats;
  ckpt.train_steps = steps;
  ckpt.rng_seed = rng_seed;
  ckpt.rng_counter = rng_counter;
  for (auto* p : all_parameters(nets))
    ckpt.params.push_back({p->name, p->tensor.shape(), p->tensor.values()});
  return ckpt;
}

Nets nets_from_checkpoint(const PipelineConfig& config, const ModelCheckpoint& ckpt) {
  Nets nets = build_nets(config, ckpt.rng_seed);
  for (auto* p : all_parameters(nets)) {
    const NamedArray* found = nullptr;
    for (const auto& a : ckpt.params)
      if (a.name == p->name) {
        found = &a;
        break;
      }
    if (!found) throw DataError("checkpoint is missing parameter '" + p->name + "'");
    if (found->shape != p->tensor.shape())
      throw DataError("checkpoint parameter '" + p->name + "' has shape " +
                      shape_str(found->shape) + ", expected " + shape_str(p->tensor.shape()));
    p->tensor.values() = found->values;
  }
  return nets;
}

/// Replicate-pads a single-channel field to the padded dims.
Eigen::ArrayXf pad_replicate(const float* src, int h, int w, int ph, int pw) {
  Eigen::ArrayXf out(static_cast<Eigen::Index>(ph) * pw);
  for (int r = 0; r < ph; ++r) {
    const int sr = std::min(r, h - 1);
    for (int c = 0; c < pw; ++c) out(static_cast<Eigen::Index>(r) * pw + c) = src[sr * w + std::min(c, w - 1)];
  }
  return out;
}

struct TileInput {
  Eigen::ArrayXf up;       // h*w bicubic-upsampled heights (meters)
  GuideRaster guide_norm;  // h x w x C normalized guide
  int h = 0, w = 0;
};

/// Refine + diffuse one tile and return denormalized heights. The local
/// mean comes from the upsampled tile itself, so inference needs no ground
/// truth; denormalization is applied in residual form,
///   out = up + sigma * (x_final - x_in),
/// which is algebraically mean + sigma * x_final but keeps untouched
/// pixels bit-identical to the bicubic input.
Eigen::ArrayXf process_tile(const TileInput& tile, const NormStats& stats, Nets* nets,
                            const PipelineConfig& config, Mode mode, int diffusion_steps) {
  const int h = tile.h, w = tile.w;
  const double sigma = stats.dsm_global_std;
  const double mean = tile.up.cast<double>().mean();

  const int mult = static_cast<int>(config.refine.scale_multiple());
  const int ph = (h + mult - 1) / mult * mult;
  const int pw = (w + mult - 1) / mult * mult;

  Eigen::ArrayXf x_norm(static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index i = 0; i < x_norm.size(); ++i)
    x_norm(i) = static_cast<float>((tile.up(i) - mean) / sigma);

  Tensor<Sf> dsm_t = Tensor<Sf>::from_array({1, 1, ph, pw},
                                            pad_replicate(x_norm.data(), h, w, ph, pw));

  const int c_guide = tile.guide_norm.channels;
  Tensor<Sf> guide_t;
  {
    typename Tensor<Sf>::Array g(static_cast<Eigen::Index>(c_guide) * ph * pw);
    for (int ch = 0; ch < c_guide; ++ch)
      for (int r = 0; r < ph; ++r)
        for (int c = 0; c < pw; ++c)
          g((static_cast<Eigen::Index>(ch) * ph + r) * pw + c) =
              tile.guide_norm.at(std::min(r, h - 1), std::min(c, w - 1), ch);
    guide_t = Tensor<Sf>::from_array({1, c_guide, ph, pw}, std::move(g));
  }

  Tensor<Sf> refined = dsm_t;
  if (mode == Mode::kFull || mode == Mode::kRefineOnly)
    refined = nets->refine.forward(dsm_t, guide_t).refined;

  Tensor<Sf> final2d = image_at(refined, 0, 0);
  if (mode == Mode::kFull || mode == Mode::kDiffusionOnly) {
    DiffusionParams dp = config.diffusion;
    dp.n_steps_total = diffusion_steps;
    dp.n_steps_grad = 0;  // inference never tracks gradients
    EdgeCoefficients<Sf> coeffs;
    if (nets && nets->encoder) {
      Tensor<Sf> feats = nets->encoder->forward(guide_t);
      coeffs = edge_coefficients(channels_at(feats, 0), static_cast<Sf>(dp.k));
    } else {
      GuideRaster padded(ph, pw, c_guide);
      for (int r = 0; r < ph; ++r)
        for (int c = 0; c < pw; ++c)
          for (int ch = 0; ch < c_guide; ++ch)
            padded.at(r, c, ch) = tile.guide_norm.at(std::min(r, h - 1), std::min(c, w - 1), ch);
      coeffs = edge_coefficients<Sf>(padded, dp.k);
    }
    final2d = run_diffusion(final2d, coeffs, dp);
  }

  Eigen::ArrayXf out(static_cast<Eigen::Index>(h) * w);
  const auto& fin = final2d.values();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(r) * w + c;
      const double delta = static_cast<double>(fin(static_cast<Eigen::Index>(r) * pw + c)) -
                           static_cast<double>(x_norm(i));
      out(i) = static_cast<float>(tile.up(i) + sigma * delta);
    }
  return out;
}

HeightRaster infer_with_nets(const PipelineConfig& config, const NormStats& stats,
                             Nets* nets, const HeightRaster& lr, const GuideRaster& guide,
                             Mode mode) {
  lr.validate();
  guide.validate();
  const int f = config.degradation.factor;
  if (guide.height != lr.height * f || guide.width != lr.width * f)
    throw ShapeError("infer: guide " + std::to_string(guide.height) + "x" +
                     std::to_string(guide.width) + " is not factor " + std::to_string(f) +
                     " times the low-resolution raster " + std::to_string(lr.height) + "x" +
                     std::to_string(lr.width));

  HeightRaster up = bicubic_resample(lr, guide.height, guide.width);
  if (mode == Mode::kBicubicOnly) return up;
  if ((mode == Mode::kFull || mode == Mode::kRefineOnly) && nets == nullptr)
    throw DataError("infer: mode " + mode_name(mode) + " requires a checkpoint");

  GuideRaster guide_n = normalize_guide(guide, stats);
  const int H = up.height, W = up.width;
  const int th = std::min(config.tile_size, H);
  const int tw = std::min(config.tile_size, W);
  const int overlap = std::min({config.tile_overlap, th - 1, tw - 1});
  const std::vector<int> row_starts = tile_starts(H, th, overlap);
  const std::vector<int> col_starts = tile_starts(W, tw, overlap);
  const Eigen::ArrayXd wr = tile_weight_profile(th, overlap);
  const Eigen::ArrayXd wc = tile_weight_profile(tw, overlap);

  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(H) * W);
  Eigen::ArrayXd wsum = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(H) * W);

  const int steps = config.inference_steps();
  for (int r0 : row_starts) {
    for (int c0 : col_starts) {
      TileInput tile;
      tile.h = th;
      tile.w = tw;
      tile.up.resize(static_cast<Eigen::Index>(th) * tw);
      tile.guide_norm = GuideRaster(th, tw, guide_n.channels);
      for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) {
          tile.up(static_cast<Eigen::Index>(r) * tw + c) = up.at(r0 + r, c0 + c);
          for (int ch = 0; ch < guide_n.channels; ++ch)
            tile.guide_norm.at(r, c, ch) = guide_n.at(r0 + r, c0 + c, ch);
        }
      Eigen::ArrayXf vals = process_tile(tile, stats, nets, config, mode, steps);

      // Sequential convex compositing: first coverage assigns the value
      // outright, later tiles blend in proportion to their weight. Pixels
      // covered once, and identical overlapping content, stay exact.
      for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) {
          const Eigen::Index p = static_cast<Eigen::Index>(r0 + r) * W + (c0 + c);
          const double wgt = wr(r) * wc(c);
          const double v = vals(static_cast<Eigen::Index>(r) * tw + c);
          if (wsum(p) == 0.0) {
            acc(p) = v;
            wsum(p) = wgt;
          } else {
            const double total = wsum(p) + wgt;
            acc(p) += (wgt / total) * (v - acc(p));
            wsum(p) = total;
          }
        }
    }
  }

  HeightRaster out(H, W, up.cell_size);
  for (Eigen::Index i = 0; i < acc.size(); ++i) out.values(i) = static_cast<float>(acc(i));
  return out;
}

struct LoadedSample {
  std::string id;
  HeightRaster hr;
  HeightRaster lr;
  GuideRaster guide;
};

std::vector<LoadedSample> load_samples(const std::filesystem::path& manifest_path,
                                       const PipelineConfig& config) {
  const auto entries = read_manifest(manifest_path);
  if (entries.empty()) throw DataError("empty manifest: " + manifest_path.string());
  const auto dir = manifest_path.parent_path();
  std::vector<LoadedSample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedSample s;
    s.id = e.id;
    s.hr = read_height_raster(dir / e.hr_path);
    s.lr = read_height_raster(dir / e.lr_path);
    s.guide = read_guide_raster(dir / e.guide_path);
    const int f = config.degradation.factor;
    if (s.hr.height != s.lr.height * f || s.hr.width != s.lr.width * f)
      throw DataError("sample " + e.id + ": hr/lr ratio does not match factor " +
                      std::to_string(f));
    if (s.guide.height != s.hr.height || s.guide.width != s.hr.width)
      throw DataError("sample " + e.id + ": guide dims do not match hr dims");
    if (s.guide.channels != config.refine.guide_channels)
      throw DataError("sample " + e.id + ": guide has " + std::to_string(s.guide.channels) +
                      " channels, config expects " +
                      std::to_string(config.refine.guide_channels));
    samples.push_back(std::move(s));
  }
  return samples;
}

double quick_test_rmse(const PipelineConfig& config, const NormStats& stats, Nets* nets,
                       const std::vector<LoadedSample>& test, Mode mode, int limit) {
  const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(test.size()))
                          : static_cast<int>(test.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    HeightRaster out = infer_with_nets(config, stats, nets, test[i].lr, test[i].guide, mode);
    total += rmse(out, test[i].hr);
  }
  return total / n;
}

}  // namespace

std::vector<int> tile_starts(int full, int tile, int overlap) {
  if (tile >= full) return {0};
  const int step = std::max(1, tile - overlap);
  std::vector<int> starts;
  for (int s = 0;; s += step) {
    if (s + tile >= full) {
      starts.push_back(full - tile);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

Eigen::ArrayXd tile_weight_profile(int tile, int ramp) {
  Eigen::ArrayXd w = Eigen::ArrayXd::Ones(tile);
  const int r = std::min(ramp, tile / 2);
  // Raised cosine easing over the overlap band; strictly positive so
  // normalization never divides by zero.
  for (int i = 0; i < r; ++i) {
    const double t = 0.5 - 0.5 * std::cos(M_PI * (i + 1) / (r + 1));
    w(i) = std::min(w(i), t);
    w(tile - 1 - i) = std::min(w(tile - 1 - i), t);
  }
  return w;
}

HeightRaster infer(const PipelineConfig& config, const ModelCheckpoint& ckpt,
                   const HeightRaster& lr, const GuideRaster& guide, Mode mode) {
  config.validate();
  ckpt.stats.validate();
  if (mode == Mode::kBicubicOnly)
    return infer_with_nets(config, ckpt.stats, nullptr, lr, guide, mode);
  Nets nets = nets_from_checkpoint(config, ckpt);
  return infer_with_nets(config, ckpt.stats, &nets, lr, guide, mode);
}

TrainResult train(const PipelineConfig& config, const std::filesystem::path& train_manifest,
                  const std::filesystem::path& test_manifest, std::ostream* progress) {
  config.validate();
  const auto train_samples = load_samples(train_manifest, config);
  const auto test_samples = load_samples(test_manifest, config);

  std::vector<HeightRaster> hrs;
  std::vector<GuideRaster> guides;
  for (const auto& s : train_samples) {
    hrs.push_back(s.hr);
    guides.push_back(s.guide);
  }
  const NormStats stats = compute_norm_stats(hrs, guides);
  const double sigma = stats.dsm_global_std;

  Nets nets = build_nets(config, config.trainer.seed);
  const Mode mode = config.mode;
  if (mode == Mode::kBicubicOnly)
    throw ConfigError("train: bicubic_only has nothing to train");

  // Only parameters that actually sit in the loss graph are stepped.
  std::vector<Parameter<Sf>*> trainable;
  if (mode == Mode::kFull || mode == Mode::kRefineOnly)
    for (auto* p : nets.refine.parameters()) trainable.push_back(p);
  if (nets.encoder && (mode == Mode::kFull || mode == Mode::kDiffusionOnly))
    for (auto* p : nets.encoder->parameters()) trainable.push_back(p);

  // Precompute per-sample upsampled inputs and normalized guides.
  struct Prepared {
    HeightRaster up;
    GuideRaster guide_n;
  };
  std::vector<Prepared> prep;
  prep.reserve(train_samples.size());
  for (const auto& s : train_samples)
    prep.push_back({bicubic_resample(s.lr, s.hr.height, s.hr.width),
                    normalize_guide(s.guide, stats)});

  const int H = train_samples.front().hr.height;
  const int W = train_samples.front().hr.width;
  const int mult = static_cast<int>(config.refine.scale_multiple());
  int crop = config.trainer.train_crop > 0 ? config.trainer.train_crop : std::min(H, W);
  crop = std::min({crop, H, W});
  if (crop % mult != 0)
    throw ConfigError("train: crop size " + std::to_string(crop) +
                      " must be divisible by " + std::to_string(mult));

  CounterRng rng(config.trainer.seed, /*stream=*/3);
  const int batch = config.trainer.batch_size;
  const int c_guide = config.refine.guide_channels;
  const DiffusionParams dparams = config.diffusion;

  TrainResult result;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::vector<Eigen::ArrayXf> best_values;
  int stale_evals = 0;
  bool stop = false;

  for (int iter = 0; iter < config.trainer.max_iters && !stop; ++iter) {
    try {
      typename Tensor<Sf>::Array dsm_v(static_cast<Eigen::Index>(batch) * crop * crop);
      typename Tensor<Sf>::Array gt_v(static_cast<Eigen::Index>(batch) * crop * crop);
      typename Tensor<Sf>::Array gd_v(static_cast<Eigen::Index>(batch) * c_guide * crop * crop);
      std::vector<GuideRaster> crop_guides(static_cast<size_t>(batch));

      for (int b = 0; b < batch; ++b) {
        const auto idx = static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(train_samples.size()) - 1));
        const int r0 = static_cast<int>(rng.uniform_int(0, H - crop));
        const int c0 = static_cast<int>(rng.uniform_int(0, W - crop));
        const auto& up = prep[idx].up;
        const auto& gn = prep[idx].guide_n;
        const auto& hr = train_samples[idx].hr;

        double m = 0.0;
        for (int r = 0; r < crop; ++r)
          for (int c = 0; c < crop; ++c) m += up.at(r0 + r, c0 + c);
        m /= static_cast<double>(crop) * crop;

        crop_guides[static_cast<size_t>(b)] = GuideRaster(crop, crop, c_guide);
        for (int r = 0; r < crop; ++r)
          for (int c = 0; c < crop; ++c) {
            const Eigen::Index pix = static_cast<Eigen::Index>(b) * crop * crop +
                                     static_cast<Eigen::Index>(r) * crop + c;
            dsm_v(pix) = static_cast<float>((up.at(r0 + r, c0 + c) - m) / sigma);
            gt_v(pix) = static_cast<float>((hr.at(r0 + r, c0 + c) - m) / sigma);
            for (int ch = 0; ch < c_guide; ++ch) {
              gd_v((static_cast<Eigen::Index>(b) * c_guide + ch) * crop * crop +
                   static_cast<Eigen::Index>(r) * crop + c) = gn.at(r0 + r, c0 + c, ch);
              crop_guides[static_cast<size_t>(b)].at(r, c, ch) = gn.at(r0 + r, c0 + c, ch);
            }
          }
      }

      Tensor<Sf> dsm_t = Tensor<Sf>::from_array({batch, 1, crop, crop}, std::move(dsm_v));
      Tensor<Sf> gt_t = Tensor<Sf>::from_array({batch, 1, crop, crop}, std::move(gt_v));
      Tensor<Sf> guide_t =
          Tensor<Sf>::from_array({batch, c_guide, crop, crop}, std::move(gd_v));

      Tensor<Sf> loss;
      Tensor<Sf> refined = dsm_t;
      if (mode == Mode::kFull || mode == Mode::kRefineOnly)
        refined = nets.refine.forward(dsm_t, guide_t).refined;

      if (mode == Mode::kRefineOnly) {
        loss = l1_loss(refined, gt_t);
      } else {
        Tensor<Sf> feats;
        if (nets.encoder) feats = nets.encoder->forward(guide_t);
        std::vector<Tensor<Sf>> diffused;
        for (int b = 0; b < batch; ++b) {
          EdgeCoefficients<Sf> coeffs =
              nets.encoder
                  ? edge_coefficients(channels_at(feats, b), static_cast<Sf>(dparams.k))
                  : edge_coefficients<Sf>(crop_guides[static_cast<size_t>(b)], dparams.k);
          diffused.push_back(run_diffusion(image_at(refined, b, 0), coeffs, dparams));
        }
        Tensor<Sf> diffused_t = stack_images(diffused);
        loss = mode == Mode::kDiffusionOnly
                   ? l1_loss(diffused_t, gt_t)
                   : add(l1_loss(refined, gt_t), l1_loss(diffused_t, gt_t));
      }

      if (!trainable.empty() && loss.requires_grad()) {
        backward(loss);
        adam_step(trainable, static_cast<Sf>(config.trainer.lr),
                  static_cast<Sf>(config.trainer.beta1), static_cast<Sf>(config.trainer.beta2),
                  static_cast<Sf>(config.trainer.adam_eps));
        zero_grads(trainable);
      }

      result.last_loss = loss.value();
      if (iter == 0) result.first_loss = result.last_loss;
      result.iterations_run = iter + 1;

      if ((iter + 1) % config.trainer.eval_every == 0 || iter + 1 == config.trainer.max_iters) {
        const double test_rmse = quick_test_rmse(config, stats, &nets, test_samples, mode,
                                                 config.trainer.eval_subset);
        result.log.push_back({iter + 1, result.last_loss, test_rmse});
        if (progress)
          (*progress) << "iter " << (iter + 1) << " loss " << result.last_loss
                      << " test_rmse " << test_rmse << "\n";
        if (test_rmse < best_rmse * (1.0 - config.trainer.min_rel_improvement)) {
          best_rmse = test_rmse;
          best_values.clear();
          for (auto* p : all_parameters(nets)) best_values.push_back(p->tensor.values());
          stale_evals = 0;
        } else {
          if (++stale_evals >= config.trainer.patience) stop = true;
        }
      }
    } catch (const NumericError& e) {
      throw NumericError("training iteration " + std::to_string(iter) + ": " + e.what());
    }
  }

  if (!best_values.empty()) {
    auto params = all_parameters(nets);
    for (size_t i = 0; i < params.size(); ++i) params[i]->tensor.values() = best_values[i];
  }
  result.checkpoint = checkpoint_from_nets(nets, config, stats, result.iterations_run,
                                           config.trainer.seed, rng.counter());
  return result;
}

EvalResult evaluate(const PipelineConfig& config, const ModelCheckpoint* ckpt,
                    const std::filesystem::path& test_manifest, Mode mode) {
  config.validate();
  if (mode != Mode::kBicubicOnly && ckpt == nullptr)
    throw DataError("evaluate: mode " + mode_name(mode) + " requires a checkpoint");

  const auto samples = load_samples(test_manifest, config);
  std::optional<Nets> nets;
  NormStats stats;
  if (ckpt != nullptr) {
    stats = ckpt->stats;
    if (mode != Mode::kBicubicOnly) nets.emplace(nets_from_checkpoint(config, *ckpt));
  } else {
    stats.guide_channel_mean = Eigen::ArrayXd::Zero(config.refine.guide_channels);
    stats.guide_channel_std = Eigen::ArrayXd::Ones(config.refine.guide_channels);
  }

  EvalResult result;
  double sum_rmse = 0, sum_nmad = 0, sum_medae = 0;
  double b_rmse = 0, b_nmad = 0, b_medae = 0;
  int64_t total_px = 0;
  for (const auto& s : samples) {
    HeightRaster out = infer_with_nets(config, stats, nets ? &*nets : nullptr, s.lr,
                                       s.guide, mode);
    SampleEval se;
    se.id = s.id;
    se.metrics = compute_metrics(out, s.hr);
    sum_rmse += se.metrics.rmse;
    sum_nmad += se.metrics.nmad;
    sum_medae += se.metrics.medae;
    total_px += se.metrics.n_pixels;
    result.samples.push_back(std::move(se));

    HeightRaster up = bicubic_resample(s.lr, s.hr.height, s.hr.width);
    MetricsReport base = compute_metrics(up, s.hr);
    b_rmse += base.rmse;
    b_nmad += base.nmad;
    b_medae += base.medae;
  }
  const double n = static_cast<double>(samples.size());
  result.mean = {sum_rmse / n, sum_nmad / n, sum_medae / n, total_px};
  result.bicubic_mean = {b_rmse / n, b_nmad / n, b_medae / n, total_px};
  return result;
}

std::string EvalResult::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "id,rmse,nmad,medae,n_pixels\n";
  for (const auto& s : samples)
    os << s.id << "," << s.metrics.rmse << "," << s.metrics.nmad << "," << s.metrics.medae
       << "," << s.metrics.n_pixels << "\n";
  return os.str();
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os.precision(10);
  os << "iter,loss,test_rmse\n";
  for (const auto& row : log)
    os << row.iter << "," << row.loss << "," << row.test_rmse << "\n";
  return os.str();
}

}  // namespace gdsr
