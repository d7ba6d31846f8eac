#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gdsr/config.hpp"
#include "gdsr/metrics.hpp"
#include "gdsr/pipeline.hpp"
#include "gdsr/raster_io.hpp"
#include "gdsr/resample.hpp"
#include "gdsr/synthgen.hpp"

namespace fs = std::filesystem;
using namespace gdsr;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig load_config(const CommonArgs& args) {
  PipelineConfig config = args.config_path.empty()
                              ? PipelineConfig::desk_scale()
                              : PipelineConfig::parse_file(args.config_path);
  if (args.seed_set) {
    config.scene.seed = args.seed;
    config.trainer.seed = args.seed;
  }
  if (!args.mode.empty()) config.mode = parse_mode(args.mode);
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_mode = true) {
  cmd->add_option("--config", args.config_path,
                  "Config file (key = value lines); desk_scale preset when omitted");
  cmd->add_option("--out", args.out_dir, "Output directory")->required();
  cmd->add_option("--seed", args.seed, "Override scene and trainer seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  if (with_mode)
    cmd->add_option("--mode", args.mode,
                    "Pipeline mode: full|refine_only|diffusion_only|bicubic_only");
}

int run_synth(const CommonArgs& args) {
  PipelineConfig config = load_config(args);
  auto manifests = generate_dataset(config.dataset.n_train, config.dataset.n_test,
                                    config.scene, config.degradation, args.out_dir);
  std::cout << "wrote " << manifests.train_manifest << " (" << config.dataset.n_train
            << " samples) and " << manifests.test_manifest << " (" << config.dataset.n_test
            << " samples)\n";
  return 0;
}

int run_train(const CommonArgs& args, const std::string& data_dir) {
  PipelineConfig config = load_config(args);
  fs::create_directories(args.out_dir);
  TrainResult result = train(config, fs::path(data_dir) / "train_manifest.txt",
                             fs::path(data_dir) / "test_manifest.txt", &std::cout);
  const fs::path ckpt_path = fs::path(args.out_dir) / "checkpoint.gdsc";
  save_checkpoint(result.checkpoint, ckpt_path);
  write_text(fs::path(args.out_dir) / "train_log.csv", train_log_to_csv(result.log));
  write_text(fs::path(args.out_dir) / "config_used.txt", config.serialize());
  std::cout << "trained " << result.iterations_run << " iterations, final loss "
            << result.last_loss << "\nwrote " << ckpt_path << "\n";
  return 0;
}

int run_infer(const CommonArgs& args, const std::string& ckpt_path,
              const std::string& lr_path, const std::string& guide_path) {
  PipelineConfig config = load_config(args);
  HeightRaster lr = read_height_raster(lr_path);
  GuideRaster guide = read_guide_raster(guide_path);
  fs::create_directories(args.out_dir);

  HeightRaster out;
  if (config.mode == Mode::kBicubicOnly && ckpt_path.empty()) {
    out = bicubic_resample(lr, guide.height, guide.width);
  } else {
    if (ckpt_path.empty()) throw ConfigError("infer: --checkpoint is required");
    ModelCheckpoint ckpt = load_checkpoint(ckpt_path, config.digest());
    out = infer(config, ckpt, lr, guide, config.mode);
  }
  const fs::path out_path = fs::path(args.out_dir) / "output.gdsr";
  write_raster(out, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& ckpt_path,
             const std::string& data_dir, const std::string& profile_spec) {
  PipelineConfig config = load_config(args);
  fs::create_directories(args.out_dir);

  ModelCheckpoint ckpt;
  bool have_ckpt = !ckpt_path.empty();
  if (have_ckpt) ckpt = load_checkpoint(ckpt_path, config.digest());
  if (!have_ckpt && config.mode != Mode::kBicubicOnly)
    throw ConfigError("eval: --checkpoint is required for mode " + mode_name(config.mode));

  const fs::path manifest = fs::path(data_dir) / "test_manifest.txt";
  EvalResult result = evaluate(config, have_ckpt ? &ckpt : nullptr, manifest, config.mode);
  write_text(fs::path(args.out_dir) / "metrics.csv", result.to_csv());

  std::ostringstream summary;
  summary.precision(10);
  summary << "which,rmse,nmad,medae,n_pixels\n"
          << mode_name(config.mode) << "," << result.mean.to_csv() << "\n"
          << "bicubic," << result.bicubic_mean.to_csv() << "\n";
  write_text(fs::path(args.out_dir) / "summary.csv", summary.str());
  std::cout << summary.str();

  if (!profile_spec.empty()) {
    double x0, y0, x1, y1;
    int n;
    char comma;
    std::istringstream ps(profile_spec);
    ps >> x0 >> comma >> y0 >> comma >> x1 >> comma >> y1 >> comma >> n;
    if (ps.fail()) throw ConfigError("eval: --profile expects x0,y0,x1,y1,n");

    const auto entries = read_manifest(manifest);
    const fs::path dir = manifest.parent_path();
    HeightRaster hr = read_height_raster(dir / entries.front().hr_path);
    HeightRaster lr = read_height_raster(dir / entries.front().lr_path);
    GuideRaster guide = read_guide_raster(dir / entries.front().guide_path);
    HeightRaster up = bicubic_resample(lr, hr.height, hr.width);
    HeightRaster pred = have_ckpt ? infer(config, ckpt, lr, guide, config.mode) : up;

    write_text(fs::path(args.out_dir) / "profile_pred.csv",
               profile_to_csv(line_profile(pred, x0, y0, x1, y1, n)));
    write_text(fs::path(args.out_dir) / "profile_gt.csv",
               profile_to_csv(line_profile(hr, x0, y0, x1, y1, n)));
    write_text(fs::path(args.out_dir) / "profile_bicubic.csv",
               profile_to_csv(line_profile(up, x0, y0, x1, y1, n)));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gdsr: guided super-resolution of digital surface models"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, infer_args, eval_args;
  std::string data_dir, ckpt_path, lr_path, guide_path, profile_spec, png_path, png_out;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, synth_args, /*with_mode=*/false);

  CLI::App* trainc = app.add_subcommand("train", "Train the two-stage model");
  add_common(trainc, train_args);
  trainc->add_option("--data", data_dir, "Dataset directory (from synth)")->required();

  CLI::App* inferc = app.add_subcommand("infer", "Super-resolve one raster");
  add_common(inferc, infer_args);
  inferc->add_option("--checkpoint", ckpt_path, "Trained checkpoint");
  inferc->add_option("--lr", lr_path, "Low-resolution height raster")->required();
  inferc->add_option("--guide", guide_path, "High-resolution guide raster")->required();

  CLI::App* evalc = app.add_subcommand("eval", "Evaluate on a test split");
  add_common(evalc, eval_args);
  evalc->add_option("--checkpoint", ckpt_path, "Trained checkpoint");
  evalc->add_option("--data", data_dir, "Dataset directory (from synth)")->required();
  evalc->add_option("--profile", profile_spec,
                    "Line profile x0,y0,x1,y1,n over the first test sample");

  CLI::App* import = app.add_subcommand("import-png", "Convert an 8-bit PNG to a guide");
  import->add_option("--png", png_path, "Input PNG")->required();
  import->add_option("--out", png_out, "Output .gdsr path")->required();

  try {
    app.parse(argc, argv);
    if (*synth) return run_synth(synth_args);
    if (*trainc) return run_train(train_args, data_dir);
    if (*inferc) return run_infer(infer_args, ckpt_path, lr_path, guide_path);
    if (*evalc) return run_eval(eval_args, ckpt_path, data_dir, profile_spec);
    if (*import) {
      write_raster(read_guide_png(png_path), png_out);
      std::cout << "wrote " << png_out << "\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
