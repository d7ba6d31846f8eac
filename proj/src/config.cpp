#include "gdsr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace gdsr {

Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::kFull;
  if (s == "refine_only") return Mode::kRefineOnly;
  if (s == "diffusion_only") return Mode::kDiffusionOnly;
  if (s == "bicubic_only") return Mode::kBicubicOnly;
  throw ConfigError("unknown mode '" + s +
                    "' (expected full|refine_only|diffusion_only|bicubic_only)");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kFull: return "full";
    case Mode::kRefineOnly: return "refine_only";
    case Mode::kDiffusionOnly: return "diffusion_only";
    case Mode::kBicubicOnly: return "bicubic_only";
  }
  return "full";
}

namespace {

struct Field {
  std::string key;
  bool semantic;  // participates in the config digest
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  is >> v;
  if (is.fail() || !(is >> std::ws).eof())
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  return v;
}

template <typename T>
std::string format_number(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<Field> field_table() {
  std::vector<Field> f;
  auto add = [&](const std::string& key, bool semantic, auto getter) {
    f.push_back(Field{
        key, semantic,
        [getter](const PipelineConfig& c) {
          return format_number(*getter(const_cast<PipelineConfig&>(c)));
        },
        [getter, key](PipelineConfig& c, const std::string& v) {
          using T = std::remove_reference_t<decltype(*getter(c))>;
          *getter(c) = parse_number<T>(key, v);
        }});
  };

  add("scene.seed", true, [](PipelineConfig& c) { return &c.scene.seed; });
  add("scene.extent", true, [](PipelineConfig& c) { return &c.scene.extent; });
  add("scene.cell_size", true, [](PipelineConfig& c) { return &c.scene.cell_size; });
  add("scene.building_count_min", true,
      [](PipelineConfig& c) { return &c.scene.building_count_min; });
  add("scene.building_count_max", true,
      [](PipelineConfig& c) { return &c.scene.building_count_max; });
  add("scene.building_height_min", true,
      [](PipelineConfig& c) { return &c.scene.building_height_min; });
  add("scene.building_height_max", true,
      [](PipelineConfig& c) { return &c.scene.building_height_max; });
  add("scene.terrain_amplitude", true,
      [](PipelineConfig& c) { return &c.scene.terrain_amplitude; });
  add("scene.terrain_smoothness", true,
      [](PipelineConfig& c) { return &c.scene.terrain_smoothness; });

  add("degradation.factor", true, [](PipelineConfig& c) { return &c.degradation.factor; });
  add("degradation.blur_sigma", true,
      [](PipelineConfig& c) { return &c.degradation.blur_sigma; });
  add("degradation.noise_sigma", true,
      [](PipelineConfig& c) { return &c.degradation.noise_sigma; });
  add("degradation.erosion_radius", true,
      [](PipelineConfig& c) { return &c.degradation.erosion_radius; });

  add("refine.hidden_dim", true, [](PipelineConfig& c) { return &c.refine.hidden_dim; });
  add("refine.n_res_blocks", true, [](PipelineConfig& c) { return &c.refine.n_res_blocks; });
  add("refine.n_scale_stages", true,
      [](PipelineConfig& c) { return &c.refine.n_scale_stages; });
  add("refine.guide_channels", true,
      [](PipelineConfig& c) { return &c.refine.guide_channels; });
  add("refine.kernel_size", true, [](PipelineConfig& c) { return &c.refine.kernel_size; });

  add("diffusion.lambda", true, [](PipelineConfig& c) { return &c.diffusion.lambda; });
  add("diffusion.k", true, [](PipelineConfig& c) { return &c.diffusion.k; });
  add("diffusion.n_steps_total", true,
      [](PipelineConfig& c) { return &c.diffusion.n_steps_total; });
  add("diffusion.n_steps_grad", true,
      [](PipelineConfig& c) { return &c.diffusion.n_steps_grad; });

  add("trainer.lr", true, [](PipelineConfig& c) { return &c.trainer.lr; });
  add("trainer.batch_size", true, [](PipelineConfig& c) { return &c.trainer.batch_size; });
  add("trainer.beta1", true, [](PipelineConfig& c) { return &c.trainer.beta1; });
  add("trainer.beta2", true, [](PipelineConfig& c) { return &c.trainer.beta2; });
  add("trainer.adam_eps", true, [](PipelineConfig& c) { return &c.trainer.adam_eps; });
  add("trainer.max_iters", true, [](PipelineConfig& c) { return &c.trainer.max_iters; });
  add("trainer.eval_every", true, [](PipelineConfig& c) { return &c.trainer.eval_every; });
  add("trainer.patience", true, [](PipelineConfig& c) { return &c.trainer.patience; });
  add("trainer.min_rel_improvement", true,
      [](PipelineConfig& c) { return &c.trainer.min_rel_improvement; });
  add("trainer.seed", true, [](PipelineConfig& c) { return &c.trainer.seed; });
  add("trainer.train_crop", true, [](PipelineConfig& c) { return &c.trainer.train_crop; });
  add("trainer.eval_subset", true, [](PipelineConfig& c) { return &c.trainer.eval_subset; });

  add("dataset.n_train", true, [](PipelineConfig& c) { return &c.dataset.n_train; });
  add("dataset.n_test", true, [](PipelineConfig& c) { return &c.dataset.n_test; });

  add("tile_size", false, [](PipelineConfig& c) { return &c.tile_size; });
  add("tile_overlap", false, [](PipelineConfig& c) { return &c.tile_overlap; });
  add("infer_steps", false, [](PipelineConfig& c) { return &c.infer_steps; });
  add("diffusion_feature_dim", true,
      [](PipelineConfig& c) { return &c.diffusion_feature_dim; });

  f.push_back(Field{
      "learned_diffusion_features", true,
      [](const PipelineConfig& c) {
        return std::string(c.learned_diffusion_features ? "true" : "false");
      },
      [](PipelineConfig& c, const std::string& v) {
        if (v == "true" || v == "1")
          c.learned_diffusion_features = true;
        else if (v == "false" || v == "0")
          c.learned_diffusion_features = false;
        else
          throw ConfigError("bad value '" + v + "' for key 'learned_diffusion_features'");
      }});
  f.push_back(Field{"mode", false,
                    [](const PipelineConfig& c) { return mode_name(c.mode); },
                    [](PipelineConfig& c, const std::string& v) { c.mode = parse_mode(v); }});
  return f;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void PipelineConfig::validate() const {
  scene.validate();
  degradation.validate();
  refine.validate();
  diffusion.validate();
  if (!(trainer.lr > 0)) throw ConfigError("trainer: lr must be positive");
  if (trainer.batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (trainer.max_iters < 0) throw ConfigError("trainer: max_iters must be >= 0");
  if (trainer.eval_every < 1) throw ConfigError("trainer: eval_every must be >= 1");
  if (trainer.patience < 1) throw ConfigError("trainer: patience must be >= 1");
  if (trainer.train_crop < 0) throw ConfigError("trainer: train_crop must be >= 0");
  if (dataset.n_train < 1 || dataset.n_test < 1)
    throw ConfigError("dataset: sample counts must be >= 1");
  if (tile_size < 1) throw ConfigError("tile_size must be >= 1");
  if (tile_overlap < 0 || tile_overlap >= tile_size)
    throw ConfigError("tile_overlap must satisfy 0 <= overlap < tile_size");
  if (diffusion_feature_dim < 1)
    throw ConfigError("diffusion_feature_dim must be >= 1");
}

std::string PipelineConfig::serialize() const {
  std::ostringstream os;
  for (const auto& f : field_table()) os << f.key << " = " << f.get(*this) << "\n";
  return os.str();
}

uint64_t PipelineConfig::digest() const {
  // FNV-1a over the canonical serialization of the semantic fields.
  uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& f : field_table()) {
    if (!f.semantic) continue;
    feed(f.key);
    feed("=");
    feed(f.get(*this));
    feed(";");
  }
  return h;
}

PipelineConfig PipelineConfig::desk_scale() {
  PipelineConfig c;
  c.scene.extent = 128;
  c.scene.building_count_min = 5;
  c.scene.building_count_max = 10;
  c.scene.building_height_min = 5.0;
  c.scene.building_height_max = 20.0;
  c.scene.terrain_amplitude = 5.0;
  c.scene.terrain_smoothness = 32.0;
  c.degradation.factor = 4;
  c.degradation.blur_sigma = 1.2;
  c.degradation.noise_sigma = 1.0;
  c.degradation.erosion_radius = 2;
  c.diffusion.n_steps_total = 1024;
  c.diffusion.n_steps_grad = 256;
  c.trainer.max_iters = 3000;
  c.trainer.eval_every = 200;
  c.trainer.train_crop = 64;
  c.trainer.eval_subset = 10;
  c.dataset.n_train = 200;
  c.dataset.n_test = 40;
  c.tile_size = 128;
  c.tile_overlap = 32;
  return c;
}

PipelineConfig PipelineConfig::paper_scale() {
  PipelineConfig c;
  c.scene.extent = 256;
  c.degradation.factor = 10;
  c.diffusion.n_steps_total = 8000;
  c.diffusion.n_steps_grad = 1024;
  c.trainer.max_iters = 100000;
  c.dataset.n_train = 2000;
  c.dataset.n_test = 200;
  c.tile_size = 256;
  c.tile_overlap = 64;
  return c;
}

PipelineConfig PipelineConfig::parse_string(const std::string& text) {
  PipelineConfig config;
  const auto fields = field_table();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + s + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key == "preset") {
      if (value == "desk_scale")
        config = desk_scale();
      else if (value == "paper_scale")
        config = paper_scale();
      else
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown preset '" +
                          value + "'");
      continue;
    }
    bool found = false;
    for (const auto& f : fields) {
      if (f.key == key) {
        f.set(config, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                        "'");
  }
  config.validate();
  return config;
}

PipelineConfig PipelineConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

}  // namespace gdsr
