#include <cstring>
#include <fstream>

#include "gdsr/pipeline.hpp"

namespace gdsr {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'S', 'C'};
constexpr uint32_t kVersion = 1;

class CkptReader {
 public:
  explicit CkptReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw DataError("cannot open checkpoint: " + path_);
  }
  template <typename T>
  T get(const char* what) {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_)
      throw DataError(path_ + ": corrupt checkpoint, truncated reading " + what +
                      " at byte offset " + std::to_string(offset_));
    offset_ += sizeof(T);
    return v;
  }
  void get_bytes(void* p, size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_)
      throw DataError(path_ + ": corrupt checkpoint, truncated reading " + what +
                      " at byte offset " + std::to_string(offset_));
    offset_ += n;
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  int64_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  auto put = [&out](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  out.write(kMagic, 4);
  put(kVersion);
  put(ckpt.config_digest);
  put(ckpt.train_steps);
  put(ckpt.rng_seed);
  put(ckpt.rng_counter);

  put(ckpt.stats.dsm_global_std);
  const uint32_t channels = static_cast<uint32_t>(ckpt.stats.guide_channel_mean.size());
  put(channels);
  out.write(reinterpret_cast<const char*>(ckpt.stats.guide_channel_mean.data()),
            sizeof(double) * channels);
  out.write(reinterpret_cast<const char*>(ckpt.stats.guide_channel_std.data()),
            sizeof(double) * channels);

  const uint32_t count = static_cast<uint32_t>(ckpt.params.size());
  put(count);
  for (const auto& p : ckpt.params) {
    const uint16_t len = static_cast<uint16_t>(p.name.size());
    put(len);
    out.write(p.name.data(), len);
    const uint8_t rank = static_cast<uint8_t>(p.shape.size());
    put(rank);
    for (int64_t d : p.shape) {
      const uint32_t dim = static_cast<uint32_t>(d);
      put(dim);
    }
    out.write(reinterpret_cast<const char*>(p.values.data()),
              sizeof(float) * p.values.size());
  }
  out.flush();
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path,
                                uint64_t expected_digest) {
  CkptReader in(path);
  char magic[4];
  in.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(in.path() + ": not a checkpoint (bad magic at byte offset 0)");
  const uint32_t version = in.get<uint32_t>("version");
  if (version != kVersion)
    throw DataError(in.path() + ": unsupported checkpoint version " +
                    std::to_string(version));

  ModelCheckpoint ckpt;
  ckpt.version = version;
  ckpt.config_digest = in.get<uint64_t>("config digest");
  if (ckpt.config_digest != expected_digest)
    throw DataError(in.path() + ": config digest mismatch (checkpoint " +
                    std::to_string(ckpt.config_digest) + ", current config " +
                    std::to_string(expected_digest) +
                    "); the checkpoint was trained under a different configuration");
  ckpt.train_steps = in.get<int64_t>("train steps");
  ckpt.rng_seed = in.get<uint64_t>("rng seed");
  ckpt.rng_counter = in.get<uint64_t>("rng counter");

  ckpt.stats.dsm_global_std = in.get<double>("dsm std");
  const uint32_t channels = in.get<uint32_t>("guide channels");
  if (channels > 4096) throw DataError(in.path() + ": implausible guide channel count");
  ckpt.stats.guide_channel_mean.resize(channels);
  ckpt.stats.guide_channel_std.resize(channels);
  in.get_bytes(ckpt.stats.guide_channel_mean.data(), sizeof(double) * channels,
               "guide means");
  in.get_bytes(ckpt.stats.guide_channel_std.data(), sizeof(double) * channels,
               "guide stds");

  const uint32_t count = in.get<uint32_t>("parameter count");
  if (count > 1u << 20) throw DataError(in.path() + ": implausible parameter count");
  ckpt.params.resize(count);
  for (auto& p : ckpt.params) {
    const uint16_t len = in.get<uint16_t>("name length");
    p.name.resize(len);
    in.get_bytes(p.name.data(), len, "name");
    const uint8_t rank = in.get<uint8_t>("rank");
    p.shape.resize(rank);
    int64_t n = 1;
    for (auto& d : p.shape) {
      d = in.get<uint32_t>("dim");
      n *= d;
    }
    if (n < 0 || n > (int64_t{1} << 28))
      throw DataError(in.path() + ": implausible parameter size");
    p.values.resize(n);
    in.get_bytes(p.values.data(), sizeof(float) * n, "parameter data");
  }
  return ckpt;
}

}  // namespace gdsr
