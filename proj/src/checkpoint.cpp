#include "nltmo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace nltmo {

namespace {

constexpr char kMagic[8] = {'N', 'L', 'T', 'M', 'O', 'C', 'K', 'P'};
enum Role : std::uint32_t { kBand = 1, kLow = 2, kFusion = 3 };

std::uint64_t fnv1a(std::span<const std::uint8_t> b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t c : b) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  Bytes out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_network(Writer& w, Role role, const nn::CanConfig& cfg, const nn::CanParams<float>& p) {
  nn::check_params(cfg, p);
  w.u32(role);
  w.u32(static_cast<std::uint32_t>(cfg.in_channels));
  w.u32(static_cast<std::uint32_t>(cfg.layers.size()));
  for (const nn::LayerSpec& l : cfg.layers) {
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u32(static_cast<std::uint32_t>(l.dilation));
    w.u32(static_cast<std::uint32_t>(l.width));
    w.u8(l.has_bias);
    w.u8(l.has_adaptive_norm);
    w.u8(l.has_lrelu);
  }
  for (const nn::LayerParams<float>& l : p.layers) {
    for (float v : l.weight) w.f32(v);
    for (float v : l.bias) w.f32(v);
    w.f32(l.lambda[0]);
    w.f32(l.lambda[1]);
  }
}

std::pair<Role, nn::CanParams<float>> read_network(Reader& r, const nn::CanConfig& expect_band,
                                                    const nn::CanConfig& expect_fusion) {
  const std::uint32_t role = r.u32();
  if (role != kBand && role != kLow && role != kFusion) throw CheckpointError("checkpoint: unknown network role");
  nn::CanConfig cfg;
  cfg.in_channels = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  if (n > 64) throw CheckpointError("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < n; ++i) {
    nn::LayerSpec l;
    l.kernel = static_cast<int>(r.u32());
    l.dilation = static_cast<int>(r.u32());
    l.width = static_cast<int>(r.u32());
    l.has_bias = r.u8() != 0;
    l.has_adaptive_norm = r.u8() != 0;
    l.has_lrelu = r.u8() != 0;
    cfg.layers.push_back(l);
  }
  const nn::CanConfig& expect = role == kFusion ? expect_fusion : expect_band;
  if (!(cfg == expect))
    throw CheckpointError("checkpoint: network architecture does not match the expected configuration (" +
                          cfg.describe() + ")");
  nn::CanParams<float> p = nn::CanParams<float>::zeros(cfg);
  for (nn::LayerParams<float>& l : p.layers) {
    for (float& v : l.weight) v = r.f32();
    for (float& v : l.bias) v = r.f32();
    l.lambda[0] = r.f32();
    l.lambda[1] = r.f32();
  }
  return {static_cast<Role>(role), std::move(p)};
}

}  // namespace

Bytes save_checkpoint(const ModelBundle& bundle) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(bundle.tonemap ? static_cast<std::uint32_t>(bundle.tonemap->levels) : 0u);
  w.u32((bundle.tonemap ? 2u : 0u) + (bundle.fusion ? 1u : 0u));
  if (bundle.tonemap) {
    bundle.tonemap->validate();
    write_network(w, kBand, bundle.tonemap->band_config, bundle.tonemap->band);
    write_network(w, kLow, bundle.tonemap->low_config, bundle.tonemap->low);
  }
  if (bundle.fusion) {
    bundle.fusion->validate();
    write_network(w, kFusion, bundle.fusion->config, bundle.fusion->params);
  }
  w.u64(fnv1a(w.out));
  return std::move(w.out);
}

ModelBundle load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: bad magic (not a model checkpoint)");
  const std::uint64_t stored = [&] {
    Reader tail(bytes.subspan(bytes.size() - 8));
    return tail.u64();
  }();
  if (fnv1a(bytes.first(bytes.size() - 8)) != stored) throw CheckpointError("checkpoint: checksum mismatch");

  Reader r(bytes.first(bytes.size() - 8));
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t levels = r.u32();
  const std::uint32_t count = r.u32();

  ToneMapModel tm;
  FusionModel fm;
  bool band = false, low = false, fusion = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [role, params] = read_network(r, tm.band_config, fm.config);
    bool& seen = role == kBand ? band : role == kLow ? low : fusion;
    if (seen) throw CheckpointError("checkpoint: duplicate network");
    seen = true;
    (role == kBand ? tm.band : role == kLow ? tm.low : fm.params) = std::move(params);
  }
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes");
  if (band != low) throw CheckpointError("checkpoint: tone-mapping model is missing one of its networks");

  ModelBundle out;
  if (band) {
    if (levels < 1 || levels > static_cast<std::uint32_t>(kMaxPyramidLevels))
      throw CheckpointError("checkpoint: invalid pyramid level count");
    tm.levels = static_cast<int>(levels);
    out.tonemap = std::move(tm);
  }
  if (fusion) out.fusion = std::move(fm);
  if (!out.tonemap && !out.fusion) throw CheckpointError("checkpoint: contains no networks");
  return out;
}

std::string checkpoint_manifest(const ModelBundle& bundle) {
  std::ostringstream os;
  os << "format=NLTMOCKP\nversion=" << kCheckpointVersion << '\n';
  if (bundle.tonemap) {
    const ToneMapModel& m = *bundle.tonemap;
    os << "tonemap.levels=" << m.levels << '\n'
       << "tonemap.display_range=" << m.display_min << ',' << m.display_max << '\n'
       << "tonemap.band=" << m.band_config.describe() << '\n'
       << "tonemap.low=" << m.low_config.describe() << '\n'
       << "tonemap.parameters=" << m.band.parameter_count(m.band_config) + m.low.parameter_count(m.low_config) << '\n';
  }
  if (bundle.fusion) {
    const FusionModel& f = *bundle.fusion;
    os << "fusion.net=" << f.config.describe() << '\n'
       << "fusion.parameters=" << f.params.parameter_count(f.config) << '\n';
  }
  return os.str();
}

void save_checkpoint_file(const std::filesystem::path& path, const ModelBundle& bundle) {
  write_file(path, save_checkpoint(bundle));
  const std::string manifest = checkpoint_manifest(bundle);
  std::filesystem::path txt = path;
  txt += ".txt";
  write_file(txt, std::span(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));
}

ModelBundle load_checkpoint_file(const std::filesystem::path& path) {
  Bytes b;
  try {
    b = read_file(path);
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }
  return load_checkpoint(b);
}

}  // namespace nltmo
