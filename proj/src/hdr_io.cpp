#include "nltmo/hdr_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace nltmo {

namespace {

constexpr std::size_t kMaxPixels = std::size_t{1} << 28;

// Cursor over a byte stream that reads text lines and raw bytes.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  // Reads up to (not including) '\n'; false at end of stream.
  bool line(std::string& out) {
    if (at_end()) return false;
    out.clear();
    while (pos_ < bytes_.size() && bytes_[pos_] != '\n') out.push_back(static_cast<char>(bytes_[pos_++]));
    if (pos_ < bytes_.size()) ++pos_;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return true;
  }

  std::uint8_t byte() {
    if (at_end()) throw FormatError("unexpected end of stream");
    return bytes_[pos_++];
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw FormatError("unexpected end of stream");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  // Whitespace-delimited token (used for the PFM header).
  std::string token() {
    while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    return out;
  }

  // Consumes exactly one whitespace byte (the header terminator).
  void skip_single_space() {
    if (at_end() || !std::isspace(bytes_[pos_])) throw FormatError("PFM: missing header terminator");
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void rgbe_to_float(const std::uint8_t* e, float* rgb) {
  if (e[3] == 0) {
    rgb[0] = rgb[1] = rgb[2] = 0.0f;
    return;
  }
  const double f = std::ldexp(1.0, static_cast<int>(e[3]) - (128 + 8));
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>((e[c] + 0.5) * f);
}

void float_to_rgbe(const float* rgb, std::uint8_t* e) {
  const double v = std::max({rgb[0], rgb[1], rgb[2]});
  if (v < 1e-32) {
    e[0] = e[1] = e[2] = e[3] = 0;
    return;
  }
  int exponent = 0;
  const double mant = std::frexp(v, &exponent);
  const double scale = mant * 256.0 / v;
  for (int c = 0; c < 3; ++c) {
    const double q = std::max(0.0, static_cast<double>(rgb[c])) * scale;
    e[c] = static_cast<std::uint8_t>(std::min(255.0, std::floor(q)));
  }
  e[3] = static_cast<std::uint8_t>(exponent + 128);
}

int parse_int(std::string_view s, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(std::string(what) + ": bad integer '" + std::string(s) + "'");
  return v;
}

void read_rle_scanline(ByteReader& in, int width, std::vector<std::uint8_t>& line) {
  // line is laid out as 4 planes of `width` bytes.
  for (int ch = 0; ch < 4; ++ch) {
    std::uint8_t* plane = line.data() + static_cast<std::size_t>(ch) * width;
    int x = 0;
    while (x < width) {
      int count = in.byte();
      if (count > 128) {
        count -= 128;
        if (x + count > width) throw FormatError("RGBE: run overflows scanline");
        const std::uint8_t v = in.byte();
        std::fill_n(plane + x, count, v);
      } else {
        if (count == 0 || x + count > width) throw FormatError("RGBE: bad literal run");
        auto lit = in.take(static_cast<std::size_t>(count));
        std::copy(lit.begin(), lit.end(), plane + x);
      }
      x += count;
    }
  }
}

void write_rle_plane(Bytes& out, const std::uint8_t* data, int n) {
  constexpr int kMinRun = 4;
  int cur = 0;
  while (cur < n) {
    int beg_run = cur;
    int run_count = 0;
    int old_run_count = 0;
    while (run_count < kMinRun && beg_run < n) {
      beg_run += run_count;
      old_run_count = run_count;
      run_count = 1;
      while (beg_run + run_count < n && run_count < 127 && data[beg_run] == data[beg_run + run_count]) ++run_count;
    }
    // a short run directly before the long one is cheaper encoded as a run
    if (old_run_count > 1 && old_run_count == beg_run - cur) {
      out.push_back(static_cast<std::uint8_t>(128 + old_run_count));
      out.push_back(data[cur]);
      cur = beg_run;
    }
    while (cur < beg_run) {
      int nonrun = std::min(beg_run - cur, 128);
      out.push_back(static_cast<std::uint8_t>(nonrun));
      out.insert(out.end(), data + cur, data + cur + nonrun);
      cur += nonrun;
    }
    if (run_count >= kMinRun) {
      out.push_back(static_cast<std::uint8_t>(128 + run_count));
      out.push_back(data[beg_run]);
      cur += run_count;
    }
  }
}

void check_dims(long long w, long long h, const char* what) {
  if (w < 1 || h < 1) throw FormatError(std::string(what) + ": nonpositive dimensions");
  if (w > (1 << 20) || h > (1 << 20) || static_cast<unsigned long long>(w) * h > kMaxPixels)
    throw FormatError(std::string(what) + ": dimension overflow");
}

}  // namespace

// ---------------------------------------------------------------------------

HdrImage load_radiance_hdr(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  std::string ln;
  if (!in.line(ln) || !(ln.starts_with("#?RADIANCE") || ln.starts_with("#?RGBE")))
    throw FormatError("RGBE: missing #?RADIANCE / #?RGBE signature");

  bool have_format = false;
  while (true) {
    if (!in.line(ln)) throw FormatError("RGBE: header not terminated");
    if (ln.empty()) break;
    if (ln.starts_with("FORMAT=")) {
      if (ln != "FORMAT=32-bit_rle_rgbe") throw FormatError("RGBE: unsupported " + ln);
      have_format = true;
    }
  }
  if (!have_format) throw FormatError("RGBE: missing FORMAT line");

  if (!in.line(ln)) throw FormatError("RGBE: missing resolution string");
  std::istringstream res(ln);
  std::string ya, yv, xa, xv;
  res >> ya >> yv >> xa >> xv;
  if ((ya != "-Y" && ya != "+Y") || xa != "+X") throw FormatError("RGBE: unsupported resolution string '" + ln + "'");
  const int height = parse_int(yv, "RGBE");
  const int width = parse_int(xv, "RGBE");
  check_dims(width, height, "RGBE");
  const bool bottom_up = ya == "+Y";

  HdrImage img(width, height);
  std::vector<std::uint8_t> line(static_cast<std::size_t>(width) * 4);
  std::uint8_t px[4];
  for (int row = 0; row < height; ++row) {
    const int y = bottom_up ? height - 1 - row : row;
    auto head = in.take(4);
    const bool rle = width >= 8 && width <= 0x7fff && head[0] == 2 && head[1] == 2 && (head[2] & 0x80) == 0;
    if (rle) {
      if (((head[2] << 8) | head[3]) != width) throw FormatError("RGBE: scanline width mismatch");
      read_rle_scanline(in, width, line);
      for (int x = 0; x < width; ++x) {
        for (int ch = 0; ch < 4; ++ch) px[ch] = line[static_cast<std::size_t>(ch) * width + x];
        rgbe_to_float(px, img.pixel(x, y));
      }
    } else {
      rgbe_to_float(head.data(), img.pixel(0, y));
      auto rest = in.take(static_cast<std::size_t>(width - 1) * 4);
      for (int x = 1; x < width; ++x) rgbe_to_float(rest.data() + static_cast<std::size_t>(x - 1) * 4, img.pixel(x, y));
    }
  }
  return img;
}

Bytes save_radiance_hdr(const HdrImage& img) {
  Bytes out;
  std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(img.height) + " +X " +
                       std::to_string(img.width) + "\n";
  out.insert(out.end(), header.begin(), header.end());
  const int w = img.width;
  std::vector<std::uint8_t> planes(static_cast<std::size_t>(w) * 4);
  std::uint8_t e[4];
  for (int y = 0; y < img.height; ++y) {
    if (w < 8 || w > 0x7fff) {
      for (int x = 0; x < w; ++x) {
        float_to_rgbe(img.pixel(x, y), e);
        out.insert(out.end(), e, e + 4);
      }
      continue;
    }
    for (int x = 0; x < w; ++x) {
      float_to_rgbe(img.pixel(x, y), e);
      for (int ch = 0; ch < 4; ++ch) planes[static_cast<std::size_t>(ch) * w + x] = e[ch];
    }
    out.push_back(2);
    out.push_back(2);
    out.push_back(static_cast<std::uint8_t>(w >> 8));
    out.push_back(static_cast<std::uint8_t>(w & 0xff));
    for (int ch = 0; ch < 4; ++ch) write_rle_plane(out, planes.data() + static_cast<std::size_t>(ch) * w, w);
  }
  return out;
}

// ---------------------------------------------------------------------------

HdrImage load_pfm(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const std::string magic = in.token();
  int channels = 0;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw FormatError("PFM: bad magic '" + magic + "'");

  const std::string ws = in.token(), hs = in.token(), ss = in.token();
  long long w = 0, h = 0;
  double scale = 0.0;
  {
    auto [p1, e1] = std::from_chars(ws.data(), ws.data() + ws.size(), w);
    auto [p2, e2] = std::from_chars(hs.data(), hs.data() + hs.size(), h);
    auto [p3, e3] = std::from_chars(ss.data(), ss.data() + ss.size(), scale);
    if (e1 != std::errc() || e2 != std::errc() || e3 != std::errc() || p1 != ws.data() + ws.size() ||
        p2 != hs.data() + hs.size() || p3 != ss.data() + ss.size())
      throw FormatError("PFM: malformed header");
  }
  check_dims(w, h, "PFM");
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("PFM: invalid scale");
  in.skip_single_space();

  const bool little = scale < 0.0;
  const float gain = static_cast<float>(std::abs(scale));
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  if (in.remaining() < count * 4) throw FormatError("PFM: short payload");
  auto payload = in.take(count * 4);

  HdrImage img(static_cast<int>(w), static_cast<int>(h));
  const bool host_little = std::endian::native == std::endian::little;
  std::size_t k = 0;
  for (long long row = 0; row < h; ++row) {
    const int y = static_cast<int>(h - 1 - row);  // rows are stored bottom-up
    for (long long x = 0; x < w; ++x) {
      float v[3];
      for (int c = 0; c < channels; ++c, ++k) {
        std::uint8_t b[4];
        std::memcpy(b, payload.data() + k * 4, 4);
        if (little != host_little) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
        std::memcpy(&v[c], b, 4);
      }
      float* px = img.pixel(static_cast<int>(x), y);
      for (int c = 0; c < 3; ++c) px[c] = (channels == 3 ? v[c] : v[0]) * gain;
    }
  }
  return img;
}

namespace {
Bytes pfm_bytes(int w, int h, int channels, auto&& value_at) {
  std::string header = std::string(channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(w) * h * channels * 4);
  for (int row = 0; row < h; ++row) {
    const int y = h - 1 - row;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        float v = value_at(x, y, c);
        std::uint8_t b[4];
        std::memcpy(b, &v, 4);
        if constexpr (std::endian::native == std::endian::big) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
        out.insert(out.end(), b, b + 4);
      }
  }
  return out;
}
}  // namespace

Bytes save_pfm(const HdrImage& img) {
  return pfm_bytes(img.width, img.height, 3, [&](int x, int y, int c) { return img.pixel(x, y)[c]; });
}

Bytes save_pfm(const Raster& gray) {
  return pfm_bytes(gray.width, gray.height, 1, [&](int x, int y, int) { return static_cast<float>(gray.at(x, y)); });
}

// ---------------------------------------------------------------------------

Bytes save_png(const LdrImage& img, bool gamma_encode) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("PNG: channels must be 1 or 3");
  std::vector<std::uint8_t> pix(img.values.size());
  for (std::size_t i = 0; i < pix.size(); ++i) {
    double v = std::clamp(static_cast<double>(img.values[i]), 0.0, 1.0);
    if (gamma_encode) v = std::pow(v, 1.0 / 2.2);
    pix[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, pix.data(), 0, nullptr))
    throw FormatError(std::string("PNG: ") + pi.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, pix.data(), 0, nullptr))
    throw FormatError(std::string("PNG: ") + pi.message);
  out.resize(size);
  return out;
}

LdrImage load_png(std::span<const std::uint8_t> bytes) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) throw FormatError(std::string("PNG: ") + pi.message);
  const bool color = (pi.format & PNG_FORMAT_FLAG_COLOR) != 0;
  pi.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pix(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, pix.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw FormatError(std::string("PNG: ") + pi.message);
  }
  LdrImage img(static_cast<int>(pi.width), static_cast<int>(pi.height), color ? 3 : 1);
  for (std::size_t i = 0; i < pix.size(); ++i) img.values[i] = pix[i] / 255.0f;
  return img;
}

// ---------------------------------------------------------------------------

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed: " + path.string());
}

HdrImage load_hdr_file(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  try {
    if (ext == ".pfm") return load_pfm(bytes);
    return load_radiance_hdr(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

LuminanceMap extract_luminance(const HdrImage& img) {
  LuminanceMap lum(img.width, img.height, img.units_calibrated ? LuminanceUnits::cd_per_m2 : LuminanceUnits::relative);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const float* p = img.rgb.data() + i * 3;
    lum.data[i] = kRec709R * p[0] + kRec709G * p[1] + kRec709B * p[2];
  }
  return lum;
}

LuminanceMap calibrate(const Raster& lum, double s_min, double s_max) {
  if (!(s_min > 0.0) || !(s_max > s_min)) throw Error("calibrate: requires s_max > s_min > 0");
  if (lum.empty()) throw DegenerateInputError("calibrate: empty luminance map");
  const auto [lo_it, hi_it] = std::minmax_element(lum.data.begin(), lum.data.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DegenerateInputError("calibrate: constant image (R_max == R_min)");
  LuminanceMap out(lum.width, lum.height, LuminanceUnits::cd_per_m2);
  const double span = hi - lo;
  for (std::size_t i = 0; i < lum.size(); ++i) {
    const double v = lum.data[i];
    // endpoints are pinned so the output range is exact
    if (v == lo) out.data[i] = s_min;
    else if (v == hi) out.data[i] = s_max;
    else out.data[i] = std::clamp((s_max - s_min) * ((v - lo) / span) + s_min, s_min, s_max);
  }
  return out;
}

LdrImage color_reproduce(const HdrImage& hdr, const Raster& s_lum, const Raster& f_lum, double rho) {
  if (s_lum.width != hdr.width || s_lum.height != hdr.height) throw ShapeError("color_reproduce: luminance / image mismatch");
  require_same_shape(s_lum, f_lum, "color_reproduce");
  LdrImage out(hdr.width, hdr.height, 3);
  for (std::size_t i = 0; i < hdr.pixel_count(); ++i) {
    const double s = s_lum.data[i];
    const double f = f_lum.data[i];
    for (int c = 0; c < 3; ++c) {
      double ratio = 1.0;
      if (s > 0.0) ratio = std::max(0.0, static_cast<double>(hdr.rgb[i * 3 + c])) / s;
      const double v = (rho == 0.0 ? 1.0 : std::pow(ratio, rho)) * f;
      out.values[i * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

LdrImage gamma_encode(LdrImage img) {
  for (float& v : img.values) v = static_cast<float>(std::pow(std::clamp(static_cast<double>(v), 0.0, 1.0), 1.0 / 2.2));
  return img;
}

namespace {
struct Tap {
  int i0, i1;
  double t;
};
std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double p = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(src - 1));
    int i0 = static_cast<int>(std::floor(p));
    int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, p - i0};
  }
  return taps;
}
}  // namespace

HdrImage resize_bilinear(const HdrImage& img, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1) throw ShapeError("resize: nonpositive target size");
  if (new_width == img.width && new_height == img.height) return img;
  const auto tx = bilinear_taps(img.width, new_width);
  const auto ty = bilinear_taps(img.height, new_height);
  HdrImage out(new_width, new_height);
  out.units_calibrated = img.units_calibrated;
  for (int y = 0; y < new_height; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < new_width; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - b.t) * img.pixel(b.i0, a.i0)[c] + b.t * img.pixel(b.i1, a.i0)[c];
        const double bot = (1 - b.t) * img.pixel(b.i0, a.i1)[c] + b.t * img.pixel(b.i1, a.i1)[c];
        out.pixel(x, y)[c] = static_cast<float>((1 - a.t) * top + a.t * bot);
      }
    }
  }
  return out;
}

Raster resize_bilinear(const Raster& img, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1) throw ShapeError("resize: nonpositive target size");
  if (new_width == img.width && new_height == img.height) return img;
  const auto tx = bilinear_taps(img.width, new_width);
  const auto ty = bilinear_taps(img.height, new_height);
  Raster out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < new_width; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      const double top = (1 - b.t) * img.at(b.i0, a.i0) + b.t * img.at(b.i1, a.i0);
      const double bot = (1 - b.t) * img.at(b.i0, a.i1) + b.t * img.at(b.i1, a.i1);
      out.at(x, y) = (1 - a.t) * top + a.t * bot;
    }
  }
  return out;
}

std::pair<int, int> short_side_dims(int width, int height, int short_side) {
  if (width <= height) {
    const int h = static_cast<int>(std::lround(static_cast<double>(height) * short_side / width));
    return {short_side, std::max(1, h)};
  }
  const int w = static_cast<int>(std::lround(static_cast<double>(width) * short_side / height));
  return {std::max(1, w), short_side};
}

}  // namespace nltmo
