#pragma once

// PGM frames, LFDT tensor files and velocity-field artifacts.

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lfdtn/error.hpp"
#include "lfdtn/phase_motion.hpp"
#include "lfdtn/plane.hpp"

namespace lfdtn {

static_assert(std::endian::native == std::endian::little, "LFDT payloads are written in native little-endian order");

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Cursor over a PGM header: whitespace and '#' comments between tokens.
class HeaderReader {
public:
  HeaderReader(const std::vector<unsigned char>& b, std::size_t start) : b_(b), pos_(start) {}

  std::size_t pos() const noexcept { return pos_; }

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000'000) throw FormatError(std::string("pgm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("pgm: expected ") + what, start);
    return v;
  }

  void single_space() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw FormatError("pgm: expected whitespace after maxval", pos_);
    ++pos_;
  }

private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_;
};

}  // namespace detail

/// Binary PGM (P5), maxval 255 or 65535. Errors carry the byte offset.
inline Frame decode_pgm(const std::vector<unsigned char>& b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError("pgm: missing P5 magic", 0);
  detail::HeaderReader h(b, 2);
  const long width = h.number("width");
  const long height = h.number("height");
  const std::size_t maxval_at = (h.skip_space(), h.pos());
  const long maxval = h.number("maxval");
  if (width <= 0 || height <= 0) throw FormatError("pgm: zero image dimension", maxval_at);
  if (maxval != 255 && maxval != 65535)
    throw FormatError("pgm: maxval " + std::to_string(maxval) + " not supported (255 or 65535)", maxval_at);
  h.single_space();
  const std::size_t off = h.pos();
  const std::size_t bps = maxval == 255 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (b.size() - off < n * bps)
    throw FormatError("pgm: truncated payload, expected " + std::to_string(n * bps) + " bytes, got " +
                          std::to_string(b.size() - off),
                      b.size());
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bps == 1 ? b[off + i] : (static_cast<unsigned>(b[off + 2 * i]) << 8) | b[off + 2 * i + 1];
    if (v > static_cast<unsigned>(maxval)) throw FormatError("pgm: sample exceeds maxval", off + i * bps);
    px[i] = static_cast<float>(static_cast<double>(v) / maxval);
  }
  return Frame(static_cast<int>(height), static_cast<int>(width), std::move(px));
}

inline Frame read_pgm(const std::filesystem::path& path) { return decode_pgm(detail::read_bytes(path)); }

/// Quantizes with round-half-up: q = floor(p * maxval + 0.5).
inline std::vector<unsigned char> encode_pgm(const Frame& f, int maxval = 255) {
  if (maxval != 255 && maxval != 65535) throw ValidationError("write_pgm: maxval must be 255 or 65535");
  std::string head = "P5\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n" +
                     std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  for (float p : f.pixels()) {
    const auto q = static_cast<unsigned>(std::floor(static_cast<double>(p) * maxval + 0.5));
    if (maxval == 255) {
      out.push_back(static_cast<unsigned char>(q));
    } else {
      out.push_back(static_cast<unsigned char>(q >> 8));
      out.push_back(static_cast<unsigned char>(q & 0xff));
    }
  }
  return out;
}

inline void write_pgm(const Frame& f, const std::filesystem::path& path, int maxval = 255) {
  detail::write_bytes(path, encode_pgm(f, maxval));
}

/// Row-major float32 tensor.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  bool operator==(const Tensor&) const = default;
};

inline constexpr std::array<char, 4> kLfdtMagic = {'L', 'F', 'D', 'T'};
inline constexpr std::uint16_t kLfdtVersion = 1;
inline constexpr std::uint8_t kLfdtFloat32 = 0;

inline std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.dims.size() > 255) throw ValidationError("write_tensor: rank above 255");
  if (t.data.size() != t.element_count())
    throw ValidationError("write_tensor: payload has " + std::to_string(t.data.size()) + " elements, dims imply " +
                          std::to_string(t.element_count()));
  std::vector<unsigned char> out(kLfdtMagic.begin(), kLfdtMagic.end());
  auto put = [&out](const void* p, std::size_t n) {
    auto c = static_cast<const unsigned char*>(p);
    out.insert(out.end(), c, c + n);
  };
  put(&kLfdtVersion, 2);
  out.push_back(kLfdtFloat32);
  out.push_back(static_cast<unsigned char>(t.dims.size()));
  for (auto d : t.dims) put(&d, 4);
  put(t.data.data(), t.data.size() * 4);
  return out;
}

inline Tensor decode_tensor(const std::vector<unsigned char>& b) {
  if (b.size() < 8) throw FormatError("lfdt: file shorter than header", b.size());
  if (std::memcmp(b.data(), kLfdtMagic.data(), 4) != 0) throw FormatError("lfdt: bad magic", 0);
  std::uint16_t version;
  std::memcpy(&version, b.data() + 4, 2);
  if (version != kLfdtVersion) throw FormatError("lfdt: unsupported version " + std::to_string(version), 4);
  if (b[6] != kLfdtFloat32) throw FormatError("lfdt: unsupported dtype " + std::to_string(b[6]), 6);
  const std::size_t rank = b[7];
  std::size_t off = 8;
  if (b.size() < off + 4 * rank) throw FormatError("lfdt: truncated dims", b.size());
  Tensor t;
  t.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i, off += 4) std::memcpy(&t.dims[i], b.data() + off, 4);
  const std::size_t n = t.element_count();
  if (b.size() - off != n * 4)
    throw FormatError("lfdt: payload is " + std::to_string(b.size() - off) + " bytes, dims imply " +
                          std::to_string(n * 4),
                      off);
  t.data.resize(n);
  if (n) std::memcpy(t.data.data(), b.data() + off, n * 4);
  return t;
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  detail::write_bytes(path, encode_tensor(t));
}
inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_bytes(path)); }

// --- velocity artifacts ---

inline std::string velocity_csv(const VelocityField& vf) {
  std::ostringstream os;
  os << std::setprecision(9) << "row,col,vx,vy,var_x,var_y\n";
  const auto& g = vf.grid;
  for (int u = 0; u < g.LU; ++u)
    for (int v = 0; v < g.LV; ++v) {
      const int l = g.cell_index(u, v);
      os << u << ',' << v << ',' << vf.vx[l] << ',' << vf.vy[l] << ',' << vf.var_x[l] << ',' << vf.var_y[l] << '\n';
    }
  return os.str();
}

/// 8-bit RGB raster.
struct Rgb {
  int rows = 0, cols = 0;
  std::vector<unsigned char> px;  // rows * cols * 3

  void set(int r, int c, std::array<unsigned char, 3> v) {
    if (r < 0 || c < 0 || r >= rows || c >= cols) return;
    std::memcpy(&px[(static_cast<std::size_t>(r) * cols + c) * 3], v.data(), 3);
  }
};

inline void bresenham(Rgb& img, int r0, int c0, int r1, int c1, std::array<unsigned char, 3> color) {
  const int dc = std::abs(c1 - c0), dr = -std::abs(r1 - r0);
  const int sc = c0 < c1 ? 1 : -1, sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  for (;;) {
    img.set(r0, c0, color);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

inline constexpr std::array<unsigned char, 3> kArrowColor = {255, 0, 0};
inline constexpr std::array<unsigned char, 3> kAnchorColor = {0, 255, 0};

/// Frame in gray with one segment per in-image cell: anchor at the cell
/// center, end at center + arrow_scale * velocity.
inline Rgb velocity_overlay(const VelocityField& vf, const Frame& frame, double arrow_scale) {
  const auto& g = vf.grid;
  if (frame.height() != g.U || frame.width() != g.V)
    throw ValidationError("velocity overlay: frame is " + std::to_string(frame.height()) + "x" +
                          std::to_string(frame.width()) + ", grid expects " + std::to_string(g.U) + "x" +
                          std::to_string(g.V));
  Rgb img{g.U, g.V, std::vector<unsigned char>(static_cast<std::size_t>(g.U) * g.V * 3)};
  for (int r = 0; r < g.U; ++r)
    for (int c = 0; c < g.V; ++c) {
      const auto q = static_cast<unsigned char>(std::floor(frame(r, c) * 255.0 + 0.5));
      img.set(r, c, {q, q, q});
    }
  for (int u = 0; u < g.LU; ++u)
    for (int v = 0; v < g.LV; ++v) {
      const int r = g.center_row(u), c = g.center_col(v);
      if (r < 0 || c < 0 || r >= g.U || c >= g.V) continue;
      const int l = g.cell_index(u, v);
      const int r1 = r + static_cast<int>(std::lround(arrow_scale * vf.vy[l]));
      const int c1 = c + static_cast<int>(std::lround(arrow_scale * vf.vx[l]));
      if (r1 != r || c1 != c) bresenham(img, r, c, r1, c1, kArrowColor);
      img.set(r, c, kAnchorColor);
    }
  return img;
}

inline std::vector<unsigned char> encode_ppm(const Rgb& img) {
  std::string head = "P6\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  out.insert(out.end(), img.px.begin(), img.px.end());
  return out;
}

struct VelocityArtifactPaths {
  std::filesystem::path csv, overlay, manifest;
};

inline void write_velocity_artifacts(const VelocityField& vf, const Frame& frame, const VelocityArtifactPaths& paths,
                                     double arrow_scale = 3.0) {
  auto img = velocity_overlay(vf, frame, arrow_scale);
  const auto csv = velocity_csv(vf);
  detail::write_bytes(paths.csv, std::vector<unsigned char>(csv.begin(), csv.end()));
  detail::write_bytes(paths.overlay, encode_ppm(img));
  if (!paths.manifest.empty()) {
    std::ostringstream os;
    os << "{\n  \"arrow_scale\": " << arrow_scale << ",\n  \"arrow_units\": \"pixels per (pixel/frame)\",\n"
       << "  \"grid\": {\"LU\": " << vf.grid.LU << ", \"LV\": " << vf.grid.LV << ", \"N\": " << vf.grid.N
       << ", \"H\": " << vf.grid.H << ", \"P\": " << vf.grid.P << "}\n}\n";
    const auto s = os.str();
    detail::write_bytes(paths.manifest, std::vector<unsigned char>(s.begin(), s.end()));
  }
}

/// Velocity field as an LFDT tensor [4, LU, LV]: vx, vy, var_x, var_y.
inline Tensor velocity_tensor(const VelocityField& vf) {
  Tensor t{{4u, static_cast<std::uint32_t>(vf.grid.LU), static_cast<std::uint32_t>(vf.grid.LV)}, {}};
  t.data.reserve(4 * vf.vx.size());
  for (const auto* ch : {&vf.vx, &vf.vy, &vf.var_x, &vf.var_y})
    for (double x : *ch) t.data.push_back(static_cast<float>(x));
  return t;
}

}  // namespace lfdtn
