#pragma once

#include <string>

#include "lfdtn/error.hpp"

namespace lfdtn {

/// Cell-grid geometry for a U x V image covered by N x N cells at stride H.
///
/// The grid is extended by `k` cells on every side so that border pixels are
/// covered as often as interior ones. Cell (u, v) is centered on image pixel
/// ((u - k) H, (v - k) H); in padded-image coordinates its top-left corner is
/// (u H, v H).
struct GridSpec {
  int U = 0, V = 0;  // image rows, cols
  int N = 0;         // window size
  int H = 0;         // stride
  int k = 0;         // extension count
  int LU = 0, LV = 0, L = 0;
  int image_pad = 0;  // per-side image padding
  int P = 0;          // spectral cell padding
  int Np = 0;         // padded cell side, N + 2P

  int cell_index(int u, int v) const noexcept { return u * LV + v; }
  int cell_bins() const noexcept { return Np * Np; }
  int padded_rows() const noexcept { return U + 2 * image_pad; }
  int padded_cols() const noexcept { return V + 2 * image_pad; }

  /// Image coordinates of the center of cell (u, v).
  int center_row(int u) const noexcept { return (u - k) * H; }
  int center_col(int v) const noexcept { return (v - k) * H; }

  bool operator==(const GridSpec&) const = default;
};

inline GridSpec plan_grid(int U, int V, int N, int H, int P) {
  auto fail = [](const std::string& m) { throw ValidationError("plan_grid: " + m); };
  if (U < 2 || V < 2) fail("image size must be at least 2x2 (got " + std::to_string(U) + "x" + std::to_string(V) + ")");
  if (N < 2) fail("window size N must be >= 2 (got " + std::to_string(N) + ")");
  if (H < 1) fail("stride H must be >= 1 (got " + std::to_string(H) + ")");
  if (H > N) fail("stride H=" + std::to_string(H) + " exceeds window size N=" + std::to_string(N));
  if ((U - 1) % H != 0) fail("H=" + std::to_string(H) + " does not divide U-1=" + std::to_string(U - 1));
  if ((V - 1) % H != 0) fail("H=" + std::to_string(H) + " does not divide V-1=" + std::to_string(V - 1));
  if (P < 0) fail("padding P must be >= 0 (got " + std::to_string(P) + ")");

  GridSpec g;
  g.U = U;
  g.V = V;
  g.N = N;
  g.H = H;
  g.P = P;
  g.k = (N / 2) / H;
  g.LU = (U - 1) / H + 1 + 2 * g.k;
  g.LV = (V - 1) / H + 1 + 2 * g.k;
  g.L = g.LU * g.LV;
  g.image_pad = N / 2 + g.k * H;
  g.Np = N + 2 * P;
  return g;
}

}  // namespace lfdtn
