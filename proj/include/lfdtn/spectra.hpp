#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfdtn/fft.hpp"
#include "lfdtn/grid.hpp"

namespace lfdtn {

/// Per-cell complex spectra, one Np x Np grid per cell, DC at bin (0,0).
struct LocalSpectra {
  GridSpec grid;
  std::vector<cplx> data;  // L * Np * Np, cells in row-major (u, v) order

  LocalSpectra() = default;
  explicit LocalSpectra(const GridSpec& g)
      : grid(g), data(static_cast<std::size_t>(g.L) * g.cell_bins()) {}

  std::span<cplx> cell(int l) noexcept {
    return {data.data() + static_cast<std::size_t>(l) * grid.cell_bins(), static_cast<std::size_t>(grid.cell_bins())};
  }
  std::span<const cplx> cell(int l) const noexcept {
    return {data.data() + static_cast<std::size_t>(l) * grid.cell_bins(), static_cast<std::size_t>(grid.cell_bins())};
  }
};

/// Per-bin unit phasors. Bins flagged low-energy carry 1+0j.
struct PhaseDiffSet {
  GridSpec grid;
  std::vector<cplx> data;
  std::vector<std::uint8_t> flagged;

  PhaseDiffSet() = default;
  explicit PhaseDiffSet(const GridSpec& g)
      : grid(g),
        data(static_cast<std::size_t>(g.L) * g.cell_bins(), cplx(1.0, 0.0)),
        flagged(data.size(), 0) {}

  std::span<cplx> cell(int l) noexcept {
    return {data.data() + static_cast<std::size_t>(l) * grid.cell_bins(), static_cast<std::size_t>(grid.cell_bins())};
  }
  std::span<const cplx> cell(int l) const noexcept {
    return {data.data() + static_cast<std::size_t>(l) * grid.cell_bins(), static_cast<std::size_t>(grid.cell_bins())};
  }
  std::span<const std::uint8_t> cell_flags(int l) const noexcept {
    return {flagged.data() + static_cast<std::size_t>(l) * grid.cell_bins(), static_cast<std::size_t>(grid.cell_bins())};
  }
};

/// All-ones phase differences (no motion).
inline PhaseDiffSet identity_pd(const GridSpec& g) { return PhaseDiffSet(g); }

}  // namespace lfdtn
