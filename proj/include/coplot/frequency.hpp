#pragma once

// Windowed 2D-DFT descriptors of the downsampled scene map. Each occupied
// coarse cell gets a per-channel (DC, low-band, high-band, high/low ratio)
// quadruple that is projected to the scan state width and added to the
// scan's read-out vector.

#include "coplot/common.hpp"
#include "coplot/scene_context.hpp"

#include <complex>
#include <vector>

namespace coplot {

struct FreqConfig {
  int window_h = 16;
  int window_w = 16;
  double alpha = 0.125;  // low band: 0 < radius <= alpha * k
  double beta = 0.25;    // high band: radius > beta * k
  double epsilon = 1e-6;
  int stride_x = 4;
  int stride_y = 4;

  void validate() const;
  /// Band radii are measured against the shorter window side.
  int radius_base() const { return std::min(window_h, window_w); }
};

/// C channels of an H x W window, channel-major.
struct Patch {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int c, int p, int q) const {
    return values[(static_cast<std::size_t>(c) * height + p) * width + q];
  }
};

struct Spectrum {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> bins;

  const std::complex<double>& at(int c, int r, int s) const {
    return bins[(static_cast<std::size_t>(c) * height + r) * width + s];
  }
};

struct FreqDescriptor {
  Vector dc, low, high, ratio;  // one entry per channel

  /// [dc..., low..., high..., ratio...]
  Vector flatten() const;
};

/// Strided 3x3 convolution followed by per-channel standardization.
FeatureMap2D downsample_scene(const FeatureMap2D& scene, const Conv3x3& conv,
                              const FreqConfig& config);

struct CoarseCell {
  int u = 0;  // row, along y
  int v = 0;  // column, along x
  auto operator<=>(const CoarseCell&) const = default;
};

struct TokenCells {
  std::vector<CoarseCell> unique;  // sorted by (u, v)
  std::vector<std::size_t> token_to_cell;
};

/// Coarse cell of every token on the downsampled grid of `grid`.
TokenCells token_cells(std::span<const Vec3> coords, const BevGrid& grid,
                       const FreqConfig& config);

/// Window of the configured size whose row p covers map row u + p - (H - 1) / 2
/// (integer division); samples outside the map are zero.
Patch window_extract(const FeatureMap2D& map, CoarseCell center, int window_h, int window_w);

/// Orthonormal 2D DFT of every channel.
Spectrum dft2(const Patch& patch);

/// Radii use centered frequency indices in [-k/2, k/2).
FreqDescriptor band_energies(const Spectrum& spectrum, const FreqConfig& config);

struct FreqFeatures {
  Matrix descriptors;  // tokens x 4C, broadcast from the token's coarse cell
  std::size_t unique_cells = 0;
  std::size_t dft_count = 0;
};

/// One DFT per unique occupied coarse cell, broadcast to its tokens.
FreqFeatures frequency_descriptors(std::span<const Vec3> coords, const FeatureMap2D& coarse_map,
                                   const BevGrid& grid, const FreqConfig& config);

/// Per-token Q^freq rows: descriptors projected to the scan state width.
Matrix q_freq(const FreqFeatures& features, const Linear& projection);

}  // namespace coplot
