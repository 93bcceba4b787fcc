#include "coplot/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace coplot {

void FreqConfig::validate() const {
  if (window_h <= 0 || window_w <= 0 || window_h % 2 != 0 || window_w % 2 != 0) {
    throw InvalidInput("frequency: window dimensions must be positive even integers");
  }
  if (!(alpha > 0.0 && alpha < beta && beta < 1.0)) {
    throw InvalidInput("frequency: band split requires 0 < alpha < beta < 1");
  }
  if (!(epsilon > 0.0)) throw InvalidInput("frequency: epsilon must be positive");
  if (stride_x < 1 || stride_y < 1) throw InvalidInput("frequency: strides must be >= 1");
}

Vector FreqDescriptor::flatten() const {
  const Eigen::Index c = dc.size();
  Vector out(4 * c);
  out << dc, low, high, ratio;
  return out;
}

FeatureMap2D downsample_scene(const FeatureMap2D& scene, const Conv3x3& conv,
                              const FreqConfig& config) {
  config.validate();
  if (conv.stride_x != config.stride_x || conv.stride_y != config.stride_y) {
    throw InvalidInput("downsample_scene: convolution strides differ from the configured strides");
  }
  return standardize_channels(conv.apply(scene));
}

TokenCells token_cells(std::span<const Vec3> coords, const BevGrid& grid,
                       const FreqConfig& config) {
  const double cell_y = grid.cell_size * config.stride_y;
  const double cell_x = grid.cell_size * config.stride_x;
  std::vector<CoarseCell> per_token;
  per_token.reserve(coords.size());
  for (const auto& p : coords) {
    per_token.push_back({static_cast<int>(std::floor((p.y() - grid.y_min) / cell_y)),
                         static_cast<int>(std::floor((p.x() - grid.x_min) / cell_x))});
  }
  TokenCells out;
  out.unique = per_token;
  std::sort(out.unique.begin(), out.unique.end());
  out.unique.erase(std::unique(out.unique.begin(), out.unique.end()), out.unique.end());
  out.token_to_cell.reserve(per_token.size());
  for (const auto& c : per_token) {
    out.token_to_cell.push_back(static_cast<std::size_t>(
        std::lower_bound(out.unique.begin(), out.unique.end(), c) - out.unique.begin()));
  }
  return out;
}

Patch window_extract(const FeatureMap2D& map, CoarseCell center, int window_h, int window_w) {
  Patch patch{map.channels(), window_h, window_w,
              std::vector<double>(static_cast<std::size_t>(map.channels()) * window_h * window_w, 0.0)};
  const int top = center.u - (window_h - 1) / 2;
  const int left = center.v - (window_w - 1) / 2;
  for (int p = 0; p < window_h; ++p) {
    const int y = top + p;
    if (y < 0 || y >= map.height()) continue;
    for (int q = 0; q < window_w; ++q) {
      const int x = left + q;
      if (x < 0 || x >= map.width()) continue;
      const double* px = map.pixel(y, x);
      for (int c = 0; c < map.channels(); ++c) {
        patch.values[(static_cast<std::size_t>(c) * window_h + p) * window_w + q] = px[c];
      }
    }
  }
  return patch;
}

namespace {

std::vector<std::complex<double>> twiddles(int n) {
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double angle = -2.0 * std::numbers::pi * k / n;
    w[static_cast<std::size_t>(k)] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

}  // namespace

Spectrum dft2(const Patch& patch) {
  const int h = patch.height, w = patch.width;
  if (h <= 0 || w <= 0) throw InvalidInput("dft2: empty window");
  const auto wh = twiddles(h);
  const auto ww = twiddles(w);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);

  Spectrum out{patch.channels, h, w,
               std::vector<std::complex<double>>(static_cast<std::size_t>(patch.channels) * h * w)};
  std::vector<std::complex<double>> rows(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < patch.channels; ++c) {
    // Separable transform: along q for every row, then along p for every column.
    for (int p = 0; p < h; ++p)
      for (int s = 0; s < w; ++s) {
        std::complex<double> acc = 0.0;
        for (int q = 0; q < w; ++q) acc += patch.at(c, p, q) * ww[static_cast<std::size_t>((q * s) % w)];
        rows[static_cast<std::size_t>(p) * w + s] = acc;
      }
    for (int r = 0; r < h; ++r)
      for (int s = 0; s < w; ++s) {
        std::complex<double> acc = 0.0;
        for (int p = 0; p < h; ++p) {
          acc += rows[static_cast<std::size_t>(p) * w + s] * wh[static_cast<std::size_t>((p * r) % h)];
        }
        out.bins[(static_cast<std::size_t>(c) * h + r) * w + s] = acc * scale;
      }
  }
  return out;
}

FreqDescriptor band_energies(const Spectrum& spectrum, const FreqConfig& config) {
  config.validate();
  if (spectrum.height != config.window_h || spectrum.width != config.window_w) {
    throw InvalidInput("band_energies: spectrum size differs from the configured window");
  }
  const int c = spectrum.channels;
  const double k = config.radius_base();
  const double low_radius = config.alpha * k;
  const double high_radius = config.beta * k;
  FreqDescriptor d{Vector::Zero(c), Vector::Zero(c), Vector::Zero(c), Vector::Zero(c)};
  for (int ch = 0; ch < c; ++ch) {
    d.dc[ch] = std::abs(spectrum.at(ch, 0, 0));
    for (int r = 0; r < spectrum.height; ++r) {
      const int rc = r < spectrum.height / 2 ? r : r - spectrum.height;
      for (int s = 0; s < spectrum.width; ++s) {
        const int sc = s < spectrum.width / 2 ? s : s - spectrum.width;
        const double radius = std::sqrt(static_cast<double>(rc * rc + sc * sc));
        const double mag = std::abs(spectrum.at(ch, r, s));
        if (radius > 0.0 && radius <= low_radius) d.low[ch] += mag;
        if (radius > high_radius) d.high[ch] += mag;
      }
    }
    d.ratio[ch] = d.high[ch] / (d.low[ch] + config.epsilon);
  }
  return d;
}

FreqFeatures frequency_descriptors(std::span<const Vec3> coords, const FeatureMap2D& coarse_map,
                                   const BevGrid& grid, const FreqConfig& config) {
  config.validate();
  const TokenCells cells = token_cells(coords, grid, config);
  const Eigen::Index width = 4 * static_cast<Eigen::Index>(coarse_map.channels());
  Matrix per_cell(static_cast<Eigen::Index>(cells.unique.size()), width);
  FreqFeatures out;
  for (std::size_t i = 0; i < cells.unique.size(); ++i) {
    const Patch patch = window_extract(coarse_map, cells.unique[i], config.window_h, config.window_w);
    per_cell.row(static_cast<Eigen::Index>(i)) =
        band_energies(dft2(patch), config).flatten().transpose();
    ++out.dft_count;
  }
  out.unique_cells = cells.unique.size();
  out.descriptors.resize(static_cast<Eigen::Index>(coords.size()), width);
  for (std::size_t t = 0; t < coords.size(); ++t) {
    out.descriptors.row(static_cast<Eigen::Index>(t)) =
        per_cell.row(static_cast<Eigen::Index>(cells.token_to_cell[t]));
  }
  return out;
}

Matrix q_freq(const FreqFeatures& features, const Linear& projection) {
  if (projection.in_dim() != features.descriptors.cols()) {
    throw InvalidInput("q_freq: projection expects " + std::to_string(projection.in_dim()) +
                       " descriptor channels, got " + std::to_string(features.descriptors.cols()));
  }
  return projection.forward(features.descriptors);
}

}  // namespace coplot
