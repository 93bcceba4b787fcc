#include "coplot/frequency.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace coplot;

namespace {

Patch make_patch(int c, int h, int w, double fill = 0.0) {
  return Patch{c, h, w, std::vector<double>(static_cast<std::size_t>(c) * h * w, fill)};
}

Patch random_patch(std::mt19937_64& rng, int c, int h, int w) {
  Patch p = make_patch(c, h, w);
  for (double& v : p.values) v = oracle::uniform(rng, -2, 2);
  return p;
}

FeatureMap2D random_map(std::mt19937_64& rng, int c, int h, int w) {
  FeatureMap2D m(c, h, w);
  for (double& v : m.raw()) v = oracle::uniform(rng, -1, 1);
  return m;
}

BevGrid grid_of(int h, int w) {
  BevGrid g;
  g.cell_size = 0.4;
  g.x_min = -10.0;
  g.y_min = -6.0;
  g.height = h;
  g.width = w;
  return g;
}

// Brute-force band sums straight from the naive DFT, with centered indices.
std::array<double, 4> band_oracle(const Patch& p, int c, const FreqConfig& cfg) {
  const auto spec = oracle::naive_dft(p, c);
  const double k = std::min(p.height, p.width);
  std::array<double, 4> out{std::abs(spec[0]), 0, 0, 0};
  for (int r = 0; r < p.height; ++r)
    for (int s = 0; s < p.width; ++s) {
      const int rc = oracle::centered(r, p.height), sc = oracle::centered(s, p.width);
      const double rad = std::hypot(rc, sc);
      const double mag = std::abs(spec[static_cast<std::size_t>(r) * p.width + s]);
      if (rad > 0 && rad <= cfg.alpha * k) out[1] += mag;
      if (rad > cfg.beta * k) out[2] += mag;
    }
  out[3] = out[2] / (out[1] + cfg.epsilon);
  return out;
}

}  // namespace

TEST_CASE("downsample_scene") {
  std::mt19937_64 rng(40);
  FreqConfig cfg;

  SUBCASE("stride 1 identity kernel gives the standardized input") {
    cfg.stride_x = cfg.stride_y = 1;
    Conv3x3 k(3, 3, 1);
    for (int c = 0; c < 3; ++c) k.w(c, c, 1, 1) = 1.0;
    const FeatureMap2D m = random_map(rng, 3, 7, 9);
    const FeatureMap2D out = downsample_scene(m, k, cfg);
    const FeatureMap2D want = oracle::standardize(m);
    for (std::size_t i = 0; i < out.raw().size(); ++i) CHECK(std::abs(out.raw()[i] - want.raw()[i]) < 1e-12);
  }

  SUBCASE("constant input gives zero output") {
    cfg.stride_x = cfg.stride_y = 1;
    Conv3x3 center(2, 2, 1);
    center.w(0, 0, 1, 1) = 2.0;
    center.w(1, 1, 1, 1) = -1.0;
    FeatureMap2D m(2, 16, 16);
    for (double& v : m.raw()) v = 0.7;
    const FeatureMap2D out = downsample_scene(m, center, cfg);
    for (double v : out.raw()) CHECK(std::abs(v) < 1e-9);
  }

  SUBCASE("random input matches strided convolution plus standardization") {
    Conv3x3 k(3, 2, 4);
    for (double& v : k.weight) v = oracle::uniform(rng, -1, 1);
    k.bias = oracle::random_vector(rng, 2, 0.1);
    const FeatureMap2D m = random_map(rng, 3, 18, 23);
    const FeatureMap2D out = downsample_scene(m, k, cfg);
    CHECK(out.height() == 5);
    CHECK(out.width() == 6);
    const FeatureMap2D want = oracle::standardize(oracle::naive_conv(m, k));
    for (std::size_t i = 0; i < out.raw().size(); ++i) CHECK(std::abs(out.raw()[i] - want.raw()[i]) < 1e-6);
  }

  SUBCASE("stride mismatch is rejected") {
    CHECK_THROWS_AS(downsample_scene(FeatureMap2D(1, 4, 4), Conv3x3(1, 1, 2), cfg), InvalidInput);
  }
}

TEST_CASE("token_cells") {
  const BevGrid g = grid_of(40, 50);
  FreqConfig cfg;
  const double coarse = g.cell_size * 4;

  SUBCASE("two tokens in one cell") {
    const std::vector<Vec3> coords{{-9.9, -5.9, 0}, {-9.9 + 0.3 * coarse, -5.9 + 0.5 * coarse, 0}};
    const TokenCells tc = token_cells(coords, g, cfg);
    CHECK(tc.unique.size() == 1);
    CHECK(tc.unique[0] == CoarseCell{0, 0});
    CHECK(tc.token_to_cell == std::vector<std::size_t>{0, 0});
  }

  SUBCASE("diagonal of distinct cells") {
    std::vector<Vec3> coords;
    for (int i = 0; i < 8; ++i) coords.emplace_back(g.x_min + (i + 0.5) * coarse, g.y_min + (i + 0.5) * coarse, 0);
    const TokenCells tc = token_cells(coords, g, cfg);
    CHECK(tc.unique.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(tc.unique[tc.token_to_cell[i]] == CoarseCell{static_cast<int>(i), static_cast<int>(i)});
    }
  }

  SUBCASE("random tokens agree with a set oracle") {
    std::mt19937_64 rng(41);
    std::vector<Vec3> coords;
    for (int i = 0; i < 2000; ++i) coords.emplace_back(oracle::uniform(rng, -10, 10), oracle::uniform(rng, -6, 10), 0);
    const TokenCells tc = token_cells(coords, g, cfg);
    std::set<std::pair<int, int>> want;
    for (const auto& p : coords) {
      want.insert({static_cast<int>(std::floor((p.y() - g.y_min) / coarse)),
                   static_cast<int>(std::floor((p.x() - g.x_min) / coarse))});
    }
    REQUIRE(tc.unique.size() == want.size());
    std::size_t i = 0;
    for (const auto& [u, v] : want) {
      CHECK(tc.unique[i] == CoarseCell{u, v});
      ++i;
    }
    for (std::size_t t = 0; t < coords.size(); ++t) {
      const auto& c = tc.unique[tc.token_to_cell[t]];
      CHECK(c.u == static_cast<int>(std::floor((coords[t].y() - g.y_min) / coarse)));
      CHECK(c.v == static_cast<int>(std::floor((coords[t].x() - g.x_min) / coarse)));
    }
  }
}

TEST_CASE("window_extract") {
  std::mt19937_64 rng(42);
  const FeatureMap2D m = random_map(rng, 2, 30, 40);

  SUBCASE("interior center is an exact sub-array") {
    const Patch p = window_extract(m, {15, 20}, 16, 16);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) CHECK(p.at(c, y, x) == m.at(c, 15 - 7 + y, 20 - 7 + x));
  }

  SUBCASE("corner center is zero padded") {
    const Patch p = window_extract(m, {0, 0}, 16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const bool inside = y >= 7 && x >= 7;
        CHECK(p.at(1, y, x) == (inside ? m.at(1, y - 7, x - 7) : 0.0));
      }
  }

  SUBCASE("random centers agree with index arithmetic") {
    std::uniform_int_distribution<int> u(-10, 40);
    for (int trial = 0; trial < 50; ++trial) {
      const CoarseCell c{u(rng), u(rng)};
      const Patch p = window_extract(m, c, 8, 6);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 6; ++x) {
          const int my = c.u - 3 + y, mx = c.v - 2 + x;
          const bool inside = my >= 0 && mx >= 0 && my < 30 && mx < 40;
          CHECK(p.at(0, y, x) == (inside ? m.at(0, my, mx) : 0.0));
        }
    }
  }
}

TEST_CASE("dft2") {
  std::mt19937_64 rng(43);

  SUBCASE("constant patch") {
    const Spectrum s = dft2(make_patch(1, 16, 16, 0.75));
    CHECK(std::abs(std::abs(s.at(0, 0, 0)) - 16 * 0.75) < 1e-9);
    for (int r = 0; r < 16; ++r)
      for (int q = 0; q < 16; ++q)
        if (r || q) CHECK(std::abs(s.at(0, r, q)) < 1e-9);
  }

  SUBCASE("unit impulse") {
    Patch p = make_patch(1, 16, 16);
    p.values[0] = 1.0;
    const Spectrum s = dft2(p);
    for (const auto& b : s.bins) CHECK(std::abs(std::abs(b) - 1.0 / 16) < 1e-12);
  }

  SUBCASE("random patches against the naive DFT, with Parseval") {
    for (int trial = 0; trial < 20; ++trial) {
      const Patch p = random_patch(rng, 3, 16, 16);
      const Spectrum s = dft2(p);
      for (int c = 0; c < 3; ++c) {
        const auto want = oracle::naive_dft(p, c);
        double energy_x = 0, energy_f = 0;
        for (int r = 0; r < 16; ++r)
          for (int q = 0; q < 16; ++q) {
            CHECK(std::abs(s.at(c, r, q) - want[static_cast<std::size_t>(r) * 16 + q]) < 1e-9);
            energy_f += std::norm(s.at(c, r, q));
            energy_x += p.at(c, r, q) * p.at(c, r, q);
          }
        CHECK(std::abs(energy_f - energy_x) <= 1e-9 * energy_x);
      }
    }
  }

  SUBCASE("non-square window") {
    const Patch p = random_patch(rng, 1, 8, 12);
    const Spectrum s = dft2(p);
    const auto want = oracle::naive_dft(p, 0);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(s.bins[i] - want[i]) < 1e-9);
  }
}

TEST_CASE("band_energies") {
  FreqConfig cfg;
  std::mt19937_64 rng(44);

  SUBCASE("constant patch has no low or high energy") {
    for (double v : {0.0, 1.0, -3.5}) {
      const FreqDescriptor d = band_energies(dft2(make_patch(2, 16, 16, v)), cfg);
      CHECK(std::abs(d.dc[0] - 16 * std::abs(v)) < 1e-9);
      CHECK(d.low[0] < 1e-9);
      CHECK(d.high[1] < 1e-9);
      CHECK(d.ratio[0] < 1e-3);
    }
  }

  SUBCASE("impulse energies equal bin counts over 16") {
    Patch p = make_patch(1, 16, 16);
    p.values[0] = 1.0;
    int low = 0, high = 0;
    for (int r = -8; r < 8; ++r)
      for (int s = -8; s < 8; ++s) {
        const int d2 = r * r + s * s;
        if (d2 > 0 && d2 <= 4) ++low;
        if (d2 > 16) ++high;
      }
    CHECK(low == 12);
    const FreqDescriptor d = band_energies(dft2(p), cfg);
    CHECK(std::abs(d.dc[0] - 1.0 / 16) < 1e-12);
    CHECK(std::abs(d.low[0] - low / 16.0) < 1e-9);
    CHECK(std::abs(d.high[0] - high / 16.0) < 1e-9);
    CHECK(std::abs(d.ratio[0] - (high / 16.0) / (low / 16.0 + cfg.epsilon)) < 1e-9);
  }

  SUBCASE("random patches match the brute-force band sums") {
    for (int trial = 0; trial < 20; ++trial) {
      const Patch p = random_patch(rng, 2, 16, 16);
      const FreqDescriptor d = band_energies(dft2(p), cfg);
      for (int c = 0; c < 2; ++c) {
        const auto want = band_oracle(p, c, cfg);
        CHECK(std::abs(d.dc[c] - want[0]) < 1e-9);
        CHECK(std::abs(d.low[c] - want[1]) < 1e-9);
        CHECK(std::abs(d.high[c] - want[2]) < 1e-9);
        CHECK(std::abs(d.ratio[c] - want[3]) < 1e-9 * std::max(1.0, want[3]));
        CHECK(d.low[c] >= 0);
        CHECK(d.high[c] >= 0);
      }
      const Vector flat = d.flatten();
      CHECK(flat.size() == 8);
      CHECK(flat[1] == d.dc[1]);
      CHECK(flat[6] == d.ratio[0]);
    }
  }

  SUBCASE("invalid configurations are rejected") {
    FreqConfig bad = cfg;
    bad.alpha = 0.3;
    CHECK_THROWS_AS(band_energies(dft2(make_patch(1, 16, 16)), bad), InvalidInput);
    CHECK_THROWS_AS(band_energies(dft2(make_patch(1, 8, 8)), cfg), InvalidInput);
    bad = cfg;
    bad.window_h = 15;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
  }
}

TEST_CASE("frequency descriptors and q_freq") {
  std::mt19937_64 rng(45);
  const BevGrid g = grid_of(40, 50);
  FreqConfig cfg;
  const FeatureMap2D coarse = random_map(rng, 3, 10, 13);
  std::vector<Vec3> coords;
  for (int i = 0; i < 300; ++i) coords.emplace_back(oracle::uniform(rng, -10, 10), oracle::uniform(rng, -6, 10), 0);

  SUBCASE("one DFT per unique occupied cell") {
    const FreqFeatures f = frequency_descriptors(coords, coarse, g, cfg);
    const TokenCells tc = token_cells(coords, g, cfg);
    CHECK(f.dft_count == tc.unique.size());
    CHECK(f.unique_cells == tc.unique.size());
    CHECK(f.descriptors.rows() == 300);
    CHECK(f.descriptors.cols() == 12);
  }

  SUBCASE("tokens in one cell get identical rows") {
    const std::vector<Vec3> same{{-9.0, -5.0, 0}, {-8.9, -4.9, 0}, {-8.5, -4.6, 1}};
    const FreqFeatures f = frequency_descriptors(same, coarse, g, cfg);
    CHECK(f.dft_count == 1);
    const Matrix q = q_freq(f, oracle::random_linear(rng, 12, 5));
    CHECK(q.row(0) == q.row(1));
    CHECK(q.row(0) == q.row(2));
  }

  SUBCASE("zero projection gives zero rows") {
    const FreqFeatures f = frequency_descriptors(coords, coarse, g, cfg);
    CHECK(q_freq(f, Linear(12, 6)).isZero(0.0));
  }

  SUBCASE("random scene matches descriptor-then-project oracle") {
    const FreqFeatures f = frequency_descriptors(coords, coarse, g, cfg);
    const Linear proj = oracle::random_linear(rng, 12, 6);
    const Matrix q = q_freq(f, proj);
    const double cell = g.cell_size * 4;
    for (std::size_t t = 0; t < coords.size(); t += 7) {
      const CoarseCell c{static_cast<int>(std::floor((coords[t].y() - g.y_min) / cell)),
                         static_cast<int>(std::floor((coords[t].x() - g.x_min) / cell))};
      Patch p = make_patch(3, 16, 16);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < 16; ++y)
          for (int x = 0; x < 16; ++x) {
            const int my = c.u - 7 + y, mx = c.v - 7 + x;
            if (my >= 0 && mx >= 0 && my < coarse.height() && mx < coarse.width()) {
              p.values[(static_cast<std::size_t>(ch) * 16 + y) * 16 + x] = coarse.at(ch, my, mx);
            }
          }
      std::vector<double> nu(12);
      for (int ch = 0; ch < 3; ++ch) {
        const auto b = band_oracle(p, ch, cfg);
        for (int k = 0; k < 4; ++k) nu[static_cast<std::size_t>(k * 3 + ch)] = b[static_cast<std::size_t>(k)];
      }
      for (int o = 0; o < 6; ++o) {
        double s = proj.bias[o];
        for (int k = 0; k < 12; ++k) s += proj.weight(o, k) * nu[static_cast<std::size_t>(k)];
        CHECK(std::abs(q(static_cast<Eigen::Index>(t), o) - s) < 1e-6);
      }
    }
  }

  SUBCASE("projection width mismatch is rejected") {
    const FreqFeatures f = frequency_descriptors(coords, coarse, g, cfg);
    CHECK_THROWS_AS(q_freq(f, Linear(11, 6)), InvalidInput);
  }

  SUBCASE("a larger stride never increases the unique-cell count") {
    std::size_t prev = coords.size() + 1;
    for (int s : {1, 2, 4, 8, 16}) {
      FreqConfig c = cfg;
      c.stride_x = c.stride_y = s;
      const std::size_t n = token_cells(coords, g, c).unique.size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}
