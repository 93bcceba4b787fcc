#include "coplot/tokenizer.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <limits>

using namespace coplot;

namespace {

RawPointCloud random_cloud(std::mt19937_64& rng, int n, double extent = 6.0) {
  RawPointCloud c;
  c.sensor_origin = {0.3, -0.2, 0.1};
  for (int i = 0; i < n; ++i) {
    c.points.push_back({oracle::uniform(rng, -extent, extent), oracle::uniform(rng, -extent, extent),
                        oracle::uniform(rng, -2.5, 0.9), oracle::uniform(rng, 0, 1)});
  }
  return c;
}

void check_against_oracle(const RawPointCloud& cloud, const TokenizerConfig& cfg) {
  const TokenSequence seq = tokenize(cloud, cfg, 3);
  const auto want = oracle::brute_tokenize(cloud, cfg);
  REQUIRE(seq.size() == want.size());
  REQUIRE(seq.features.rows() == static_cast<Eigen::Index>(seq.size()));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& tok = seq.tokens[t];
    CHECK(tok.agent_id == 3u);
    const std::array<long, 3> key{tok.cell[0], tok.cell[1], tok.cell[2]};
    const auto it = want.find(key);
    REQUIRE(it != want.end());
    for (int a = 0; a < 3; ++a) {
      const double lo = key[a] * cfg.grid_interval, hi = lo + cfg.grid_interval;
      if (lo >= cfg.range_min[a] && hi <= cfg.range_max[a]) {
        CHECK(std::abs(tok.coord[a] - (key[a] + 0.5) * cfg.grid_interval) < 1e-12);
      }
    }
    for (int s = 0; s < kNumStats; ++s) {
      CHECK(std::abs(tok.stats[s] - it->second.stats[s]) < 1e-9);
      CHECK(seq.features(static_cast<Eigen::Index>(t), s) == tok.stats[s]);
    }
    CHECK(tok.stats[kDispersion] >= 0.0);
    CHECK(tok.stats[kIntensityStd] >= 0.0);
    CHECK(tok.stats[kDensity] > 0.0);
    CHECK(tok.stats[kDensity] <= 1.0);
    CHECK(cfg.in_range(tok.coord));
  }
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const auto& a = seq.tokens[t - 1].cell;
    const auto& b = seq.tokens[t].cell;
    CHECK(std::array{a[2], a[1], a[0]} < std::array{b[2], b[1], b[0]});
  }
}

}  // namespace

TEST_CASE("tokenize single point") {
  RawPointCloud c;
  c.points.push_back({0.1, 0.1, 0.1, 0.5});
  TokenizerConfig cfg;
  const TokenSequence seq = tokenize(c, cfg);
  REQUIRE(seq.size() == 1);
  const auto& t = seq.tokens[0];
  CHECK(t.cell == Cell3{0, 0, 0});
  CHECK(t.coord.isApprox(Vec3(0.2, 0.2, 0.2)));
  CHECK(t.stats[kMeanX] == doctest::Approx(0.1));
  CHECK(t.stats[kMeanY] == doctest::Approx(0.1));
  CHECK(t.stats[kMeanZ] == doctest::Approx(0.1));
  CHECK(t.stats[kDispersion] == 0.0);
  CHECK(t.stats[kIntensityStd] == 0.0);
  CHECK(t.stats[kIntensityMean] == 0.5);
  CHECK(t.stats[kIntensityMax] == 0.5);
  CHECK(t.stats[kDensity] == doctest::Approx(1.0 / cfg.density_normalizer));
  CHECK(t.stats[kGridOffset] == doctest::Approx(0.1));
  CHECK(t.stats[kReserved0] == 0.0);
  CHECK(t.stats[kReserved1] == 0.0);
  CHECK(seq.order == std::vector<std::size_t>{0});
}

TEST_CASE("tokenize symmetric pair about a cell center") {
  RawPointCloud c;
  c.points.push_back({0.2 - 0.05, 0.2 + 0.1, 0.2 - 0.15, 0.2});
  c.points.push_back({0.2 + 0.05, 0.2 - 0.1, 0.2 + 0.15, 0.6});
  const TokenSequence seq = tokenize(c, TokenizerConfig{});
  REQUIRE(seq.size() == 1);
  const auto& s = seq.tokens[0].stats;
  CHECK(std::abs(s[kMeanX] - 0.2) < 1e-12);
  CHECK(std::abs(s[kMeanY] - 0.2) < 1e-12);
  CHECK(std::abs(s[kMeanZ] - 0.2) < 1e-12);
  CHECK(s[kGridOffset] == doctest::Approx((0.05 + 0.1 + 0.15) / 3.0));
  CHECK(s[kGridOffset] == doctest::Approx(s[kDispersion]));
  CHECK(s[kIntensityStd] == doctest::Approx(0.2));
}

TEST_CASE("tokenize matches the brute-force grouping oracle") {
  std::mt19937_64 rng(10);
  TokenizerConfig cfg;
  cfg.range_min = {-5, -5, -2};
  cfg.range_max = {5, 5, 0.5};
  check_against_oracle(random_cloud(rng, 10000), cfg);
  cfg.min_points = 3;
  cfg.grid_interval = 0.7;
  check_against_oracle(random_cloud(rng, 10000), cfg);
}

TEST_CASE("cell boundaries follow floor semantics") {
  RawPointCloud c;
  c.points.push_back({0.4, 0.0, 0.0, 0.1});
  c.points.push_back({-0.4, 0.0, 0.0, 0.1});
  c.points.push_back({-1e-9, 0.0, 0.0, 0.1});
  const TokenSequence seq = tokenize(c, TokenizerConfig{});
  REQUIRE(seq.size() == 2);
  CHECK(seq.tokens[0].cell == Cell3{-1, 0, 0});
  CHECK(seq.tokens[0].stats[kDensity] == doctest::Approx(2.0 / 32.0));
  CHECK(seq.tokens[1].cell == Cell3{1, 0, 0});
  CHECK(cell_of({0.8, -0.8, 0.0}, 0.4) == Cell3{2, -2, 0});
}

TEST_CASE("out-of-range points are dropped and each in-range point lands in one cell") {
  std::mt19937_64 rng(11);
  TokenizerConfig cfg;
  cfg.range_min = {-3, -3, -2};
  cfg.range_max = {3, 3, 0.5};
  cfg.density_normalizer = 1e9;
  const RawPointCloud cloud = random_cloud(rng, 5000);
  const TokenSequence seq = tokenize(cloud, cfg);
  double counted = 0;
  for (const auto& t : seq.tokens) counted += std::round(t.stats[kDensity] * 1e9);
  std::size_t inside = 0;
  for (const auto& p : cloud.points) inside += cfg.in_range({p.x, p.y, p.z});
  CHECK(inside < cloud.points.size());
  CHECK(counted == static_cast<double>(inside));
}

TEST_CASE("empty output is legal") {
  RawPointCloud c;
  c.points.push_back({500, 0, 0, 0.1});
  const TokenSequence seq = tokenize(c, TokenizerConfig{});
  CHECK(seq.empty());
  CHECK(seq.features.rows() == 0);
  TokenizerConfig cfg;
  cfg.min_points = 2;
  RawPointCloud one;
  one.points.push_back({0, 0, 0, 0.1});
  CHECK(tokenize(one, cfg).empty());
}

TEST_CASE("invalid inputs are rejected") {
  RawPointCloud c;
  c.points.push_back({0, 0, 0, 1.5});
  CHECK_THROWS_AS(tokenize(c, TokenizerConfig{}), InvalidInput);
  c.points[0] = {std::numeric_limits<double>::quiet_NaN(), 0, 0, 0.5};
  CHECK_THROWS_AS(tokenize(c, TokenizerConfig{}), InvalidInput);
  c.points[0] = {0, 0, 0, 0.5};
  TokenizerConfig cfg;
  cfg.grid_interval = 0.0;
  CHECK_THROWS_AS(tokenize(c, cfg), InvalidInput);
  cfg = TokenizerConfig{};
  cfg.range_max.x() = cfg.range_min.x();
  CHECK_THROWS_AS(tokenize(c, cfg), InvalidInput);
}

TEST_CASE("tokenize is invariant to point order") {
  std::mt19937_64 rng(12);
  RawPointCloud cloud = random_cloud(rng, 4000, 3.0);
  const TokenSequence a = tokenize(cloud, TokenizerConfig{});
  std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
  const TokenSequence b = tokenize(cloud, TokenizerConfig{});
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a.tokens[t].cell == b.tokens[t].cell);
    for (int s = 0; s < kNumStats; ++s) {
      CHECK(std::abs(a.tokens[t].stats[s] - b.tokens[t].stats[s]) < 1e-12);
    }
  }
}

TEST_CASE("token count is non-increasing in grid interval") {
  std::mt19937_64 rng(13);
  const RawPointCloud cloud = random_cloud(rng, 20000, 10.0);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double interval : {0.1, 0.2, 0.3, 0.4, 0.5, 0.8, 1.0, 1.6, 2.0, 3.2}) {
    TokenizerConfig cfg;
    cfg.grid_interval = interval;
    const std::size_t n = tokenize(cloud, cfg).size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("embed") {
  std::mt19937_64 rng(14);
  const TokenSequence seq = tokenize(random_cloud(rng, 2000, 3.0), TokenizerConfig{});
  REQUIRE(seq.size() > 10);

  SUBCASE("identity-padded weights copy the statistics") {
    Linear w(kNumStats, 32);
    for (int i = 0; i < kNumStats; ++i) w.weight(i, i) = 1.0;
    const TokenSequence e = embed(seq, w);
    CHECK(e.embed_dim() == 32);
    CHECK(e.size() == seq.size());
    CHECK(e.features.leftCols(kNumStats) == seq.features);
    CHECK(e.features.rightCols(32 - kNumStats).isZero(0.0));
  }

  SUBCASE("zero weights give zero embeddings") {
    CHECK(embed(seq, Linear(kNumStats, 16)).features.isZero(0.0));
  }

  SUBCASE("random weights match a naive matrix-vector product") {
    const Linear w = oracle::random_linear(rng, kNumStats, 24);
    const TokenSequence e = embed(seq, w);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      for (int o = 0; o < 24; ++o) {
        double s = w.bias[o];
        for (int i = 0; i < kNumStats; ++i) s += w.weight(o, i) * seq.tokens[t].stats[i];
        CHECK(std::abs(e.features(static_cast<Eigen::Index>(t), o) - s) < 1e-6);
      }
      CHECK(e.tokens[t].cell == seq.tokens[t].cell);
    }
  }

  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(embed(seq, Linear(kNumStats + 1, 8)), InvalidInput);
  }
}

TEST_CASE("point cloud file round trip") {
  std::mt19937_64 rng(15);
  RawPointCloud cloud = random_cloud(rng, 300);
  for (auto& p : cloud.points) {
    p.x = static_cast<float>(p.x);
    p.y = static_cast<float>(p.y);
    p.z = static_cast<float>(p.z);
    p.intensity = static_cast<float>(p.intensity);
  }
  const auto path = (std::filesystem::temp_directory_path() / "coplot_cloud_test.bin").string();
  write_point_cloud(path, cloud);
  const RawPointCloud back = read_point_cloud(path);
  REQUIRE(back.points.size() == cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    CHECK(back.points[i].x == cloud.points[i].x);
    CHECK(back.points[i].intensity == cloud.points[i].intensity);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_point_cloud(path), IoError);
}
