#pragma once

// Closed-form operation counts. One multiply-add counts as two FLOPs.
//
//   linear        2 * tokens * in * out
//   conv3x3       2 * 9 * in * out * out_height * out_width   (dense count)
//   bev_pool      2 * tokens * channels                       (mean and max)
//   dft           2 * (window_h * window_w)^2 * cells * channels
//   scan          tokens * (5 * n_state * d + 4 * n_state + 2 * d)
//   dual_scan     2 * scan
//   standardize   4 * tokens * d
//   softmax       3 * tokens * groups

#include <cstdint>
#include <map>
#include <string>

namespace coplot {

struct FlopShape {
  std::uint64_t tokens = 0;
  std::uint64_t in = 0;
  std::uint64_t out = 0;
  std::uint64_t d = 0;
  std::uint64_t n_state = 0;
  std::uint64_t channels = 0;
  std::uint64_t groups = 0;
  std::uint64_t out_height = 0;
  std::uint64_t out_width = 0;
  std::uint64_t window_h = 0;
  std::uint64_t window_w = 0;
  std::uint64_t cells = 0;
};

/// Throws InvalidInput for a module name outside the table above.
std::uint64_t flop_estimate(const std::string& module, const FlopShape& shape);

/// Named per-module totals; iteration order is by name.
using FlopBreakdown = std::map<std::string, std::uint64_t>;

std::uint64_t flop_total(const FlopBreakdown& breakdown);

}  // namespace coplot
