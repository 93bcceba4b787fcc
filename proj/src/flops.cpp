#include "coplot/flops.hpp"

#include "coplot/common.hpp"

namespace coplot {

std::uint64_t flop_estimate(const std::string& module, const FlopShape& s) {
  if (module == "linear") return 2 * s.tokens * s.in * s.out;
  if (module == "conv3x3") return 2 * 9 * s.in * s.out * s.out_height * s.out_width;
  if (module == "bev_pool") return 2 * s.tokens * s.channels;
  if (module == "dft") {
    const std::uint64_t area = s.window_h * s.window_w;
    return 2 * area * area * s.cells * s.channels;
  }
  if (module == "scan") return s.tokens * (5 * s.n_state * s.d + 4 * s.n_state + 2 * s.d);
  if (module == "dual_scan") return 2 * flop_estimate("scan", s);
  if (module == "standardize") return 4 * s.tokens * s.d;
  if (module == "softmax") return 3 * s.tokens * s.groups;
  throw InvalidInput("flop_estimate: unknown module '" + module + "'");
}

std::uint64_t flop_total(const FlopBreakdown& breakdown) {
  std::uint64_t total = 0;
  for (const auto& [_, v] : breakdown) total += v;
  return total;
}

}  // namespace coplot
