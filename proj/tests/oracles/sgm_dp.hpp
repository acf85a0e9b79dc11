#pragma once

// Scanline dynamic program for one SGM path, written independently of the
// library: it enumerates each path line from its entry pixel.

#include <algorithm>
#include <vector>

namespace oracle {

// cost[(d * h + y) * w + x]; returns L_r in the same layout.
inline std::vector<double> sgm_path(const std::vector<double>& cost, int nd, int h, int w,
                                    double p1, double p2, int dy, int dx) {
  std::vector<double> out(cost.size());
  auto idx = [&](int d, int y, int x) { return (static_cast<std::size_t>(d) * h + y) * w + x; };
  auto inside = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w; };
  for (int sy = 0; sy < h; ++sy)
    for (int sx = 0; sx < w; ++sx) {
      if (inside(sy - dy, sx - dx)) continue;  // not a line start
      std::vector<double> prev;
      for (int y = sy, x = sx; inside(y, x); y += dy, x += dx) {
        std::vector<double> cur(nd);
        for (int d = 0; d < nd; ++d) {
          if (prev.empty()) {
            cur[d] = cost[idx(d, y, x)];
            continue;
          }
          const double m = *std::min_element(prev.begin(), prev.end());
          std::vector<double> cands = {prev[d], m + p2};
          if (d - 1 >= 0) cands.push_back(prev[d - 1] + p1);
          if (d + 1 < nd) cands.push_back(prev[d + 1] + p1);
          cur[d] = cost[idx(d, y, x)] + (*std::min_element(cands.begin(), cands.end()) - m);
        }
        for (int d = 0; d < nd; ++d) out[idx(d, y, x)] = cur[d];
        prev = cur;
        if (dy == 0 && dx == 0) break;
      }
    }
  return out;
}

}  // namespace oracle
