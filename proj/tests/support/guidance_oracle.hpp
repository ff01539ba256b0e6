// SPDX-License-Identifier: Apache-2.0
//
// Independent scalar reference for the multi-condition correction: a direct
// transcription of "latent plus the sum over active conditions of filtered
// reference minus filtered latent", with its own filter code. Kept separate
// from the library so the two routes stay independent.
#pragma once

#include <cmath>
#include <vector>

namespace guidance_oracle {

struct Img {
  int w = 0, h = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline Img downsample(const Img& img, int n) {
  const int cw = (img.w + n - 1) / n;
  const int ch = (img.h + n - 1) / n;
  Img out{cw, ch, std::vector<double>(static_cast<std::size_t>(cw) * ch, 0.0)};
  for (int cy = 0; cy < ch; ++cy) {
    for (int cx = 0; cx < cw; ++cx) {
      double sum = 0.0;
      int cnt = 0;
      for (int y = cy * n; y < std::min((cy + 1) * n, img.h); ++y) {
        for (int x = cx * n; x < std::min((cx + 1) * n, img.w); ++x) {
          sum += img.at(y, x);
          ++cnt;
        }
      }
      out.at(cy, cx) = sum / cnt;
    }
  }
  return out;
}

inline double cell_center(int c, int n, int extent) {
  const int start = c * n;
  const int end = std::min(start + n, extent);
  return 0.5 * (start + end - 1);
}

inline Img filter(const Img& img, int n) {
  if (n == 1) return img;
  Img coarse = downsample(img, n);
  Img out{img.w, img.h, std::vector<double>(img.v.size(), 0.0)};
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      // locate the bracketing cell centers along each axis
      auto axis = [&](int fine, int cells, int extent) {
        int lo = 0;
        while (lo + 1 < cells && cell_center(lo + 1, n, extent) < fine) ++lo;
        int hi = lo + 1 < cells ? lo + 1 : lo;
        double t = 0.0;
        const double c0 = cell_center(lo, n, extent), c1 = cell_center(hi, n, extent);
        if (hi != lo && fine >= c0 && fine <= c1) t = (fine - c0) / (c1 - c0);
        else if (hi != lo && fine > c1) { lo = hi; t = 0.0; }
        return std::pair<int, double>(lo, t);
      };
      auto [cx, tx] = axis(x, coarse.w, img.w);
      auto [cy, ty] = axis(y, coarse.h, img.h);
      const int cx1 = std::min(cx + 1, coarse.w - 1);
      const int cy1 = std::min(cy + 1, coarse.h - 1);
      const double top = (1 - tx) * coarse.at(cy, cx) + tx * coarse.at(cy, cx1);
      const double bot = (1 - tx) * coarse.at(cy1, cx) + tx * coarse.at(cy1, cx1);
      out.at(y, x) = (1 - ty) * top + ty * bot;
    }
  }
  // restore the cell means exactly
  for (int cy = 0; cy < coarse.h; ++cy) {
    for (int cx = 0; cx < coarse.w; ++cx) {
      double sum = 0.0;
      int cnt = 0;
      for (int y = cy * n; y < std::min((cy + 1) * n, img.h); ++y) {
        for (int x = cx * n; x < std::min((cx + 1) * n, img.w); ++x) {
          sum += out.at(y, x);
          ++cnt;
        }
      }
      const double fix = coarse.at(cy, cx) - sum / cnt;
      for (int y = cy * n; y < std::min((cy + 1) * n, img.h); ++y) {
        for (int x = cx * n; x < std::min((cx + 1) * n, img.w); ++x) {
          out.at(y, x) += fix;
        }
      }
    }
  }
  return out;
}

struct Condition {
  Img y_noisy;
  int n = 1;
  int a = 1;
};

/// x_prev + sum over conditions with t >= a of (phi_n(y) - phi_n(x_prev)).
inline Img correct(const Img& x_prev, const std::vector<Condition>& conds, int t) {
  Img out = x_prev;
  for (const auto& c : conds) {
    if (t < c.a) continue;
    Img fy = filter(c.y_noisy, c.n);
    Img fx = filter(x_prev, c.n);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += fy.v[i] - fx.v[i];
  }
  return out;
}

}  // namespace guidance_oracle
