#pragma once
// Brute-force reference implementations used by the unit and acceptance tests.
// Written independently of the library: plain loops, no torch ops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"

namespace oracle {

using eyeadapt::Image;
using eyeadapt::Mask;

inline double miou(const Mask& pred, const Mask& gt, int classes) {
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < classes; ++k) {
    std::set<std::size_t> p, g;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (pred.data[i] == k) p.insert(i);
      if (gt.data[i] == k) g.insert(i);
    }
    std::vector<std::size_t> inter, uni;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(inter));
    std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(uni));
    if (uni.empty()) continue;
    sum += double(inter.size()) / double(uni.size());
    ++used;
  }
  return used ? sum / used : 1.0;
}

struct Stats {
  std::vector<double> mean, var;
  std::vector<long> count;
};

/// Two-pass population statistics per class.
inline Stats class_stats(const std::vector<double>& img, const std::vector<int>& mask, int classes) {
  Stats s{std::vector<double>(classes, 0.0), std::vector<double>(classes, 0.0), std::vector<long>(classes, 0)};
  std::vector<long double> acc(classes, 0.0L);
  for (std::size_t i = 0; i < img.size(); ++i) {
    acc[mask[i]] += img[i];
    ++s.count[mask[i]];
  }
  for (int k = 0; k < classes; ++k) {
    if (s.count[k]) s.mean[k] = double(acc[k] / s.count[k]);
  }
  std::vector<long double> sq(classes, 0.0L);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const long double d = img[i] - (long double)s.mean[mask[i]];
    sq[mask[i]] += d * d;
  }
  for (int k = 0; k < classes; ++k) {
    if (s.count[k]) s.var[k] = double(sq[k] / s.count[k]);
  }
  return s;
}

/// Direct 3x3 correlation with clamped (edge-replicating) indices.
/// Returns gx and gy, row-major h*w each.
inline std::pair<std::vector<double>, std::vector<double>> sobel(const std::vector<double>& img, int h, int w) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  std::vector<double> gx(h * w, 0.0), gy(h * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = 0.0, sy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          const int xx = std::clamp(x + dx, 0, w - 1);
          const double v = img[yy * w + xx];
          sx += kx[dy + 1][dx + 1] * v;
          sy += kx[dx + 1][dy + 1] * v;
        }
      }
      gx[y * w + x] = sx;
      gy[y * w + x] = sy;
    }
  }
  return {gx, gy};
}

/// Pixels with a 4-neighbour of another class, grown by a 5x5 square
/// (two 3x3 dilations).
inline std::vector<int> boundary(const Mask& m) {
  const int h = m.height, w = m.width;
  std::vector<int> edge(h * w, 0), out(h * w, 0);
  const int nb[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (const auto& d : nb) {
        const int yy = y + d[0], xx = x + d[1];
        if (yy >= 0 && yy < h && xx >= 0 && xx < w && m.at(yy, xx) != m.at(y, x)) edge[y * w + x] = 1;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && edge[yy * w + xx]) out[y * w + x] = 1;
        }
      }
    }
  }
  return out;
}

/// Brute-force Euclidean distance to the nearest pixel with inside != 0.
inline std::vector<double> distance(const Mask& inside) {
  std::vector<double> d(inside.size(), std::numeric_limits<double>::infinity());
  for (int y = 0; y < inside.height; ++y) {
    for (int x = 0; x < inside.width; ++x) {
      for (int v = 0; v < inside.height; ++v) {
        for (int u = 0; u < inside.width; ++u) {
          if (inside.at(v, u)) d[y * inside.width + x] = std::min(d[y * inside.width + x], std::hypot(y - v, x - u));
        }
      }
    }
  }
  return d;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues descending and eigenvectors as columns (vecs[row][col]).
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> jacobi_eigen(std::vector<std::vector<double>> a) {
  const int n = static_cast<int>(a.size());
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x][x] > a[y][y]; });
  std::vector<double> vals;
  std::vector<std::vector<double>> vecs(n, std::vector<double>(n));
  for (int c = 0; c < n; ++c) {
    vals.push_back(a[order[c]][order[c]]);
    for (int r = 0; r < n; ++r) vecs[r][c] = v[r][order[c]];
  }
  return {vals, vecs};
}

/// Relative gradient error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// using central differences on every element of `inputs[which]`.
inline double gradient_error(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                             std::vector<torch::Tensor> inputs, std::size_t which, double step = 1e-4) {
  for (auto& t : inputs) t = t.detach().clone();
  inputs[which].requires_grad_(true);
  auto loss = f(inputs);
  const auto analytic = torch::autograd::grad({loss}, {inputs[which]})[0].contiguous();
  inputs[which] = inputs[which].detach();
  auto flat = inputs[which].view(-1);
  std::vector<double> numeric(flat.numel());
  torch::NoGradGuard guard;
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + step;
    const double up = f(inputs).item<double>();
    flat[i] = orig - step;
    const double down = f(inputs).item<double>();
    flat[i] = orig;
    numeric[i] = (up - down) / (2.0 * step);
  }
  const auto a = analytic.view(-1);
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double ai = a[i].item<double>();
    diff += (ai - numeric[i]) * (ai - numeric[i]);
    na += ai * ai;
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

}  // namespace oracle
