// Brute-force reference metrics used only by tests. Deliberately naive:
// every threshold rescans the full maps and the alignment/structure terms
// are evaluated elementwise, independent of the library's counting scheme.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hicome/image.hpp"

namespace oracle {

using hicome::BinaryMask;
using hicome::SaliencyMap;

inline double mae(const SaliencyMap& pred, const BinaryMask& gt) {
  double acc = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i)
    acc += std::fabs(static_cast<double>(pred.v[i]) - static_cast<double>(gt.v[i]));
  return acc / static_cast<double>(pred.v.size());
}

struct FScores {
  double f_max = 0.0, f_mean = 0.0;
};

inline FScores f_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  FScores out;
  bool any_fg = false;
  for (auto v : gt.v) any_fg |= v != 0;
  if (!any_fg) return out;
  double sum = 0.0;
  for (int k = 0; k < 256; ++k) {
    const double t = k / 255.0;
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
      const bool b = static_cast<double>(pred.v[i]) >= t;
      if (b && gt.v[i]) tp += 1;
      if (b && !gt.v[i]) fp += 1;
      if (!b && gt.v[i]) fn += 1;
    }
    const double prec = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    const double rec = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    const double den = 0.3 * prec + rec;
    const double f = den > 0 ? (1.3 * prec * rec) / den : 0.0;
    out.f_max = std::max(out.f_max, f);
    sum += f;
  }
  out.f_mean = sum / 256.0;
  return out;
}

struct EScores {
  double e_max = 0.0, e_mean = 0.0;
};

inline double e_at_threshold(const SaliencyMap& pred, const BinaryMask& gt, double t) {
  const size_t n = pred.v.size();
  std::vector<double> b(n);
  for (size_t i = 0; i < n; ++i) b[i] = static_cast<double>(pred.v[i]) >= t ? 1.0 : 0.0;
  bool all0 = true, all1 = true;
  for (auto v : gt.v) {
    all0 &= v == 0;
    all1 &= v == 1;
  }
  double acc = 0.0;
  if (all0) {
    for (size_t i = 0; i < n; ++i) acc += 1.0 - b[i];
    return acc / static_cast<double>(n);
  }
  if (all1) {
    for (size_t i = 0; i < n; ++i) acc += b[i];
    return acc / static_cast<double>(n);
  }
  double mb = 0.0, mg = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mb += b[i];
    mg += gt.v[i];
  }
  mb /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const double db = b[i] - mb;
    const double dg = static_cast<double>(gt.v[i]) - mg;
    const double xi = 2.0 * dg * db / (dg * dg + db * db);
    acc += (xi + 1.0) * (xi + 1.0) / 4.0;
  }
  return acc / static_cast<double>(n);
}

inline EScores e_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  EScores out;
  double sum = 0.0;
  for (int k = 0; k < 256; ++k) {
    const double e = e_at_threshold(pred, gt, k / 255.0);
    out.e_max = std::max(out.e_max, e);
    sum += e;
  }
  out.e_mean = sum / 256.0;
  return out;
}

inline double s_measure(const SaliencyMap& pred, const BinaryMask& gt) {
  const size_t n = pred.v.size();
  double fg = 0.0, mean_pred = 0.0;
  for (size_t i = 0; i < n; ++i) {
    fg += gt.v[i];
    mean_pred += pred.v[i];
  }
  mean_pred /= static_cast<double>(n);
  if (fg == 0.0) return std::clamp(1.0 - mean_pred, 0.0, 1.0);
  if (fg == static_cast<double>(n)) return std::clamp(mean_pred, 0.0, 1.0);

  auto score = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double v : xs) m += v;
    m /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(xs.size()));
    return 2.0 * m / (m * m + 1.0 + sd);
  };
  std::vector<double> fg_vals, bg_vals;
  for (size_t i = 0; i < n; ++i) {
    if (gt.v[i])
      fg_vals.push_back(pred.v[i]);
    else
      bg_vals.push_back(1.0 - pred.v[i]);
  }
  const double mu = fg / static_cast<double>(n);
  const double s_o = mu * score(fg_vals) + (1.0 - mu) * score(bg_vals);

  double cy = 0.0, cx = 0.0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x)
      if (gt.at(y, x)) {
        cy += y;
        cx += x;
      }
  const int icy = std::clamp(static_cast<int>(std::lround(cy / fg)), 0, gt.h - 1);
  const int icx = std::clamp(static_cast<int>(std::lround(cx / fg)), 0, gt.w - 1);

  auto ssim_region = [&](int y0, int y1, int x0, int x1) {
    const double cnt = static_cast<double>(std::max(0, y1 - y0)) * std::max(0, x1 - x0);
    if (cnt == 0.0) return std::pair<double, double>{0.0, 0.0};
    double mx = 0.0, my = 0.0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        mx += pred.at(y, x);
        my += gt.at(y, x);
      }
    mx /= cnt;
    my /= cnt;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        vx += (pred.at(y, x) - mx) * (pred.at(y, x) - mx);
        vy += (gt.at(y, x) - my) * (gt.at(y, x) - my);
        cxy += (pred.at(y, x) - mx) * (gt.at(y, x) - my);
      }
    vx /= cnt;
    vy /= cnt;
    cxy /= cnt;
    const double alpha = 4.0 * mx * my * cxy;
    const double beta = (mx * mx + my * my) * (vx + vy);
    double q;
    if (alpha != 0.0)
      q = alpha / beta;
    else
      q = beta == 0.0 ? 1.0 : 0.0;
    return std::pair<double, double>{cnt, q};
  };

  double weighted = 0.0;
  for (auto [y0, y1] : {std::pair<int, int>{0, icy + 1}, {icy + 1, gt.h}})
    for (auto [x0, x1] : {std::pair<int, int>{0, icx + 1}, {icx + 1, gt.w}}) {
      auto [cnt, q] = ssim_region(y0, y1, x0, x1);
      weighted += cnt * q;
    }
  const double s_r = weighted / static_cast<double>(n);
  return std::clamp(0.5 * s_o + 0.5 * s_r, 0.0, 1.0);
}

}  // namespace oracle
