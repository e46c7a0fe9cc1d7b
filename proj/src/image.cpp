#include "hicome/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

namespace hicome {

namespace {
float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }
}  // namespace

RGBImage read_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("read_image: cannot decode " + path);
  RGBImage img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0f;  // BGR -> RGB
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

BinaryMask read_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("read_mask: cannot decode " + path);
  BinaryMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) mask.at(y, x) = row[x] >= 128 ? 1 : 0;
  }
  return mask;
}

SaliencyMap read_map(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("read_map: cannot decode " + path);
  SaliencyMap map(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) map.at(y, x) = row[x] / 255.0f;
  }
  return map;
}

void write_image_png(const std::string& path, const RGBImage& img) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      row[x][2] = static_cast<uint8_t>(std::lround(clamp01(img.at(y, x, 0)) * 255.0f));
      row[x][1] = static_cast<uint8_t>(std::lround(clamp01(img.at(y, x, 1)) * 255.0f));
      row[x][0] = static_cast<uint8_t>(std::lround(clamp01(img.at(y, x, 2)) * 255.0f));
    }
  }
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_image_png: cannot write " + path);
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
  cv::Mat m(mask.h, mask.w, CV_8UC1);
  for (int y = 0; y < mask.h; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < mask.w; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_mask_png: cannot write " + path);
}

void write_map_png(const std::string& path, const SaliencyMap& map) {
  cv::Mat m(map.h, map.w, CV_8UC1);
  for (int y = 0; y < map.h; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < map.w; ++x)
      row[x] = static_cast<uint8_t>(std::lround(clamp01(map.at(y, x)) * 255.0f));
  }
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_map_png: cannot write " + path);
}

void resize_bilinear_raw(const float* src, int sh, int sw, int channels, float* dst, int dh, int dw) {
  const double ry = static_cast<double>(sh) / dh;
  const double rx = static_cast<double>(sw) / dw;
  for (int y = 0; y < dh; ++y) {
    double py = (y + 0.5) * ry - 0.5;
    py = std::max(0.0, std::min(py, static_cast<double>(sh - 1)));
    const int y0 = static_cast<int>(std::floor(py));
    const int y1 = std::min(y0 + 1, sh - 1);
    const float fy = static_cast<float>(py - y0);
    for (int x = 0; x < dw; ++x) {
      double px = (x + 0.5) * rx - 0.5;
      px = std::max(0.0, std::min(px, static_cast<double>(sw - 1)));
      const int x0 = static_cast<int>(std::floor(px));
      const int x1 = std::min(x0 + 1, sw - 1);
      const float fx = static_cast<float>(px - x0);
      for (int c = 0; c < channels; ++c) {
        const float v00 = src[(static_cast<size_t>(y0) * sw + x0) * channels + c];
        const float v01 = src[(static_cast<size_t>(y0) * sw + x1) * channels + c];
        const float v10 = src[(static_cast<size_t>(y1) * sw + x0) * channels + c];
        const float v11 = src[(static_cast<size_t>(y1) * sw + x1) * channels + c];
        dst[(static_cast<size_t>(y) * dw + x) * channels + c] =
            (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
}

RGBImage resize_image(const RGBImage& img, int h, int w) {
  if (img.h == h && img.w == w) return img;
  RGBImage out(h, w);
  resize_bilinear_raw(img.rgb.data(), img.h, img.w, 3, out.rgb.data(), h, w);
  return out;
}

BinaryMask resize_mask(const BinaryMask& mask, int h, int w) {
  if (mask.h == h && mask.w == w) return mask;
  std::vector<float> src(mask.v.begin(), mask.v.end());
  std::vector<float> dst(static_cast<size_t>(h) * w);
  resize_bilinear_raw(src.data(), mask.h, mask.w, 1, dst.data(), h, w);
  BinaryMask out(h, w);
  for (size_t i = 0; i < dst.size(); ++i) out.v[i] = dst[i] >= 0.5f ? 1 : 0;
  return out;
}

SaliencyMap resize_map(const SaliencyMap& map, int h, int w) {
  if (map.h == h && map.w == w) return map;
  SaliencyMap out(h, w);
  resize_bilinear_raw(map.v.data(), map.h, map.w, 1, out.v.data(), h, w);
  return out;
}

void hflip_inplace(RGBImage& img, BinaryMask& mask) {
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w / 2; ++x) {
      const int xr = img.w - 1 - x;
      for (int c = 0; c < 3; ++c) std::swap(img.at(y, x, c), img.at(y, xr, c));
    }
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w / 2; ++x) std::swap(mask.at(y, x), mask.at(y, mask.w - 1 - x));
}

void rotate_pair(RGBImage& img, BinaryMask& mask, double angle_deg) {
  const double a = angle_deg * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
  RGBImage out_img(img.h, img.w);
  BinaryMask out_mask(mask.h, mask.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      // inverse mapping: rotate destination coords back into the source
      const double dy = y - cy, dx = x - cx;
      const double sy = ca * dy + sa * dx + cy;
      const double sx = -sa * dy + ca * dx + cx;
      const double syc = std::max(0.0, std::min(sy, static_cast<double>(img.h - 1)));
      const double sxc = std::max(0.0, std::min(sx, static_cast<double>(img.w - 1)));
      const int y0 = static_cast<int>(std::floor(syc)), x0 = static_cast<int>(std::floor(sxc));
      const int y1 = std::min(y0 + 1, img.h - 1), x1 = std::min(x0 + 1, img.w - 1);
      const float fy = static_cast<float>(syc - y0), fx = static_cast<float>(sxc - x0);
      for (int c = 0; c < 3; ++c) {
        const float v = (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
                        fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
        out_img.at(y, x, c) = v;
      }
      const int ny = static_cast<int>(std::lround(syc));
      const int nx = static_cast<int>(std::lround(sxc));
      out_mask.at(y, x) = mask.at(ny, nx);
    }
  img = std::move(out_img);
  mask = std::move(out_mask);
}

}  // namespace hicome
