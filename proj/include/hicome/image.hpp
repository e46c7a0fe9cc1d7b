#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hicome {

// Interleaved RGB, values in [0,1].
struct RGBImage {
  int h = 0, w = 0;
  std::vector<float> rgb;  // h*w*3

  RGBImage() = default;
  RGBImage(int height, int width) : h(height), w(width), rgb(static_cast<size_t>(height) * width * 3, 0.0f) {}
  float& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;  // h*w, strictly 0/1

  BinaryMask() = default;
  BinaryMask(int height, int width) : h(height), w(width), v(static_cast<size_t>(height) * width, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  int64_t foreground_count() const {
    int64_t n = 0;
    for (uint8_t b : v) n += b;
    return n;
  }
};

struct SaliencyMap {
  int h = 0, w = 0;
  std::vector<float> v;  // h*w in [0,1]

  SaliencyMap() = default;
  SaliencyMap(int height, int width) : h(height), w(width), v(static_cast<size_t>(height) * width, 0.0f) {}
  float& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  float at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// ---- codecs (PNG/JPEG via OpenCV imgcodecs) ----
RGBImage read_image(const std::string& path);
// 8-bit grayscale, foreground at >= 128.
BinaryMask read_mask(const std::string& path);
SaliencyMap read_map(const std::string& path);
void write_image_png(const std::string& path, const RGBImage& img);
void write_mask_png(const std::string& path, const BinaryMask& mask);
// Grayscale PNG with values round(255 * v).
void write_map_png(const std::string& path, const SaliencyMap& map);

// ---- geometry ----
RGBImage resize_image(const RGBImage& img, int h, int w);
// Bilinear on the indicator then re-thresholded at 0.5.
BinaryMask resize_mask(const BinaryMask& mask, int h, int w);
SaliencyMap resize_map(const SaliencyMap& map, int h, int w);

void hflip_inplace(RGBImage& img, BinaryMask& mask);
// Rotation about the image center; bilinear for the image, nearest for the
// mask (stays binary), border clamped.
void rotate_pair(RGBImage& img, BinaryMask& mask, double angle_deg);

// Generic bilinear over interleaved float channels, align_corners=false.
void resize_bilinear_raw(const float* src, int sh, int sw, int channels, float* dst, int dh, int dw);

}  // namespace hicome
