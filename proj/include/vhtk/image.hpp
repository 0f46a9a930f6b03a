#pragma once
// In-memory image representation: HWC row-major RGB, double pixels in [0,1].
// All perturbation and attack code works on this normalized form; 8-bit
// conversion happens only at the file boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

#include "vhtk/errors.hpp"

namespace vhtk {

inline constexpr int kChannels = 3;

struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height * width * 3

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w) {
    if (h < 1 || w < 1) throw Error("image dimensions must be >= 1");
    data.assign(static_cast<std::size_t>(h) * w * kChannels, 0.0);
  }

  static ImageTensor constant(int h, int w, double value) {
    ImageTensor img(h, w);
    std::fill(img.data.begin(), img.data.end(), value);
    return img;
  }

  std::size_t size() const { return data.size(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  bool same_shape(const ImageTensor& other) const {
    return height == other.height && width == other.width;
  }

  bool operator==(const ImageTensor& other) const {
    return height == other.height && width == other.width && data == other.data;
  }
};

inline void clip01(ImageTensor& img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

inline bool in_unit_range(const ImageTensor& img, double slack = 0.0) {
  for (double v : img.data) {
    if (v < -slack || v > 1.0 + slack || !std::isfinite(v)) return false;
  }
  return true;
}

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw Error("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw Error("mean_abs_diff: shape mismatch");
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

inline std::uint8_t to_byte(double v) {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(scaled));
}

inline ImageTensor from_bytes(int h, int w, const std::uint8_t* rgb) {
  ImageTensor img(h, w);
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; ++i) img.data[i] = rgb[i] / 255.0;
  return img;
}

inline std::vector<std::uint8_t> to_bytes(const ImageTensor& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_byte(img.data[i]);
  return out;
}

// Bilinear resize with the usual pixel-center convention.
inline ImageTensor resize_bilinear(const ImageTensor& src, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw Error("resize: output dimensions must be >= 1");
  if (src.height == out_h && src.width == out_w) return src;
  ImageTensor dst(out_h, out_w);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < kChannels; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        dst.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

}  // namespace vhtk
