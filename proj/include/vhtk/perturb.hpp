#pragma once
// The four common image perturbations, all operating on [0,1] pixels and
// deterministic given their config (gaussian noise additionally takes a
// seed). Ground truth of a perturbed case is inherited unchanged; these
// transforms must never alter what the right answer is, only the pixels.

#include <cmath>
#include <cstdint>
#include <vector>

#include "vhtk/dataset.hpp"
#include "vhtk/image.hpp"
#include "vhtk/image_io.hpp"
#include "vhtk/rng.hpp"

namespace vhtk {

inline constexpr double kDefaultNoiseSigma = 0.08;
inline constexpr double kDefaultBrightnessShift = 0.5;
inline constexpr int kDefaultBlurRadius = 5;
inline constexpr int kDefaultJpegQuality = 30;

struct PerturbationConfig {
  PerturbKind kind = PerturbKind::GaussianNoise;
  double sigma = kDefaultNoiseSigma;        // GaussianNoise
  double shift = kDefaultBrightnessShift;   // Brightness, in [-1,1]
  int radius = kDefaultBlurRadius;          // DefocusBlur, >= 1
  int quality = kDefaultJpegQuality;        // JpegCompression, in [1,100]
  std::uint64_t seed = 0;                   // GaussianNoise only

  void validate() const {
    switch (kind) {
      case PerturbKind::GaussianNoise:
        if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
        break;
      case PerturbKind::Brightness:
        if (shift < -1.0 || shift > 1.0)
          throw ConfigError("brightness shift must be in [-1,1]");
        break;
      case PerturbKind::DefocusBlur:
        if (radius < 1) throw ConfigError("blur radius must be >= 1");
        break;
      case PerturbKind::JpegCompression:
        if (quality < 1 || quality > 100)
          throw ConfigError("jpeg quality must be in [1,100]");
        break;
    }
  }
};

inline ImageTensor gaussian_noise(const ImageTensor& img, double sigma,
                                  std::uint64_t seed) {
  if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
  Rng rng(seed);
  ImageTensor out = img;
  for (double& v : out.data) v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 1.0);
  return out;
}

namespace detail {

// Hexcone model. H in [0,360), S and V in [0,1]. Achromatic pixels get H=S=0.
inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1.0) {
    r1 = c; g1 = x;
  } else if (hp < 2.0) {
    r1 = x; g1 = c;
  } else if (hp < 3.0) {
    g1 = c; b1 = x;
  } else if (hp < 4.0) {
    g1 = x; b1 = c;
  } else if (hp < 5.0) {
    r1 = x; b1 = c;
  } else {
    r1 = c; b1 = x;
  }
  const double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

// Mirror index with edge repeat: -1 -> 0, -2 -> 1, n -> n-1.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace detail

inline ImageTensor brightness(const ImageTensor& img, double shift) {
  if (shift < -1.0 || shift > 1.0) throw ConfigError("brightness shift must be in [-1,1]");
  ImageTensor out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const std::size_t base = i * kChannels;
    double h, s, v;
    detail::rgb_to_hsv(img.data[base], img.data[base + 1], img.data[base + 2], h, s, v);
    v = std::clamp(v + shift, 0.0, 1.0);
    double r, g, b;
    detail::hsv_to_rgb(h, s, v, r, g, b);
    out.data[base] = std::clamp(r, 0.0, 1.0);
    out.data[base + 1] = std::clamp(g, 0.0, 1.0);
    out.data[base + 2] = std::clamp(b, 0.0, 1.0);
  }
  return out;
}

// Normalized disk kernel: 1 where dx^2+dy^2 <= radius^2, scaled to sum 1.
inline std::vector<double> disk_kernel(int radius) {
  if (radius < 1) throw ConfigError("blur radius must be >= 1");
  const int size = 2 * radius + 1;
  std::vector<double> kernel(static_cast<std::size_t>(size) * size, 0.0);
  double sum = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dy * dy + dx * dx <= radius * radius) {
        kernel[static_cast<std::size_t>(dy + radius) * size + (dx + radius)] = 1.0;
        sum += 1.0;
      }
    }
  }
  for (double& k : kernel) k /= sum;
  return kernel;
}

inline ImageTensor defocus_blur(const ImageTensor& img, int radius) {
  if (radius > std::min(img.height, img.width))
    throw Error("blur radius exceeds image size");
  const std::vector<double> kernel = disk_kernel(radius);
  const int size = 2 * radius + 1;
  ImageTensor out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc[kChannels] = {0.0, 0.0, 0.0};
      for (int dy = -radius; dy <= radius; ++dy) {
        const int sy = detail::reflect_index(y + dy, img.height);
        for (int dx = -radius; dx <= radius; ++dx) {
          const double k = kernel[static_cast<std::size_t>(dy + radius) * size + (dx + radius)];
          if (k == 0.0) continue;
          const int sx = detail::reflect_index(x + dx, img.width);
          for (int c = 0; c < kChannels; ++c) acc[c] += k * img.at(sy, sx, c);
        }
      }
      for (int c = 0; c < kChannels; ++c) out.at(y, x, c) = std::clamp(acc[c], 0.0, 1.0);
    }
  }
  return out;
}

// Encode/decode round trip. The encoded bytes are also what gets persisted
// for this perturbation kind, so callers needing the file use jpeg_encode.
inline ImageTensor jpeg_compress(const ImageTensor& img, int quality) {
  const std::vector<std::uint8_t> bytes = jpeg_encode(img, quality);
  ImageTensor out = jpeg_decode(bytes.data(), bytes.size());
  clip01(out);
  return out;
}

inline ImageTensor apply_perturbation(const ImageTensor& img,
                                      const PerturbationConfig& config) {
  config.validate();
  switch (config.kind) {
    case PerturbKind::GaussianNoise: return gaussian_noise(img, config.sigma, config.seed);
    case PerturbKind::Brightness: return brightness(img, config.shift);
    case PerturbKind::DefocusBlur: return defocus_blur(img, config.radius);
    case PerturbKind::JpegCompression: return jpeg_compress(img, config.quality);
  }
  throw Error("bad PerturbKind");
}

}  // namespace vhtk
