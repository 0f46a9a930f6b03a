#pragma once
// Shared helpers for the test suites: scratch directories, random images,
// and small dataset builders.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "vhtk/dataset.hpp"
#include "vhtk/image.hpp"
#include "vhtk/image_io.hpp"
#include "vhtk/rng.hpp"

namespace vhtk_test {

// Self-cleaning scratch directory under the system temp dir.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vhtk-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline vhtk::ImageTensor random_image(int h, int w, std::uint64_t seed) {
  vhtk::Rng rng(seed);
  vhtk::ImageTensor img(h, w);
  for (double& v : img.data) v = rng.uniform01();
  return img;
}

// Smooth-ish synthetic "photo": low-frequency gradients plus mild texture,
// more representative than white noise for JPEG tests.
inline vhtk::ImageTensor synthetic_photo(int h, int w, std::uint64_t seed) {
  vhtk::Rng rng(seed);
  const double fx = 2.0 + 3.0 * rng.uniform01();
  const double fy = 2.0 + 3.0 * rng.uniform01();
  const double phase = 6.28 * rng.uniform01();
  vhtk::ImageTensor img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w;
      const double v = static_cast<double>(y) / h;
      img.at(y, x, 0) = 0.5 + 0.4 * std::sin(fx * u * 6.28 + phase) * std::cos(fy * v * 3.14);
      img.at(y, x, 1) = 0.5 + 0.3 * std::cos(fx * u * 3.14) * std::sin(fy * v * 6.28 + phase);
      img.at(y, x, 2) = 0.4 + 0.2 * u + 0.2 * v + 0.1 * std::sin((u + v) * 12.0);
    }
  }
  vhtk::clip01(img);
  return img;
}

// Writes a tiny image and returns a TestCase referring to it by file name.
inline vhtk::TestCase make_case(const ScratchDir& dir, const std::string& id,
                                const std::string& question, vhtk::Answer answer,
                                std::uint64_t seed = 1, int hw = 16) {
  const std::string filename = id + ".png";
  vhtk::write_png(dir.file(filename), random_image(hw, hw, seed));
  vhtk::TestCase c;
  c.id = id;
  c.image_ref = filename;
  c.question = question;
  c.answer = answer;
  return c;
}

}  // namespace vhtk_test
