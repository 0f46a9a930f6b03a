#pragma once
// Differentiable image-embedding contract plus a small reference encoder
// with analytic pixel gradients. The encoder is the desk-scale stand-in for
// a real vision encoder + connector stack: patchify -> flatten -> W1 ->
// tanh -> mean-pool over patches -> W2. Every step is differentiated by
// hand and checked against central finite differences.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <future>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vhtk/errors.hpp"
#include "vhtk/image.hpp"
#include "vhtk/rng.hpp"

namespace vhtk {

// PushAway: loss = +cos(reference, embed(img))  (minimizing drives the
//           embedding away from the reference)
// PullToward: loss = -cos(...)  (minimizing keeps the embedding close)
enum class LossSign { PushAway, PullToward };

struct LossGrad {
  double loss = 0.0;
  double cosine = 0.0;
  std::vector<double> grad;  // d(loss)/d(pixel), image-shaped HWC
};

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw Error("cosine: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw Error("cosine: zero-norm input (degenerate embedding)");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual int embed_dim() const = 0;
  virtual std::pair<int, int> input_size() const = 0;  // (H, W)
  virtual std::vector<double> embed(const ImageTensor& img) const = 0;
  virtual bool supports_gradient() const { return false; }
  virtual LossGrad loss_and_grad(const std::vector<double>& reference,
                                 const ImageTensor& img, LossSign sign) const {
    (void)reference;
    (void)img;
    (void)sign;
    throw CapabilityError("backend \"" + name() + "\" does not provide gradients");
  }
  virtual std::string name() const { return "backend"; }
};

enum class Nonlinearity : std::uint32_t { Tanh = 0, Identity = 1 };

class ReferenceEncoder : public EmbeddingBackend {
 public:
  static constexpr int kPatch = 8;
  static constexpr int kDefaultInput = 64;
  static constexpr int kDefaultHidden = 192;
  static constexpr int kDefaultEmbed = 128;

  explicit ReferenceEncoder(std::uint64_t seed, int input_hw = kDefaultInput,
                            int hidden = kDefaultHidden, int embed = kDefaultEmbed,
                            Nonlinearity nonlinearity = Nonlinearity::Tanh)
      : input_hw_(input_hw), hidden_(hidden), embed_(embed), nl_(nonlinearity) {
    if (input_hw_ < kPatch || input_hw_ % kPatch != 0)
      throw ConfigError("encoder input size must be a positive multiple of 8");
    if (hidden_ < 1 || embed_ < 1) throw ConfigError("encoder dims must be >= 1");
    init_weights(seed);
  }

  int embed_dim() const override { return embed_; }
  std::pair<int, int> input_size() const override { return {input_hw_, input_hw_}; }
  bool supports_gradient() const override { return true; }
  std::string name() const override { return "reference-encoder"; }
  Nonlinearity nonlinearity() const { return nl_; }

  std::vector<double> embed(const ImageTensor& img) const override {
    check_dims(img);
    std::vector<double> pooled(hidden_, 0.0);
    std::vector<double> patch(patch_dim());
    std::vector<double> h(hidden_);
    const int grid = input_hw_ / kPatch;
    for (int py = 0; py < grid; ++py) {
      for (int px = 0; px < grid; ++px) {
        gather_patch(img, py, px, patch.data());
        forward_patch(patch.data(), h.data());
        for (int j = 0; j < hidden_; ++j) pooled[j] += h[j];
      }
    }
    const double inv = 1.0 / (static_cast<double>(grid) * grid);
    for (double& v : pooled) v *= inv;
    std::vector<double> e(embed_, 0.0);
    for (int k = 0; k < embed_; ++k) {
      const double* row = &w2_[static_cast<std::size_t>(k) * hidden_];
      double acc = 0.0;
      for (int j = 0; j < hidden_; ++j) acc += row[j] * pooled[j];
      e[k] = acc;
    }
    return e;
  }

  LossGrad loss_and_grad(const std::vector<double>& reference, const ImageTensor& img,
                         LossSign sign) const override {
    check_dims(img);
    if (static_cast<int>(reference.size()) != embed_)
      throw Error("reference embedding has wrong dimension");

    const int grid = input_hw_ / kPatch;
    const int npatch = grid * grid;
    const int pd = patch_dim();

    // forward, keeping per-patch activations for the backward pass
    std::vector<double> hs(static_cast<std::size_t>(npatch) * hidden_);
    std::vector<double> pooled(hidden_, 0.0);
    std::vector<double> patch(pd);
    for (int p = 0; p < npatch; ++p) {
      gather_patch(img, p / grid, p % grid, patch.data());
      double* h = &hs[static_cast<std::size_t>(p) * hidden_];
      forward_patch(patch.data(), h);
      for (int j = 0; j < hidden_; ++j) pooled[j] += h[j];
    }
    const double inv = 1.0 / npatch;
    for (double& v : pooled) v *= inv;
    std::vector<double> e(embed_, 0.0);
    for (int k = 0; k < embed_; ++k) {
      const double* row = &w2_[static_cast<std::size_t>(k) * hidden_];
      double acc = 0.0;
      for (int j = 0; j < hidden_; ++j) acc += row[j] * pooled[j];
      e[k] = acc;
    }

    double rr = 0.0, ee = 0.0, re = 0.0;
    for (int k = 0; k < embed_; ++k) {
      rr += reference[k] * reference[k];
      ee += e[k] * e[k];
      re += reference[k] * e[k];
    }
    if (rr == 0.0 || ee == 0.0)
      throw Error("cosine: zero-norm input (degenerate embedding)");
    const double nr = std::sqrt(rr), ne = std::sqrt(ee);
    const double cos_val = re / (nr * ne);
    const double s = (sign == LossSign::PushAway) ? 1.0 : -1.0;

    LossGrad out;
    out.cosine = cos_val;
    out.loss = s * cos_val;
    out.grad.assign(img.size(), 0.0);

    // d(cos)/d(e_k) = r_k/(|r||e|) - cos * e_k/|e|^2
    std::vector<double> de(embed_);
    for (int k = 0; k < embed_; ++k)
      de[k] = s * (reference[k] / (nr * ne) - cos_val * e[k] / ee);

    std::vector<double> dpool(hidden_, 0.0);
    for (int k = 0; k < embed_; ++k) {
      const double* row = &w2_[static_cast<std::size_t>(k) * hidden_];
      const double d = de[k];
      for (int j = 0; j < hidden_; ++j) dpool[j] += d * row[j];
    }

    std::vector<double> dpre(hidden_);
    std::vector<double> dpatch(pd);
    for (int p = 0; p < npatch; ++p) {
      const double* h = &hs[static_cast<std::size_t>(p) * hidden_];
      if (nl_ == Nonlinearity::Tanh) {
        for (int j = 0; j < hidden_; ++j) dpre[j] = dpool[j] * inv * (1.0 - h[j] * h[j]);
      } else {
        for (int j = 0; j < hidden_; ++j) dpre[j] = dpool[j] * inv;
      }
      std::fill(dpatch.begin(), dpatch.end(), 0.0);
      for (int j = 0; j < hidden_; ++j) {
        const double d = dpre[j];
        if (d == 0.0) continue;
        const double* row = &w1_[static_cast<std::size_t>(j) * pd];
        for (int i = 0; i < pd; ++i) dpatch[i] += d * row[i];
      }
      scatter_patch(out.grad.data(), img, p / grid, p % grid, dpatch.data());
    }
    return out;
  }

  // Versioned binary weight file: magic, dims, then row-major doubles.
  void save_weights(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open weight file for writing: " + path);
    out.write(kMagic, 8);
    const std::uint32_t header[5] = {
        static_cast<std::uint32_t>(input_hw_), static_cast<std::uint32_t>(kPatch),
        static_cast<std::uint32_t>(hidden_), static_cast<std::uint32_t>(embed_),
        static_cast<std::uint32_t>(nl_)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(w1_.data()),
              static_cast<std::streamsize>(w1_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(w2_.data()),
              static_cast<std::streamsize>(w2_.size() * sizeof(double)));
    if (!out) throw IoError("weight file write failed: " + path);
  }

  static ReferenceEncoder load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file: " + path);
    char magic[8] = {};
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw IoError("not an encoder weight file (bad magic): " + path);
    std::uint32_t header[5] = {};
    in.read(reinterpret_cast<char*>(header), sizeof header);
    if (!in) throw IoError("truncated weight file header: " + path);
    if (header[1] != kPatch) throw IoError("unsupported patch size in weight file");
    if (header[4] > 1) throw IoError("unknown nonlinearity tag in weight file");
    ReferenceEncoder enc(0, static_cast<int>(header[0]), static_cast<int>(header[2]),
                         static_cast<int>(header[3]),
                         static_cast<Nonlinearity>(header[4]));
    in.read(reinterpret_cast<char*>(enc.w1_.data()),
            static_cast<std::streamsize>(enc.w1_.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(enc.w2_.data()),
            static_cast<std::streamsize>(enc.w2_.size() * sizeof(double)));
    if (!in) throw IoError("truncated weight file payload: " + path);
    in.peek();
    if (!in.eof()) throw IoError("trailing bytes in weight file: " + path);
    return enc;
  }

  int patch_dim() const { return kPatch * kPatch * kChannels; }

 private:
  static constexpr const char kMagic[9] = "VHTKENC1";

  void check_dims(const ImageTensor& img) const {
    if (img.height != input_hw_ || img.width != input_hw_)
      throw Error("embed: image is " + std::to_string(img.height) + "x" +
                  std::to_string(img.width) + " but backend expects " +
                  std::to_string(input_hw_) + "x" + std::to_string(input_hw_));
  }

  void gather_patch(const ImageTensor& img, int py, int px, double* buf) const {
    const int y0 = py * kPatch, x0 = px * kPatch;
    const std::size_t rowlen = static_cast<std::size_t>(kPatch) * kChannels;
    for (int dy = 0; dy < kPatch; ++dy) {
      const double* src =
          &img.data[(static_cast<std::size_t>(y0 + dy) * img.width + x0) * kChannels];
      std::memcpy(buf + dy * rowlen, src, rowlen * sizeof(double));
    }
  }

  void scatter_patch(double* grad, const ImageTensor& img, int py, int px,
                     const double* buf) const {
    const int y0 = py * kPatch, x0 = px * kPatch;
    const std::size_t rowlen = static_cast<std::size_t>(kPatch) * kChannels;
    for (int dy = 0; dy < kPatch; ++dy) {
      double* dst = &grad[(static_cast<std::size_t>(y0 + dy) * img.width + x0) * kChannels];
      for (std::size_t i = 0; i < rowlen; ++i) dst[i] += buf[dy * rowlen + i];
    }
  }

  void forward_patch(const double* patch, double* h) const {
    const int pd = patch_dim();
    for (int j = 0; j < hidden_; ++j) {
      const double* row = &w1_[static_cast<std::size_t>(j) * pd];
      double acc = 0.0;
      for (int i = 0; i < pd; ++i) acc += row[i] * patch[i];
      h[j] = (nl_ == Nonlinearity::Tanh) ? std::tanh(acc) : acc;
    }
  }

  // Mixed-gain init. Rows are zero-sum (no response to uniform shifts) and
  // every fourth row runs at a much higher gain: those rows saturate on
  // natural content but carry large pixel gradients near their transition,
  // which keeps raw-gradient (non-sign) attack steps moving at the default
  // step size. Scales are part of the encoder definition; changing them
  // changes every downstream attack result.
  void init_weights(std::uint64_t seed) {
    const int pd = patch_dim();
    w1_.assign(static_cast<std::size_t>(hidden_) * pd, 0.0);
    w2_.assign(static_cast<std::size_t>(embed_) * hidden_, 0.0);
    Rng rng(derive_seed(seed, 1));
    const double smooth = 1.0 / std::sqrt(static_cast<double>(pd));
    const double sharp = 16.0 * smooth;
    for (int j = 0; j < hidden_; ++j) {
      const double scale = (j % 4 == 0) ? sharp : smooth;
      double* row = &w1_[static_cast<std::size_t>(j) * pd];
      double mean = 0.0;
      for (int i = 0; i < pd; ++i) {
        row[i] = rng.normal(0.0, scale);
        mean += row[i];
      }
      mean /= pd;
      for (int i = 0; i < pd; ++i) row[i] -= mean;
    }
    Rng rng2(derive_seed(seed, 2));
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (auto& w : w2_) w = rng2.normal(0.0, w2_scale);
  }

  int input_hw_;
  int hidden_;
  int embed_;
  Nonlinearity nl_;
  std::vector<double> w1_;  // [hidden][patch_dim]
  std::vector<double> w2_;  // [embed][hidden]
};

// Central finite differences of the cosine loss at a pixel subsample.
// Deliberately knows nothing about the backend internals: it only calls
// embed(), so it stays a valid oracle for loss_and_grad.
inline std::vector<double> finite_diff_grad(const EmbeddingBackend& backend,
                                            const std::vector<double>& reference,
                                            const ImageTensor& img, LossSign sign,
                                            double h,
                                            const std::vector<std::size_t>& indices) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be > 0");
  const double s = (sign == LossSign::PushAway) ? 1.0 : -1.0;
  auto loss_at = [&](const ImageTensor& x) { return s * cosine(reference, backend.embed(x)); };

  std::vector<double> values(indices.size(), 0.0);
  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(indices.size())));
  std::vector<std::future<void>> futures;
  const std::size_t chunk = (indices.size() + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(indices.size(), lo + chunk);
    if (lo >= hi) break;
    futures.push_back(std::async(std::launch::async, [&, lo, hi]() {
      ImageTensor scratch = img;
      for (std::size_t n = lo; n < hi; ++n) {
        const std::size_t idx = indices[n];
        const double orig = scratch.data[idx];
        scratch.data[idx] = orig + h;
        const double up = loss_at(scratch);
        scratch.data[idx] = orig - h;
        const double down = loss_at(scratch);
        scratch.data[idx] = orig;
        values[n] = (up - down) / (2.0 * h);
      }
    }));
  }
  for (auto& f : futures) f.get();
  return values;
}

inline std::vector<std::size_t> sample_pixel_indices(std::size_t total,
                                                     std::size_t count,
                                                     std::uint64_t seed) {
  if (count > total) count = total;
  Rng rng(seed);
  std::vector<std::size_t> all(total);
  for (std::size_t i = 0; i < total; ++i) all[i] = i;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  return all;
}

// l2-norm relative disagreement; the gradcheck pass/fail statistic.
inline double relative_error_l2(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("relative_error_l2: size mismatch");
  double da = 0.0, db = 0.0, dd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    da += a[i] * a[i];
    db += b[i] * b[i];
    const double d = a[i] - b[i];
    dd += d * d;
  }
  const double denom = std::max(std::sqrt(da), std::sqrt(db));
  if (denom == 0.0) return 0.0;
  return std::sqrt(dd) / denom;
}

}  // namespace vhtk
