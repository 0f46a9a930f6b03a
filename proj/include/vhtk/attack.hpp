#pragma once
// l-infinity bounded adversarial perturbations against an embedding backend.
//
// Objective (minimized):
//   PushAway:   l = +cos(e0, e(x+delta))   from delta = 0
//   PullToward: l = -cos(e0, e(x+delta))   from random +-5/255 init, with
//               early stopping once cosine recovers while the perturbation
//               is still measurably non-zero
//
// Update rules:
//   PGD:    delta <- clip(delta - gamma * grad,      -eps, eps)
//   I-FGSM: delta <- clip(delta - gamma * sign(grad), -eps, eps)
//
// After every step x+delta is re-clipped to [0,1] and delta adjusted to
// match, so the budget and the box both hold exactly at every iterate.
// The reported delta* is the best-so-far (lowest objective) iterate, not
// the last one.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vhtk/dataset.hpp"
#include "vhtk/embedding.hpp"
#include "vhtk/errors.hpp"
#include "vhtk/image.hpp"
#include "vhtk/image_io.hpp"
#include "vhtk/rng.hpp"

namespace vhtk {

inline constexpr double kDefaultEpsilon = 8.0 / 255.0;
inline constexpr double kDefaultStepGamma = 0.5 / 255.0;
inline constexpr int kDefaultIterationsPush = 500;
inline constexpr int kDefaultIterationsPull = 100;
inline constexpr double kRademacherInitScale = 5.0 / 255.0;

using AttackMode = LossSign;

enum class AttackInit { Zero, Rademacher };

struct EarlyStop {
  double cosine_threshold = 0.999;
  double min_delta_inf_norm = 1.0 / 255.0;
};

struct AttackConfig {
  AttackMethod method = AttackMethod::Ifgsm;
  double epsilon = kDefaultEpsilon;
  double step_gamma = kDefaultStepGamma;
  int iterations = kDefaultIterationsPush;
  AttackMode mode = AttackMode::PushAway;
  AttackInit init = AttackInit::Zero;
  std::optional<EarlyStop> early_stop;  // PullToward only
  std::uint64_t seed = 0;

  static AttackConfig for_mode(AttackMode mode, AttackMethod method) {
    AttackConfig c;
    c.method = method;
    c.mode = mode;
    if (mode == AttackMode::PullToward) {
      c.iterations = kDefaultIterationsPull;
      c.init = AttackInit::Rademacher;
      c.early_stop = EarlyStop{};
    }
    return c;
  }

  void validate() const {
    if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
    if (!(step_gamma > 0.0)) throw ConfigError("step_gamma must be > 0");
    if (epsilon > 0.0 && step_gamma > epsilon)
      throw ConfigError("step_gamma must not exceed epsilon");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (mode == AttackMode::PullToward && epsilon > 0.0 && init != AttackInit::Rademacher)
      throw ConfigError("PullToward requires the random +-5/255 init");
  }
};

struct IterationStat {
  double loss = 0.0;
  double cosine = 0.0;
};

struct AttackResult {
  std::vector<double> delta;     // image-shaped, |delta_i| <= epsilon exactly
  ImageTensor adversarial_image; // == clip(img + delta, 0, 1)
  std::vector<IterationStat> trace;  // index 0 is the pre-step state
  bool stopped_early = false;
  int iterations_run = 0;
  int best_iteration = 0;
  double best_loss = 0.0;
  double best_cosine = 0.0;
};

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline std::vector<double> pgd_step(std::vector<double> delta,
                                    const std::vector<double>& grad, double gamma,
                                    double epsilon) {
  if (delta.size() != grad.size()) throw Error("pgd_step: size mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = std::clamp(delta[i] - gamma * grad[i], -epsilon, epsilon);
  return delta;
}

inline std::vector<double> ifgsm_step(std::vector<double> delta,
                                      const std::vector<double>& grad, double gamma,
                                      double epsilon) {
  if (delta.size() != grad.size()) throw Error("ifgsm_step: size mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = std::clamp(delta[i] - gamma * sign0(grad[i]), -epsilon, epsilon);
  return delta;
}

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

namespace detail {

// Keep x+delta inside [0,1] by folding the overshoot back into delta, then
// re-clip to the budget: rounding in (clip(x+d) - x) can otherwise carry
// delta a few ulps past epsilon.
inline void box_adjust(std::vector<double>& delta, const ImageTensor& img,
                       double epsilon) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double boxed = std::clamp(img.data[i] + delta[i], 0.0, 1.0) - img.data[i];
    delta[i] = std::clamp(boxed, -epsilon, epsilon);
  }
}

inline ImageTensor compose(const ImageTensor& img, const std::vector<double>& delta) {
  ImageTensor adv = img;
  for (std::size_t i = 0; i < adv.data.size(); ++i)
    adv.data[i] = std::clamp(adv.data[i] + delta[i], 0.0, 1.0);
  return adv;
}

}  // namespace detail

// Called after the init and after every update with the current iterate;
// used by tests to verify the per-iteration budget/box invariants.
using AttackObserver =
    std::function<void(int iteration, const std::vector<double>& delta,
                       const ImageTensor& adversarial)>;

inline AttackResult attack(const EmbeddingBackend& backend, const ImageTensor& img,
                           const AttackConfig& config,
                           const AttackObserver& observe = {}) {
  config.validate();
  const auto [bh, bw] = backend.input_size();
  if (img.height != bh || img.width != bw)
    throw Error("attack: image must match backend input size");
  if (!in_unit_range(img)) throw Error("attack: image pixels must lie in [0,1]");
  if (!backend.supports_gradient())
    throw CapabilityError("attack requires a gradient-capable backend");

  const std::vector<double> e0 = backend.embed(img);

  AttackResult res;
  res.delta.assign(img.size(), 0.0);

  if (config.epsilon == 0.0) {  // degenerate budget: nothing to optimize
    res.adversarial_image = img;
    const double c = cosine(e0, backend.embed(img));
    res.trace.push_back({config.mode == AttackMode::PushAway ? c : -c, c});
    res.best_loss = res.trace[0].loss;
    res.best_cosine = c;
    return res;
  }

  if (config.init == AttackInit::Rademacher) {
    Rng rng(config.seed);
    for (double& d : res.delta)
      d = std::clamp(rng.rademacher() * kRademacherInitScale, -config.epsilon,
                     config.epsilon);
  }
  detail::box_adjust(res.delta, img, config.epsilon);

  const bool gate_delta =
      config.mode == AttackMode::PullToward && config.early_stop.has_value();
  auto feasible = [&](double delta_inf) {
    return !gate_delta || delta_inf >= config.early_stop->min_delta_inf_norm;
  };

  ImageTensor adv = detail::compose(img, res.delta);
  LossGrad lg = backend.loss_and_grad(e0, adv, config.mode);
  res.trace.push_back({lg.loss, lg.cosine});
  if (observe) observe(0, res.delta, adv);

  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_delta = res.delta;
  int best_iter = 0;
  double best_cos = lg.cosine;
  if (feasible(inf_norm(res.delta))) {
    best_loss = lg.loss;
  }

  std::vector<double> delta = std::move(res.delta);
  for (int it = 1; it <= config.iterations; ++it) {
    delta = (config.method == AttackMethod::Pgd)
                ? pgd_step(std::move(delta), lg.grad, config.step_gamma, config.epsilon)
                : ifgsm_step(std::move(delta), lg.grad, config.step_gamma,
                             config.epsilon);
    detail::box_adjust(delta, img, config.epsilon);
    adv = detail::compose(img, delta);
    lg = backend.loss_and_grad(e0, adv, config.mode);
    if (!std::isfinite(lg.loss))
      throw AttackError("non-finite loss at iteration " + std::to_string(it) +
                        " (last cosine " + std::to_string(res.trace.back().cosine) +
                        ")");
    res.trace.push_back({lg.loss, lg.cosine});
    res.iterations_run = it;
    const double dinf = inf_norm(delta);
    if (feasible(dinf) && lg.loss < best_loss) {
      best_loss = lg.loss;
      best_delta = delta;
      best_iter = it;
      best_cos = lg.cosine;
    }
    if (observe) observe(it, delta, adv);
    if (config.mode == AttackMode::PullToward && config.early_stop &&
        lg.cosine >= config.early_stop->cosine_threshold &&
        dinf >= config.early_stop->min_delta_inf_norm) {
      res.stopped_early = true;
      break;
    }
  }

  res.delta = std::move(best_delta);
  res.adversarial_image = detail::compose(img, res.delta);
  res.best_iteration = best_iter;
  res.best_loss = best_loss;
  res.best_cosine = best_cos;
  return res;
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<IterationStat>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trace: " + path);
  out << "iteration,loss,cosine\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << "," << trace[i].loss << "," << trace[i].cosine << "\n";
}

struct ExpandAdversarialOptions {
  AttackMethod method = AttackMethod::Ifgsm;
  double epsilon = kDefaultEpsilon;
  double step_gamma = kDefaultStepGamma;
  int iterations_push = kDefaultIterationsPush;
  int iterations_pull = kDefaultIterationsPull;
  EarlyStop early_stop{};
  std::uint64_t seed = 0;
  std::string trace_dir;  // when non-empty, per-case (iteration,loss,cosine) CSVs
};

struct AttackCaseReport {
  std::string case_id;
  std::string child_id;
  AttackMode mode = AttackMode::PushAway;
  int iterations_run = 0;
  bool stopped_early = false;
  double final_cosine = 0.0;
  double delta_inf_norm = 0.0;
};

struct ExpandAdversarialResult {
  std::vector<TestCase> children;
  std::vector<AttackCaseReport> reports;
};

inline AttackConfig config_for_case(const ExpandAdversarialOptions& opt, bool triggers_vh,
                                    std::uint64_t case_seed) {
  AttackConfig c = AttackConfig::for_mode(
      triggers_vh ? AttackMode::PullToward : AttackMode::PushAway, opt.method);
  c.epsilon = opt.epsilon;
  c.step_gamma = opt.step_gamma;
  c.iterations = triggers_vh ? opt.iterations_pull : opt.iterations_push;
  if (triggers_vh) c.early_stop = opt.early_stop;
  c.seed = case_seed;
  return c;
}

// One adversarial child per case in `ds`: PullToward where the flag says the
// case already triggers VH, PushAway otherwise. Images are attacked at the
// backend's input resolution (bilinear resize) and saved at that resolution
// as PNG under `images_dir`; child image_refs get `image_ref_prefix`
// prepended. Per-case seeds derive from the case id, so results do not
// depend on scheduling or on which other cases are present.
inline ExpandAdversarialResult expand_adversarial(
    const Dataset& ds, const EmbeddingBackend& backend,
    const std::map<std::string, bool>& vh_flags, const ExpandAdversarialOptions& opt,
    const std::string& images_dir, const std::string& image_ref_prefix = "") {
  for (const auto& c : ds.cases)
    if (!vh_flags.count(c.id))
      throw Error("expand_adversarial: no VH flag for case \"" + c.id + "\"");
  std::filesystem::create_directories(images_dir);
  if (!opt.trace_dir.empty()) std::filesystem::create_directories(opt.trace_dir);

  const std::size_t n = ds.cases.size();
  ExpandAdversarialResult result;
  result.children.resize(n);
  result.reports.resize(n);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      const TestCase& parent = ds.cases[i];
      try {
        const bool triggered = vh_flags.at(parent.id);
        const AttackConfig config =
            config_for_case(opt, triggered, derive_seed(opt.seed, fnv1a64(parent.id)));

        ImageTensor src = read_image(ds.resolve_image_path(parent));
        const auto [bh, bw] = backend.input_size();
        src = resize_bilinear(src, bh, bw);

        const AttackResult ar = attack(backend, src, config);

        TestCase child;
        child.id = parent.id + "~" + to_string(opt.method);
        const std::string filename = child.id + ".png";
        write_png((std::filesystem::path(images_dir) / filename).string(),
                  ar.adversarial_image);
        child.image_ref = image_ref_prefix + filename;
        child.question = parent.question;
        child.answer = parent.answer;
        child.provenance = Provenance::adversarial(opt.method);
        child.parent_id = parent.id;
        result.children[i] = std::move(child);

        AttackCaseReport& rep = result.reports[i];
        rep.case_id = parent.id;
        rep.child_id = result.children[i].id;
        rep.mode = config.mode;
        rep.iterations_run = ar.iterations_run;
        rep.stopped_early = ar.stopped_early;
        rep.final_cosine = ar.best_cosine;
        rep.delta_inf_norm = inf_norm(ar.delta);
        if (!opt.trace_dir.empty())
          write_trace_csv((std::filesystem::path(opt.trace_dir) / (rep.child_id + ".csv"))
                              .string(),
                          ar.trace);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const unsigned workers = std::max(
      1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return result;
}

}  // namespace vhtk
