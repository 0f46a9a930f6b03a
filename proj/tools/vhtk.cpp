// vhtk: expand visual-hallucination test cases (negation, common image
// perturbations, embedding-space adversarial perturbations) and evaluate
// models with accuracy + symmetric accuracy.
//
// The pipeline is a DAG driven by subcommands:
//   negate -> perturb/attack -> eval -> reports
// Every command writes a run manifest next to its primary output.

#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vhtk/attack.hpp"
#include "vhtk/dataset.hpp"
#include "vhtk/embedding.hpp"
#include "vhtk/harness.hpp"
#include "vhtk/manifest.hpp"
#include "vhtk/metrics.hpp"
#include "vhtk/negation.hpp"
#include "vhtk/perturb.hpp"
#include "vhtk/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CliConfig {
  std::uint64_t seed = 0;
  // eval
  int repetitions = 1;
  double temperature = 0.0;
  std::string suffix = vhtk::EvalRunConfig{}.answer_instruction_suffix;
  // perturb
  double sigma = vhtk::kDefaultNoiseSigma;
  double brightness_shift = vhtk::kDefaultBrightnessShift;
  int blur_radius = vhtk::kDefaultBlurRadius;
  int jpeg_quality = vhtk::kDefaultJpegQuality;
  // attack
  std::string method = "ifgsm";
  double epsilon = vhtk::kDefaultEpsilon;
  double gamma = vhtk::kDefaultStepGamma;
  int iters_push = vhtk::kDefaultIterationsPush;
  int iters_pull = vhtk::kDefaultIterationsPull;
  // encoder
  std::string encoder_file;
  std::uint64_t encoder_seed = 7;
  // remote endpoints
  vhtk::RemoteClientConfig remote;
  vhtk::RemoteClientConfig chat;
};

void overlay_remote(const nlohmann::json& j, vhtk::RemoteClientConfig& cfg) {
  cfg.base_url = j.value("base_url", cfg.base_url);
  cfg.model_name = j.value("model_name", cfg.model_name);
  cfg.api_key_env_var = j.value("api_key_env_var", cfg.api_key_env_var);
  cfg.max_concurrent_requests =
      j.value("max_concurrent_requests", cfg.max_concurrent_requests);
  cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
  if (j.contains("retry")) {
    cfg.retry.attempts = j["retry"].value("attempts", cfg.retry.attempts);
    cfg.retry.backoff_ms = j["retry"].value("backoff_ms", cfg.retry.backoff_ms);
  }
}

CliConfig load_cli_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw vhtk::ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw vhtk::ConfigError("malformed config " + path + ": " + e.what());
  }
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("eval")) {
    cfg.repetitions = j["eval"].value("repetitions", cfg.repetitions);
    cfg.temperature = j["eval"].value("temperature", cfg.temperature);
    cfg.suffix = j["eval"].value("answer_instruction_suffix", cfg.suffix);
  }
  if (j.contains("perturb")) {
    cfg.sigma = j["perturb"].value("sigma", cfg.sigma);
    cfg.brightness_shift = j["perturb"].value("brightness", cfg.brightness_shift);
    cfg.blur_radius = j["perturb"].value("radius", cfg.blur_radius);
    cfg.jpeg_quality = j["perturb"].value("quality", cfg.jpeg_quality);
  }
  if (j.contains("attack")) {
    cfg.method = j["attack"].value("method", cfg.method);
    cfg.epsilon = j["attack"].value("epsilon", cfg.epsilon);
    cfg.gamma = j["attack"].value("gamma", cfg.gamma);
    cfg.iters_push = j["attack"].value("iterations_push", cfg.iters_push);
    cfg.iters_pull = j["attack"].value("iterations_pull", cfg.iters_pull);
  }
  if (j.contains("encoder")) {
    cfg.encoder_file = j["encoder"].value("file", cfg.encoder_file);
    cfg.encoder_seed = j["encoder"].value("seed", cfg.encoder_seed);
  }
  if (j.contains("remote")) overlay_remote(j["remote"], cfg.remote);
  if (j.contains("chat")) overlay_remote(j["chat"], cfg.chat);
  return cfg;
}

std::string default_manifest_path(const std::string& primary_output,
                                  const std::string& command) {
  if (!primary_output.empty()) return primary_output + ".manifest.json";
  return "vhtk-" + command + ".manifest.json";
}

// When the output dataset lands in a different directory, image refs of
// copied cases must keep resolving; rewrite them relative to the new home.
void rebase_image_refs(vhtk::Dataset& ds, const fs::path& new_dir) {
  for (auto& c : ds.cases) {
    const fs::path resolved(ds.resolve_image_path(c));
    std::error_code ec;
    const fs::path rel = fs::proximate(resolved, new_dir, ec);
    c.image_ref = (ec ? resolved : rel).generic_string();
  }
  ds.base_dir = new_dir.string();
}

vhtk::AttackMethod parse_method(const std::string& m) {
  if (m == "ifgsm") return vhtk::AttackMethod::Ifgsm;
  if (m == "pgd") return vhtk::AttackMethod::Pgd;
  throw vhtk::ConfigError("unknown attack method \"" + m + "\" (ifgsm|pgd)");
}

std::unique_ptr<vhtk::EmbeddingBackend> make_backend(const CliConfig& cfg) {
  if (!cfg.encoder_file.empty())
    return std::make_unique<vhtk::ReferenceEncoder>(
        vhtk::ReferenceEncoder::load_weights(cfg.encoder_file));
  return std::make_unique<vhtk::ReferenceEncoder>(cfg.encoder_seed);
}

std::unique_ptr<vhtk::ModelClient> make_client(const std::string& spec,
                                               const CliConfig& cfg,
                                               const vhtk::Dataset& ds) {
  if (spec == "remote") return std::make_unique<vhtk::RemoteModelClient>(cfg.remote);
  if (spec.rfind("mock:", 0) != 0)
    throw vhtk::ConfigError("unknown client spec \"" + spec +
                            "\" (mock:oracle|mock:always-yes|mock:always-no|"
                            "mock:noisy-oracle:P|mock:random:P|remote)");
  const std::string rest = spec.substr(5);
  vhtk::MockPolicy policy;
  policy.seed = cfg.seed;
  if (rest == "oracle") {
    policy.kind = vhtk::MockPolicy::Kind::Oracle;
  } else if (rest == "always-yes") {
    policy.kind = vhtk::MockPolicy::Kind::AlwaysYes;
  } else if (rest == "always-no") {
    policy.kind = vhtk::MockPolicy::Kind::AlwaysNo;
  } else if (rest.rfind("noisy-oracle", 0) == 0) {
    policy.kind = vhtk::MockPolicy::Kind::NoisyOracle;
    if (rest.size() > 13) policy.p_correct = std::stod(rest.substr(13));
  } else if (rest.rfind("random", 0) == 0) {
    policy.kind = vhtk::MockPolicy::Kind::RandomGuess;
    if (rest.size() > 7) policy.p_yes = std::stod(rest.substr(7));
  } else {
    throw vhtk::ConfigError("unknown mock kind \"" + rest + "\"");
  }
  return std::make_unique<vhtk::MockModelClient>(policy, ds);
}

std::vector<std::string> collect_argv(int argc, char** argv) {
  return std::vector<std::string>(argv, argv + argc);
}

int cmd_negate(const std::vector<std::string>& argv, const CliConfig& cfg,
               const std::string& in_path, const std::string& out_path,
               const std::string& strategy, bool use_llm,
               const std::string& manifest_path) {
  vhtk::Dataset ds = vhtk::load_dataset(in_path);
  const fs::path out_dir = fs::absolute(out_path).parent_path();
  rebase_image_refs(ds, out_dir);

  std::unique_ptr<vhtk::RemoteChatClient> chat;
  if (use_llm) chat = std::make_unique<vhtk::RemoteChatClient>(cfg.chat);

  struct Failure {
    std::string id;
    std::string reason;
  };
  std::vector<Failure> failures;
  std::mutex failures_mutex;
  std::size_t skipped = 0;

  std::vector<const vhtk::TestCase*> targets;
  for (const auto& c : ds.cases) {
    if (c.provenance.kind == vhtk::Provenance::Kind::Negated) {
      std::cerr << "warning: skipping already-negated case \"" << c.id << "\"\n";
      ++skipped;
      continue;
    }
    targets.push_back(&c);
  }

  std::vector<std::optional<vhtk::TestCase>> children(targets.size());
  const int workers = use_llm ? chat->max_concurrency() : 1;
  vhtk::detail::parallel_for_bounded(targets.size(), workers, [&](std::size_t i) {
    const vhtk::TestCase& parent = *targets[i];
    vhtk::QuestionNegator negator;
    if (use_llm) {
      negator = [&](const std::string& q) { return vhtk::negate_question_llm(*chat, q); };
    } else if (strategy == "auto") {
      negator = [&](const std::string& q) { return vhtk::negate_question_auto(q); };
    } else if (strategy == "false-prefix") {
      negator = [](const std::string& q) {
        vhtk::NegationRuleConfig rc;
        rc.strategy = vhtk::NegationStrategy::FalsePrefix;
        return vhtk::negate_question_rules(q, rc);
      };
    } else if (strategy == "article-swap") {
      negator = [](const std::string& q) {
        vhtk::NegationRuleConfig rc;
        if (!vhtk::question_has_article(q)) {
          std::cerr << "note: no article in question, falling back to false-prefix\n";
          rc.strategy = vhtk::NegationStrategy::FalsePrefix;
        } else {
          rc.strategy = vhtk::NegationStrategy::ArticleSwap;
        }
        return vhtk::negate_question_rules(q, rc);
      };
    } else {
      throw vhtk::ConfigError("unknown strategy \"" + strategy +
                              "\" (auto|false-prefix|article-swap)");
    }
    try {
      children[i] = vhtk::negate_case(parent, negator);
    } catch (const vhtk::Error& e) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back({parent.id, e.what()});
    }
  });

  vhtk::Dataset out = ds;
  for (auto& child : children)
    if (child) out.cases.push_back(std::move(*child));
  vhtk::save_dataset(out, out_path);

  const vhtk::PairIndex pairs = vhtk::pair_index(out);
  std::cout << "negate: " << pairs.pairs.size() << " pairs ("
            << out.cases.size() << " cases total, " << skipped << " skipped)\n";
  for (const auto& f : failures)
    std::cerr << "negation failed for \"" << f.id << "\": " << f.reason << "\n";

  ordered_json config;
  config["in"] = in_path;
  config["out"] = out_path;
  config["strategy"] = use_llm ? "llm" : strategy;
  config["pairs"] = pairs.pairs.size();
  config["failures"] = failures.size();
  vhtk::write_manifest(manifest_path, "negate", argv, config, cfg.seed);
  return failures.empty() ? 0 : 1;
}

int cmd_perturb(const std::vector<std::string>& argv, const CliConfig& cfg,
                const std::string& in_path, const std::string& out_path,
                const std::vector<std::string>& kind_names, bool all_provenance,
                const std::string& manifest_path) {
  vhtk::Dataset ds = vhtk::load_dataset(in_path);
  const fs::path out_dir = fs::absolute(out_path).parent_path();
  rebase_image_refs(ds, out_dir);

  std::vector<vhtk::PerturbKind> kinds;
  for (const auto& k : kind_names) {
    if (k == "gaussian_noise") kinds.push_back(vhtk::PerturbKind::GaussianNoise);
    else if (k == "brightness") kinds.push_back(vhtk::PerturbKind::Brightness);
    else if (k == "defocus_blur") kinds.push_back(vhtk::PerturbKind::DefocusBlur);
    else if (k == "jpeg_compression") kinds.push_back(vhtk::PerturbKind::JpegCompression);
    else throw vhtk::ConfigError("unknown perturbation kind \"" + k + "\"");
  }

  const std::string stem = fs::path(out_path).stem().string();
  const fs::path images_dir = out_dir / (stem + "_images");
  fs::create_directories(images_dir);
  const std::string ref_prefix = stem + "_images/";

  std::vector<const vhtk::TestCase*> targets;
  for (const auto& c : ds.cases)
    if (all_provenance || c.provenance.kind == vhtk::Provenance::Kind::Original)
      targets.push_back(&c);

  static const std::map<vhtk::PerturbKind, std::string> kSuffix = {
      {vhtk::PerturbKind::GaussianNoise, "~gn"},
      {vhtk::PerturbKind::Brightness, "~br"},
      {vhtk::PerturbKind::DefocusBlur, "~db"},
      {vhtk::PerturbKind::JpegCompression, "~jc"}};

  struct Task {
    const vhtk::TestCase* parent;
    vhtk::PerturbKind kind;
  };
  std::vector<Task> tasks;
  for (const auto* c : targets)
    for (auto kind : kinds) tasks.push_back({c, kind});

  std::vector<vhtk::TestCase> children(tasks.size());
  vhtk::detail::parallel_for_bounded(
      tasks.size(), static_cast<int>(std::thread::hardware_concurrency()),
      [&](std::size_t i) {
        const Task& task = tasks[i];
        const vhtk::TestCase& parent = *task.parent;
        vhtk::TestCase child;
        child.id = parent.id + kSuffix.at(task.kind);
        child.question = parent.question;
        child.answer = parent.answer;
        child.provenance = vhtk::Provenance::common(task.kind);
        child.parent_id = parent.id;

        const vhtk::ImageTensor img = vhtk::read_image(ds.resolve_image_path(parent));
        if (task.kind == vhtk::PerturbKind::JpegCompression) {
          // persist the actual encoded bytes, not a re-encode
          const auto bytes = vhtk::jpeg_encode(img, cfg.jpeg_quality);
          const std::string filename = child.id + ".jpg";
          vhtk::write_file_bytes((images_dir / filename).string(), bytes.data(),
                                 bytes.size());
          child.image_ref = ref_prefix + filename;
        } else {
          vhtk::PerturbationConfig pc;
          pc.kind = task.kind;
          pc.sigma = cfg.sigma;
          pc.shift = cfg.brightness_shift;
          pc.radius = cfg.blur_radius;
          pc.seed = vhtk::derive_seed(cfg.seed, vhtk::fnv1a64(child.id));
          const vhtk::ImageTensor out_img = vhtk::apply_perturbation(img, pc);
          const std::string filename = child.id + ".png";
          vhtk::write_png((images_dir / filename).string(), out_img);
          child.image_ref = ref_prefix + filename;
        }
        children[i] = std::move(child);
      });

  vhtk::Dataset out = ds;
  for (auto& child : children) out.cases.push_back(std::move(child));
  vhtk::save_dataset(out, out_path);
  std::cout << "perturb: " << children.size() << " children from " << targets.size()
            << " cases\n";

  ordered_json config;
  config["in"] = in_path;
  config["out"] = out_path;
  config["kinds"] = kind_names;
  config["sigma"] = cfg.sigma;
  config["brightness"] = cfg.brightness_shift;
  config["radius"] = cfg.blur_radius;
  config["quality"] = cfg.jpeg_quality;
  config["all_provenance"] = all_provenance;
  vhtk::write_manifest(manifest_path, "perturb", argv, config, cfg.seed);
  return 0;
}

int cmd_attack(const std::vector<std::string>& argv, const CliConfig& cfg,
               const std::string& in_path, const std::string& out_path,
               const std::string& flags_path, bool all_provenance,
               const std::string& save_encoder, const std::string& trace_dir,
               const std::string& manifest_path) {
  if (flags_path.empty() || !fs::exists(flags_path))
    throw vhtk::ConfigError(
        "flags file not found; run `vhtk eval --flags-out ...` first and pass "
        "--flags-file");
  vhtk::Dataset ds = vhtk::load_dataset(in_path);
  const fs::path out_dir = fs::absolute(out_path).parent_path();
  rebase_image_refs(ds, out_dir);

  const std::map<std::string, bool> flags = vhtk::load_flags(flags_path);
  const auto backend = make_backend(cfg);
  if (!save_encoder.empty())
    dynamic_cast<const vhtk::ReferenceEncoder&>(*backend).save_weights(save_encoder);

  vhtk::Dataset targets;
  targets.name = ds.name;
  targets.base_dir = ds.base_dir;
  for (const auto& c : ds.cases)
    if (all_provenance || c.provenance.kind == vhtk::Provenance::Kind::Original)
      targets.cases.push_back(c);

  const std::string stem = fs::path(out_path).stem().string();
  const fs::path images_dir = out_dir / (stem + "_images");

  vhtk::ExpandAdversarialOptions opt;
  opt.method = parse_method(cfg.method);
  opt.epsilon = cfg.epsilon;
  opt.step_gamma = cfg.gamma;
  opt.iterations_push = cfg.iters_push;
  opt.iterations_pull = cfg.iters_pull;
  opt.seed = cfg.seed;
  opt.trace_dir = trace_dir;

  const vhtk::ExpandAdversarialResult result = vhtk::expand_adversarial(
      targets, *backend, flags, opt, images_dir.string(), stem + "_images/");

  vhtk::Dataset out = ds;
  for (const auto& child : result.children) out.cases.push_back(child);
  vhtk::save_dataset(out, out_path);
  std::cout << "attack: " << result.children.size() << " adversarial children ("
            << vhtk::to_string(opt.method) << ", eps " << opt.epsilon << ")\n";

  ordered_json per_case = ordered_json::array();
  for (const auto& rep : result.reports) {
    ordered_json r;
    r["case_id"] = rep.case_id;
    r["child_id"] = rep.child_id;
    r["mode"] = rep.mode == vhtk::AttackMode::PushAway ? "push-away" : "pull-toward";
    r["iterations_run"] = rep.iterations_run;
    r["stopped_early"] = rep.stopped_early;
    r["final_cosine"] = rep.final_cosine;
    r["delta_inf_norm"] = rep.delta_inf_norm;
    per_case.push_back(r);
  }
  ordered_json config;
  config["in"] = in_path;
  config["out"] = out_path;
  config["flags_file"] = flags_path;
  config["method"] = cfg.method;
  config["epsilon"] = cfg.epsilon;
  config["gamma"] = cfg.gamma;
  config["iterations_push"] = cfg.iters_push;
  config["iterations_pull"] = cfg.iters_pull;
  config["encoder_file"] = cfg.encoder_file;
  config["encoder_seed"] = cfg.encoder_seed;
  config["cases"] = per_case;
  vhtk::write_manifest(manifest_path, "attack", argv, config, cfg.seed);
  return 0;
}

int cmd_eval(const std::vector<std::string>& argv, const CliConfig& cfg,
             const std::string& in_path, const std::string& client_spec,
             const std::string& report_path, std::string outcomes_path,
             std::string flags_path, const std::string& manifest_path) {
  const vhtk::Dataset ds = vhtk::load_dataset(in_path);
  const auto client = make_client(client_spec, cfg, ds);

  vhtk::EvalRunConfig run;
  run.repetitions = cfg.repetitions;
  run.temperature = cfg.temperature;
  run.answer_instruction_suffix = cfg.suffix;

  const std::vector<vhtk::EvalOutcome> outcomes = vhtk::evaluate(ds, *client, run);
  if (outcomes_path.empty())
    outcomes_path = fs::path(report_path).replace_extension(".outcomes.jsonl").string();
  if (flags_path.empty())
    flags_path = fs::path(report_path).replace_extension(".flags.json").string();
  vhtk::save_outcomes(outcomes, outcomes_path);
  vhtk::save_flags(vhtk::vh_flags(outcomes, ds), flags_path);

  const vhtk::MetricsReport report = vhtk::build_metrics_report(outcomes, ds);
  {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw vhtk::IoError("cannot write report: " + report_path);
    out << vhtk::metrics_report_to_json(report).dump(2) << "\n";
  }

  std::cout << "eval: client " << client->name() << ", " << outcomes.size()
            << " outcomes\n";
  std::cout << "  accuracy           " << report.accuracy << "\n";
  if (report.symmetric_accuracy)
    std::cout << "  symmetric accuracy " << *report.symmetric_accuracy << "\n";
  else
    std::cout << "  symmetric accuracy n/a (no pairs)\n";

  ordered_json config;
  config["in"] = in_path;
  config["client"] = client_spec;
  config["repetitions"] = cfg.repetitions;
  config["temperature"] = cfg.temperature;
  config["answer_instruction_suffix"] = cfg.suffix;
  config["report"] = report_path;
  config["outcomes"] = outcomes_path;
  config["flags_out"] = flags_path;
  vhtk::write_manifest(manifest_path, "eval", argv, config, cfg.seed);
  return 0;
}

int cmd_verify_theory(const std::vector<std::string>& argv, const CliConfig& cfg,
                      std::vector<double> grid_p, std::vector<double> grid_q,
                      std::int64_t n, const std::string& out_csv,
                      const std::string& manifest_path) {
  if (grid_p.empty()) grid_p = {0.1, 0.3, 0.5, 0.7, 0.9};
  if (grid_q.empty()) grid_q = grid_p;
  if (n < 1000)
    std::cerr << "warning: n=" << n
              << " gives a very wide tolerance; results are close to meaningless\n";

  const std::vector<vhtk::TheoryCell> cells =
      vhtk::verify_theory(grid_p, grid_q, n, cfg.seed);
  vhtk::write_theory_csv(out_csv, cells);

  std::size_t failures = 0;
  for (const auto& c : cells) {
    if (!c.pass) ++failures;
    std::cout << "p=" << c.p << " q=" << c.q << "  acc " << c.emp_acc << " vs "
              << c.formula_acc << " (tol " << c.acc_tol << ")  sym " << c.emp_sym
              << " vs " << c.formula_sym << " (tol " << c.sym_tol << ")  "
              << (c.pass ? "ok" : "FAIL") << "\n";
  }
  std::cout << "verify-theory: " << cells.size() - failures << "/" << cells.size()
            << " cells within tolerance, csv " << out_csv << "\n";

  ordered_json config;
  config["grid_p"] = grid_p;
  config["grid_q"] = grid_q;
  config["n"] = n;
  config["out"] = out_csv;
  config["cells"] = cells.size();
  config["failures"] = failures;
  vhtk::write_manifest(manifest_path, "verify-theory", argv, config, cfg.seed);
  return failures == 0 ? 0 : 1;
}

int cmd_gradcheck(const std::vector<std::string>& argv, const CliConfig& cfg,
                  int samples, int pixels, double step,
                  const std::string& manifest_path) {
  const auto backend = make_backend(cfg);
  const auto [h, w] = backend->input_size();

  double max_rel = 0.0;
  for (int s = 0; s < samples; ++s) {
    vhtk::Rng rng(vhtk::derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(s)));
    vhtk::ImageTensor img(h, w);
    for (double& v : img.data) v = rng.uniform01();
    vhtk::ImageTensor ref_img(h, w);
    for (double& v : ref_img.data) v = rng.uniform01();
    const std::vector<double> reference = backend->embed(ref_img);

    for (const auto sign : {vhtk::LossSign::PushAway, vhtk::LossSign::PullToward}) {
      const vhtk::LossGrad lg = backend->loss_and_grad(reference, img, sign);
      const auto indices = vhtk::sample_pixel_indices(
          img.size(), static_cast<std::size_t>(pixels),
          vhtk::derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(s)));
      const std::vector<double> fd =
          vhtk::finite_diff_grad(*backend, reference, img, sign, step, indices);
      std::vector<double> analytic(indices.size());
      for (std::size_t i = 0; i < indices.size(); ++i)
        analytic[i] = lg.grad[indices[i]];
      max_rel = std::max(max_rel, vhtk::relative_error_l2(analytic, fd));
    }
  }

  const bool pass = max_rel < 1e-4;
  std::cout << "gradcheck: max relative error " << max_rel << " over " << samples
            << " samples x2 modes (" << pixels << " pixels each) -> "
            << (pass ? "ok" : "FAIL") << "\n";

  ordered_json config;
  config["samples"] = samples;
  config["pixels"] = pixels;
  config["step"] = step;
  config["encoder_file"] = cfg.encoder_file;
  config["encoder_seed"] = cfg.encoder_seed;
  config["max_relative_error"] = max_rel;
  vhtk::write_manifest(manifest_path, "gradcheck", argv, config, cfg.seed);
  return pass ? 0 : 1;
}

int cmd_export_ft(const std::vector<std::string>& argv, const CliConfig& cfg,
                  const std::string& in_path, const std::string& out_path,
                  bool rephrase, int rephrase_count, const std::string& manifest_path) {
  const vhtk::Dataset ds = vhtk::load_dataset(in_path);
  std::unique_ptr<vhtk::RemoteChatClient> chat;
  if (rephrase) chat = std::make_unique<vhtk::RemoteChatClient>(cfg.chat);
  const vhtk::FinetuneExportStats stats = vhtk::export_finetune_data(
      ds, out_path, chat.get(), rephrase ? rephrase_count : 0);
  std::cout << "export-ft: " << stats.total_records() << " records ("
            << stats.base_records << " base + " << stats.variant_records
            << " variants, " << stats.skipped_variants << " skipped)\n";
  for (const auto& wmsg : stats.warnings) std::cerr << "warning: " << wmsg << "\n";

  ordered_json config;
  config["in"] = in_path;
  config["out"] = out_path;
  config["rephrase"] = rephrase;
  config["rephrase_count"] = rephrase ? rephrase_count : 0;
  config["records"] = stats.total_records();
  vhtk::write_manifest(manifest_path, "export-ft", argv, config, cfg.seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vhtk: visual-hallucination test case expansion + evaluation"};
  app.set_version_flag("--version", vhtk::kVersion);
  app.require_subcommand(1);

  // --config is applied before flag parsing; flags override config values.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
  }

  CliConfig cfg;
  try {
    cfg = load_cli_config(config_path);
  } catch (const vhtk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  app.add_option("--config", config_path, "JSON config file");

  std::string in_path, out_path, manifest_path;
  std::string strategy = "auto";
  bool use_llm = false;

  auto* negate = app.add_subcommand("negate", "add negated counterparts");
  negate->add_option("--in", in_path, "input dataset (JSONL)")->required();
  negate->add_option("--out", out_path, "output dataset (JSONL)")->required();
  negate->add_option("--strategy", strategy, "auto|false-prefix|article-swap");
  negate->add_flag("--llm", use_llm, "use the chat endpoint instead of rules");
  negate->add_option("--manifest", manifest_path, "manifest path");
  negate->add_option("--seed", cfg.seed, "master seed");

  std::vector<std::string> kinds = {"gaussian_noise", "brightness", "defocus_blur",
                                    "jpeg_compression"};
  bool all_provenance = false;
  auto* perturb = app.add_subcommand("perturb", "add common-perturbation children");
  perturb->add_option("--in", in_path, "input dataset")->required();
  perturb->add_option("--out", out_path, "output dataset")->required();
  perturb->add_option("--kinds", kinds, "perturbation kinds")->delimiter(',');
  perturb->add_option("--sigma", cfg.sigma, "gaussian noise sigma");
  perturb->add_option("--brightness", cfg.brightness_shift, "brightness shift c");
  perturb->add_option("--radius", cfg.blur_radius, "defocus blur radius");
  perturb->add_option("--quality", cfg.jpeg_quality, "jpeg quality factor");
  perturb->add_option("--seed", cfg.seed, "master seed");
  perturb->add_flag("--all-provenance", all_provenance,
                    "derive children from every case, not just originals");
  perturb->add_option("--manifest", manifest_path, "manifest path");

  std::string flags_file, save_encoder, trace_dir;
  auto* attack = app.add_subcommand("attack", "add adversarial children");
  attack->add_option("--in", in_path, "input dataset")->required();
  attack->add_option("--out", out_path, "output dataset")->required();
  attack->add_option("--flags-file", flags_file, "VH flags from a prior eval");
  attack->add_option("--method", cfg.method, "ifgsm|pgd");
  attack->add_option("--eps", cfg.epsilon, "l-inf budget");
  attack->add_option("--gamma", cfg.gamma, "step size");
  attack->add_option("--iters", cfg.iters_push, "iterations (push-away)");
  attack->add_option("--iters-pull", cfg.iters_pull, "iterations (pull-toward)");
  attack->add_option("--encoder", cfg.encoder_file, "encoder weight file");
  attack->add_option("--encoder-seed", cfg.encoder_seed, "encoder init seed");
  attack->add_option("--save-encoder", save_encoder, "write encoder weights here");
  attack->add_option("--seed", cfg.seed, "master seed");
  attack->add_option("--trace-dir", trace_dir, "write per-case trace CSVs");
  attack->add_flag("--all-provenance", all_provenance,
                   "attack every case, not just originals");
  attack->add_option("--manifest", manifest_path, "manifest path");

  std::string client_spec = "mock:oracle";
  std::string report_path = "vhtk-report.json", outcomes_path, flags_out;
  auto* eval = app.add_subcommand("eval", "evaluate a model over a dataset");
  eval->add_option("--in", in_path, "input dataset")->required();
  eval->add_option("--client", client_spec, "mock:...|remote");
  eval->add_option("--repetitions", cfg.repetitions, "repetitions per case");
  eval->add_option("--temperature", cfg.temperature, "sampling temperature");
  eval->add_option("--suffix", cfg.suffix, "answer instruction suffix");
  eval->add_option("--report", report_path, "metrics report JSON");
  eval->add_option("--outcomes", outcomes_path, "outcomes JSONL");
  eval->add_option("--flags-out", flags_out, "VH flags JSON for `attack`");
  eval->add_option("--seed", cfg.seed, "mock seed");
  eval->add_option("--manifest", manifest_path, "manifest path");

  std::vector<double> grid_p, grid_q;
  std::int64_t n_pairs = 200000;
  std::string theory_csv = "vhtk-theory.csv";
  auto* verify = app.add_subcommand("verify-theory",
                                    "Monte Carlo check of the metric formulas");
  verify->add_option("--grid-p", grid_p, "guess probabilities")->delimiter(',');
  verify->add_option("--grid-q", grid_q, "class priors")->delimiter(',');
  verify->add_option("--n", n_pairs, "simulated pairs per cell");
  verify->add_option("--seed", cfg.seed, "simulation seed");
  verify->add_option("--out", theory_csv, "output CSV");
  verify->add_option("--manifest", manifest_path, "manifest path");

  int samples = 20, pixels = 256;
  double fd_step = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "finite-difference check of encoder gradients");
  gradcheck->add_option("--samples", samples, "random (image, reference) pairs");
  gradcheck->add_option("--pixels", pixels, "pixels sampled per check");
  gradcheck->add_option("--step", fd_step, "finite difference step");
  gradcheck->add_option("--encoder", cfg.encoder_file, "encoder weight file");
  gradcheck->add_option("--encoder-seed", cfg.encoder_seed, "encoder init seed");
  gradcheck->add_option("--seed", cfg.seed, "sampling seed");
  gradcheck->add_option("--manifest", manifest_path, "manifest path");

  bool rephrase = false;
  int rephrase_count = 4;
  auto* export_ft = app.add_subcommand("export-ft", "export fine-tuning records");
  export_ft->add_option("--in", in_path, "input dataset")->required();
  export_ft->add_option("--out", out_path, "output JSONL")->required();
  export_ft->add_flag("--rephrase", rephrase, "add rephrased question variants");
  export_ft->add_option("--rephrase-count", rephrase_count, "variants per case");
  export_ft->add_option("--manifest", manifest_path, "manifest path");

  CLI11_PARSE(app, argc, argv);

  const std::vector<std::string> argv_copy = collect_argv(argc, argv);
  try {
    if (negate->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(out_path, "negate");
      return cmd_negate(argv_copy, cfg, in_path, out_path, strategy, use_llm,
                        manifest_path);
    }
    if (perturb->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(out_path, "perturb");
      return cmd_perturb(argv_copy, cfg, in_path, out_path, kinds, all_provenance,
                         manifest_path);
    }
    if (attack->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(out_path, "attack");
      return cmd_attack(argv_copy, cfg, in_path, out_path, flags_file, all_provenance,
                        save_encoder, trace_dir, manifest_path);
    }
    if (eval->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(report_path, "eval");
      return cmd_eval(argv_copy, cfg, in_path, client_spec, report_path, outcomes_path,
                      flags_out, manifest_path);
    }
    if (verify->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(theory_csv, "verify-theory");
      return cmd_verify_theory(argv_copy, cfg, grid_p, grid_q, n_pairs, theory_csv,
                               manifest_path);
    }
    if (gradcheck->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path("", "gradcheck");
      return cmd_gradcheck(argv_copy, cfg, samples, pixels, fd_step, manifest_path);
    }
    if (export_ft->parsed()) {
      if (manifest_path.empty()) manifest_path = default_manifest_path(out_path, "export-ft");
      return cmd_export_ft(argv_copy, cfg, in_path, out_path, rephrase, rephrase_count,
                           manifest_path);
    }
  } catch (const vhtk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
