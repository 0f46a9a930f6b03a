#pragma once
// Evaluation metrics and their theory checks.
//
// accuracy            fraction of outcomes matching ground truth
// symmetric accuracy  fraction of (case, negated-case) pairs with BOTH
//                     members answered correctly
//
// Under pure random guessing (answer "yes" with probability p, class prior
// q = P(ground truth yes)):
//   E[accuracy]           = 1 + (2p-1)q - p     (depends on q unless p=1/2)
//   E[symmetric accuracy] = p(1-p)              (independent of q)
// simulate_random_guesser/verify_theory check both closed forms empirically.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vhtk/dataset.hpp"
#include "vhtk/errors.hpp"
#include "vhtk/rng.hpp"

namespace vhtk {

enum class NormalizedAnswer { Yes, No, Unknown };

inline std::string to_string(NormalizedAnswer a) {
  switch (a) {
    case NormalizedAnswer::Yes: return "yes";
    case NormalizedAnswer::No: return "no";
    case NormalizedAnswer::Unknown: return "unknown";
  }
  throw Error("bad NormalizedAnswer");
}

// Leading token wins; otherwise a lone standalone yes/no anywhere counts.
// Both or neither is Unknown (and Unknown always scores as incorrect).
inline NormalizedAnswer normalize_answer(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  if (tokens.empty()) return NormalizedAnswer::Unknown;
  if (tokens[0] == "yes") return NormalizedAnswer::Yes;
  if (tokens[0] == "no") return NormalizedAnswer::No;
  bool has_yes = false, has_no = false;
  for (const auto& t : tokens) {
    has_yes |= (t == "yes");
    has_no |= (t == "no");
  }
  if (has_yes && !has_no) return NormalizedAnswer::Yes;
  if (has_no && !has_yes) return NormalizedAnswer::No;
  return NormalizedAnswer::Unknown;
}

inline bool answer_matches(NormalizedAnswer n, Answer a) {
  return (n == NormalizedAnswer::Yes && a == Answer::Yes) ||
         (n == NormalizedAnswer::No && a == Answer::No);
}

struct EvalOutcome {
  std::string case_id;
  std::string raw_response;
  NormalizedAnswer normalized = NormalizedAnswer::Unknown;
  bool correct = false;
  int repetition_index = 0;
  double temperature = 0.0;
  std::optional<std::string> error;  // transport failure annotation
};

inline double accuracy(const std::vector<EvalOutcome>& outcomes) {
  if (outcomes.empty()) throw Error("accuracy: no outcomes");
  std::size_t correct = 0;
  for (const auto& o : outcomes) correct += o.correct ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

namespace detail {

// case id -> repetition -> correct
inline std::map<std::string, std::map<int, bool>> outcome_table(
    const std::vector<EvalOutcome>& outcomes) {
  std::map<std::string, std::map<int, bool>> table;
  for (const auto& o : outcomes) table[o.case_id][o.repetition_index] = o.correct;
  return table;
}

}  // namespace detail

// Pair correctness matches repetition indices: pair (t, neg) at repetition r
// counts iff both members are correct at r. The result is the mean over all
// (pair, repetition) units.
inline double symmetric_accuracy(const std::vector<EvalOutcome>& outcomes,
                                 const std::vector<TestCasePair>& pairs) {
  if (pairs.empty()) throw Error("symmetric_accuracy: no pairs");
  const auto table = detail::outcome_table(outcomes);
  std::size_t units = 0, both = 0;
  for (const auto& pair : pairs) {
    const auto orig = table.find(pair.original.id);
    const auto neg = table.find(pair.negated.id);
    if (orig == table.end())
      throw Error("symmetric_accuracy: no outcome for pair member \"" +
                  pair.original.id + "\"");
    if (neg == table.end())
      throw Error("symmetric_accuracy: no outcome for pair member \"" +
                  pair.negated.id + "\"");
    for (const auto& [rep, orig_correct] : orig->second) {
      const auto it = neg->second.find(rep);
      if (it == neg->second.end())
        throw Error("symmetric_accuracy: case \"" + pair.negated.id +
                    "\" missing repetition " + std::to_string(rep));
      ++units;
      if (orig_correct && it->second) ++both;
    }
  }
  return static_cast<double>(both) / static_cast<double>(units);
}

// A generated case is a "successful VH test case" when the model answers it
// incorrectly (first repetition). Cases without an outcome are skipped.
inline std::size_t count_successful_vh(const std::vector<EvalOutcome>& outcomes,
                                       const Dataset& ds,
                                       const std::set<Provenance::Kind>& filter) {
  const auto table = detail::outcome_table(outcomes);
  std::size_t count = 0;
  for (const auto& c : ds.cases) {
    if (!filter.count(c.provenance.kind)) continue;
    const auto it = table.find(c.id);
    if (it == table.end() || it->second.empty()) continue;
    if (!it->second.begin()->second) ++count;
  }
  return count;
}

inline double expected_accuracy_random(double p, double q) {
  return 1.0 + (2.0 * p - 1.0) * q - p;
}

inline double expected_symmetric_accuracy_random(double p) { return p * (1.0 - p); }

struct RandomGuessModel {
  double p = 0.5;         // P(guess yes)
  double q = 0.5;         // P(ground truth yes)
  std::int64_t n = 1;     // number of simulated pairs
  std::uint64_t seed = 0;

  void validate() const {
    if (p < 0.0 || p > 1.0 || q < 0.0 || q > 1.0)
      throw ConfigError("p and q must lie in [0,1]");
    if (n < 1) throw ConfigError("n must be >= 1");
  }
};

struct SimulationResult {
  // Accuracy over the n sampled original cases (the distribution the
  // accuracy theorem speaks about); symmetric accuracy over the n pairs.
  double empirical_accuracy = 0.0;
  double empirical_symmetric_accuracy = 0.0;
};

inline SimulationResult simulate_random_guesser(const RandomGuessModel& model) {
  model.validate();
  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t n_chunks = (model.n + kChunk - 1) / kChunk;

  auto run_chunks = [&](std::int64_t lo, std::int64_t hi, std::int64_t& acc_count,
                        std::int64_t& sym_count) {
    for (std::int64_t c = lo; c < hi; ++c) {
      Rng rng(derive_seed(model.seed, static_cast<std::uint64_t>(c)));
      const std::int64_t begin = c * kChunk;
      const std::int64_t end = std::min(model.n, begin + kChunk);
      for (std::int64_t i = begin; i < end; ++i) {
        const bool truth_yes = rng.uniform01() < model.q;
        const bool guess_orig_yes = rng.uniform01() < model.p;
        const bool guess_neg_yes = rng.uniform01() < model.p;
        const bool orig_correct = (guess_orig_yes == truth_yes);
        const bool neg_correct = (guess_neg_yes == !truth_yes);
        acc_count += orig_correct ? 1 : 0;
        sym_count += (orig_correct && neg_correct) ? 1 : 0;
      }
    }
  };

  const unsigned workers = std::max(
      1u, std::min(std::thread::hardware_concurrency(),
                   static_cast<unsigned>(std::min<std::int64_t>(n_chunks, 64))));
  std::vector<std::future<std::pair<std::int64_t, std::int64_t>>> futures;
  const std::int64_t per = (n_chunks + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::int64_t lo = static_cast<std::int64_t>(w) * per;
    const std::int64_t hi = std::min<std::int64_t>(n_chunks, lo + per);
    if (lo >= hi) break;
    futures.push_back(std::async(std::launch::async, [&, lo, hi]() {
      std::int64_t a = 0, s = 0;
      run_chunks(lo, hi, a, s);
      return std::make_pair(a, s);
    }));
  }
  std::int64_t acc_count = 0, sym_count = 0;
  for (auto& f : futures) {
    const auto [a, s] = f.get();
    acc_count += a;
    sym_count += s;
  }
  SimulationResult r;
  r.empirical_accuracy = static_cast<double>(acc_count) / static_cast<double>(model.n);
  r.empirical_symmetric_accuracy =
      static_cast<double>(sym_count) / static_cast<double>(model.n);
  return r;
}

struct TheoryCell {
  double p = 0.0, q = 0.0;
  double emp_acc = 0.0, formula_acc = 0.0, acc_tol = 0.0;
  double emp_sym = 0.0, formula_sym = 0.0, sym_tol = 0.0;
  bool pass = false;
};

using MetricFormula = std::function<double(double p, double q)>;

// Monte Carlo check of both closed forms on a (p, q) grid. Tolerance per
// cell and metric is 4*sqrt(v/n) with v the Bernoulli variance of the
// metric's closed-form value. Formulas are injectable so a negative control
// can demonstrate that wrong formulas fail.
inline std::vector<TheoryCell> verify_theory(const std::vector<double>& ps,
                                             const std::vector<double>& qs,
                                             std::int64_t n, std::uint64_t seed,
                                             MetricFormula acc_formula = {},
                                             MetricFormula sym_formula = {}) {
  if (!acc_formula) acc_formula = [](double p, double q) { return expected_accuracy_random(p, q); };
  if (!sym_formula) sym_formula = [](double p, double) { return expected_symmetric_accuracy_random(p); };
  std::vector<TheoryCell> cells;
  std::uint64_t cell_index = 0;
  for (double p : ps) {
    for (double q : qs) {
      RandomGuessModel model;
      model.p = p;
      model.q = q;
      model.n = n;
      model.seed = derive_seed(seed, cell_index++);
      const SimulationResult r = simulate_random_guesser(model);
      TheoryCell cell;
      cell.p = p;
      cell.q = q;
      cell.emp_acc = r.empirical_accuracy;
      cell.formula_acc = acc_formula(p, q);
      cell.emp_sym = r.empirical_symmetric_accuracy;
      cell.formula_sym = sym_formula(p, q);
      const double va = cell.formula_acc * (1.0 - cell.formula_acc);
      const double vs = cell.formula_sym * (1.0 - cell.formula_sym);
      cell.acc_tol = 4.0 * std::sqrt(std::max(va, 0.0) / static_cast<double>(n));
      cell.sym_tol = 4.0 * std::sqrt(std::max(vs, 0.0) / static_cast<double>(n));
      cell.pass = std::fabs(cell.emp_acc - cell.formula_acc) <= cell.acc_tol + 1e-15 &&
                  std::fabs(cell.emp_sym - cell.formula_sym) <= cell.sym_tol + 1e-15;
      cells.push_back(cell);
    }
  }
  return cells;
}

inline void write_theory_csv(const std::string& path,
                             const std::vector<TheoryCell>& cells) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write csv: " + path);
  out << "p,q,emp_acc,formula_acc,emp_sym,formula_sym\n";
  out.precision(10);
  for (const auto& c : cells)
    out << c.p << "," << c.q << "," << c.emp_acc << "," << c.formula_acc << ","
        << c.emp_sym << "," << c.formula_sym << "\n";
}

struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> symmetric_accuracy;  // absent when the dataset has no pairs
  std::size_t n_cases = 0;
  std::size_t n_pairs = 0;
  std::size_t n_unpaired = 0;
  std::size_t n_outcomes = 0;
  // provenance tag -> number of cases answered incorrectly (first repetition)
  std::map<std::string, std::size_t> successful_vh_by_provenance;
  // same, restricted to cases whose parent was answered correctly
  std::map<std::string, std::size_t> new_successful_vh_by_provenance;
};

inline MetricsReport build_metrics_report(const std::vector<EvalOutcome>& outcomes,
                                          const Dataset& ds) {
  MetricsReport report;
  report.accuracy = accuracy(outcomes);
  report.n_cases = ds.cases.size();
  report.n_outcomes = outcomes.size();
  const PairIndex pairs = pair_index(ds);
  report.n_pairs = pairs.pairs.size();
  report.n_unpaired = pairs.unpaired_ids.size();
  if (!pairs.pairs.empty())
    report.symmetric_accuracy = symmetric_accuracy(outcomes, pairs.pairs);

  const auto table = detail::outcome_table(outcomes);
  auto first_rep_correct = [&](const std::string& id) -> std::optional<bool> {
    const auto it = table.find(id);
    if (it == table.end() || it->second.empty()) return std::nullopt;
    return it->second.begin()->second;
  };
  for (const auto& c : ds.cases) {
    const auto self = first_rep_correct(c.id);
    if (!self || *self) continue;
    const std::string tag = to_string(c.provenance);
    ++report.successful_vh_by_provenance[tag];
    if (c.parent_id) {
      const auto parent = first_rep_correct(*c.parent_id);
      if (parent && *parent) ++report.new_successful_vh_by_provenance[tag];
    }
  }
  return report;
}

inline nlohmann::ordered_json metrics_report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["symmetric_accuracy"] =
      r.symmetric_accuracy ? nlohmann::ordered_json(*r.symmetric_accuracy)
                           : nlohmann::ordered_json(nullptr);
  j["n_cases"] = r.n_cases;
  j["n_pairs"] = r.n_pairs;
  j["n_unpaired"] = r.n_unpaired;
  j["n_outcomes"] = r.n_outcomes;
  j["successful_vh_by_provenance"] = r.successful_vh_by_provenance;
  j["new_successful_vh_by_provenance"] = r.new_successful_vh_by_provenance;
  return j;
}

inline nlohmann::ordered_json outcome_to_json(const EvalOutcome& o) {
  nlohmann::ordered_json j;
  j["case_id"] = o.case_id;
  j["raw"] = o.raw_response;
  j["normalized"] = to_string(o.normalized);
  j["correct"] = o.correct;
  j["repetition"] = o.repetition_index;
  j["temperature"] = o.temperature;
  if (o.error) j["error"] = *o.error;
  return j;
}

inline void save_outcomes(const std::vector<EvalOutcome>& outcomes,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write outcomes: " + path);
  for (const auto& o : outcomes) out << outcome_to_json(o).dump() << "\n";
}

}  // namespace vhtk
