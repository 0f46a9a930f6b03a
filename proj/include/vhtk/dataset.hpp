#pragma once
// Canonical data model for VH test cases: binary VQA triples with provenance
// lineage, persisted as JSONL (one record per line, image paths relative to
// the dataset file).

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vhtk/errors.hpp"

namespace vhtk {

enum class Answer { Yes, No };

inline Answer flip(Answer a) { return a == Answer::Yes ? Answer::No : Answer::Yes; }

inline std::string to_string(Answer a) { return a == Answer::Yes ? "yes" : "no"; }

inline Answer answer_from_string(const std::string& s) {
  if (s == "yes") return Answer::Yes;
  if (s == "no") return Answer::No;
  throw DatasetError("answer must be yes|no, got \"" + s + "\"");
}

enum class PerturbKind { GaussianNoise, Brightness, DefocusBlur, JpegCompression };
enum class AttackMethod { Pgd, Ifgsm };

inline std::string to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::GaussianNoise: return "gaussian_noise";
    case PerturbKind::Brightness: return "brightness";
    case PerturbKind::DefocusBlur: return "defocus_blur";
    case PerturbKind::JpegCompression: return "jpeg_compression";
  }
  throw Error("bad PerturbKind");
}

inline std::string to_string(AttackMethod m) {
  return m == AttackMethod::Pgd ? "pgd" : "ifgsm";
}

// Closed provenance tags; the perturbation kind / attack method parameter is
// kept so reports can break successful-VH counts down per generator.
struct Provenance {
  enum class Kind { Original, Negated, Common, Adversarial };

  Kind kind = Kind::Original;
  PerturbKind perturb = PerturbKind::GaussianNoise;  // valid iff kind == Common
  AttackMethod method = AttackMethod::Ifgsm;         // valid iff kind == Adversarial

  static Provenance original() { return {Kind::Original, {}, {}}; }
  static Provenance negated() { return {Kind::Negated, {}, {}}; }
  static Provenance common(PerturbKind k) { return {Kind::Common, k, {}}; }
  static Provenance adversarial(AttackMethod m) {
    return {Kind::Adversarial, {}, m};
  }

  bool operator==(const Provenance& o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::Common) return perturb == o.perturb;
    if (kind == Kind::Adversarial) return method == o.method;
    return true;
  }
};

inline std::string to_string(const Provenance& p) {
  switch (p.kind) {
    case Provenance::Kind::Original: return "original";
    case Provenance::Kind::Negated: return "negated";
    case Provenance::Kind::Common: return "common:" + to_string(p.perturb);
    case Provenance::Kind::Adversarial: return "adversarial:" + to_string(p.method);
  }
  throw Error("bad Provenance");
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "original") return Provenance::original();
  if (s == "negated") return Provenance::negated();
  if (s.rfind("common:", 0) == 0) {
    const std::string k = s.substr(7);
    if (k == "gaussian_noise") return Provenance::common(PerturbKind::GaussianNoise);
    if (k == "brightness") return Provenance::common(PerturbKind::Brightness);
    if (k == "defocus_blur") return Provenance::common(PerturbKind::DefocusBlur);
    if (k == "jpeg_compression") return Provenance::common(PerturbKind::JpegCompression);
  }
  if (s.rfind("adversarial:", 0) == 0) {
    const std::string m = s.substr(12);
    if (m == "pgd") return Provenance::adversarial(AttackMethod::Pgd);
    if (m == "ifgsm") return Provenance::adversarial(AttackMethod::Ifgsm);
  }
  throw DatasetError("unknown provenance \"" + s + "\"");
}

struct TestCase {
  std::string id;
  std::string image_ref;  // relative to the dataset file's directory
  std::string question;
  Answer answer = Answer::Yes;
  Provenance provenance = Provenance::original();
  std::optional<std::string> parent_id;

  bool operator==(const TestCase& o) const {
    return id == o.id && image_ref == o.image_ref && question == o.question &&
           answer == o.answer && provenance == o.provenance && parent_id == o.parent_id;
  }
};

struct TestCasePair {
  TestCase original;  // any non-negated case
  TestCase negated;   // its Negated child
};

struct Dataset {
  std::string name;
  std::string base_dir;  // directory image_refs resolve against
  std::vector<TestCase> cases;

  const TestCase* find(const std::string& id) const {
    for (const auto& c : cases)
      if (c.id == id) return &c;
    return nullptr;
  }

  std::string resolve_image_path(const TestCase& c) const {
    std::filesystem::path p(c.image_ref);
    if (p.is_absolute() || base_dir.empty()) return c.image_ref;
    return (std::filesystem::path(base_dir) / p).string();
  }
};

namespace detail {

inline void validate_dataset(const Dataset& ds, bool check_images) {
  std::set<std::string> ids;
  for (const auto& c : ds.cases) {
    if (!ids.insert(c.id).second)
      throw DatasetError("duplicate id \"" + c.id + "\"");
  }
  for (const auto& c : ds.cases) {
    if (c.provenance.kind != Provenance::Kind::Original && !c.parent_id)
      throw DatasetError("case \"" + c.id + "\" is derived but has no parent_id");
    if (c.parent_id && !ids.count(*c.parent_id))
      throw DatasetError("case \"" + c.id + "\" has dangling parent_id \"" +
                         *c.parent_id + "\"");
    if (check_images) {
      const std::string path = ds.resolve_image_path(c);
      if (!std::filesystem::exists(path))
        throw DatasetError("case \"" + c.id + "\": missing image file " + path);
    }
  }
}

}  // namespace detail

inline nlohmann::ordered_json case_to_json(const TestCase& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["image"] = c.image_ref;
  j["question"] = c.question;
  j["answer"] = to_string(c.answer);
  j["provenance"] = to_string(c.provenance);
  j["parent_id"] = c.parent_id ? nlohmann::ordered_json(*c.parent_id)
                               : nlohmann::ordered_json(nullptr);
  return j;
}

inline TestCase case_from_json(const nlohmann::json& j) {
  TestCase c;
  for (const char* field : {"id", "image", "question", "answer", "provenance"}) {
    if (!j.contains(field))
      throw DatasetError(std::string("record missing field \"") + field + "\"");
  }
  c.id = j.at("id").get<std::string>();
  c.image_ref = j.at("image").get<std::string>();
  c.question = j.at("question").get<std::string>();
  c.answer = answer_from_string(j.at("answer").get<std::string>());
  c.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  if (j.contains("parent_id") && !j.at("parent_id").is_null())
    c.parent_id = j.at("parent_id").get<std::string>();
  return c;
}

// check_images=false is for datasets assembled in memory during tests or for
// metric-only workflows; the CLI always loads with checks on.
inline Dataset load_dataset(const std::string& path, bool check_images = true) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset: " + path);
  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();
  ds.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ds.cases.push_back(case_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path + ":" + std::to_string(lineno) +
                         ": malformed record: " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  detail::validate_dataset(ds, check_images);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing: " + path);
  for (const auto& c : ds.cases) out << case_to_json(c).dump() << "\n";
  if (!out) throw IoError("dataset write failed: " + path);
}

struct PairIndex {
  std::vector<TestCasePair> pairs;
  std::vector<std::string> unpaired_ids;  // non-negated cases lacking a negated child
};

// One pair per (case, Negated child) link. Deterministic: pairs follow the
// parent's position in the dataset; a parent with several negated children
// contributes one pair per child, in dataset order.
inline PairIndex pair_index(const Dataset& ds) {
  std::map<std::string, const TestCase*> by_id;
  for (const auto& c : ds.cases) by_id[c.id] = &c;

  std::map<std::string, std::vector<const TestCase*>> negated_children;
  for (const auto& c : ds.cases) {
    if (c.provenance.kind != Provenance::Kind::Negated) continue;
    if (!c.parent_id)
      throw DatasetError("negated case \"" + c.id + "\" has no parent_id");
    const auto it = by_id.find(*c.parent_id);
    if (it == by_id.end())
      throw DatasetError("negated case \"" + c.id + "\" has dangling parent");
    if (it->second->provenance.kind == Provenance::Kind::Negated)
      throw DatasetError("negated case \"" + c.id + "\" has a negated parent \"" +
                         *c.parent_id + "\" (chained negation)");
    negated_children[*c.parent_id].push_back(&c);
  }

  PairIndex index;
  for (const auto& c : ds.cases) {
    if (c.provenance.kind == Provenance::Kind::Negated) continue;
    const auto it = negated_children.find(c.id);
    if (it == negated_children.end()) {
      index.unpaired_ids.push_back(c.id);
      continue;
    }
    for (const TestCase* child : it->second)
      index.pairs.push_back(TestCasePair{c, *child});
  }
  return index;
}

}  // namespace vhtk
