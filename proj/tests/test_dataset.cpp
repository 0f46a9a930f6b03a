#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "vhtk/dataset.hpp"
#include "test_support.hpp"

using namespace vhtk;
using vhtk_test::ScratchDir;
using vhtk_test::make_case;

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("answer flip is an involution") {
  REQUIRE(flip(Answer::Yes) == Answer::No);
  REQUIRE(flip(Answer::No) == Answer::Yes);
  REQUIRE(flip(flip(Answer::Yes)) == Answer::Yes);
  REQUIRE(flip(flip(Answer::No)) == Answer::No);
}

TEST_CASE("provenance strings round trip") {
  const std::vector<Provenance> all = {
      Provenance::original(), Provenance::negated(),
      Provenance::common(PerturbKind::GaussianNoise),
      Provenance::common(PerturbKind::Brightness),
      Provenance::common(PerturbKind::DefocusBlur),
      Provenance::common(PerturbKind::JpegCompression),
      Provenance::adversarial(AttackMethod::Pgd),
      Provenance::adversarial(AttackMethod::Ifgsm)};
  for (const auto& p : all) REQUIRE(provenance_from_string(to_string(p)) == p);
  REQUIRE_THROWS_AS(provenance_from_string("weird"), DatasetError);
}

TEST_CASE("load parses valid records") {
  ScratchDir dir("load");
  Dataset ds;
  ds.base_dir = dir.path().string();
  ds.cases = {make_case(dir, "c1", "Is the door open?", Answer::Yes, 1),
              make_case(dir, "c2", "Is there a cat?", Answer::No, 2),
              make_case(dir, "c3", "Is the sky blue?", Answer::Yes, 3)};
  save_dataset(ds, dir.file("d.jsonl"));
  const Dataset loaded = load_dataset(dir.file("d.jsonl"));
  REQUIRE(loaded.cases.size() == 3);
  REQUIRE(loaded.cases[1].question == "Is there a cat?");
  REQUIRE(loaded.cases[1].answer == Answer::No);
}

TEST_CASE("round trip is lossless field for field") {
  ScratchDir dir("roundtrip");
  Dataset ds;
  ds.base_dir = dir.path().string();
  TestCase orig = make_case(dir, "c1", "Is there a dog?", Answer::Yes, 1);
  TestCase neg = orig;
  neg.id = "c1~neg";
  neg.question = "Is there no dog?";
  neg.answer = Answer::No;
  neg.provenance = Provenance::negated();
  neg.parent_id = "c1";
  TestCase adv = orig;
  adv.id = "c1~ifgsm";
  adv.provenance = Provenance::adversarial(AttackMethod::Ifgsm);
  adv.parent_id = "c1";
  ds.cases = {orig, neg, adv};
  save_dataset(ds, dir.file("d.jsonl"));
  const Dataset loaded = load_dataset(dir.file("d.jsonl"));
  REQUIRE(loaded.cases.size() == ds.cases.size());
  for (std::size_t i = 0; i < ds.cases.size(); ++i) REQUIRE(loaded.cases[i] == ds.cases[i]);

  // second round trip is bit-identical on disk
  save_dataset(loaded, dir.file("d2.jsonl"));
  std::ifstream a(dir.file("d.jsonl")), b(dir.file("d2.jsonl"));
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  REQUIRE(sa == sb);
}

TEST_CASE("empty dataset saves to an empty file") {
  ScratchDir dir("empty");
  Dataset ds;
  save_dataset(ds, dir.file("e.jsonl"));
  const Dataset loaded = load_dataset(dir.file("e.jsonl"));
  REQUIRE(loaded.cases.empty());
}

TEST_CASE("save to unwritable path fails") {
  Dataset ds;
  REQUIRE_THROWS_AS(save_dataset(ds, "/nonexistent-dir/deep/d.jsonl"), IoError);
}

TEST_CASE("load rejects bad records with line numbers") {
  ScratchDir dir("bad");
  vhtk_test::make_case(dir, "c1", "Q?", Answer::Yes, 1);

  SECTION("duplicate id names the offender") {
    write_lines(dir.file("dup.jsonl"),
                {R"({"id":"c1","image":"c1.png","question":"Q?","answer":"yes","provenance":"original","parent_id":null})",
                 R"({"id":"c1","image":"c1.png","question":"Q?","answer":"no","provenance":"original","parent_id":null})"});
    REQUIRE_THROWS_WITH(load_dataset(dir.file("dup.jsonl")),
                        Catch::Matchers::ContainsSubstring("c1"));
  }
  SECTION("free-text answer is rejected") {
    write_lines(dir.file("maybe.jsonl"),
                {R"({"id":"c1","image":"c1.png","question":"Q?","answer":"maybe","provenance":"original","parent_id":null})"});
    REQUIRE_THROWS_WITH(load_dataset(dir.file("maybe.jsonl")),
                        Catch::Matchers::ContainsSubstring("answer must be yes|no"));
  }
  SECTION("malformed json reports the line number") {
    write_lines(dir.file("mal.jsonl"),
                {R"({"id":"c1","image":"c1.png","question":"Q?","answer":"yes","provenance":"original","parent_id":null})",
                 "{not json"});
    REQUIRE_THROWS_WITH(load_dataset(dir.file("mal.jsonl")),
                        Catch::Matchers::ContainsSubstring(":2"));
  }
  SECTION("dangling parent id") {
    write_lines(dir.file("dangling.jsonl"),
                {R"({"id":"c2","image":"c1.png","question":"Q?","answer":"yes","provenance":"negated","parent_id":"ghost"})"});
    REQUIRE_THROWS_WITH(load_dataset(dir.file("dangling.jsonl")),
                        Catch::Matchers::ContainsSubstring("ghost"));
  }
  SECTION("missing image file") {
    write_lines(dir.file("noimg.jsonl"),
                {R"({"id":"c9","image":"nope.png","question":"Q?","answer":"yes","provenance":"original","parent_id":null})"});
    REQUIRE_THROWS_AS(load_dataset(dir.file("noimg.jsonl")), DatasetError);
    REQUIRE_NOTHROW(load_dataset(dir.file("noimg.jsonl"), /*check_images=*/false));
  }
}

TEST_CASE("pair_index links cases to their negated children") {
  ScratchDir dir("pairs");
  Dataset ds;
  ds.base_dir = dir.path().string();
  TestCase a = make_case(dir, "a", "Is it day?", Answer::Yes, 1);
  TestCase b = make_case(dir, "b", "Is it night?", Answer::No, 2);
  TestCase an = a;
  an.id = "a~neg";
  an.answer = Answer::No;
  an.provenance = Provenance::negated();
  an.parent_id = "a";
  TestCase bn = b;
  bn.id = "b~neg";
  bn.answer = Answer::Yes;
  bn.provenance = Provenance::negated();
  bn.parent_id = "b";

  SECTION("two originals with children give two pairs") {
    ds.cases = {a, b, an, bn};
    const PairIndex idx = pair_index(ds);
    REQUIRE(idx.pairs.size() == 2);
    REQUIRE(idx.unpaired_ids.empty());
    REQUIRE(idx.pairs[0].original.id == "a");
    REQUIRE(idx.pairs[0].negated.id == "a~neg");
  }
  SECTION("case without negated child is reported, not dropped") {
    ds.cases = {a, b, an};
    const PairIndex idx = pair_index(ds);
    REQUIRE(idx.pairs.size() == 1);
    REQUIRE(idx.unpaired_ids == std::vector<std::string>{"b"});
  }
  SECTION("chained negation is rejected") {
    TestCase chained = an;
    chained.id = "a~neg~neg";
    chained.parent_id = "a~neg";
    ds.cases = {a, an, chained};
    REQUIRE_THROWS_WITH(pair_index(ds),
                        Catch::Matchers::ContainsSubstring("chained"));
  }
  SECTION("deterministic and order-stable") {
    ds.cases = {a, b, an, bn};
    const PairIndex i1 = pair_index(ds);
    const PairIndex i2 = pair_index(ds);
    REQUIRE(i1.pairs.size() == i2.pairs.size());
    for (std::size_t i = 0; i < i1.pairs.size(); ++i) {
      REQUIRE(i1.pairs[i].original.id == i2.pairs[i].original.id);
      REQUIRE(i1.pairs[i].negated.id == i2.pairs[i].negated.id);
    }
  }
}
