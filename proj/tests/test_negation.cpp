#include <catch2/catch_amalgamated.hpp>

#include <cctype>
#include <sstream>

#include "vhtk/negation.hpp"

using namespace vhtk;

namespace {

struct Fixture {
  const char* question;
  const char* declarative;  // hand-derived core, natural capitalization
};

// 50-question corpus in the style of the VH benchmarks: existentials,
// pronouns, short noun phrases, possessives, do-support, modals. The
// declaratives were derived by hand (auxiliary moved after the subject,
// nothing else changed).
const Fixture kCorpus[] = {
    {"Is there a dog in the picture?", "There is a dog in the picture"},
    {"Are there clouds in the sky?", "There are clouds in the sky"},
    {"Is there a person behind the tree?", "There is a person behind the tree"},
    {"Are there two birds on the wire?", "There are two birds on the wire"},
    {"Is there an umbrella in this photo?", "There is an umbrella in this photo"},
    {"Was there a car in the driveway?", "There was a car in the driveway"},
    {"Were there people at the beach?", "There were people at the beach"},
    {"Is there snow on the mountain?", "There is snow on the mountain"},
    {"Is there a reflection in the mirror?", "There is a reflection in the mirror"},
    {"Is there text on the sign?", "There is text on the sign"},
    {"Is it raining in the image?", "It is raining in the image"},
    {"Is it dark outside?", "It is dark outside"},
    {"Is this a photo of a beach?", "This is a photo of a beach"},
    {"Is that a real animal?", "That is a real animal"},
    {"Are these flowers artificial?", "These flowers are artificial"},
    {"Is the door open?", "The door is open"},
    {"Is the cat sleeping on the sofa?", "The cat is sleeping on the sofa"},
    {"Is the red apple on the left?", "The red apple is on the left"},
    {"Is the traffic light green?", "The traffic light is green"},
    {"Is the window closed?", "The window is closed"},
    {"Is the man wearing a hat?", "The man is wearing a hat"},
    {"Is the woman holding an umbrella?", "The woman is holding an umbrella"},
    {"Is the grass wet?", "The grass is wet"},
    {"Is the laptop turned on?", "The laptop is turned on"},
    {"Is the bridge made of stone?", "The bridge is made of stone"},
    {"Is the pizza sliced?", "The pizza is sliced"},
    {"Is the street empty?", "The street is empty"},
    {"Is the fruit bowl full?", "The fruit bowl is full"},
    {"Is the monitor behind the keyboard?", "The monitor is behind the keyboard"},
    {"Is the picture in black and white?", "The picture is in black and white"},
    {"Is the sun above the horizon?", "The sun is above the horizon"},
    {"Is the butterfly's abdomen visible in this image?",
     "The butterfly's abdomen is visible in this image"},
    {"Is the dog's tail curled?", "The dog's tail is curled"},
    {"Is the man's shirt blue?", "The man's shirt is blue"},
    {"Is the bird's beak orange?", "The bird's beak is orange"},
    {"Is the car's door dented?", "The car's door is dented"},
    {"Is the child's balloon floating?", "The child's balloon is floating"},
    {"Is the woman's hair short?", "The woman's hair is short"},
    {"Does the cat have black spots?", "The cat does have black spots"},
    {"Does the clock show the time?", "The clock does show the time"},
    {"Do the curtains match the carpet?", "The curtains do match the carpet"},
    {"Does the building have windows?", "The building does have windows"},
    {"Does the dog sit on the rug?", "The dog does sit on the rug"},
    {"Does the sign say stop?", "The sign does say stop"},
    {"Do the shoes look new?", "The shoes do look new"},
    {"Does the shadow point toward the camera?",
     "The shadow does point toward the camera"},
    {"Can you see two birds?", "You can see two birds"},
    {"Will the ball fit in the box?", "The ball will fit in the box"},
    {"Could the box hold more books?", "The box could hold more books"},
    {"Has the snow covered the roof?", "The snow has covered the roof"},
};

std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string false_prefix(const std::string& q) {
  NegationRuleConfig cfg;
  cfg.strategy = NegationStrategy::FalsePrefix;
  return negate_question_rules(q, cfg);
}

std::string article_swap(const std::string& q) {
  NegationRuleConfig cfg;
  cfg.strategy = NegationStrategy::ArticleSwap;
  return negate_question_rules(q, cfg);
}

}  // namespace

TEST_CASE("FalsePrefix matches the hand-derived corpus") {
  for (const Fixture& f : kCorpus) {
    INFO(f.question);
    const std::string expected =
        "Is it false that " + lower_first(f.declarative) + "?";
    REQUIRE(false_prefix(f.question) == expected);
  }
}

TEST_CASE("FalsePrefix changes nothing beyond prefix and first-letter case") {
  for (const Fixture& f : kCorpus) {
    INFO(f.question);
    const std::string out = false_prefix(f.question);
    const std::string prefix = "Is it false that ";
    REQUIRE(out.rfind(prefix, 0) == 0);
    REQUIRE(out.back() == '?');
    const std::string core = out.substr(prefix.size(), out.size() - prefix.size() - 1);
    // string-diff against the declarative: only the first letter's case may differ
    const std::string expected_core = f.declarative;
    REQUIRE(core.size() == expected_core.size());
    for (std::size_t i = 1; i < core.size(); ++i) REQUIRE(core[i] == expected_core[i]);
    REQUIRE(std::tolower(static_cast<unsigned char>(core[0])) ==
            std::tolower(static_cast<unsigned char>(expected_core[0])));

    // same words as the question (minus "?"), with only the auxiliary moved
    std::string q(f.question);
    REQUIRE(q.back() == '?');
    q.pop_back();
    auto qw = words(q);
    auto cw = words(core);
    REQUIRE(qw.size() == cw.size());
    std::sort(qw.begin(), qw.end(), [](std::string a, std::string b) {
      for (auto& ch : a) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      for (auto& ch : b) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      return a < b;
    });
    std::sort(cw.begin(), cw.end(), [](std::string a, std::string b) {
      for (auto& ch : a) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      for (auto& ch : b) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      return a < b;
    });
    for (std::size_t i = 0; i < qw.size(); ++i) {
      std::string a = qw[i], b = cw[i];
      for (auto& ch : a) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      for (auto& ch : b) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      REQUIRE(a == b);
    }
  }
}

TEST_CASE("ArticleSwap swaps every standalone article and keeps token count") {
  REQUIRE(article_swap("Is there a dog?") == "Is there no dog?");
  REQUIRE(article_swap("Is this a photo of a beach?") == "Is this no photo of no beach?");
  REQUIRE(article_swap("Is there an umbrella in this photo?") ==
          "Is there no umbrella in this photo?");
  // "A" at sentence start keeps its capitalization
  REQUIRE(article_swap("A cat is there, right? Is a cat there?") ==
          "No cat is there, right? Is no cat there?");
  // words containing 'a'/'an' as substrings are untouched
  REQUIRE(article_swap("Is an ant near a banana?") == "Is no ant near no banana?");

  for (const Fixture& f : kCorpus) {
    if (!question_has_article(f.question)) continue;
    INFO(f.question);
    const std::string out = article_swap(f.question);
    REQUIRE(words(out).size() == words(f.question).size());
  }
}

TEST_CASE("ArticleSwap without an article is unhandled") {
  REQUIRE_THROWS_AS(article_swap("Is the door open?"), UnhandledFormError);
}

TEST_CASE("FalsePrefix rejects unparseable forms") {
  REQUIRE_THROWS_AS(false_prefix("Banana?"), UnhandledFormError);
  REQUIRE_THROWS_AS(false_prefix("Is?"), UnhandledFormError);
  REQUIRE_THROWS_AS(false_prefix("What color is the car?"), UnhandledFormError);
}

TEST_CASE("strategy auto-pick prefers ArticleSwap when an article exists") {
  REQUIRE(pick_strategy("Is there a dog?") == NegationStrategy::ArticleSwap);
  REQUIRE(pick_strategy("Is the door open?") == NegationStrategy::FalsePrefix);
  REQUIRE(negate_question_auto("Is there a dog?") == "Is there no dog?");
  REQUIRE(negate_question_auto("Is the door open?") ==
          "Is it false that the door is open?");
}

TEST_CASE("rule negation is deterministic") {
  for (int i = 0; i < 3; ++i) {
    REQUIRE(false_prefix("Is the door open?") == "Is it false that the door is open?");
  }
}

TEST_CASE("negation prompt is emitted verbatim with the question substituted") {
  const std::string expected =
      "Rephrase the following question to be a negated question for the "
      "original question. The rephrase method is to add prefix 'Is it false' "
      "before the original question in a declarative sentence or change all "
      "occurrences of the \"a/an\" to \"no\" for simple cases. Below are the "
      "rules must be followed when rephrasing the question: DO NOT CHANGE OR "
      "ADD ANY INFORMATION to the sentence, such as the case of any letters "
      "except the first letter of the sentence, tenses, the order of clauses, "
      "pronouns, etc.. You should only return the rephrased question. The "
      "question is: [Is the door open?].";
  REQUIRE(negation_prompt("Is the door open?") == expected);
}

TEST_CASE("LLM-backed negation uses the scripted reply") {
  ScriptedChatClient echo(
      [](const std::string&) { return "  Is it false that the door is open?  "; });
  REQUIRE(negate_question_llm(echo, "Is the door open?") ==
          "Is it false that the door is open?");
  REQUIRE(echo.prompts().size() == 1);
  REQUIRE(echo.prompts()[0] == negation_prompt("Is the door open?"));
}

TEST_CASE("LLM-backed negation rejects non-conforming replies") {
  ScriptedChatClient empty([](const std::string&) { return "   "; });
  REQUIRE_THROWS_AS(negate_question_llm(empty, "Is the door open?"),
                    NonConformingReplyError);
  ScriptedChatClient multiline(
      [](const std::string&) { return "Is it false that X?\nSure, here you go"; });
  REQUIRE_THROWS_AS(negate_question_llm(multiline, "Is the door open?"),
                    NonConformingReplyError);
  ScriptedChatClient failing([](const std::string&) -> std::string {
    throw TransportError("connection refused");
  });
  REQUIRE_THROWS_AS(negate_question_llm(failing, "Is the door open?"), TransportError);
}

TEST_CASE("negate_case flips the answer and records lineage") {
  TestCase original;
  original.id = "c1";
  original.image_ref = "img.png";
  original.question = "Is there a cat?";
  original.answer = Answer::Yes;

  const auto negator = [](const std::string& q) { return negate_question_auto(q); };
  const TestCase negated = negate_case(original, negator);
  REQUIRE(negated.question == "Is there no cat?");
  REQUIRE(negated.answer == Answer::No);
  REQUIRE(negated.image_ref == original.image_ref);
  REQUIRE(negated.provenance.kind == Provenance::Kind::Negated);
  REQUIRE(negated.parent_id == std::optional<std::string>("c1"));

  original.answer = Answer::No;
  REQUIRE(negate_case(original, negator).answer == Answer::Yes);

  REQUIRE_THROWS_AS(negate_case(negated, negator), ChainedNegationError);
}

TEST_CASE("is_negated_form detects the FalsePrefix marker") {
  REQUIRE(is_negated_form("Is it false that X?"));
  REQUIRE(is_negated_form("is it false that x?"));
  REQUIRE(is_negated_form("  IS IT FALSE THAT the dog is there?"));
  REQUIRE_FALSE(is_negated_form("Is there a cat?"));
  REQUIRE_FALSE(is_negated_form("Is there no cat?"));
}
