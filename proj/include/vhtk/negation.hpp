#pragma once
// Question negation. Two deterministic rule families:
//
//   FalsePrefix: "Is the door open?" -> "Is it false that the door is open?"
//     The question is converted to a declarative by moving the leading
//     auxiliary after the subject; nothing else about the sentence may
//     change except the case of its first letter.
//
//   ArticleSwap: "Is there a dog?" -> "Is there no dog?"
//     Every standalone "a"/"an" becomes "no"; token count is preserved.
//
// The subject detector is intentionally a simple-cases heuristic (short
// noun phrases of the kind VQA benchmarks use). Anything it cannot parse
// raises UnhandledFormError so the caller can fall back to the LLM path.

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vhtk/chat.hpp"
#include "vhtk/dataset.hpp"
#include "vhtk/errors.hpp"

namespace vhtk {

enum class NegationStrategy { FalsePrefix, ArticleSwap };

struct NegationRuleConfig {
  NegationStrategy strategy = NegationStrategy::FalsePrefix;
  // Question-initial auxiliaries handled by FalsePrefix, in match order.
  std::vector<std::string> auxiliary_lexicon = {
      "is", "are", "was", "were", "do",  "does", "did",
      "can", "could", "will", "would", "has", "have"};
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

// Token lowercased with trailing punctuation stripped, for lexicon lookups.
inline std::string lookup_form(const std::string& token) {
  std::string t = lower(token);
  while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.back()))) t.pop_back();
  return t;
}

// Single-token subjects: existential "there" and unambiguous pronouns.
// this/that/these/those are handled separately because they double as
// determiners ("these flowers").
inline const std::set<std::string>& pronoun_subjects() {
  static const std::set<std::string> s = {
      "there", "it", "he", "she", "they", "we", "you", "i", "someone",
      "something", "somebody", "anyone", "anything", "anybody", "everyone",
      "everything", "everybody", "nobody", "nothing"};
  return s;
}

inline const std::set<std::string>& demonstratives() {
  static const std::set<std::string> s = {"this", "that", "these", "those"};
  return s;
}

inline const std::set<std::string>& prepositions() {
  static const std::set<std::string> s = {
      "in", "on", "at", "by", "near", "behind", "under", "underneath",
      "over", "above", "below", "beside", "inside", "outside", "within",
      "between", "among", "along", "across", "around", "against", "toward",
      "towards", "upon", "onto", "into", "next", "atop", "amid", "off",
      "through", "beyond", "past"};
  return s;
}

inline const std::set<std::string>& predicate_verbs() {
  static const std::set<std::string> s = {
      "have", "has", "had", "contain", "contains", "hold", "holds", "show",
      "shows", "appear", "appears", "look", "looks", "seem", "seems",
      "face", "faces", "point", "points", "touch", "touches", "overlap",
      "overlaps", "exist", "exists", "say", "says", "read", "reads", "see",
      "sit", "sits", "stand", "stands", "hang", "hangs", "lie", "lies",
      "rest", "rests", "float", "floats", "fly", "flies", "match",
      "matches", "differ", "differs", "belong", "belongs", "fit", "fits",
      "cover", "covers", "wear", "wears", "include", "includes"};
  return s;
}

// "light" is deliberately absent: it is far more often a noun here
// ("traffic light") than a predicate adjective.
inline const std::set<std::string>& predicate_adjectives() {
  static const std::set<std::string> s = {
      "visible", "present", "absent", "open", "closed", "empty", "full",
      "red", "green", "blue", "yellow", "black", "white", "brown", "orange",
      "purple", "pink", "gray", "grey", "golden", "silver", "dark",
      "bright", "dim", "big", "small", "large", "tiny", "huge", "tall",
      "short", "long", "wide", "narrow", "thick", "thin", "round", "square",
      "flat", "curved", "straight", "sharp", "blunt", "wet", "dry", "clean",
      "dirty", "new", "old", "young", "hot", "cold", "warm", "cool", "left",
      "right", "high", "low", "higher", "lower", "larger", "smaller",
      "bigger", "taller", "shorter", "closer", "nearer", "further",
      "farther", "same", "different", "similar", "identical", "equal",
      "symmetrical", "transparent", "opaque", "blurry", "clear", "sunny",
      "cloudy", "rainy", "indoor", "outdoor", "indoors", "outdoors",
      "alive", "dead", "asleep", "awake", "happy", "sad", "male", "female",
      "metallic", "wooden", "plastic", "furry", "smooth", "rough", "soft",
      "hard", "heavy", "artificial", "real", "fake", "natural"};
  return s;
}

inline const std::set<std::string>& predicate_adverbs() {
  static const std::set<std::string> s = {
      "today", "now", "here", "currently", "completely", "fully",
      "partially", "partly", "mostly", "mainly", "slightly", "entirely",
      "visibly", "clearly", "directly", "really", "actually", "still",
      "already", "halfway", "half", "upside", "vertically", "horizontally",
      "diagonally", "upright", "sideways", "backwards", "forwards"};
  return s;
}

// Common nouns whose spelling collides with the participle suffix rules.
inline const std::set<std::string>& suffix_noun_exceptions() {
  static const std::set<std::string> s = {
      "painting", "drawing", "building", "ceiling", "clothing", "lighting",
      "writing", "morning", "evening", "lightning", "railing", "duckling",
      "string", "spring", "pudding", "wedding", "sibling", "dressing",
      "earring", "hundred"};
  return s;
}

// Irregular past participles; regular ones are caught by the -ed/-ing rule.
inline const std::set<std::string>& irregular_participles() {
  static const std::set<std::string> s = {
      "broken", "taken", "hidden", "written", "eaten", "fallen", "frozen",
      "stolen", "chosen", "given", "driven", "shown", "seen", "worn",
      "torn", "grown", "known", "thrown", "drawn", "held", "hung", "made",
      "built", "sewn", "woven", "bent", "lit"};
  return s;
}

enum class TokenRole { Plain, Preposition, Verb, Adjective, Participle, Adverb };

inline TokenRole classify(const std::string& token) {
  const std::string t = lookup_form(token);
  if (t.empty()) return TokenRole::Plain;
  if (prepositions().count(t)) return TokenRole::Preposition;
  if (predicate_verbs().count(t)) return TokenRole::Verb;
  if (predicate_adjectives().count(t)) return TokenRole::Adjective;
  if (predicate_adverbs().count(t)) return TokenRole::Adverb;
  if (irregular_participles().count(t)) return TokenRole::Participle;
  if (t.size() >= 6 && !suffix_noun_exceptions().count(t)) {
    if (t.ends_with("ing") || t.ends_with("ed")) return TokenRole::Participle;
  }
  return TokenRole::Plain;
}

// Tokens that can open a predicate's object ("wearing a hat", "made of
// stone"); an adjective/participle followed by one of these is predicative.
inline const std::set<std::string>& object_openers() {
  static const std::set<std::string> s = {"a",   "an",  "the", "of",  "some",
                                          "any", "his", "her", "its", "their",
                                          "my",  "your", "our", "no"};
  return s;
}

// Index of the first token after the subject, or npos when the question
// form is not handled. -ing forms always start the predicate (progressives
// dominate in this corpus); adjectives and -ed participles followed by a
// plain token are attributive ("the red apple", "the parked car") and stay
// inside the subject.
inline std::size_t predicate_start(const std::vector<std::string>& tokens) {
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  if (tokens.size() < 2) return npos;
  const std::string first = lookup_form(tokens[1]);
  if (pronoun_subjects().count(first)) return tokens.size() > 2 ? 2 : npos;
  if (demonstratives().count(first) && tokens.size() > 2) {
    const std::string next = lookup_form(tokens[2]);
    if (next == "a" || next == "an" || next == "the") return 2;
  }
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const TokenRole role = classify(tokens[i]);
    switch (role) {
      case TokenRole::Preposition:
      case TokenRole::Verb:
      case TokenRole::Adverb:
        return i;
      case TokenRole::Adjective:
      case TokenRole::Participle: {
        if (role == TokenRole::Participle && lookup_form(tokens[i]).ends_with("ing"))
          return i;
        const bool last = (i + 1 == tokens.size());
        if (last) return i;
        const std::string next = lookup_form(tokens[i + 1]);
        if (classify(tokens[i + 1]) != TokenRole::Plain || object_openers().count(next))
          return i;
        break;  // attributive, keep scanning
      }
      case TokenRole::Plain:
        break;
    }
  }
  return npos;
}

inline bool is_article(const std::string& token) {
  const std::string t = lower(token);
  return t == "a" || t == "an";
}

}  // namespace detail

inline bool question_has_article(const std::string& question) {
  for (const auto& tok : detail::split_ws(question)) {
    std::string t = detail::lookup_form(tok);
    if (t == "a" || t == "an") return true;
  }
  return false;
}

namespace detail {

inline std::string negate_false_prefix(const std::string& question,
                                       const NegationRuleConfig& config) {
  std::string core = trim(question);
  if (!core.empty() && core.back() == '?') core.pop_back();
  core = trim(core);
  const std::vector<std::string> tokens = split_ws(core);
  if (tokens.size() < 2)
    throw UnhandledFormError("question too short for auxiliary inversion: \"" +
                             question + "\"");
  const std::string aux = lower(tokens[0]);
  if (std::find(config.auxiliary_lexicon.begin(), config.auxiliary_lexicon.end(),
                aux) == config.auxiliary_lexicon.end())
    throw UnhandledFormError("question does not start with a known auxiliary: \"" +
                             question + "\"");

  const std::size_t pred = predicate_start(tokens);
  if (pred == static_cast<std::size_t>(-1))
    throw UnhandledFormError("cannot locate subject/predicate boundary: \"" +
                             question + "\"");

  std::string declarative;
  for (std::size_t i = 1; i < pred; ++i) {
    if (!declarative.empty()) declarative += ' ';
    declarative += tokens[i];
  }
  declarative += ' ';
  declarative += aux;  // auxiliary rejoins in lowercase after the subject
  for (std::size_t i = pred; i < tokens.size(); ++i) {
    declarative += ' ';
    declarative += tokens[i];
  }
  if (!declarative.empty())
    declarative[0] =
        static_cast<char>(std::tolower(static_cast<unsigned char>(declarative[0])));
  return "Is it false that " + declarative + "?";
}

inline std::string negate_article_swap(const std::string& question) {
  if (!question_has_article(question))
    throw UnhandledFormError("no standalone a/an to swap in: \"" + question + "\"");
  std::string out;
  out.reserve(question.size() + 8);
  std::size_t i = 0;
  while (i < question.size()) {
    if (std::isalpha(static_cast<unsigned char>(question[i]))) {
      std::size_t j = i;
      while (j < question.size() && std::isalpha(static_cast<unsigned char>(question[j])))
        ++j;
      const std::string word = question.substr(i, j - i);
      if (is_article(word)) {
        out += std::isupper(static_cast<unsigned char>(word[0])) ? "No" : "no";
      } else {
        out += word;
      }
      i = j;
    } else {
      out += question[i++];
    }
  }
  return out;
}

}  // namespace detail

inline std::string negate_question_rules(const std::string& question,
                                         const NegationRuleConfig& config) {
  if (config.auxiliary_lexicon.empty())
    throw ConfigError("auxiliary lexicon must be non-empty");
  switch (config.strategy) {
    case NegationStrategy::FalsePrefix:
      return detail::negate_false_prefix(question, config);
    case NegationStrategy::ArticleSwap:
      return detail::negate_article_swap(question);
  }
  throw Error("bad NegationStrategy");
}

// ArticleSwap when an article is present, FalsePrefix otherwise.
inline NegationStrategy pick_strategy(const std::string& question) {
  return question_has_article(question) ? NegationStrategy::ArticleSwap
                                        : NegationStrategy::FalsePrefix;
}

inline std::string negate_question_auto(const std::string& question,
                                        NegationRuleConfig config = {}) {
  config.strategy = pick_strategy(question);
  return negate_question_rules(question, config);
}

// Verbatim negation prompt with the question substituted.
inline std::string negation_prompt(const std::string& question) {
  return "Rephrase the following question to be a negated question for the "
         "original question. The rephrase method is to add prefix 'Is it false' "
         "before the original question in a declarative sentence or change all "
         "occurrences of the \"a/an\" to \"no\" for simple cases. Below are the "
         "rules must be followed when rephrasing the question: DO NOT CHANGE OR "
         "ADD ANY INFORMATION to the sentence, such as the case of any letters "
         "except the first letter of the sentence, tenses, the order of clauses, "
         "pronouns, etc.. You should only return the rephrased question. The "
         "question is: [" +
         question + "].";
}

inline std::string negate_question_llm(ChatClient& client, const std::string& question) {
  const std::string reply = detail::trim(client.complete(negation_prompt(question)));
  if (reply.empty())
    throw NonConformingReplyError("negation reply is empty for question: \"" +
                                  question + "\"");
  if (reply.find('\n') != std::string::npos)
    throw NonConformingReplyError("negation reply spans multiple lines: \"" + reply +
                                  "\"");
  return reply;
}

using QuestionNegator = std::function<std::string(const std::string&)>;

inline TestCase negate_case(const TestCase& original, const QuestionNegator& negator) {
  if (original.provenance.kind == Provenance::Kind::Negated)
    throw ChainedNegationError("case \"" + original.id + "\" is already a negation");
  TestCase negated;
  negated.id = original.id + "~neg";
  negated.image_ref = original.image_ref;
  negated.question = negator(original.question);
  negated.answer = flip(original.answer);
  negated.provenance = Provenance::negated();
  negated.parent_id = original.id;
  return negated;
}

// True iff the question carries the FalsePrefix marker. ArticleSwap output
// has no textual marker; its negation status lives in the case provenance.
inline bool is_negated_form(const std::string& question) {
  static const std::string prefix = "is it false that";
  const std::string t = detail::lower(detail::trim(question));
  return t.rfind(prefix, 0) == 0;
}

}  // namespace vhtk
