#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rose/errors.hpp"
#include "rose/pool.hpp"

namespace rose {

struct AnswerType {
  enum class Kind { Number, MultipleChoice, YesNo };

  Kind kind = Kind::Number;
  int option_count = 0;  // multiple choice only; options are 'A', 'B', ...

  static AnswerType number() { return {Kind::Number, 0}; }
  static AnswerType yes_no() { return {Kind::YesNo, 0}; }
  static AnswerType multiple_choice(int options) {
    if (options < 1 || options > 26) throw ConfigError("multiple choice needs between 1 and 26 options");
    return {Kind::MultipleChoice, options};
  }

  bool allows_option(char letter) const {
    return kind == Kind::MultipleChoice && letter >= 'A' && letter < 'A' + option_count;
  }

  bool operator==(const AnswerType&) const = default;
};

struct ParsedCompletion {
  std::string rationale;
  std::string answer;  // normalized
};

inline constexpr std::string_view kTrigger = "Let's think step by step.";
inline constexpr std::string_view kAnswerCue = "the answer is";

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && ascii_lower(s.substr(0, prefix.size())) == ascii_lower(prefix);
}

inline void erase_all(std::string& s, std::string_view what) {
  for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos)) s.erase(pos, what.size());
}

inline std::optional<std::string> canonical_number(std::string raw) {
  for (std::string_view currency : {"$", "\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5", "\xE2\x82\xB9"}) erase_all(raw, currency);
  erase_all(raw, ",");
  std::string s(trim(raw));
  while (!s.empty() && s.back() == '.') s.pop_back();
  s = std::string(trim(s));

  static const std::regex kDecimal(R"(^([+-]?)\s*(\d*)(?:\.(\d+))?$)");
  std::smatch m;
  if (!std::regex_match(s, m, kDecimal)) return std::nullopt;
  std::string integer = m[2].str();
  std::string fraction = m[3].str();
  if (integer.empty() && fraction.empty()) return std::nullopt;

  integer.erase(0, std::min(integer.find_first_not_of('0'), integer.size()));
  if (integer.empty()) integer = "0";
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();

  std::string out = integer;
  if (!fraction.empty()) out += "." + fraction;
  if (m[1].str() == "-" && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace detail

// Canonical form of an answer token, or nothing when the token does not fit
// the answer type.
inline std::optional<std::string> try_normalize_answer(std::string_view raw, const AnswerType& type) {
  const std::string_view t = detail::trim(raw);
  if (t.empty()) return std::nullopt;
  switch (type.kind) {
    case AnswerType::Kind::Number:
      return detail::canonical_number(std::string(t));
    case AnswerType::Kind::MultipleChoice: {
      std::string_view s = t;
      while (!s.empty() && (s.back() == '.' || s.back() == ')')) s.remove_suffix(1);
      if (!s.empty() && s.front() == '(') s.remove_prefix(1);
      if (s.size() != 1) return std::nullopt;
      const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
      if (!type.allows_option(letter)) return std::nullopt;
      return std::string(1, letter);
    }
    case AnswerType::Kind::YesNo: {
      std::string s = detail::ascii_lower(t);
      while (!s.empty() && s.back() == '.') s.pop_back();
      if (s == "yes" || s == "no") return s;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline std::string normalize_answer(std::string_view raw, const AnswerType& type) {
  if (auto n = try_normalize_answer(raw, type)) return *n;
  throw ParseError("answer \"" + std::string(raw) + "\" is not valid for the answer type");
}

namespace detail {

inline std::optional<std::string> extract_number(const std::string& tail) {
  static const std::regex kNumber(
      R"((-?)\s?(?:\$|\xE2\x82\xAC|\xC2\xA3|\xC2\xA5)?\s?(-?)((?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+))");
  std::smatch m;
  if (!std::regex_search(tail, m, kNumber)) return std::nullopt;
  const bool negative = m[1].length() > 0 || m[2].length() > 0;
  return (negative ? "-" : "") + m[3].str();
}

inline std::optional<std::string> extract_option(const std::string& tail, const AnswerType& type) {
  static const std::regex kUpper(R"((?:^|[^A-Za-z])\(?([A-Z])\)?(?![A-Za-z]))");
  for (auto it = std::sregex_iterator(tail.begin(), tail.end(), kUpper); it != std::sregex_iterator(); ++it) {
    const char letter = (*it)[1].str().front();
    if (type.allows_option(letter)) return std::string(1, letter);
  }
  // A lone lowercase letter is accepted only as the very first token.
  static const std::regex kLeadingLower(R"(^\s*:?\s*\(?([a-z])\)?(?![A-Za-z]))");
  std::smatch m;
  if (std::regex_search(tail, m, kLeadingLower)) {
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str().front())));
    if (type.allows_option(letter)) return std::string(1, letter);
  }
  return std::nullopt;
}

inline std::optional<std::string> extract_yes_no(const std::string& tail) {
  static const std::regex kYesNo(R"((?:^|[^A-Za-z])(yes|no)(?![A-Za-z]))", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(tail, m, kYesNo)) return std::nullopt;
  return m[1].str();
}

}  // namespace detail

// Splits a completion at the last "the answer is" (any case) into rationale
// and answer. A leading trigger phrase is dropped from the rationale.
// Returns nothing when the cue is missing, no valid answer token follows it,
// or no reasoning precedes it.
inline std::optional<ParsedCompletion> parse_answer(std::string_view completion, const AnswerType& type) {
  const std::string lowered = detail::ascii_lower(completion);
  const auto cue = lowered.rfind(kAnswerCue);
  if (cue == std::string::npos) return std::nullopt;

  const std::string tail(completion.substr(cue + kAnswerCue.size()));
  std::optional<std::string> token;
  switch (type.kind) {
    case AnswerType::Kind::Number: token = detail::extract_number(tail); break;
    case AnswerType::Kind::MultipleChoice: token = detail::extract_option(tail, type); break;
    case AnswerType::Kind::YesNo: token = detail::extract_yes_no(tail); break;
  }
  if (!token) return std::nullopt;
  auto answer = try_normalize_answer(*token, type);
  if (!answer) return std::nullopt;

  std::string_view rationale = detail::trim(completion.substr(0, cue));
  if (detail::starts_with_icase(rationale, kTrigger)) rationale = detail::trim(rationale.substr(kTrigger.size()));
  if (rationale.empty()) return std::nullopt;
  return ParsedCompletion{std::string(rationale), std::move(*answer)};
}

// "Q: ...\nA: Let's think step by step. <rationale> The answer is <answer>."
inline std::string demonstration_block(const Experience& demo) {
  std::string block = "Q: " + demo.question + "\nA: " + std::string(kTrigger) + " " + demo.rationale;
  block += " The answer is " + demo.answer + ".";
  return block;
}

// Demonstration blocks in the given order, blank-line separated, followed by
// the open test block. With no demonstrations this is the zero-shot prompt.
inline std::string build_prompt(std::span<const Experience> demonstrations, std::string_view test_question) {
  std::string prompt;
  for (const auto& demo : demonstrations) {
    prompt += demonstration_block(demo);
    prompt += "\n\n";
  }
  prompt += "Q: ";
  prompt += test_question;
  prompt += "\nA: ";
  prompt += kTrigger;
  return prompt;
}

// Recovers the test question from a prompt made by build_prompt.
inline std::optional<std::string> extract_test_question(std::string_view prompt) {
  const std::string suffix = "\nA: " + std::string(kTrigger);
  if (prompt.size() < suffix.size() || prompt.substr(prompt.size() - suffix.size()) != suffix) return std::nullopt;
  const std::string_view body = prompt.substr(0, prompt.size() - suffix.size());
  const auto sep = body.rfind("\n\nQ: ");
  if (sep != std::string_view::npos) return std::string(body.substr(sep + 5));
  if (body.substr(0, 3) == "Q: ") return std::string(body.substr(3));
  return std::nullopt;
}

// Appends "Answer Choices: (A) x (B) y ..." on a new line.
inline std::string question_with_choices(std::string_view question, std::span<const std::string> choices) {
  std::string out(question);
  if (choices.empty()) return out;
  out += "\nAnswer Choices:";
  for (std::size_t i = 0; i < choices.size(); ++i) {
    out += " (";
    out += static_cast<char>('A' + i);
    out += ") ";
    out += choices[i];
  }
  return out;
}

}  // namespace rose
