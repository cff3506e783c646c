#pragma once

// Word tables behind the synthetic corpus, the explanation templates and the
// prompt templates.

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace stylelab::data::lexicon {

/// Style factor layout: {sentence length regime, punctuation habit, register}.
inline constexpr std::size_t kNumStyleFactors = 3;
inline constexpr std::array<std::size_t, kNumStyleFactors> kFactorLevels = {3, 4, 4};
inline constexpr std::array<std::string_view, kNumStyleFactors> kFactorNames = {
    "sentence length", "punctuation", "register"};

inline constexpr std::array<double, 3> kSentenceLengthMeans = {5.0, 9.0, 14.0};
inline constexpr std::array<std::string_view, 3> kSentenceLengthPhrases = {
    "short sentences", "medium sentences", "long sentences"};

inline constexpr std::array<std::string_view, 4> kPunctuationMarks = {",", ";", "-", "!"};
inline constexpr std::array<std::string_view, 4> kPunctuationPhrases = {
    "comma pauses", "semicolon breaks", "dash asides", "exclamation bursts"};

inline constexpr std::array<std::string_view, 4> kRegisterPhrases = {
    "plain wording", "formal wording", "casual wording", "archaic wording"};

/// Function words per register.
const std::vector<std::vector<std::string>>& register_words();
/// Topic-neutral content words shared by every author.
const std::vector<std::string>& neutral_words();

/// Topic keyword tables, ordered by decreasing frequency. Topics past the
/// built-in tables get synthetic keywords.
std::string topic_name(std::size_t topic);
std::vector<std::string> topic_keywords(std::size_t topic);

/// Human-readable phrase for level `level` of factor `factor`.
std::string_view factor_phrase(std::size_t factor, std::size_t level);

/// Words used by explanation texts, decision records and prompt templates.
const std::vector<std::string>& auxiliary_words();

}  // namespace stylelab::data::lexicon
