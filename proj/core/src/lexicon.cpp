#include "stylelab/lexicon.hpp"

#include "stylelab/errors.hpp"

namespace stylelab::data::lexicon {

namespace {

const std::vector<std::string> kTopicNames = {
    "cooking", "travel", "finance", "music", "sports", "science", "gardening", "cinema"};

const std::vector<std::vector<std::string>> kTopicKeywords = {
    {"recipe", "oven", "flour", "garlic", "simmer", "butter", "sauce", "spice", "bake",
     "onion", "pepper", "dough"},
    {"flight", "hotel", "passport", "luggage", "beach", "museum", "train", "itinerary",
     "ferry", "hostel", "map", "tourist"},
    {"stock", "bond", "dividend", "interest", "loan", "budget", "market", "invest",
     "portfolio", "bank", "credit", "tax"},
    {"guitar", "melody", "chord", "drum", "album", "rhythm", "concert", "lyric", "bass",
     "tempo", "piano", "song"},
    {"goal", "coach", "league", "match", "referee", "stadium", "score", "team", "season",
     "player", "pitch", "trophy"},
    {"atom", "cell", "experiment", "molecule", "theory", "data", "neuron", "gene",
     "physics", "lab", "sample", "orbit"},
    {"soil", "seed", "compost", "bloom", "prune", "mulch", "shrub", "tulip", "weed",
     "harvest", "root", "fern"},
    {"film", "director", "actor", "scene", "script", "camera", "plot", "screen", "sequel",
     "studio", "cast", "trailer"},
};

constexpr std::size_t kKeywordsPerTopic = 12;

}  // namespace

const std::vector<std::vector<std::string>>& register_words() {
  static const std::vector<std::vector<std::string>> words = {
      {"the", "a", "is", "it", "and", "of", "to", "in"},
      {"thus", "moreover", "therefore", "whom", "shall", "upon", "hence", "whereby"},
      {"like", "so", "gonna", "really", "just", "kinda", "yeah", "pretty"},
      {"thee", "thou", "hath", "doth", "ere", "whilst", "unto", "thy"},
  };
  return words;
}

const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> words = {
      "people", "time",   "day",    "way",   "thing",  "year",  "place", "life",
      "work",   "world",  "hand",   "part",  "week",   "home",  "group", "point",
      "case",   "fact",   "night",  "story", "idea",   "room",  "side",  "kind",
      "head",   "house",  "friend", "hour",  "game",   "line",  "end",   "family",
      "door",   "moment", "city",   "word",  "name",   "area",  "morning", "reason"};
  return words;
}

std::string topic_name(std::size_t topic) {
  if (topic < kTopicNames.size()) return kTopicNames[topic];
  return "topic" + std::to_string(topic);
}

std::vector<std::string> topic_keywords(std::size_t topic) {
  if (topic < kTopicKeywords.size()) return kTopicKeywords[topic];
  std::vector<std::string> out;
  for (std::size_t k = 0; k < kKeywordsPerTopic; ++k) {
    out.push_back("t" + std::to_string(topic) + "k" + std::to_string(k));
  }
  return out;
}

std::string_view factor_phrase(std::size_t factor, std::size_t level) {
  if (factor >= kNumStyleFactors || level >= kFactorLevels[factor]) {
    throw ContractError("style factor out of range");
  }
  switch (factor) {
    case 0: return kSentenceLengthPhrases[level];
    case 1: return kPunctuationPhrases[level];
    default: return kRegisterPhrases[level];
  }
}

const std::vector<std::string>& auxiliary_words() {
  static const std::vector<std::string> words = {
      // decision records
      "{", "}", "\"", ":", "determination", "explaination", "explanation", "same",
      "different", "author", "content",
      // explanations
      "both", "texts", "share", "text", "1", "2", "has", "while", "discuss", "discusses",
      "but", "differ", "word", "choice", "short", "medium", "long", "sentences", "comma",
      "pauses", "semicolon", "breaks", "dash", "asides", "exclamation", "bursts", "plain",
      "formal", "casual", "archaic", "wording", "and",
      // prompt templates
      "reconstruct", "the", "from", "style", "representation", "decide", "if", "two",
      "representations", "are", "by", "author", "or", "not", "answer", "in", "json",
      "with", "express", "core", "'", "s", "given", "original", "of", "a"};
  return words;
}

}  // namespace stylelab::data::lexicon
