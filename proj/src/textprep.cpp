#include "crcm/textprep.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace crcm {

namespace {

// Version en-1. Must stay in sync with data/stopwords.txt (checked by test).
const char* const kStopwords[] = {
    "a",       "about",   "above",   "after",   "again",   "against", "all",
    "am",      "an",      "and",     "any",     "are",     "aren't",  "as",
    "at",      "be",      "because", "been",    "before",  "being",   "below",
    "between", "both",    "but",     "by",      "can",     "can't",   "cannot",
    "could",   "couldn't", "did",    "didn't",  "do",      "does",    "doesn't",
    "doing",   "don't",   "down",    "during",  "each",    "few",     "for",
    "from",    "further", "had",     "hadn't",  "has",     "hasn't",  "have",
    "haven't", "having",  "he",      "her",     "here",    "hers",    "herself",
    "him",     "himself", "his",     "how",     "i'd",     "i'll",    "i'm",
    "i've",    "if",      "in",      "into",    "is",      "isn't",   "it",
    "it's",    "its",     "itself",  "just",    "me",      "more",    "most",
    "mustn't", "my",      "myself",  "no",      "nor",     "not",     "of",
    "off",     "on",      "once",    "only",    "or",      "other",   "ought",
    "our",     "ours",    "ourselves", "out",   "over",    "own",     "same",
    "shan't",  "she",     "should",  "shouldn't", "so",    "some",    "such",
    "than",    "that",    "that's",  "the",     "their",   "theirs",  "them",
    "themselves", "then", "there",   "these",   "they",    "they're", "this",
    "those",   "through", "to",      "too",     "under",   "until",   "up",
    "very",    "was",     "wasn't",  "we",      "we're",   "were",    "weren't",
    "what",    "when",    "where",   "which",   "while",   "who",     "whom",
    "why",     "will",    "with",    "won't",   "would",   "wouldn't", "you",
    "you'd",   "you'll",  "you're",  "you've",  "your",    "yours",   "yourself",
    "yourselves",
};

bool is_token_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') ||
         (u >= '0' && u <= '9') || u == '\'';
}

}  // namespace

const StopwordSet& default_stopwords() {
  static const StopwordSet set(std::begin(kStopwords), std::end(kStopwords));
  return set;
}

const char* stopwords_version() { return "en-1"; }

StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open stopword list: " + path);
  }
  StopwordSet set;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') continue;
    set.insert(line);
  }
  return set;
}

TokenStream preprocess(std::string_view text) {
  return preprocess(text, default_stopwords());
}

TokenStream preprocess(std::string_view text, const StopwordSet& stopwords) {
  TokenStream out;
  std::string token;
  auto flush = [&] {
    if (token.size() >= 2 && !stopwords.contains(token)) {
      out.push_back(token);
    }
    token.clear();
  };
  for (char c : text) {
    if (is_token_char(c)) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> ngrams(const TokenStream& tokens, int n_min, int n_max) {
  if (n_min < 1 || n_min > n_max) {
    throw std::invalid_argument("ngrams: require 1 <= n_min <= n_max");
  }
  std::vector<std::string> out;
  for (int n = n_min; n <= n_max; ++n) {
    if (tokens.size() < static_cast<size_t>(n)) continue;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string gram = tokens[i];
      for (int j = 1; j < n; ++j) {
        gram += ' ';
        gram += tokens[i + j];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

}  // namespace crcm
