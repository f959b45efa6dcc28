#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace crcm {

// Lowercase word tokens: each matches [a-z0-9']+, length >= 2, no stopwords.
using TokenStream = std::vector<std::string>;

using StopwordSet = std::unordered_set<std::string>;

// The stopword list shipped with this repo (see data/stopwords.txt).
const StopwordSet& default_stopwords();
const char* stopwords_version();

// Loads a stopword list, one word per line, UTF-8. '#' lines are comments.
StopwordSet load_stopwords(const std::string& path);

// Lowercases, strips punctuation, drops tokens shorter than 2 characters and
// stopwords. Deterministic; empty text yields an empty stream.
TokenStream preprocess(std::string_view text);
TokenStream preprocess(std::string_view text, const StopwordSet& stopwords);

// All contiguous n-grams for n in [n_min, n_max], space-joined, scan order.
std::vector<std::string> ngrams(const TokenStream& tokens, int n_min, int n_max);

}  // namespace crcm
