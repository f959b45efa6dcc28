#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crcm/errors.hpp"

namespace crcm {

// One user-generated item.
struct Post {
  std::string id;         // non-empty, unique within a dataset
  std::string community;
  std::string title;      // non-empty
  std::string body;       // may be empty
  int64_t created_utc = 0;
  bool moderated = false;
};

// The text a classifier sees: title, a single space, body. Empty body
// contributes nothing.
std::string post_content(const Post& post);

struct CommunityRule {
  std::string community;
  int rule_index = 0;  // >= 0; (community, rule_index) unique
  std::string text;    // non-empty
};

struct Dataset {
  std::vector<Post> posts;
  std::string domain;
};

// k disjoint index sets covering 0..n-1, sizes and per-class counts each
// differing by at most 1.
struct FoldSplit {
  int k = 0;
  std::vector<std::vector<size_t>> folds;
  uint64_t seed = 0;
};

// Parses a posts JSONL file. Each line is one Post record:
// {"id", "community", "title", "body", "created_utc", "moderated"}.
// Errors name the offending line; duplicate ids name the id.
Dataset load_posts(const std::string& path, const std::string& domain = "");

// Parses a rules JSONL file ({"community", "rule_index", "text"}); returns
// rules grouped by community, ordered by rule_index within each group.
std::map<std::string, std::vector<CommunityRule>> load_rules(const std::string& path);

// Balances classes by subsampling the majority class without replacement.
// The minority class is kept in full; output preserves input order.
Dataset undersample(const Dataset& data, uint64_t seed);

// Stratified k-fold split over the moderated/non-moderated classes.
FoldSplit stratified_kfold(const Dataset& data, int k, uint64_t seed);

}  // namespace crcm
