#include "crcm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "crcm/rng.hpp"

namespace crcm {

using nlohmann::json;

std::string post_content(const Post& post) {
  if (post.body.empty()) return post.title;
  return post.title + " " + post.body;
}

namespace {

json parse_line(const std::string& line, const std::string& path, int line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(path + " line " + std::to_string(line_no) +
                    ": malformed JSON: " + e.what());
  }
}

template <typename T>
T require_field(const json& record, const char* field, const std::string& path,
                int line_no) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw DataError(path + " line " + std::to_string(line_no) +
                    ": missing field \"" + field + "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(path + " line " + std::to_string(line_no) +
                    ": field \"" + field + "\" has the wrong type");
  }
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Dataset load_posts(const std::string& path, const std::string& domain) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open posts file: " + path);
  }
  Dataset data;
  data.domain = domain;
  std::unordered_map<std::string, int> seen;  // id -> first line
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json rec = parse_line(line, path, line_no);
    Post post;
    post.id = require_field<std::string>(rec, "id", path, line_no);
    post.community = require_field<std::string>(rec, "community", path, line_no);
    post.title = require_field<std::string>(rec, "title", path, line_no);
    post.body = require_field<std::string>(rec, "body", path, line_no);
    post.created_utc = require_field<int64_t>(rec, "created_utc", path, line_no);
    post.moderated = require_field<bool>(rec, "moderated", path, line_no);
    if (post.id.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": empty post id");
    }
    if (post.title.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": empty title in post \"" + post.id + "\"");
    }
    auto [it, inserted] = seen.emplace(post.id, line_no);
    if (!inserted) {
      throw DataError(path + ": duplicate post id \"" + post.id + "\" (lines " +
                      std::to_string(it->second) + " and " + std::to_string(line_no) + ")");
    }
    data.posts.push_back(std::move(post));
  }
  return data;
}

std::map<std::string, std::vector<CommunityRule>> load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open rules file: " + path);
  }
  std::map<std::string, std::vector<CommunityRule>> groups;
  std::set<std::pair<std::string, int>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json rec = parse_line(line, path, line_no);
    CommunityRule rule;
    rule.community = require_field<std::string>(rec, "community", path, line_no);
    rule.rule_index = require_field<int>(rec, "rule_index", path, line_no);
    rule.text = require_field<std::string>(rec, "text", path, line_no);
    if (rule.community.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": empty community");
    }
    if (rule.rule_index < 0) {
      throw DataError(path + " line " + std::to_string(line_no) + ": negative rule_index");
    }
    if (rule.text.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": empty rule text");
    }
    if (!seen.insert({rule.community, rule.rule_index}).second) {
      throw DataError(path + " line " + std::to_string(line_no) + ": duplicate rule (" +
                      rule.community + ", " + std::to_string(rule.rule_index) + ")");
    }
    groups[rule.community].push_back(std::move(rule));
  }
  for (auto& [community, rules] : groups) {
    std::sort(rules.begin(), rules.end(),
              [](const CommunityRule& a, const CommunityRule& b) {
                return a.rule_index < b.rule_index;
              });
  }
  return groups;
}

Dataset undersample(const Dataset& data, uint64_t seed) {
  std::vector<size_t> positives, negatives;
  for (size_t i = 0; i < data.posts.size(); ++i) {
    (data.posts[i].moderated ? positives : negatives).push_back(i);
  }
  if (positives.empty() || negatives.empty()) {
    throw DataError("cannot balance single-class data");
  }
  auto& majority = positives.size() >= negatives.size() ? positives : negatives;
  const size_t target = std::min(positives.size(), negatives.size());

  Rng rng(seed);
  rng.shuffle(majority);
  majority.resize(target);

  std::vector<bool> keep(data.posts.size(), false);
  for (size_t i : positives) keep[i] = true;
  for (size_t i : negatives) keep[i] = true;

  Dataset out;
  out.domain = data.domain;
  for (size_t i = 0; i < data.posts.size(); ++i) {
    if (keep[i]) out.posts.push_back(data.posts[i]);
  }
  return out;
}

FoldSplit stratified_kfold(const Dataset& data, int k, uint64_t seed) {
  if (k < 2) {
    throw DataError("stratified_kfold: k must be >= 2");
  }
  std::vector<std::vector<size_t>> classes(2);
  for (size_t i = 0; i < data.posts.size(); ++i) {
    classes[data.posts[i].moderated ? 1 : 0].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (classes[c].size() < static_cast<size_t>(k)) {
      throw DataError("stratified_kfold: class " + std::to_string(c) + " has " +
                      std::to_string(classes[c].size()) + " members, need at least " +
                      std::to_string(k));
    }
  }

  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.folds.assign(k, {});

  // Deal each class round-robin; remainders go to the currently smallest
  // folds so total fold sizes stay within 1 of each other.
  std::vector<size_t> totals(k, 0);
  for (int c = 0; c < 2; ++c) {
    auto& members = classes[c];
    Rng rng(derive_seed(seed, static_cast<uint64_t>(c)));
    rng.shuffle(members);

    const size_t base = members.size() / k;
    const size_t extra = members.size() % k;
    std::vector<size_t> order(k);
    for (int f = 0; f < k; ++f) order[f] = f;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return totals[a] < totals[b]; });
    std::vector<size_t> quota(k, base);
    for (size_t j = 0; j < extra; ++j) quota[order[j]]++;

    size_t next = 0;
    for (int f = 0; f < k; ++f) {
      for (size_t j = 0; j < quota[f]; ++j) {
        split.folds[f].push_back(members[next++]);
      }
      totals[f] += quota[f];
    }
  }
  for (auto& fold : split.folds) {
    std::sort(fold.begin(), fold.end());
  }
  return split;
}

}  // namespace crcm
