#include <doctest.h>

#include <cmath>
#include <map>

#include "crcm/rng.hpp"
#include "crcm/rules.hpp"

using namespace crcm;

namespace {

// Fixed word -> vector table for exact linear-combination checks.
class StubProvider final : public EmbeddingProvider {
 public:
  StubProvider(int dim, std::map<std::string, EmbeddingVector> table)
      : dim_(dim), table_(std::move(table)) {}
  int dimension() const override { return dim_; }
  std::string name() const override { return "stub"; }
  std::string version() const override { return "1"; }
  EmbeddingVector embed_text(std::string_view text) const override {
    auto it = table_.find(std::string(text));
    if (it == table_.end()) return EmbeddingVector(dim_, 0.0);
    return it->second;
  }

 private:
  int dim_;
  std::map<std::string, EmbeddingVector> table_;
};

double l2(const EmbeddingVector& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace

TEST_CASE("topic_embedding with a single word is that word's embedding") {
  const StubProvider provider(3, {{"spam", {1.0, 2.0, 3.0}}});
  const TopicSummary summary{0, {"spam"}, {1.0}};
  const RuleTopicEmbedding topic = topic_embedding(summary, provider);
  CHECK(topic.vector == EmbeddingVector{1.0, 2.0, 3.0});
  CHECK(topic.topic_id == 0);
  CHECK(topic.source.words == summary.words);
}

TEST_CASE("topic_embedding is the exact probability-weighted sum") {
  const StubProvider provider(2, {{"aa", {1.0, 0.0}}, {"bb", {0.0, 1.0}}});
  const TopicSummary summary{0, {"aa", "bb"}, {0.75, 0.25}};
  const RuleTopicEmbedding topic = topic_embedding(summary, provider);
  CHECK(topic.vector[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(topic.vector[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("10-word topic embedding matches an independent accumulation") {
  const HashingProvider provider(64, 5);
  TopicSummary summary;
  summary.topic_id = 0;
  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    summary.words.push_back("word" + std::to_string(i));
    summary.probs.push_back(10.0 - i);
    total += 10.0 - i;
  }
  for (double& p : summary.probs) p /= total;

  const RuleTopicEmbedding topic = topic_embedding(summary, provider);

  // Brute-force oracle: accumulate p_i * e_i with independent code.
  EmbeddingVector expected(64, 0.0);
  for (int i = 0; i < 10; ++i) {
    const EmbeddingVector e = provider.embed_text(summary.words[i]);
    for (int j = 0; j < 64; ++j) expected[j] += summary.probs[i] * e[j];
  }
  REQUIRE(topic.vector.size() == expected.size());
  for (int j = 0; j < 64; ++j) {
    CHECK(topic.vector[j] == doctest::Approx(expected[j]).epsilon(1e-12));
  }
}

TEST_CASE("topic_embedding validates its inputs") {
  const StubProvider provider(2, {{"aa", {1.0, 0.0}}});
  CHECK_THROWS(topic_embedding({0, {"aa"}, {0.5}}, provider));       // probs != 1
  CHECK_THROWS(topic_embedding({0, {}, {}}, provider));              // empty
  CHECK_THROWS(topic_embedding({0, {"aa"}, {0.5, 0.5}}, provider));  // length mismatch
}

TEST_CASE("renormalizing an already-normalized summary leaves h_k unchanged") {
  const HashingProvider provider(32, 2);
  TopicSummary summary{0, {"alpha", "beta", "gamma"}, {0.5, 0.3, 0.2}};
  TopicSummary rescaled = summary;
  double total = 0.0;
  for (double& p : rescaled.probs) {
    p *= 3.7;
    total += p;
  }
  for (double& p : rescaled.probs) p /= total;
  const auto a = topic_embedding(summary, provider);
  const auto b = topic_embedding(rescaled, provider);
  for (size_t j = 0; j < a.vector.size(); ++j) {
    CHECK(a.vector[j] == doctest::Approx(b.vector[j]).epsilon(1e-12));
  }
}

TEST_CASE("convex combination norm bound holds") {
  const HashingProvider provider(48, 8);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    TopicSummary summary;
    summary.topic_id = 0;
    const int m = 2 + static_cast<int>(rng.below(8));
    double total = 0.0;
    std::vector<double> raw;
    for (int i = 0; i < m; ++i) {
      summary.words.push_back("w" + std::to_string(rng.below(40)) + "x");
      raw.push_back(rng.uniform01() + 0.01);
      total += raw.back();
    }
    for (double p : raw) summary.probs.push_back(p / total);

    double max_norm = 0.0;
    for (const auto& word : summary.words) {
      max_norm = std::max(max_norm, l2(provider.embed_text(word)));
    }
    const auto topic = topic_embedding(summary, provider);
    CHECK(l2(topic.vector) <= max_norm + 1e-9);
  }
}

TEST_CASE("build_rule_matrix canonicalizes topic order") {
  const StubProvider provider(2, {{"aa", {1.0, 0.0}}, {"bb", {0.0, 1.0}}});
  const std::vector<TopicSummary> summaries = {
      {1, {"bb"}, {1.0}},
      {0, {"aa"}, {1.0}},
  };
  const RuleMatrix matrix = build_rule_matrix(summaries, provider);
  REQUIRE(matrix.size() == 2);
  CHECK(matrix.topics[0].topic_id == 0);
  CHECK(matrix.vec(0) == EmbeddingVector{1.0, 0.0});
  CHECK(matrix.vec(1) == EmbeddingVector{0.0, 1.0});

  // Permuting the input changes nothing.
  const RuleMatrix again =
      build_rule_matrix({summaries[1], summaries[0]}, provider);
  CHECK(again.vec(0) == matrix.vec(0));
  CHECK(again.vec(1) == matrix.vec(1));
}

TEST_CASE("build_rule_matrix rejects non-contiguous topic ids") {
  const StubProvider provider(2, {{"aa", {1.0, 0.0}}});
  CHECK_THROWS(build_rule_matrix({{0, {"aa"}, {1.0}}, {2, {"aa"}, {1.0}}}, provider));
  CHECK(build_rule_matrix({{0, {"aa"}, {1.0}}}, provider).size() == 1);
}
