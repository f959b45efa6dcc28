#pragma once

#include <vector>

#include "crcm/embeddings.hpp"
#include "crcm/topics.hpp"

namespace crcm {

// A rule topic's embedding: the probability-weighted sum of its top-word
// embeddings. Not renormalized; cosine handles scale downstream.
struct RuleTopicEmbedding {
  int topic_id = 0;
  EmbeddingVector vector;
  TopicSummary source;
};

// The rule representation: one embedding per topic, in topic_id order 0..K-1.
struct RuleMatrix {
  std::vector<RuleTopicEmbedding> topics;

  int size() const { return static_cast<int>(topics.size()); }
  const EmbeddingVector& vec(int k) const { return topics[k].vector; }
};

RuleTopicEmbedding topic_embedding(const TopicSummary& summary,
                                   const EmbeddingProvider& provider);

RuleMatrix build_rule_matrix(const std::vector<TopicSummary>& summaries,
                             const EmbeddingProvider& provider);

}  // namespace crcm
