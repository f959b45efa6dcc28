#include "crcm/rules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crcm {

RuleTopicEmbedding topic_embedding(const TopicSummary& summary,
                                   const EmbeddingProvider& provider) {
  if (summary.words.empty() || summary.words.size() != summary.probs.size()) {
    throw std::invalid_argument("topic_embedding: malformed summary");
  }
  double total = 0.0;
  for (double p : summary.probs) total += p;
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("topic_embedding: summary probabilities must sum to 1");
  }

  const std::vector<EmbeddingVector> word_vecs = provider.embed_batch(summary.words);
  EmbeddingVector vec(provider.dimension(), 0.0);
  for (size_t i = 0; i < summary.words.size(); ++i) {
    const double p = summary.probs[i];
    for (size_t j = 0; j < vec.size(); ++j) {
      vec[j] += p * word_vecs[i][j];
    }
  }
  return RuleTopicEmbedding{summary.topic_id, std::move(vec), summary};
}

RuleMatrix build_rule_matrix(const std::vector<TopicSummary>& summaries,
                             const EmbeddingProvider& provider) {
  std::vector<TopicSummary> ordered = summaries;
  std::sort(ordered.begin(), ordered.end(),
            [](const TopicSummary& a, const TopicSummary& b) {
              return a.topic_id < b.topic_id;
            });
  for (size_t k = 0; k < ordered.size(); ++k) {
    if (ordered[k].topic_id != static_cast<int>(k)) {
      throw std::invalid_argument("build_rule_matrix: topic ids must be 0..K-1");
    }
  }
  RuleMatrix matrix;
  matrix.topics.reserve(ordered.size());
  for (const auto& summary : ordered) {
    matrix.topics.push_back(topic_embedding(summary, provider));
  }
  return matrix;
}

}  // namespace crcm
