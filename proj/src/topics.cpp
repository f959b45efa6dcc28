#include "crcm/topics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "crcm/rng.hpp"

namespace crcm {

namespace {

#ifndef NDEBUG
void assert_count_conservation(const std::vector<std::vector<int>>& topic_word,
                               const std::vector<int>& topic_total,
                               const std::vector<int>& word_freq) {
  const size_t V = word_freq.size();
  for (size_t k = 0; k < topic_word.size(); ++k) {
    long sum = 0;
    for (size_t w = 0; w < V; ++w) sum += topic_word[k][w];
    assert(sum == topic_total[k]);
  }
  for (size_t w = 0; w < V; ++w) {
    long sum = 0;
    for (size_t k = 0; k < topic_word.size(); ++k) sum += topic_word[k][w];
    assert(sum == word_freq[w]);
  }
}
#endif

// Word ids of the top-m entries of a phi row; ties broken by probability,
// then lexicographically.
std::vector<int> top_word_ids(const TopicModel& model, int topic, int m) {
  std::vector<int> ids(model.vocab_words.size());
  for (size_t w = 0; w < ids.size(); ++w) ids[w] = static_cast<int>(w);
  const auto& row = model.phi[topic];
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return model.vocab_words[a] < model.vocab_words[b];
  });
  ids.resize(m);
  return ids;
}

}  // namespace

TopicModel fit_lda(const std::vector<TokenStream>& docs, int K, double alpha,
                   double beta, int iterations, uint64_t seed,
                   const GibbsObserver& observer) {
  if (K < 1) throw std::invalid_argument("fit_lda: K must be >= 1");
  if (iterations < 1) throw std::invalid_argument("fit_lda: iterations must be >= 1");
  if (alpha <= 0 || beta <= 0) throw std::invalid_argument("fit_lda: alpha and beta must be > 0");

  TopicModel model;
  model.K = K;
  model.alpha = alpha;
  model.beta = beta;
  model.seed = seed;
  model.iterations = iterations;

  // Word ids in first-occurrence order keeps everything reproducible.
  std::vector<std::vector<int>> doc_words;
  int non_empty = 0;
  for (const auto& doc : docs) {
    std::vector<int> ids;
    ids.reserve(doc.size());
    for (const auto& token : doc) {
      auto [it, inserted] = model.vocab.emplace(token, static_cast<int>(model.vocab_words.size()));
      if (inserted) model.vocab_words.push_back(token);
      ids.push_back(it->second);
    }
    if (!ids.empty()) ++non_empty;
    doc_words.push_back(std::move(ids));
  }
  if (model.vocab_words.empty()) {
    throw std::invalid_argument("fit_lda: empty corpus (no tokens in any document)");
  }
  if (non_empty < K) {
    throw std::invalid_argument("fit_lda: need at least K non-empty documents");
  }

  const int V = static_cast<int>(model.vocab_words.size());
  const size_t M = doc_words.size();
  std::vector<std::vector<int>> doc_topic(M, std::vector<int>(K, 0));
  std::vector<std::vector<int>> topic_word(K, std::vector<int>(V, 0));
  std::vector<int> topic_total(K, 0);
  std::vector<std::vector<int>> assign(M);

#ifndef NDEBUG
  std::vector<int> word_freq(V, 0);
  for (const auto& words : doc_words)
    for (int w : words) ++word_freq[w];
#endif

  Rng rng(seed);
  for (size_t m = 0; m < M; ++m) {
    assign[m].resize(doc_words[m].size());
    for (size_t i = 0; i < doc_words[m].size(); ++i) {
      const int w = doc_words[m][i];
      const int k = static_cast<int>(rng.below(K));
      assign[m][i] = k;
      ++doc_topic[m][k];
      ++topic_word[k][w];
      ++topic_total[k];
    }
  }

  const double v_beta = V * beta;
  std::vector<double> cumulative(K);
  for (int iter = 0; iter < iterations; ++iter) {
    for (size_t m = 0; m < M; ++m) {
      for (size_t i = 0; i < doc_words[m].size(); ++i) {
        const int w = doc_words[m][i];
        const int old_k = assign[m][i];
        --doc_topic[m][old_k];
        --topic_word[old_k][w];
        --topic_total[old_k];

        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          total += (doc_topic[m][k] + alpha) * (topic_word[k][w] + beta) /
                   (topic_total[k] + v_beta);
          cumulative[k] = total;
        }
        const double u = rng.uniform01() * total;
        int new_k = 0;
        while (new_k < K - 1 && u >= cumulative[new_k]) ++new_k;

        assign[m][i] = new_k;
        ++doc_topic[m][new_k];
        ++topic_word[new_k][w];
        ++topic_total[new_k];
      }
    }
#ifndef NDEBUG
    assert_count_conservation(topic_word, topic_total, word_freq);
#endif
    if (observer) observer(iter, topic_word, topic_total);
  }

  model.phi.assign(K, std::vector<double>(V));
  for (int k = 0; k < K; ++k) {
    const double denom = topic_total[k] + v_beta;
    for (int w = 0; w < V; ++w) {
      model.phi[k][w] = (topic_word[k][w] + beta) / denom;
    }
  }
  return model;
}

double coherence_umass(const TopicModel& model, const std::vector<TokenStream>& docs,
                       int top_m) {
  if (top_m < 2) throw std::invalid_argument("coherence_umass: top_m must be >= 2");
  if (top_m > static_cast<int>(model.vocab_words.size())) {
    top_m = static_cast<int>(model.vocab_words.size());
  }

  // Document occurrence sets restricted to the model's vocabulary.
  std::vector<std::vector<int>> doc_sets;
  doc_sets.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<int> ids;
    for (const auto& token : doc) {
      auto it = model.vocab.find(token);
      if (it != model.vocab.end()) ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    doc_sets.push_back(std::move(ids));
  }
  auto doc_has = [&](const std::vector<int>& set, int w) {
    return std::binary_search(set.begin(), set.end(), w);
  };

  double sum = 0.0;
  for (int k = 0; k < model.K; ++k) {
    const std::vector<int> top = top_word_ids(model, k, top_m);
    std::vector<int> occur(top_m, 0);
    std::vector<std::vector<int>> co(top_m, std::vector<int>(top_m, 0));
    for (const auto& set : doc_sets) {
      for (int i = 0; i < top_m; ++i) {
        if (!doc_has(set, top[i])) continue;
        ++occur[i];
        for (int j = i + 1; j < top_m; ++j) {
          if (doc_has(set, top[j])) ++co[i][j];
        }
      }
    }
    double score = 0.0;
    for (int i = 0; i < top_m; ++i) {      // i: better-ranked word
      if (occur[i] == 0) continue;         // skip pairs with zero denominator
      for (int j = i + 1; j < top_m; ++j) {
        score += std::log((co[i][j] + 1.0) / occur[i]);
      }
    }
    sum += score;
  }
  return sum / model.K;
}

int pick_best_k(const std::vector<SweepPoint>& points) {
  if (points.empty()) throw std::invalid_argument("pick_best_k: no candidates");
  int best = points.front().k;
  double best_score = points.front().coherence;
  for (const auto& point : points) {
    if (point.coherence > best_score ||
        (point.coherence == best_score && point.k < best)) {
      best_score = point.coherence;
      best = point.k;
    }
  }
  return best;
}

SweepResult sweep_topic_count(const std::vector<TokenStream>& docs, int k_min,
                              int k_max, const LdaConfig& config) {
  if (k_min < 1 || k_min > k_max) {
    throw std::invalid_argument("sweep_topic_count: require 1 <= k_min <= k_max");
  }
  SweepResult result;
  for (int k = k_min; k <= k_max; ++k) {
    const double alpha = config.alpha > 0 ? config.alpha : 50.0 / k;
    TopicModel model =
        fit_lda(docs, k, alpha, config.beta, config.iterations, config.seed + k);
    result.points.push_back({k, coherence_umass(model, docs, config.top_m)});
  }
  result.best_k = pick_best_k(result.points);
  return result;
}

std::vector<TopicSummary> summarize(const TopicModel& model, int top_m) {
  if (top_m < 1 || top_m > static_cast<int>(model.vocab_words.size())) {
    throw std::invalid_argument("summarize: top_m must be in [1, vocabulary size]");
  }
  std::vector<TopicSummary> out;
  out.reserve(model.K);
  for (int k = 0; k < model.K; ++k) {
    TopicSummary summary;
    summary.topic_id = k;
    const std::vector<int> top = top_word_ids(model, k, top_m);
    double total = 0.0;
    for (int w : top) total += model.phi[k][w];
    for (int w : top) {
      summary.words.push_back(model.vocab_words[w]);
      summary.probs.push_back(model.phi[k][w] / total);
    }
    out.push_back(std::move(summary));
  }
  return out;
}

nlohmann::json summaries_to_json(const std::vector<TopicSummary>& summaries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : summaries) {
    arr.push_back({{"topic_id", s.topic_id}, {"words", s.words}, {"probs", s.probs}});
  }
  return arr;
}

std::vector<TopicSummary> summaries_from_json(const nlohmann::json& j) {
  std::vector<TopicSummary> out;
  for (const auto& item : j) {
    TopicSummary s;
    s.topic_id = item.at("topic_id").get<int>();
    s.words = item.at("words").get<std::vector<std::string>>();
    s.probs = item.at("probs").get<std::vector<double>>();
    if (s.words.size() != s.probs.size()) {
      throw std::invalid_argument("topic summary: words/probs length mismatch");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace crcm
