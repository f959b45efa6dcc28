#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "crcm/textprep.hpp"

namespace crcm {

struct TopicModel {
  int K = 0;
  std::vector<std::string> vocab_words;        // word id -> word
  std::unordered_map<std::string, int> vocab;  // word -> word id
  std::vector<std::vector<double>> phi;        // K x V, rows sum to 1
  double alpha = 0.0;
  double beta = 0.0;
  uint64_t seed = 0;
  int iterations = 0;
};

// Top-m words of one topic with probabilities renormalized to sum to 1.
struct TopicSummary {
  int topic_id = 0;
  std::vector<std::string> words;
  std::vector<double> probs;  // non-increasing
};

// Called after every Gibbs sweep with the topic-word counts (K x V) and
// per-topic totals.
using GibbsObserver =
    std::function<void(int iteration, const std::vector<std::vector<int>>& topic_word,
                       const std::vector<int>& topic_total)>;

// Collapsed Gibbs sampling. phi[k][w] = (n_kw + beta) / (n_k + V*beta) from
// the final counts. Deterministic for a fixed seed.
TopicModel fit_lda(const std::vector<TokenStream>& docs, int K, double alpha,
                   double beta, int iterations, uint64_t seed,
                   const GibbsObserver& observer = {});

// Intrinsic (UMass-style) coherence: mean over topics of the summed
// log((D(worse, better) + 1) / D(better)) over top-m word pairs, where D
// counts document occurrence / co-occurrence in `docs`.
double coherence_umass(const TopicModel& model, const std::vector<TokenStream>& docs,
                       int top_m);

struct LdaConfig {
  double alpha = 0.0;  // <= 0 means the 50/K default
  double beta = 0.01;
  int iterations = 1000;
  uint64_t seed = 0;
  int top_m = 10;
};

struct SweepPoint {
  int k = 0;
  double coherence = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  int best_k = 0;  // argmax coherence, ties toward smaller K
};

// Argmax coherence with ties broken toward the smaller K.
int pick_best_k(const std::vector<SweepPoint>& points);

// Fits one model per K in [k_min, k_max] (seed + K each) and scores them.
SweepResult sweep_topic_count(const std::vector<TokenStream>& docs, int k_min,
                              int k_max, const LdaConfig& config);

std::vector<TopicSummary> summarize(const TopicModel& model, int top_m = 10);

nlohmann::json summaries_to_json(const std::vector<TopicSummary>& summaries);
std::vector<TopicSummary> summaries_from_json(const nlohmann::json& j);

}  // namespace crcm
