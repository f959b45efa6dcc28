#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crcm/corpus.hpp"
#include "crcm/embeddings.hpp"
#include "crcm/rng.hpp"
#include "crcm/rules.hpp"

namespace crcm {

enum class Aggregation { kSoftVote, kAffiliation };

std::string to_string(Aggregation aggregation);
Aggregation aggregation_from_string(const std::string& s);

// One per-topic scorer: sigmoid(weights . [h_c; h_k] + bias), weights in R^{2d}.
struct TopicClassifier {
  std::vector<double> weights;
  double bias = 0.0;
};

// Identity of the embedding provider a model was trained with, enough to
// rebuild (hash) or reconnect (remote) at load time.
struct ProviderInfo {
  std::string name;
  std::string version;
  int dim = 768;
  uint64_t seed = 0;     // hash provider only
  std::string endpoint;  // remote provider only
};

ProviderInfo provider_info(const EmbeddingProvider& provider);

struct CrcmModel {
  int dim = 768;
  Aggregation aggregation = Aggregation::kAffiliation;
  double threshold = 0.5;
  double dropout = 0.2;
  RuleMatrix rule_matrix;
  std::vector<TopicClassifier> classifiers;  // one per topic
  ProviderInfo provider;

  int K() const { return static_cast<int>(classifiers.size()); }
};

struct TrainConfig {
  double learning_rate = 0.001;
  int epochs = 100;
  int batch_size = 32;
  double mu = 1e-4;  // L2 regularization strength
  uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

// Fresh model with small seeded-random weights and zero biases.
CrcmModel init_crcm_model(RuleMatrix rule_matrix, const EmbeddingProvider& provider,
                          Aggregation aggregation, uint64_t seed);

// sigmoid(W_k . [h_c; h_k] + b_k), no dropout.
double score_topic(const CrcmModel& model, const EmbeddingVector& h_c, int k);

// Cosine similarity; 0 if either vector is all-zero.
double affiliation(const EmbeddingVector& a, const EmbeddingVector& b);

// Softmax over the K affiliation scores of h_c against the rule matrix.
std::vector<double> affiliation_weights(const EmbeddingVector& h_c,
                                        const RuleMatrix& rule_matrix);

// Voting weights for this model's aggregation mode (uniform or affiliation).
std::vector<double> voting_weights(const CrcmModel& model, const EmbeddingVector& h_c);

// Weighted sum of per-topic scores. Weights must sum to 1 within 1e-9.
double aggregate(std::span<const double> scores, std::span<const double> weights);
// Equal-weight special case.
double aggregate(std::span<const double> scores);

struct Prediction {
  double probability = 0.0;
  bool decision = false;
  std::vector<double> topic_scores;
  std::vector<double> weights;
};

Prediction predict_embedded(const CrcmModel& model, const EmbeddingVector& h_c);
Prediction predict(const CrcmModel& model, const Post& post,
                   const EmbeddingProvider& provider);

// Mean binary cross-entropy of the aggregated probability against the labels,
// plus mu * sum_k (|W_k|^2 + b_k^2). Probabilities are clamped to
// [1e-7, 1 - 1e-7] before the logs.
double crcm_loss(const CrcmModel& model, const std::vector<EmbeddingVector>& inputs,
                 const std::vector<uint8_t>& labels, double mu);

// Loss plus gradient in flat parameter order (w_0, b_0, w_1, b_1, ...).
// When dropout_rng is non-null, inverted dropout at model.dropout is applied
// to each topic's concatenated input.
double crcm_loss_grad(const CrcmModel& model, const std::vector<EmbeddingVector>& inputs,
                      const std::vector<uint8_t>& labels,
                      std::span<const size_t> batch_indices, double mu,
                      std::vector<double>& grad, Rng* dropout_rng = nullptr);

std::vector<double> pack_params(const CrcmModel& model);
void set_params(CrcmModel& model, std::span<const double> params);

struct TrainResult {
  CrcmModel model;
  std::vector<double> epoch_loss;
};

// Mini-batch Adam over seeded shuffles; deterministic for a fixed config.
TrainResult train(CrcmModel model, const Dataset& data, const EmbeddingProvider& provider,
                  const TrainConfig& config);
TrainResult train_embedded(CrcmModel model, const std::vector<EmbeddingVector>& inputs,
                           const std::vector<uint8_t>& labels, const TrainConfig& config);

// Versioned JSON persistence; round-trips bit-identically.
void save_model(const CrcmModel& model, const std::string& path);
CrcmModel load_model(const std::string& path);

// Throws ModelIoError naming both dimensions when they disagree.
void check_dimension(const CrcmModel& model, const EmbeddingProvider& provider);

}  // namespace crcm
