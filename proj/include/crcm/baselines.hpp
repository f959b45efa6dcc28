#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crcm/corpus.hpp"
#include "crcm/embeddings.hpp"
#include "crcm/model.hpp"
#include "crcm/textprep.hpp"

namespace crcm {

// CRCM with the community-rules component removed: sigmoid(W . h_c + b).
struct RuleFreeModel {
  int dim = 768;
  std::vector<double> weights;
  double bias = 0.0;
  double threshold = 0.5;
  double dropout = 0.2;
};

RuleFreeModel init_rule_free(int dim, uint64_t seed);
double rule_free_score(const RuleFreeModel& model, const EmbeddingVector& h_c);
double rule_free_loss(const RuleFreeModel& model, const std::vector<EmbeddingVector>& inputs,
                      const std::vector<uint8_t>& labels, double mu);
double rule_free_loss_grad(const RuleFreeModel& model,
                           const std::vector<EmbeddingVector>& inputs,
                           const std::vector<uint8_t>& labels,
                           std::span<const size_t> batch_indices, double mu,
                           std::vector<double>& grad, Rng* dropout_rng = nullptr);

struct RuleFreeResult {
  RuleFreeModel model;
  std::vector<double> epoch_loss;
};

RuleFreeResult train_rule_free(const Dataset& data, const EmbeddingProvider& provider,
                               const TrainConfig& config);
RuleFreeResult train_rule_free_embedded(RuleFreeModel model,
                                        const std::vector<EmbeddingVector>& inputs,
                                        const std::vector<uint8_t>& labels,
                                        const TrainConfig& config);

// Suffix-stripping stemmer used only by the HATE-L2 feature pipeline.
std::string stem_token(const std::string& token);

// preprocess + stem, the HATE-L2 input normalization.
TokenStream stemmed_tokens(std::string_view text);

using SparseVector = std::vector<std::pair<int, double>>;  // (feature, value), sorted

struct TfidfVectorizer {
  std::unordered_map<std::string, int> vocabulary;  // n-gram -> feature id
  std::vector<double> idf;
  int n_min = 1;
  int n_max = 3;

  int size() const { return static_cast<int>(idf.size()); }
};

// tf = raw count; idf = ln((1+N)/(1+df)) + 1; document vectors L2-normalized.
TfidfVectorizer fit_tfidf(const std::vector<TokenStream>& docs, int n_min = 1,
                          int n_max = 3);
SparseVector tfidf_transform(const TfidfVectorizer& vectorizer, const TokenStream& doc);

struct TfidfLogReg {
  TfidfVectorizer vectorizer;
  std::vector<double> weights;
  double bias = 0.0;
  double l2_strength = 1e-4;
  double threshold = 0.5;
  double dropout = 0.2;
};

double hate_score(const TfidfLogReg& model, const SparseVector& features);
double hate_loss(const TfidfLogReg& model, const std::vector<SparseVector>& features,
                 const std::vector<uint8_t>& labels);
double hate_loss_grad(const TfidfLogReg& model, const std::vector<SparseVector>& features,
                      const std::vector<uint8_t>& labels,
                      std::span<const size_t> batch_indices, std::vector<double>& grad,
                      Rng* dropout_rng = nullptr);

struct HateResult {
  TfidfLogReg model;
  std::vector<double> epoch_loss;
};

HateResult train_hate_l2(const Dataset& data, double l2_strength, const TrainConfig& config);
bool hate_predict(const TfidfLogReg& model, const std::string& text);

}  // namespace crcm
