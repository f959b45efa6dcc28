#include "crcm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crcm/adam.hpp"

namespace crcm {

namespace {

constexpr double kProbClamp = 1e-7;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

double bce(double p, double y) {
  return y > 0.5 ? -std::log(p) : -std::log(1.0 - p);
}

bool ends_with(const std::string& s, const char* suffix) {
  const size_t n = std::char_traits<char>::length(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rule-free model

RuleFreeModel init_rule_free(int dim, uint64_t seed) {
  RuleFreeModel model;
  model.dim = dim;
  model.weights.resize(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Rng rng(seed);
  for (double& w : model.weights) w = (2.0 * rng.uniform01() - 1.0) * scale;
  return model;
}

double rule_free_score(const RuleFreeModel& model, const EmbeddingVector& h_c) {
  if (static_cast<int>(h_c.size()) != model.dim) {
    throw std::invalid_argument("rule_free_score: input dimension " +
                                std::to_string(h_c.size()) + " does not match model dimension " +
                                std::to_string(model.dim));
  }
  double z = model.bias;
  for (int j = 0; j < model.dim; ++j) z += model.weights[j] * h_c[j];
  return sigmoid(z);
}

double rule_free_loss(const RuleFreeModel& model, const std::vector<EmbeddingVector>& inputs,
                      const std::vector<uint8_t>& labels, double mu) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw std::invalid_argument("rule_free_loss: empty batch or label mismatch");
  }
  double total = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    total += bce(clamp_prob(rule_free_score(model, inputs[i])), labels[i] ? 1.0 : 0.0);
  }
  double reg = model.bias * model.bias;
  for (double w : model.weights) reg += w * w;
  return total / inputs.size() + mu * reg;
}

double rule_free_loss_grad(const RuleFreeModel& model,
                           const std::vector<EmbeddingVector>& inputs,
                           const std::vector<uint8_t>& labels,
                           std::span<const size_t> batch_indices, double mu,
                           std::vector<double>& grad, Rng* dropout_rng) {
  const int d = model.dim;
  if (batch_indices.empty()) {
    throw std::invalid_argument("rule_free_loss_grad: empty batch");
  }
  grad.assign(size_t(d) + 1, 0.0);

  const double rate = dropout_rng ? model.dropout : 0.0;
  const double keep_scale = rate > 0 ? 1.0 / (1.0 - rate) : 1.0;
  std::vector<uint32_t> dropped;

  double total = 0.0;
  for (size_t idx : batch_indices) {
    const EmbeddingVector& h_c = inputs[idx];
    double z = 0.0;
    for (int j = 0; j < d; ++j) z += model.weights[j] * h_c[j];
    if (rate > 0) {
      sample_bernoulli_indices(*dropout_rng, rate, size_t(d), dropped);
      for (uint32_t j : dropped) z -= model.weights[j] * h_c[j];
      z *= keep_scale;
    }
    const double s = sigmoid(z + model.bias);
    const double y = labels[idx] ? 1.0 : 0.0;
    total += bce(clamp_prob(s), y);
    if (s > kProbClamp && s < 1.0 - kProbClamp) {
      const double g0 = s - y;  // d(BCE)/dz for a single sigmoid
      const double g = g0 * keep_scale;
      for (int j = 0; j < d; ++j) grad[j] += g * h_c[j];
      if (rate > 0) {
        for (uint32_t j : dropped) grad[j] -= g * h_c[j];
      }
      grad[d] += g0;
    }
  }

  const double inv_n = 1.0 / batch_indices.size();
  for (double& g : grad) g *= inv_n;
  double reg = model.bias * model.bias;
  for (int j = 0; j < d; ++j) {
    grad[j] += 2.0 * mu * model.weights[j];
    reg += model.weights[j] * model.weights[j];
  }
  grad[d] += 2.0 * mu * model.bias;
  return total * inv_n + mu * reg;
}

RuleFreeResult train_rule_free(const Dataset& data, const EmbeddingProvider& provider,
                               const TrainConfig& config) {
  std::vector<std::string> contents;
  std::vector<uint8_t> labels;
  for (const auto& post : data.posts) {
    contents.push_back(post_content(post));
    labels.push_back(post.moderated ? 1 : 0);
  }
  RuleFreeModel model = init_rule_free(provider.dimension(), derive_seed(config.seed, 7));
  return train_rule_free_embedded(std::move(model), provider.embed_batch(contents), labels,
                                  config);
}

RuleFreeResult train_rule_free_embedded(RuleFreeModel model,
                                        const std::vector<EmbeddingVector>& inputs,
                                        const std::vector<uint8_t>& labels,
                                        const TrainConfig& config) {
  if (inputs.empty()) throw std::invalid_argument("train_rule_free: empty dataset");
  if (inputs.size() != labels.size()) {
    throw std::invalid_argument("train_rule_free: input/label count mismatch");
  }

  std::vector<double> flat(model.weights);
  flat.push_back(model.bias);
  AdamOptimizer optimizer({config.learning_rate, config.adam_beta1, config.adam_beta2,
                           config.adam_epsilon});
  Rng shuffle_rng(derive_seed(config.seed, 101));
  Rng dropout_rng(derive_seed(config.seed, 202));

  std::vector<size_t> order(inputs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  RuleFreeResult result;
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t count = std::min<size_t>(config.batch_size, order.size() - start);
      const std::span<const size_t> batch(order.data() + start, count);
      const double batch_loss =
          rule_free_loss_grad(model, inputs, labels, batch, config.mu, grad,
                              model.dropout > 0 ? &dropout_rng : nullptr);
      optimizer.step(flat, grad);
      std::copy(flat.begin(), flat.end() - 1, model.weights.begin());
      model.bias = flat.back();
      epoch_total += batch_loss * count;
    }
    result.epoch_loss.push_back(epoch_total / order.size());
  }
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Stemming and TF-IDF

// Rule order matters: longer suffixes first. Stems never shrink below three
// characters.
std::string stem_token(const std::string& token) {
  std::string t = token;
  auto can_strip = [&](size_t n) { return t.size() >= n + 3; };
  if (ends_with(t, "sses") && can_strip(2)) {
    t.erase(t.size() - 2);
  } else if (ends_with(t, "ies") && can_strip(2)) {
    t.erase(t.size() - 3);
    t += 'y';
  } else if (ends_with(t, "ing") && can_strip(3)) {
    t.erase(t.size() - 3);
  } else if (ends_with(t, "edly") && can_strip(4)) {
    t.erase(t.size() - 4);
  } else if (ends_with(t, "ed") && can_strip(2)) {
    t.erase(t.size() - 2);
  } else if (ends_with(t, "ly") && can_strip(2)) {
    t.erase(t.size() - 2);
  } else if (ends_with(t, "es") && can_strip(2) &&
             (ends_with(t, "ses") || ends_with(t, "xes") || ends_with(t, "zes") ||
              ends_with(t, "hes"))) {
    t.erase(t.size() - 2);  // boxes -> box, dishes -> dish
  } else if (ends_with(t, "s") && !ends_with(t, "ss") && !ends_with(t, "us") &&
             can_strip(1)) {
    t.erase(t.size() - 1);
  }
  return t;
}

TokenStream stemmed_tokens(std::string_view text) {
  TokenStream tokens = preprocess(text);
  for (auto& token : tokens) token = stem_token(token);
  return tokens;
}

TfidfVectorizer fit_tfidf(const std::vector<TokenStream>& docs, int n_min, int n_max) {
  if (docs.empty()) throw std::invalid_argument("fit_tfidf: empty corpus");
  TfidfVectorizer vec;
  vec.n_min = n_min;
  vec.n_max = n_max;

  std::vector<int> df;
  for (const auto& doc : docs) {
    std::vector<std::string> grams = ngrams(doc, n_min, n_max);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& gram : grams) {
      auto [it, inserted] = vec.vocabulary.emplace(std::move(gram),
                                                   static_cast<int>(df.size()));
      if (inserted) {
        df.push_back(1);
      } else {
        ++df[it->second];
      }
    }
  }
  const double n_docs = static_cast<double>(docs.size());
  vec.idf.resize(df.size());
  for (size_t i = 0; i < df.size(); ++i) {
    vec.idf[i] = std::log((1.0 + n_docs) / (1.0 + df[i])) + 1.0;
  }
  return vec;
}

SparseVector tfidf_transform(const TfidfVectorizer& vectorizer, const TokenStream& doc) {
  std::unordered_map<int, int> counts;
  for (const auto& gram : ngrams(doc, vectorizer.n_min, vectorizer.n_max)) {
    auto it = vectorizer.vocabulary.find(gram);
    if (it != vectorizer.vocabulary.end()) ++counts[it->second];
  }
  SparseVector features;
  features.reserve(counts.size());
  double norm = 0.0;
  for (const auto& [feature, count] : counts) {
    const double value = count * vectorizer.idf[feature];
    features.emplace_back(feature, value);
    norm += value * value;
  }
  std::sort(features.begin(), features.end());
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& [feature, value] : features) value /= norm;
  }
  return features;
}

// ---------------------------------------------------------------------------
// HATE-L2

double hate_score(const TfidfLogReg& model, const SparseVector& features) {
  double z = model.bias;
  for (const auto& [feature, value] : features) z += model.weights[feature] * value;
  return sigmoid(z);
}

double hate_loss(const TfidfLogReg& model, const std::vector<SparseVector>& features,
                 const std::vector<uint8_t>& labels) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::invalid_argument("hate_loss: empty batch or label mismatch");
  }
  double total = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    total += bce(clamp_prob(hate_score(model, features[i])), labels[i] ? 1.0 : 0.0);
  }
  double reg = model.bias * model.bias;
  for (double w : model.weights) reg += w * w;
  return total / features.size() + model.l2_strength * reg;
}

double hate_loss_grad(const TfidfLogReg& model, const std::vector<SparseVector>& features,
                      const std::vector<uint8_t>& labels,
                      std::span<const size_t> batch_indices, std::vector<double>& grad,
                      Rng* dropout_rng) {
  const size_t d = model.weights.size();
  if (batch_indices.empty()) {
    throw std::invalid_argument("hate_loss_grad: empty batch");
  }
  grad.assign(d + 1, 0.0);

  const double rate = dropout_rng ? model.dropout : 0.0;
  const double keep_scale = rate > 0 ? 1.0 / (1.0 - rate) : 1.0;

  double total = 0.0;
  SparseVector masked;
  for (size_t idx : batch_indices) {
    const SparseVector* x = &features[idx];
    if (rate > 0) {
      masked.clear();
      for (const auto& [feature, value] : *x) {
        if (dropout_rng->uniform01() >= rate) {
          masked.emplace_back(feature, value * keep_scale);
        }
      }
      x = &masked;
    }
    const double s = hate_score(model, *x);
    const double y = labels[idx] ? 1.0 : 0.0;
    total += bce(clamp_prob(s), y);
    if (s > kProbClamp && s < 1.0 - kProbClamp) {
      const double g = s - y;
      for (const auto& [feature, value] : *x) grad[feature] += g * value;
      grad[d] += g;
    }
  }

  const double inv_n = 1.0 / batch_indices.size();
  for (double& g : grad) g *= inv_n;
  double reg = model.bias * model.bias;
  for (size_t j = 0; j < d; ++j) {
    grad[j] += 2.0 * model.l2_strength * model.weights[j];
    reg += model.weights[j] * model.weights[j];
  }
  grad[d] += 2.0 * model.l2_strength * model.bias;
  return total * inv_n + model.l2_strength * reg;
}

HateResult train_hate_l2(const Dataset& data, double l2_strength, const TrainConfig& config) {
  if (data.posts.empty()) throw std::invalid_argument("train_hate_l2: empty dataset");

  std::vector<TokenStream> docs;
  docs.reserve(data.posts.size());
  std::vector<uint8_t> labels;
  for (const auto& post : data.posts) {
    docs.push_back(stemmed_tokens(post_content(post)));
    labels.push_back(post.moderated ? 1 : 0);
  }

  TfidfLogReg model;
  model.vectorizer = fit_tfidf(docs);
  model.l2_strength = l2_strength;
  if (model.vectorizer.size() == 0) {
    throw std::invalid_argument("train_hate_l2: empty vocabulary");
  }
  model.weights.assign(model.vectorizer.size(), 0.0);

  std::vector<SparseVector> features;
  features.reserve(docs.size());
  for (const auto& doc : docs) features.push_back(tfidf_transform(model.vectorizer, doc));

  std::vector<double> flat(model.weights);
  flat.push_back(model.bias);
  AdamOptimizer optimizer({config.learning_rate, config.adam_beta1, config.adam_beta2,
                           config.adam_epsilon});
  Rng shuffle_rng(derive_seed(config.seed, 101));
  Rng dropout_rng(derive_seed(config.seed, 202));

  std::vector<size_t> order(features.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  HateResult result;
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t count = std::min<size_t>(config.batch_size, order.size() - start);
      const std::span<const size_t> batch(order.data() + start, count);
      const double batch_loss =
          hate_loss_grad(model, features, labels, batch, grad,
                         model.dropout > 0 ? &dropout_rng : nullptr);
      optimizer.step(flat, grad);
      std::copy(flat.begin(), flat.end() - 1, model.weights.begin());
      model.bias = flat.back();
      epoch_total += batch_loss * count;
    }
    result.epoch_loss.push_back(epoch_total / order.size());
  }
  result.model = std::move(model);
  return result;
}

bool hate_predict(const TfidfLogReg& model, const std::string& text) {
  const SparseVector features = tfidf_transform(model.vectorizer, stemmed_tokens(text));
  return hate_score(model, features) >= model.threshold;
}

}  // namespace crcm
