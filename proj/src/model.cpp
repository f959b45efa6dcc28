#include "crcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "crcm/adam.hpp"
#include "crcm/topics.hpp"

namespace crcm {

using nlohmann::json;

namespace {

constexpr double kProbClamp = 1e-7;
constexpr const char* kFormatTag = "crcm/1";

double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

}  // namespace

std::string to_string(Aggregation aggregation) {
  return aggregation == Aggregation::kSoftVote ? "soft_vote" : "affiliation";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "soft_vote") return Aggregation::kSoftVote;
  if (s == "affiliation") return Aggregation::kAffiliation;
  throw std::invalid_argument("unknown aggregation mode \"" + s +
                              "\" (expected soft_vote or affiliation)");
}

ProviderInfo provider_info(const EmbeddingProvider& provider) {
  ProviderInfo info;
  info.name = provider.name();
  info.version = provider.version();
  info.dim = provider.dimension();
  if (const auto* hash = dynamic_cast<const HashingProvider*>(&provider)) {
    info.seed = hash->seed();
  } else if (const auto* remote = dynamic_cast<const RemoteProvider*>(&provider)) {
    info.endpoint = remote->endpoint();
  }
  return info;
}

CrcmModel init_crcm_model(RuleMatrix rule_matrix, const EmbeddingProvider& provider,
                          Aggregation aggregation, uint64_t seed) {
  const int d = provider.dimension();
  for (const auto& topic : rule_matrix.topics) {
    if (static_cast<int>(topic.vector.size()) != d) {
      throw std::invalid_argument("init_crcm_model: rule topic " +
                                  std::to_string(topic.topic_id) + " has dimension " +
                                  std::to_string(topic.vector.size()) + ", provider has " +
                                  std::to_string(d));
    }
  }
  CrcmModel model;
  model.dim = d;
  model.aggregation = aggregation;
  model.rule_matrix = std::move(rule_matrix);
  model.provider = provider_info(provider);

  const double scale = 1.0 / std::sqrt(2.0 * d);
  Rng rng(seed);
  model.classifiers.resize(model.rule_matrix.size());
  for (auto& clf : model.classifiers) {
    clf.weights.resize(2 * d);
    for (double& w : clf.weights) w = (2.0 * rng.uniform01() - 1.0) * scale;
    clf.bias = 0.0;
  }
  return model;
}

double score_topic(const CrcmModel& model, const EmbeddingVector& h_c, int k) {
  if (k < 0 || k >= model.K()) {
    throw std::out_of_range("score_topic: topic index out of range");
  }
  if (static_cast<int>(h_c.size()) != model.dim) {
    throw std::invalid_argument("score_topic: input dimension " +
                                std::to_string(h_c.size()) + " does not match model dimension " +
                                std::to_string(model.dim));
  }
  const auto& clf = model.classifiers[k];
  const auto& h_k = model.rule_matrix.vec(k);
  const int d = model.dim;
  const double z = dot({clf.weights.data(), size_t(d)}, h_c) +
                   dot({clf.weights.data() + d, size_t(d)}, h_k) + clf.bias;
  return sigmoid(z);
}

double affiliation(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("affiliation: dimension mismatch");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<double> affiliation_weights(const EmbeddingVector& h_c,
                                        const RuleMatrix& rule_matrix) {
  const int K = rule_matrix.size();
  if (K < 1) throw std::invalid_argument("affiliation_weights: empty rule matrix");
  std::vector<double> scores(K);
  for (int k = 0; k < K; ++k) scores[k] = affiliation(h_c, rule_matrix.vec(k));

  const double max_score = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    scores[k] = std::exp(scores[k] - max_score);
    total += scores[k];
  }
  for (int k = 0; k < K; ++k) scores[k] /= total;
  return scores;
}

std::vector<double> voting_weights(const CrcmModel& model, const EmbeddingVector& h_c) {
  if (model.aggregation == Aggregation::kSoftVote) {
    return std::vector<double>(model.K(), 1.0 / model.K());
  }
  return affiliation_weights(h_c, model.rule_matrix);
}

double aggregate(std::span<const double> scores, std::span<const double> weights) {
  if (scores.size() != weights.size()) {
    throw std::invalid_argument("aggregate: scores/weights length mismatch");
  }
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("aggregate: weights must sum to 1");
  }
  return dot(scores, weights);
}

double aggregate(std::span<const double> scores) {
  const std::vector<double> uniform(scores.size(), 1.0 / scores.size());
  return aggregate(scores, uniform);
}

Prediction predict_embedded(const CrcmModel& model, const EmbeddingVector& h_c) {
  Prediction pred;
  pred.topic_scores.resize(model.K());
  for (int k = 0; k < model.K(); ++k) {
    pred.topic_scores[k] = score_topic(model, h_c, k);
  }
  pred.weights = voting_weights(model, h_c);
  pred.probability = aggregate(pred.topic_scores, pred.weights);
  pred.decision = pred.probability >= model.threshold;
  return pred;
}

Prediction predict(const CrcmModel& model, const Post& post,
                   const EmbeddingProvider& provider) {
  check_dimension(model, provider);
  return predict_embedded(model, provider.embed_text(post_content(post)));
}

double crcm_loss(const CrcmModel& model, const std::vector<EmbeddingVector>& inputs,
                 const std::vector<uint8_t>& labels, double mu) {
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw std::invalid_argument("crcm_loss: empty batch or label mismatch");
  }
  double total = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Prediction pred = predict_embedded(model, inputs[i]);
    const double p = clamp_prob(pred.probability);
    total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  double reg = 0.0;
  for (const auto& clf : model.classifiers) {
    for (double w : clf.weights) reg += w * w;
    reg += clf.bias * clf.bias;
  }
  return total / inputs.size() + mu * reg;
}

double crcm_loss_grad(const CrcmModel& model, const std::vector<EmbeddingVector>& inputs,
                      const std::vector<uint8_t>& labels,
                      std::span<const size_t> batch_indices, double mu,
                      std::vector<double>& grad, Rng* dropout_rng) {
  const int K = model.K();
  const int d = model.dim;
  const int stride = 2 * d + 1;
  if (batch_indices.empty()) {
    throw std::invalid_argument("crcm_loss_grad: empty batch");
  }
  grad.assign(size_t(K) * stride, 0.0);

  const double rate = dropout_rng ? model.dropout : 0.0;
  const double keep_scale = rate > 0 ? 1.0 / (1.0 - rate) : 1.0;

  // The rule half of each topic's input never changes inside a batch.
  std::vector<double> rule_dot(K);
  for (int k = 0; k < K; ++k) {
    rule_dot[k] = dot({model.classifiers[k].weights.data() + d, size_t(d)},
                      model.rule_matrix.vec(k));
  }

  std::vector<double> scores(K);
  std::vector<std::vector<uint32_t>> dropped(K);

  double total_bce = 0.0;
  for (size_t idx : batch_indices) {
    const EmbeddingVector& h_c = inputs[idx];
    const double y = labels[idx] ? 1.0 : 0.0;

    // The dropout mask zeroes entries of the concatenated [h_c; h_k] input;
    // kept entries are scaled by 1/(1-rate). The masked dot product is the
    // full dot product minus the dropped terms.
    for (int k = 0; k < K; ++k) {
      const auto& clf = model.classifiers[k];
      const auto& h_k = model.rule_matrix.vec(k);
      double z = dot({clf.weights.data(), size_t(d)}, h_c) + rule_dot[k];
      if (rate > 0) {
        sample_bernoulli_indices(*dropout_rng, rate, size_t(2 * d), dropped[k]);
        for (uint32_t j : dropped[k]) {
          z -= clf.weights[j] * (j < size_t(d) ? h_c[j] : h_k[j - d]);
        }
        z *= keep_scale;
      }
      scores[k] = sigmoid(z + clf.bias);
    }

    // Voting weights depend only on the raw embeddings, never on the
    // classifier parameters, so they are constants for the gradient.
    const std::vector<double> weights = voting_weights(model, h_c);
    double y_hat = 0.0;
    for (int k = 0; k < K; ++k) y_hat += weights[k] * scores[k];

    const double p = clamp_prob(y_hat);
    total_bce += y > 0.5 ? -std::log(p) : -std::log(1.0 - p);

    if (y_hat > kProbClamp && y_hat < 1.0 - kProbClamp) {
      const double dl_dy = (p - y) / (p * (1.0 - p));
      for (int k = 0; k < K; ++k) {
        const double g0 = dl_dy * weights[k] * scores[k] * (1.0 - scores[k]);
        const double g = g0 * keep_scale;
        double* gw = grad.data() + size_t(k) * stride;
        const auto& h_k = model.rule_matrix.vec(k);
        for (int j = 0; j < d; ++j) gw[j] += g * h_c[j];
        for (int j = 0; j < d; ++j) gw[d + j] += g * h_k[j];
        if (rate > 0) {
          for (uint32_t j : dropped[k]) {
            gw[j] -= g * (j < size_t(d) ? h_c[j] : h_k[j - d]);
          }
        }
        gw[2 * d] += g0;  // the bias is never masked
      }
    }
  }

  const double inv_n = 1.0 / batch_indices.size();
  for (double& g : grad) g *= inv_n;

  double reg = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& clf = model.classifiers[k];
    double* gw = grad.data() + size_t(k) * stride;
    for (int j = 0; j < 2 * d; ++j) {
      gw[j] += 2.0 * mu * clf.weights[j];
      reg += clf.weights[j] * clf.weights[j];
    }
    gw[2 * d] += 2.0 * mu * clf.bias;
    reg += clf.bias * clf.bias;
  }
  return total_bce * inv_n + mu * reg;
}

std::vector<double> pack_params(const CrcmModel& model) {
  std::vector<double> flat;
  flat.reserve(size_t(model.K()) * (2 * model.dim + 1));
  for (const auto& clf : model.classifiers) {
    flat.insert(flat.end(), clf.weights.begin(), clf.weights.end());
    flat.push_back(clf.bias);
  }
  return flat;
}

void set_params(CrcmModel& model, std::span<const double> params) {
  const size_t stride = 2 * model.dim + 1;
  if (params.size() != size_t(model.K()) * stride) {
    throw std::invalid_argument("set_params: wrong parameter count");
  }
  for (int k = 0; k < model.K(); ++k) {
    auto& clf = model.classifiers[k];
    const double* src = params.data() + k * stride;
    std::copy(src, src + 2 * model.dim, clf.weights.begin());
    clf.bias = src[2 * model.dim];
  }
}

TrainResult train(CrcmModel model, const Dataset& data, const EmbeddingProvider& provider,
                  const TrainConfig& config) {
  check_dimension(model, provider);
  std::vector<std::string> contents;
  contents.reserve(data.posts.size());
  std::vector<uint8_t> labels;
  labels.reserve(data.posts.size());
  for (const auto& post : data.posts) {
    contents.push_back(post_content(post));
    labels.push_back(post.moderated ? 1 : 0);
  }
  return train_embedded(std::move(model), provider.embed_batch(contents), labels, config);
}

TrainResult train_embedded(CrcmModel model, const std::vector<EmbeddingVector>& inputs,
                           const std::vector<uint8_t>& labels, const TrainConfig& config) {
  if (inputs.empty()) throw std::invalid_argument("train: empty dataset");
  if (inputs.size() != labels.size()) {
    throw std::invalid_argument("train: input/label count mismatch");
  }
  if (config.learning_rate <= 0 || config.epochs < 1 || config.batch_size < 1) {
    throw std::invalid_argument("train: invalid config");
  }

  std::vector<double> flat = pack_params(model);
  AdamOptimizer optimizer({config.learning_rate, config.adam_beta1, config.adam_beta2,
                           config.adam_epsilon});
  Rng shuffle_rng(derive_seed(config.seed, 101));
  Rng dropout_rng(derive_seed(config.seed, 202));

  std::vector<size_t> order(inputs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t count = std::min<size_t>(config.batch_size, order.size() - start);
      const std::span<const size_t> batch(order.data() + start, count);
      const double batch_loss =
          crcm_loss_grad(model, inputs, labels, batch, config.mu, grad,
                         model.dropout > 0 ? &dropout_rng : nullptr);
      optimizer.step(flat, grad);
      set_params(model, flat);
      epoch_total += batch_loss * count;
    }
    result.epoch_loss.push_back(epoch_total / order.size());
  }
  result.model = std::move(model);
  return result;
}

namespace {

json provider_to_json(const ProviderInfo& info) {
  return {{"name", info.name},
          {"version", info.version},
          {"dim", info.dim},
          {"seed", info.seed},
          {"endpoint", info.endpoint}};
}

ProviderInfo provider_from_json(const json& j) {
  ProviderInfo info;
  info.name = j.at("name").get<std::string>();
  info.version = j.at("version").get<std::string>();
  info.dim = j.at("dim").get<int>();
  info.seed = j.value("seed", uint64_t{0});
  info.endpoint = j.value("endpoint", std::string{});
  return info;
}

}  // namespace

void save_model(const CrcmModel& model, const std::string& path) {
  json j;
  j["format"] = kFormatTag;
  j["dim"] = model.dim;
  j["K"] = model.K();
  j["aggregation"] = to_string(model.aggregation);
  j["threshold"] = model.threshold;
  j["dropout"] = model.dropout;
  j["provider"] = provider_to_json(model.provider);

  json rule_matrix = json::array();
  std::vector<TopicSummary> summaries;
  for (const auto& topic : model.rule_matrix.topics) {
    rule_matrix.push_back(topic.vector);
    summaries.push_back(topic.source);
  }
  j["rule_matrix"] = std::move(rule_matrix);
  j["summaries"] = summaries_to_json(summaries);

  json classifiers = json::array();
  for (const auto& clf : model.classifiers) {
    classifiers.push_back({{"w", clf.weights}, {"b", clf.bias}});
  }
  j["classifiers"] = std::move(classifiers);

  std::ofstream out(path);
  if (!out) throw ModelIoError("cannot write model file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw ModelIoError("failed writing model file: " + path);
}

CrcmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelIoError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error&) {
    throw ModelIoError("not a CRCM model file: " + path + " (invalid JSON)");
  }
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string()) {
    throw ModelIoError("not a CRCM model file: " + path + " (missing format tag)");
  }
  const std::string format = j["format"].get<std::string>();
  if (format != kFormatTag) {
    throw ModelIoError("unsupported model format \"" + format + "\" (expected \"" +
                       kFormatTag + "\")");
  }

  CrcmModel model;
  try {
    model.dim = j.at("dim").get<int>();
    const int K = j.at("K").get<int>();
    model.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
    model.threshold = j.at("threshold").get<double>();
    model.dropout = j.value("dropout", 0.2);
    model.provider = provider_from_json(j.at("provider"));

    std::vector<TopicSummary> summaries;
    if (j.contains("summaries")) summaries = summaries_from_json(j["summaries"]);

    const auto& rule_matrix = j.at("rule_matrix");
    const auto& classifiers = j.at("classifiers");
    if (static_cast<int>(rule_matrix.size()) != K ||
        static_cast<int>(classifiers.size()) != K) {
      throw ModelIoError("truncated or corrupt model file: " + path +
                         " (expected " + std::to_string(K) + " topics)");
    }
    for (int k = 0; k < K; ++k) {
      RuleTopicEmbedding topic;
      topic.topic_id = k;
      topic.vector = rule_matrix[k].get<EmbeddingVector>();
      if (static_cast<int>(topic.vector.size()) != model.dim) {
        throw ModelIoError("truncated or corrupt model file: " + path +
                           " (rule vector dimension mismatch)");
      }
      for (auto& summary : summaries) {
        if (summary.topic_id == k) topic.source = summary;
      }
      model.rule_matrix.topics.push_back(std::move(topic));

      TopicClassifier clf;
      clf.weights = classifiers[k].at("w").get<std::vector<double>>();
      clf.bias = classifiers[k].at("b").get<double>();
      if (clf.weights.size() != size_t(2 * model.dim)) {
        throw ModelIoError("truncated or corrupt model file: " + path +
                           " (classifier weight length mismatch)");
      }
      model.classifiers.push_back(std::move(clf));
    }
  } catch (const ModelIoError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelIoError("truncated or corrupt model file: " + path + " (" + e.what() + ")");
  }
  return model;
}

void check_dimension(const CrcmModel& model, const EmbeddingProvider& provider) {
  if (model.dim != provider.dimension()) {
    throw ModelIoError("model dimension " + std::to_string(model.dim) +
                       " does not match provider dimension " +
                       std::to_string(provider.dimension()));
  }
}

}  // namespace crcm
