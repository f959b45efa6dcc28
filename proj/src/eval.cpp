#include "crcm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crcm/rng.hpp"

namespace crcm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

Metrics compute_metrics(const std::vector<uint8_t>& predictions,
                        const std::vector<uint8_t>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: prediction/label length mismatch");
  }
  if (predictions.empty()) {
    throw std::invalid_argument("compute_metrics: empty input");
  }
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] != 0;
    const bool truth = labels[i] != 0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
    else ++tn;
  }
  Metrics m;
  m.accuracy = double(tp + tn) / double(predictions.size());
  m.precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Student's t machinery

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_two_sided_p: df must be >= 1");
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_t_test: samples must have equal length");
  }
  const size_t k = a.size();
  if (k < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (size_t i = 0; i < k; ++i) mean += a[i] - b[i];
  mean /= double(k);
  double variance = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const double d = (a[i] - b[i]) - mean;
    variance += d * d;
  }
  variance /= double(k - 1);

  TTestResult result;
  result.degrees_of_freedom = static_cast<int>(k) - 1;
  result.mean_difference = mean;
  if (variance == 0.0) {
    if (mean != 0.0) {
      throw std::runtime_error("paired_t_test: degenerate zero-variance difference");
    }
    result.t_statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.t_statistic = mean * std::sqrt(double(k)) / std::sqrt(variance);
  result.p_value = student_t_two_sided_p(result.t_statistic, result.degrees_of_freedom);
  return result;
}

std::string significance_stars(double p_value) {
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

// ---------------------------------------------------------------------------
// Cross-validation

FoldReport cross_validate(const ModelSpec& spec, const Dataset& data, int k, uint64_t seed) {
  const FoldSplit split = stratified_kfold(data, k, seed);

  FoldReport report;
  report.model_name = spec.name;
  report.seed = seed;
  std::vector<bool> in_test(data.posts.size());
  for (int f = 0; f < k; ++f) {
    std::fill(in_test.begin(), in_test.end(), false);
    for (size_t idx : split.folds[f]) in_test[idx] = true;

    Dataset train_set, test_set;
    train_set.domain = test_set.domain = data.domain;
    for (size_t i = 0; i < data.posts.size(); ++i) {
      (in_test[i] ? test_set : train_set).posts.push_back(data.posts[i]);
    }

    Predictor predictor = spec.fit(train_set, derive_seed(seed, 1000 + f));
    const std::vector<uint8_t> predictions = predictor(test_set);
    std::vector<uint8_t> labels;
    labels.reserve(test_set.posts.size());
    for (const auto& post : test_set.posts) labels.push_back(post.moderated ? 1 : 0);
    report.folds.push_back(compute_metrics(predictions, labels));
  }

  for (const auto& fold : report.folds) {
    report.mean.accuracy += fold.accuracy;
    report.mean.precision += fold.precision;
    report.mean.recall += fold.recall;
    report.mean.f1 += fold.f1;
  }
  report.mean.accuracy /= k;
  report.mean.precision /= k;
  report.mean.recall /= k;
  report.mean.f1 /= k;
  return report;
}

MetricTTests metric_t_tests(const FoldReport& variant, const FoldReport& reference) {
  auto column = [](const FoldReport& r, double Metrics::*field) {
    std::vector<double> out;
    out.reserve(r.folds.size());
    for (const auto& m : r.folds) out.push_back(m.*field);
    return out;
  };
  MetricTTests tests;
  tests.accuracy = paired_t_test(column(variant, &Metrics::accuracy),
                                 column(reference, &Metrics::accuracy));
  tests.precision = paired_t_test(column(variant, &Metrics::precision),
                                  column(reference, &Metrics::precision));
  tests.recall = paired_t_test(column(variant, &Metrics::recall),
                               column(reference, &Metrics::recall));
  tests.f1 = paired_t_test(column(variant, &Metrics::f1), column(reference, &Metrics::f1));
  return tests;
}

// ---------------------------------------------------------------------------
// Model specs

ModelSpec crcm_spec(std::string name, RuleMatrix rule_matrix,
                    const EmbeddingProvider& provider, Aggregation aggregation,
                    TrainConfig config, double dropout, double threshold) {
  const EmbeddingProvider* prov = &provider;
  ModelSpec spec;
  spec.name = std::move(name);
  spec.fit = [rule_matrix = std::move(rule_matrix), prov, aggregation, config, dropout,
              threshold](const Dataset& train_set, uint64_t fold_seed) -> Predictor {
    CrcmModel model =
        init_crcm_model(rule_matrix, *prov, aggregation, derive_seed(fold_seed, 11));
    model.dropout = dropout;
    model.threshold = threshold;
    TrainConfig cfg = config;
    cfg.seed = fold_seed;
    CrcmModel trained = train(std::move(model), train_set, *prov, cfg).model;
    return [trained = std::move(trained), prov](const Dataset& test_set) {
      std::vector<std::string> contents;
      contents.reserve(test_set.posts.size());
      for (const auto& post : test_set.posts) contents.push_back(post_content(post));
      const auto embedded = prov->embed_batch(contents);
      std::vector<uint8_t> out;
      out.reserve(embedded.size());
      for (const auto& h_c : embedded) {
        out.push_back(predict_embedded(trained, h_c).decision ? 1 : 0);
      }
      return out;
    };
  };
  return spec;
}

ModelSpec rule_free_spec(std::string name, const EmbeddingProvider& provider,
                         TrainConfig config, double dropout, double threshold) {
  const EmbeddingProvider* prov = &provider;
  ModelSpec spec;
  spec.name = std::move(name);
  spec.fit = [prov, config, dropout, threshold](const Dataset& train_set,
                                                uint64_t fold_seed) -> Predictor {
    TrainConfig cfg = config;
    cfg.seed = fold_seed;
    std::vector<std::string> contents;
    std::vector<uint8_t> labels;
    for (const auto& post : train_set.posts) {
      contents.push_back(post_content(post));
      labels.push_back(post.moderated ? 1 : 0);
    }
    RuleFreeModel model = init_rule_free(prov->dimension(), derive_seed(fold_seed, 7));
    model.dropout = dropout;
    model.threshold = threshold;
    RuleFreeModel trained = train_rule_free_embedded(std::move(model),
                                                     prov->embed_batch(contents), labels, cfg)
                                .model;
    return [trained = std::move(trained), prov](const Dataset& test_set) {
      std::vector<std::string> contents;
      contents.reserve(test_set.posts.size());
      for (const auto& post : test_set.posts) contents.push_back(post_content(post));
      const auto embedded = prov->embed_batch(contents);
      std::vector<uint8_t> out;
      out.reserve(embedded.size());
      for (const auto& h_c : embedded) {
        out.push_back(rule_free_score(trained, h_c) >= trained.threshold ? 1 : 0);
      }
      return out;
    };
  };
  return spec;
}

ModelSpec hate_l2_spec(std::string name, double l2_strength, TrainConfig config) {
  ModelSpec spec;
  spec.name = std::move(name);
  spec.fit = [l2_strength, config](const Dataset& train_set, uint64_t fold_seed) -> Predictor {
    TrainConfig cfg = config;
    cfg.seed = fold_seed;
    TfidfLogReg trained = train_hate_l2(train_set, l2_strength, cfg).model;
    return [trained = std::move(trained)](const Dataset& test_set) {
      std::vector<uint8_t> out;
      out.reserve(test_set.posts.size());
      for (const auto& post : test_set.posts) {
        out.push_back(hate_predict(trained, post_content(post)) ? 1 : 0);
      }
      return out;
    };
  };
  return spec;
}

std::vector<AblationRow> ablation_run(const Dataset& data, const EmbeddingProvider& provider,
                                      const RuleMatrix& rule_matrix, int k, uint64_t seed,
                                      const TrainConfig& config, double dropout,
                                      double threshold) {
  const FoldReport full = cross_validate(
      crcm_spec("crcm_full", rule_matrix, provider, Aggregation::kAffiliation, config,
                dropout, threshold),
      data, k, seed);
  const FoldReport soft = cross_validate(
      crcm_spec("crcm_soft_vote", rule_matrix, provider, Aggregation::kSoftVote, config,
                dropout, threshold),
      data, k, seed);
  const FoldReport free_model = cross_validate(
      rule_free_spec("rule_free", provider, config, dropout, threshold), data, k, seed);

  std::vector<AblationRow> rows;
  rows.push_back({"crcm_full", full, metric_t_tests(full, full)});
  rows.push_back({"crcm_soft_vote", soft, metric_t_tests(soft, full)});
  rows.push_back({"rule_free", free_model, metric_t_tests(free_model, full)});
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

constexpr int kPoolSize = 12;
constexpr int kRulesPerPool = 3;
constexpr int kRuleTokens = 20;
constexpr int kBackgroundVocab = 480;
constexpr int kPostTokens = 15;
constexpr int kPoolTokensPerPost = 5;
constexpr int kTitleTokens = 4;
constexpr int64_t kBaseTimestamp = 1660000000;

char letter(int i) { return static_cast<char>('a' + i); }

// Word index comes first so that the lexicographic order of the vocabulary
// interleaves the pools.
std::string pool_word(int pool, int index) {
  return std::string("kw") + letter(index) + letter(pool);
}

std::string background_word(int index) {
  return std::string("bg") + letter(index / 26) + letter(index % 26);
}

std::string join_tokens(const std::vector<std::string>& tokens, size_t begin, size_t end) {
  std::string out;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthSpec& spec) {
  if (spec.k_topics < 2 || spec.k_topics > 26) {
    throw std::invalid_argument("generate_synthetic: k_topics must be in [2, 26]");
  }
  if (spec.n_posts < 100 || spec.n_posts % 2 != 0) {
    throw std::invalid_argument("generate_synthetic: n_posts must be even and >= 100");
  }
  if (spec.noise < 0.0 || spec.noise >= 0.5) {
    throw std::invalid_argument("generate_synthetic: noise must be in [0, 0.5)");
  }

  Rng rng(spec.seed);
  std::ostringstream rules;
  for (int k = 0; k < spec.k_topics; ++k) {
    for (int r = 0; r < kRulesPerPool; ++r) {
      std::vector<std::string> tokens;
      tokens.reserve(kRuleTokens);
      for (int t = 0; t < kRuleTokens; ++t) {
        tokens.push_back(pool_word(k, static_cast<int>(rng.below(kPoolSize))));
      }
      const json record = {{"community", std::string("synth_") + letter(k)},
                           {"rule_index", r},
                           {"text", join_tokens(tokens, 0, tokens.size())}};
      rules << record.dump() << "\n";
    }
  }

  const int n = spec.n_posts;
  std::vector<uint8_t> labels(n);
  std::vector<std::string> titles(n), bodies(n), communities(n);
  for (int i = 0; i < n; ++i) {
    const bool on_topic = (i % 2 == 0);
    const int pool = (i / 2) % spec.k_topics;
    std::vector<std::string> tokens;
    tokens.reserve(kPostTokens);
    if (on_topic) {
      for (int t = 0; t < kPoolTokensPerPost; ++t) {
        tokens.push_back(pool_word(pool, static_cast<int>(rng.below(kPoolSize))));
      }
    }
    while (static_cast<int>(tokens.size()) < kPostTokens) {
      tokens.push_back(background_word(static_cast<int>(rng.below(kBackgroundVocab))));
    }
    rng.shuffle(tokens);
    titles[i] = join_tokens(tokens, 0, kTitleTokens);
    bodies[i] = join_tokens(tokens, kTitleTokens, tokens.size());
    communities[i] = std::string("synth_") + letter(pool);
    labels[i] = on_topic ? 1 : 0;
  }

  // Relabel an equal number of posts in each class so counts stay balanced.
  const auto n_flips = static_cast<size_t>(std::floor(spec.noise * (n / 2)));
  if (n_flips > 0) {
    std::vector<int> positives, negatives;
    for (int i = 0; i < n; ++i) (labels[i] ? positives : negatives).push_back(i);
    rng.shuffle(positives);
    rng.shuffle(negatives);
    for (size_t j = 0; j < n_flips; ++j) {
      labels[positives[j]] = 0;
      labels[negatives[j]] = 1;
    }
  }

  std::ostringstream posts;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "p%06d", i);
    const json record = {{"id", id},
                         {"community", communities[i]},
                         {"title", titles[i]},
                         {"body", bodies[i]},
                         {"created_utc", kBaseTimestamp + i},
                         {"moderated", labels[i] != 0}};
    posts << record.dump() << "\n";
  }
  return SynthCorpus{rules.str(), posts.str()};
}

// ---------------------------------------------------------------------------
// External fold metrics

FoldReport load_external_folds(const std::string& name, const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open fold metrics CSV: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path + ": empty file");
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  if (line != "fold,accuracy,precision,recall,f1") {
    throw DataError(csv_path + ": expected header \"fold,accuracy,precision,recall,f1\"");
  }

  FoldReport report;
  report.model_name = name;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw DataError(csv_path + " line " + std::to_string(line_no) +
                      ": expected 5 comma-separated fields");
    }
    try {
      Metrics m;
      m.accuracy = std::stod(fields[1]);
      m.precision = std::stod(fields[2]);
      m.recall = std::stod(fields[3]);
      m.f1 = std::stod(fields[4]);
      report.folds.push_back(m);
    } catch (const std::exception&) {
      throw DataError(csv_path + " line " + std::to_string(line_no) + ": invalid number");
    }
  }
  if (report.folds.empty()) throw DataError(csv_path + ": no fold rows");
  for (const auto& fold : report.folds) {
    report.mean.accuracy += fold.accuracy;
    report.mean.precision += fold.precision;
    report.mean.recall += fold.recall;
    report.mean.f1 += fold.f1;
  }
  const double k = static_cast<double>(report.folds.size());
  report.mean.accuracy /= k;
  report.mean.precision /= k;
  report.mean.recall /= k;
  report.mean.f1 /= k;
  return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string t_cell(const TTestResult& t) {
  return fmt("%.4f", t.t_statistic) + significance_stars(t.p_value);
}

std::string ablation_cell(const TTestResult& t) {
  return fmt("%.4f", t.mean_difference) + " (t=" + fmt("%.4f", t.t_statistic) + ")" +
         significance_stars(t.p_value);
}

}  // namespace

std::string emit_report(const ReportData& data, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kMarkdown) {
    if (!data.performance.empty()) {
      out << "# Model performance (mean over " << data.performance.front().folds.size()
          << " folds)\n\n";
      out << "| Model | Accuracy | Precision | Recall | F1 |\n";
      out << "|---|---|---|---|---|\n";
      for (const auto& report : data.performance) {
        out << "| " << report.model_name << " | " << fmt("%.4f", report.mean.accuracy)
            << " | " << fmt("%.4f", report.mean.precision) << " | "
            << fmt("%.4f", report.mean.recall) << " | " << fmt("%.4f", report.mean.f1)
            << " |\n";
      }
      out << "\n";
    }
    if (!data.comparisons.empty()) {
      out << "# Paired comparisons against " << data.reference_name << "\n\n";
      out << "t-statistics of (model - " << data.reference_name
          << ") per fold; ***: p < .001, **: p < .01, *: p < .05.\n\n";
      out << "| Model | Accuracy | Precision | Recall | F1 |\n";
      out << "|---|---|---|---|---|\n";
      for (const auto& [name, tests] : data.comparisons) {
        out << "| " << name << " | " << t_cell(tests.accuracy) << " | "
            << t_cell(tests.precision) << " | " << t_cell(tests.recall) << " | "
            << t_cell(tests.f1) << " |\n";
      }
      out << "\n";
    }
    if (!data.ablation.empty()) {
      out << "# Ablation\n\n";
      out << "Mean difference (variant - " << data.ablation.front().variant
          << ") with t-statistics.\n\n";
      out << "| Variant | Accuracy | Precision | Recall | F1 |\n";
      out << "|---|---|---|---|---|\n";
      for (const auto& row : data.ablation) {
        out << "| " << row.variant << " | " << ablation_cell(row.vs_full.accuracy) << " | "
            << ablation_cell(row.vs_full.precision) << " | "
            << ablation_cell(row.vs_full.recall) << " | " << ablation_cell(row.vs_full.f1)
            << " |\n";
      }
      out << "\n";
    }
    return out.str();
  }

  // CSV: one long-format table.
  out << "section,model,metric,value,t,p,stars\n";
  auto metric_row = [&](const char* section, const std::string& model, const char* metric,
                        double value, const TTestResult* test) {
    out << section << "," << csv_escape(model) << "," << metric << ","
        << fmt("%.6f", value);
    if (test) {
      out << "," << fmt("%.6f", test->t_statistic) << "," << fmt("%.6f", test->p_value)
          << "," << significance_stars(test->p_value);
    } else {
      out << ",,,";
    }
    out << "\n";
  };
  for (const auto& report : data.performance) {
    metric_row("performance", report.model_name, "accuracy", report.mean.accuracy, nullptr);
    metric_row("performance", report.model_name, "precision", report.mean.precision, nullptr);
    metric_row("performance", report.model_name, "recall", report.mean.recall, nullptr);
    metric_row("performance", report.model_name, "f1", report.mean.f1, nullptr);
  }
  for (const auto& [name, tests] : data.comparisons) {
    metric_row("comparison", name, "accuracy", tests.accuracy.mean_difference,
               &tests.accuracy);
    metric_row("comparison", name, "precision", tests.precision.mean_difference,
               &tests.precision);
    metric_row("comparison", name, "recall", tests.recall.mean_difference, &tests.recall);
    metric_row("comparison", name, "f1", tests.f1.mean_difference, &tests.f1);
  }
  for (const auto& row : data.ablation) {
    metric_row("ablation", row.variant, "accuracy", row.vs_full.accuracy.mean_difference,
               &row.vs_full.accuracy);
    metric_row("ablation", row.variant, "precision", row.vs_full.precision.mean_difference,
               &row.vs_full.precision);
    metric_row("ablation", row.variant, "recall", row.vs_full.recall.mean_difference,
               &row.vs_full.recall);
    metric_row("ablation", row.variant, "f1", row.vs_full.f1.mean_difference, &row.vs_full.f1);
  }
  return out.str();
}

}  // namespace crcm
