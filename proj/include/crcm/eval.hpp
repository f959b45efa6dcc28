#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crcm/baselines.hpp"
#include "crcm/corpus.hpp"
#include "crcm/embeddings.hpp"
#include "crcm/model.hpp"
#include "crcm/rules.hpp"

namespace crcm {

// Default fold count for cross-validated evaluation.
inline constexpr int kDefaultKFolds = 10;

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Positive class = moderated. Precision/recall are 0 when their denominators
// are 0.
Metrics compute_metrics(const std::vector<uint8_t>& predictions,
                        const std::vector<uint8_t>& labels);

struct FoldReport {
  std::string model_name;
  std::vector<Metrics> folds;
  Metrics mean;
  uint64_t seed = 0;
};

struct TTestResult {
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;  // two-sided
  double mean_difference = 0.0;
};

// Paired t-test on d_i = a_i - b_i with sample sd (k-1 denominator).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta function I_x(a, b), continued-fraction form.
double incomplete_beta(double a, double b, double x);
// Two-sided p for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, int df);

std::string significance_stars(double p_value);

// Trains on a fold's training split and returns a predictor over test posts.
using Predictor = std::function<std::vector<uint8_t>(const Dataset& test)>;
struct ModelSpec {
  std::string name;
  std::function<Predictor(const Dataset& train, uint64_t fold_seed)> fit;
};

// k-fold cross-validation on stratified folds. The same (data, k, seed)
// triple always yields the same folds, so reports from different specs are
// paired fold-by-fold.
FoldReport cross_validate(const ModelSpec& spec, const Dataset& data, int k, uint64_t seed);

struct MetricTTests {
  TTestResult accuracy, precision, recall, f1;
};

// Per-metric paired tests of variant minus reference (negative t means the
// reference wins).
MetricTTests metric_t_tests(const FoldReport& variant, const FoldReport& reference);

// Ready-made specs. The provider reference must outlive the returned spec.
ModelSpec crcm_spec(std::string name, RuleMatrix rule_matrix,
                    const EmbeddingProvider& provider, Aggregation aggregation,
                    TrainConfig config, double dropout = 0.2, double threshold = 0.5);
ModelSpec rule_free_spec(std::string name, const EmbeddingProvider& provider,
                         TrainConfig config, double dropout = 0.2, double threshold = 0.5);
ModelSpec hate_l2_spec(std::string name, double l2_strength, TrainConfig config);

struct AblationRow {
  std::string variant;
  FoldReport report;
  MetricTTests vs_full;  // variant minus full
};

// Full CRCM (affiliation), affiliation-ablated (soft vote), rules-ablated
// (rule-free), evaluated on identical folds.
std::vector<AblationRow> ablation_run(const Dataset& data, const EmbeddingProvider& provider,
                                      const RuleMatrix& rule_matrix, int k, uint64_t seed,
                                      const TrainConfig& config, double dropout = 0.2,
                                      double threshold = 0.5);

struct SynthSpec {
  int k_topics = 4;
  int n_posts = 2000;  // must be even
  double noise = 0.1;  // in [0, 0.5)
  uint64_t seed = 0;
};

struct SynthCorpus {
  std::string rules_jsonl;
  std::string posts_jsonl;
};

// Planted-pool corpus: K disjoint keyword pools, three rule texts per pool,
// balanced posts. Moderated posts mix keywords from exactly one pool into
// background words; clean posts are background-only. `noise` relabels an
// equal number of posts in each class, keeping counts balanced.
SynthCorpus generate_synthetic(const SynthSpec& spec);

// Parses "fold,accuracy,precision,recall,f1" CSV produced by external models.
FoldReport load_external_folds(const std::string& name, const std::string& csv_path);

struct ReportData {
  std::vector<FoldReport> performance;
  std::string reference_name;  // the model the comparisons are paired against
  std::vector<std::pair<std::string, MetricTTests>> comparisons;
  std::vector<AblationRow> ablation;
};

enum class ReportFormat { kMarkdown, kCsv };

std::string emit_report(const ReportData& data, ReportFormat format);

}  // namespace crcm
