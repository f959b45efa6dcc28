#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "crcm/eval.hpp"
#include "crcm/rng.hpp"
#include "test_helpers.hpp"

using namespace crcm;

namespace {

Dataset parse_posts_jsonl(const std::string& jsonl) {
  Dataset data;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Post post;
    post.id = j.at("id");
    post.community = j.at("community");
    post.title = j.at("title");
    post.body = j.at("body");
    post.created_utc = j.at("created_utc");
    post.moderated = j.at("moderated");
    data.posts.push_back(std::move(post));
  }
  return data;
}

}  // namespace

TEST_CASE("compute_metrics matches a hand confusion matrix") {
  // TP=3 FP=1 FN=1 TN=5.
  const std::vector<uint8_t> preds{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const std::vector<uint8_t> labels{1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
  const Metrics m = compute_metrics(preds, labels);
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.75));
  CHECK(m.f1 == doctest::Approx(0.75));

  const Metrics perfect = compute_metrics(labels, labels);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  // No positive predictions but positive labels: precision = recall = f1 = 0.
  const Metrics empty = compute_metrics({0, 0, 0}, {1, 0, 1});
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);

  CHECK_THROWS(compute_metrics({1}, {1, 0}));
  CHECK_THROWS(compute_metrics({}, {}));
}

TEST_CASE("compute_metrics agrees with a brute-force counter") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.below(50);
    std::vector<uint8_t> preds(n), labels(n);
    for (size_t i = 0; i < n; ++i) {
      preds[i] = rng.bernoulli(0.5);
      labels[i] = rng.bernoulli(0.5);
    }
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < n; ++i) {
      if (preds[i] && labels[i]) ++tp;
      if (preds[i] && !labels[i]) ++fp;
      if (!preds[i] && labels[i]) ++fn;
      if (!preds[i] && !labels[i]) ++tn;
    }
    const Metrics m = compute_metrics(preds, labels);
    CHECK(m.accuracy == double(tp + tn) / double(n));
    CHECK(m.precision == ((tp + fp) ? double(tp) / double(tp + fp) : 0.0));
    CHECK(m.recall == ((tp + fn) ? double(tp) / double(tp + fn) : 0.0));
  }
}

TEST_CASE("paired_t_test matches hand-evaluated cases") {
  // Identical samples: exactly t = 0, p = 1.
  const std::vector<double> same{0.7, 0.8, 0.9, 0.6};
  const TTestResult identical = paired_t_test(same, same);
  CHECK(identical.t_statistic == 0.0);
  CHECK(identical.p_value == 1.0);
  CHECK(identical.degrees_of_freedom == 3);

  // d = [1,2,3]: mean 2, sd 1, t = 2*sqrt(3), df 2.
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{0.0, 0.0, 0.0};
  const TTestResult r = paired_t_test(a, b);
  CHECK(r.t_statistic == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.degrees_of_freedom == 2);
  CHECK(r.mean_difference == doctest::Approx(2.0));
  // Closed form for df=2: p = 1 - t/sqrt(t^2+2).
  const double t = 2.0 * std::sqrt(3.0);
  CHECK(r.p_value == doctest::Approx(1.0 - t / std::sqrt(t * t + 2.0)).epsilon(1e-9));
  CHECK(r.p_value == doctest::Approx(0.0742).epsilon(1e-2));

  CHECK_THROWS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}));
  CHECK_THROWS(paired_t_test(a, std::vector<double>{1.0, 2.0}));
  // Constant nonzero difference: degenerate.
  CHECK_THROWS_WITH(paired_t_test(std::vector<double>{1.0, 2.0, 3.0},
                                  std::vector<double>{0.5, 1.5, 2.5}),
                    doctest::Contains("zero-variance"));
}

TEST_CASE("paired_t_test is antisymmetric and shift-invariant") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t k = 2 + rng.below(10);
    std::vector<double> a(k), b(k);
    for (size_t i = 0; i < k; ++i) {
      a[i] = rng.uniform01();
      b[i] = rng.uniform01();
    }
    TTestResult forward, backward;
    try {
      forward = paired_t_test(a, b);
      backward = paired_t_test(b, a);
    } catch (const std::runtime_error&) {
      continue;  // degenerate draw
    }
    CHECK(forward.t_statistic == -backward.t_statistic);
    CHECK(forward.p_value == backward.p_value);

    std::vector<double> a_shift(a), b_shift(b);
    for (size_t i = 0; i < k; ++i) {
      a_shift[i] += 17.25;
      b_shift[i] += 17.25;
    }
    const TTestResult shifted = paired_t_test(a_shift, b_shift);
    CHECK(shifted.t_statistic == doctest::Approx(forward.t_statistic).epsilon(1e-9));
    CHECK(shifted.p_value == doctest::Approx(forward.p_value).epsilon(1e-9));
  }
}

TEST_CASE("incomplete beta and the t distribution behave") {
  CHECK(incomplete_beta(1.0, 1.0, 0.25) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  CHECK(student_t_two_sided_p(0.0, 5) == 1.0);
  CHECK(student_t_two_sided_p(100.0, 5) < 1e-6);
  // df=1 (Cauchy): p = 1 - (2/pi) atan(t).
  CHECK(student_t_two_sided_p(1.0, 1) ==
        doctest::Approx(1.0 - 2.0 / 3.14159265358979 * std::atan(1.0)).epsilon(1e-9));
}

TEST_CASE("significance stars follow the reporting convention") {
  CHECK(significance_stars(0.0009) == "***");
  CHECK(significance_stars(0.005) == "**");
  CHECK(significance_stars(0.03) == "*");
  CHECK(significance_stars(0.2) == "");
  CHECK(significance_stars(0.05) == "");
}

TEST_CASE("cross_validate on a constant classifier gives forced metrics") {
  Dataset data;
  for (int i = 0; i < 40; ++i) {
    Post post;
    post.id = "p" + std::to_string(i);
    post.title = "text " + std::to_string(i);
    post.moderated = i % 2 == 0;
    data.posts.push_back(post);
  }
  ModelSpec constant{"always_moderate", [](const Dataset&, uint64_t) -> Predictor {
                       return [](const Dataset& test) {
                         return std::vector<uint8_t>(test.posts.size(), 1);
                       };
                     }};
  const FoldReport report = cross_validate(constant, data, 4, 3);
  REQUIRE(report.folds.size() == 4);
  CHECK(report.mean.accuracy == doctest::Approx(0.5));
  CHECK(report.mean.recall == doctest::Approx(1.0));

  const FoldReport again = cross_validate(constant, data, 4, 3);
  for (size_t f = 0; f < 4; ++f) {
    CHECK(report.folds[f].accuracy == again.folds[f].accuracy);
    CHECK(report.folds[f].f1 == again.folds[f].f1);
  }
}

TEST_CASE("fold report means are the arithmetic fold means") {
  Dataset data;
  Rng rng(31);
  for (int i = 0; i < 60; ++i) {
    Post post;
    post.id = "p" + std::to_string(i);
    post.title = "word" + std::to_string(rng.below(20)) + "x";
    post.moderated = i % 2 == 0;
    data.posts.push_back(post);
  }
  ModelSpec noisy{"coin", [](const Dataset&, uint64_t fold_seed) -> Predictor {
                    return [fold_seed](const Dataset& test) {
                      Rng rng(fold_seed);
                      std::vector<uint8_t> out(test.posts.size());
                      for (auto& p : out) p = rng.bernoulli(0.5);
                      return out;
                    };
                  }};
  const FoldReport report = cross_validate(noisy, data, 5, 11);
  double acc = 0.0, f1 = 0.0;
  for (const auto& fold : report.folds) {
    acc += fold.accuracy;
    f1 += fold.f1;
  }
  CHECK(report.mean.accuracy == doctest::Approx(acc / 5).epsilon(1e-9));
  CHECK(report.mean.f1 == doctest::Approx(f1 / 5).epsilon(1e-9));
}

TEST_CASE("generate_synthetic emits balanced, seed-stable corpora") {
  const SynthSpec spec{4, 200, 0.1, 9};
  const SynthCorpus a = generate_synthetic(spec);
  const SynthCorpus b = generate_synthetic(spec);
  CHECK(a.rules_jsonl == b.rules_jsonl);
  CHECK(a.posts_jsonl == b.posts_jsonl);
  const SynthCorpus c = generate_synthetic({4, 200, 0.1, 10});
  CHECK(a.posts_jsonl != c.posts_jsonl);

  const Dataset data = parse_posts_jsonl(a.posts_jsonl);
  REQUIRE(data.posts.size() == 200);
  int positives = 0;
  for (const auto& post : data.posts) positives += post.moderated;
  CHECK(positives == 100);

  // 4 pools x 3 rules.
  int rule_lines = 0;
  std::istringstream rules(a.rules_jsonl);
  std::string line;
  while (std::getline(rules, line)) rule_lines += !line.empty();
  CHECK(rule_lines == 12);
}

TEST_CASE("noise-free synthetic posts are keyword-separable") {
  const SynthCorpus corpus = generate_synthetic({3, 150, 0.0, 4});

  const Dataset data = parse_posts_jsonl(corpus.posts_jsonl);
  REQUIRE(data.posts.size() == 150);
  for (const auto& post : data.posts) {
    const std::string content = post_content(post);
    const bool has_pool_word = content.find("kw") != std::string::npos;
    CHECK(has_pool_word == post.moderated);  // oracle accuracy 1.0
  }
}

TEST_CASE("generate_synthetic validates its spec") {
  CHECK_THROWS(generate_synthetic({1, 200, 0.1, 0}));
  CHECK_THROWS(generate_synthetic({4, 99, 0.1, 0}));
  CHECK_THROWS(generate_synthetic({4, 201, 0.1, 0}));  // odd
  CHECK_THROWS(generate_synthetic({4, 200, 0.5, 0}));
  CHECK_THROWS(generate_synthetic({4, 200, -0.1, 0}));
}

TEST_CASE("external fold metrics load from CSV") {
  TempDir dir;
  write_text(dir.file("folds.csv"),
             "fold,accuracy,precision,recall,f1\n"
             "0,0.8,0.7,0.9,0.7875\n"
             "1,0.6,0.5,0.7,0.5833\n");
  const FoldReport report = load_external_folds("ext", dir.file("folds.csv"));
  REQUIRE(report.folds.size() == 2);
  CHECK(report.model_name == "ext");
  CHECK(report.mean.accuracy == doctest::Approx(0.7));
  CHECK(report.folds[1].recall == doctest::Approx(0.7));

  write_text(dir.file("bad.csv"), "not,the,right,header\n");
  CHECK_THROWS_AS(load_external_folds("x", dir.file("bad.csv")), DataError);
  write_text(dir.file("short.csv"), "fold,accuracy,precision,recall,f1\n1,0.5\n");
  CHECK_THROWS_AS(load_external_folds("x", dir.file("short.csv")), DataError);
}

TEST_CASE("emit_report produces parseable CSV and markdown tables") {
  ReportData data;
  FoldReport one;
  one.model_name = "model_a";
  one.folds = {{1.0, 1.0, 1.0, 1.0}};
  one.mean = {1.0, 1.0, 1.0, 1.0};
  data.performance.push_back(one);
  data.reference_name = "model_a";

  const std::string md = emit_report(data, ReportFormat::kMarkdown);
  CHECK(md.find("| model_a | 1.0000 | 1.0000 | 1.0000 | 1.0000 |") != std::string::npos);

  const std::string csv = emit_report(data, ReportFormat::kCsv);
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "section,model,metric,value,t,p,stars");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
  }
  CHECK(rows == 4);  // one per metric
}
