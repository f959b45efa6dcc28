// crcm: rule-aware content moderation pipeline.
//
// Subcommands: synth, topics, train, eval, predict, serve.
// Exit codes: 0 success, 1 runtime/data error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crcm/baselines.hpp"
#include "crcm/corpus.hpp"
#include "crcm/eval.hpp"
#include "crcm/model.hpp"
#include "crcm/rules.hpp"
#include "crcm/service.hpp"
#include "crcm/textprep.hpp"
#include "crcm/topics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ProviderFlags {
  std::string kind = "hash";
  std::string endpoint;
  int dim = 768;
  uint64_t hash_seed = 42;
  std::string cache_path;
  bool set_by_user = false;
};

struct LdaFlags {
  int topics = 0;  // 0 = sweep the range
  std::string range = "2..10";
  double alpha = 0.0;  // 0 = 50/K
  double beta = 0.01;
  int iterations = 1000;
  int top_words = 10;
};

void add_provider_flags(CLI::App* cmd, ProviderFlags& flags) {
  cmd->add_option("--provider", flags.kind, "Embedding provider: hash or remote")
      ->check(CLI::IsMember({"hash", "remote"}));
  cmd->add_option("--endpoint", flags.endpoint, "Remote encoder endpoint, e.g. http://host:port");
  cmd->add_option("--dim", flags.dim, "Embedding dimension");
  cmd->add_option("--hash-seed", flags.hash_seed, "Hashing provider seed");
  cmd->add_option("--cache", flags.cache_path, "Embedding cache file (JSONL log)");
}

void add_lda_flags(CLI::App* cmd, LdaFlags& flags) {
  cmd->add_option("--topics", flags.topics, "Fixed topic count (0 sweeps --topic-range)");
  cmd->add_option("--topic-range", flags.range, "Sweep range MIN..MAX for the topic count");
  cmd->add_option("--alpha", flags.alpha, "LDA document-topic prior (0 = 50/K)");
  cmd->add_option("--beta", flags.beta, "LDA topic-word prior");
  cmd->add_option("--lda-iterations", flags.iterations, "Gibbs sweeps");
  cmd->add_option("--top-words", flags.top_words, "Words per topic summary");
}

void add_train_flags(CLI::App* cmd, crcm::TrainConfig& cfg, double& dropout) {
  cmd->add_option("--lr", cfg.learning_rate, "Learning rate");
  cmd->add_option("--epochs", cfg.epochs, "Training epochs");
  cmd->add_option("--batch", cfg.batch_size, "Mini-batch size");
  cmd->add_option("--mu", cfg.mu, "L2 regularization strength");
  cmd->add_option("--beta1", cfg.adam_beta1, "Adam beta1");
  cmd->add_option("--beta2", cfg.adam_beta2, "Adam beta2");
  cmd->add_option("--adam-eps", cfg.adam_epsilon, "Adam epsilon");
  cmd->add_option("--dropout", dropout, "Dropout rate applied during training");
}

std::shared_ptr<const crcm::EmbeddingProvider> build_provider(const ProviderFlags& flags) {
  std::shared_ptr<const crcm::EmbeddingProvider> provider;
  if (flags.kind == "remote") {
    if (flags.endpoint.empty()) {
      throw std::runtime_error("--provider remote requires --endpoint");
    }
    provider = std::make_shared<crcm::RemoteProvider>(flags.endpoint, flags.dim);
  } else {
    provider = std::make_shared<crcm::HashingProvider>(flags.dim, flags.hash_seed);
  }
  if (!flags.cache_path.empty()) {
    provider = crcm::cached(provider, flags.cache_path);
  }
  return provider;
}

std::pair<int, int> parse_range(const std::string& range) {
  const auto sep = range.find("..");
  if (sep == std::string::npos) {
    throw std::runtime_error("topic range must look like MIN..MAX, got \"" + range + "\"");
  }
  const int lo = std::stoi(range.substr(0, sep));
  const int hi = std::stoi(range.substr(sep + 2));
  if (lo < 1 || lo > hi) {
    throw std::runtime_error("invalid topic range \"" + range + "\"");
  }
  return {lo, hi};
}

// All rule texts of a domain, one tokenized document per rule.
std::vector<crcm::TokenStream> rule_documents(const std::string& rules_path) {
  std::vector<crcm::TokenStream> docs;
  for (const auto& [community, rules] : crcm::load_rules(rules_path)) {
    for (const auto& rule : rules) {
      docs.push_back(crcm::preprocess(rule.text));
    }
  }
  if (docs.empty()) throw std::runtime_error("no rules found in " + rules_path);
  return docs;
}

struct FittedTopics {
  crcm::TopicModel model;
  std::vector<crcm::TopicSummary> summaries;
  crcm::SweepResult sweep;  // empty points when --topics was fixed
};

FittedTopics fit_topics(const std::vector<crcm::TokenStream>& docs, const LdaFlags& flags,
                        uint64_t seed) {
  FittedTopics fitted;
  int k = flags.topics;
  crcm::LdaConfig config{flags.alpha, flags.beta, flags.iterations, seed, flags.top_words};
  if (k <= 0) {
    const auto [lo, hi] = parse_range(flags.range);
    fitted.sweep = crcm::sweep_topic_count(docs, lo, hi, config);
    k = fitted.sweep.best_k;
  }
  const double alpha = flags.alpha > 0 ? flags.alpha : 50.0 / k;
  fitted.model = crcm::fit_lda(docs, k, alpha, flags.beta, flags.iterations, seed + k);
  fitted.summaries = crcm::summarize(fitted.model, flags.top_words);
  return fitted;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path);
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, int topics, int posts, double noise,
              uint64_t seed) {
  const crcm::SynthCorpus corpus =
      crcm::generate_synthetic({topics, posts, noise, seed});
  fs::create_directories(out_dir);
  write_file(out_dir + "/rules.jsonl", corpus.rules_jsonl);
  write_file(out_dir + "/posts.jsonl", corpus.posts_jsonl);
  std::cout << "wrote " << out_dir << "/rules.jsonl and " << out_dir << "/posts.jsonl\n";
  return 0;
}

int cmd_topics(const std::string& rules_path, const std::string& out_path,
               const LdaFlags& flags, uint64_t seed) {
  const auto docs = rule_documents(rules_path);
  LdaFlags sweep_flags = flags;
  sweep_flags.topics = 0;  // this command always sweeps
  const FittedTopics fitted = fit_topics(docs, sweep_flags, seed);

  json curve = json::array();
  for (const auto& point : fitted.sweep.points) {
    curve.push_back({{"k", point.k}, {"coherence", point.coherence}});
  }
  const json out = {{"curve", std::move(curve)},
                    {"best_k", fitted.sweep.best_k},
                    {"summaries", crcm::summaries_to_json(fitted.summaries)}};
  write_file(out_path, out.dump(2) + "\n");
  std::cout << "best K = " << fitted.sweep.best_k << ", wrote " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& posts_path, const std::string& rules_path,
              const std::string& out_path, const ProviderFlags& provider_flags,
              const LdaFlags& lda_flags, const crcm::TrainConfig& config, double dropout,
              double threshold, const std::string& aggregation, bool balance,
              uint64_t seed) {
  crcm::Dataset data = crcm::load_posts(posts_path);
  if (balance) data = crcm::undersample(data, seed);

  const auto docs = rule_documents(rules_path);
  const FittedTopics fitted = fit_topics(docs, lda_flags, seed);

  const auto provider = build_provider(provider_flags);
  const crcm::RuleMatrix rule_matrix = crcm::build_rule_matrix(fitted.summaries, *provider);

  crcm::CrcmModel model = crcm::init_crcm_model(
      rule_matrix, *provider, crcm::aggregation_from_string(aggregation),
      crcm::derive_seed(seed, 11));
  model.dropout = dropout;
  model.threshold = threshold;

  crcm::TrainConfig cfg = config;
  cfg.seed = seed;
  crcm::TrainResult result = crcm::train(std::move(model), data, *provider, cfg);
  crcm::save_model(result.model, out_path);
  std::cout << "trained on " << data.posts.size() << " posts, K = "
            << result.model.K() << ", final epoch loss = "
            << result.epoch_loss.back() << ", wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& posts_path, const std::string& rules_path,
             const std::string& out_dir, const ProviderFlags& provider_flags,
             const LdaFlags& lda_flags, const crcm::TrainConfig& config, double dropout,
             double threshold, double l2_strength, int k_folds, bool balance,
             const std::vector<std::string>& externals, uint64_t seed) {
  crcm::Dataset data = crcm::load_posts(posts_path);
  if (balance) data = crcm::undersample(data, seed);

  const auto docs = rule_documents(rules_path);
  const FittedTopics fitted = fit_topics(docs, lda_flags, seed);

  const auto provider = build_provider(provider_flags);
  const crcm::RuleMatrix rule_matrix = crcm::build_rule_matrix(fitted.summaries, *provider);

  crcm::TrainConfig cfg = config;
  cfg.seed = seed;

  const std::vector<crcm::AblationRow> ablation = crcm::ablation_run(
      data, *provider, rule_matrix, k_folds, seed, cfg, dropout, threshold);
  const crcm::FoldReport hate = crcm::cross_validate(
      crcm::hate_l2_spec("hate_l2", l2_strength, cfg), data, k_folds, seed);

  crcm::ReportData report;
  report.reference_name = "crcm_full";
  for (const auto& row : ablation) report.performance.push_back(row.report);
  report.performance.push_back(hate);
  const crcm::FoldReport& full = ablation.front().report;
  for (size_t i = 1; i < ablation.size(); ++i) {
    report.comparisons.emplace_back(ablation[i].variant,
                                    crcm::metric_t_tests(ablation[i].report, full));
  }
  report.comparisons.emplace_back("hate_l2", crcm::metric_t_tests(hate, full));
  for (const auto& spec : externals) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--external expects NAME=PATH, got \"" + spec + "\"");
    }
    crcm::FoldReport ext =
        crcm::load_external_folds(spec.substr(0, eq), spec.substr(eq + 1));
    if (static_cast<int>(ext.folds.size()) != k_folds) {
      throw std::runtime_error("external folds for \"" + ext.model_name + "\" have " +
                               std::to_string(ext.folds.size()) + " rows, expected " +
                               std::to_string(k_folds));
    }
    report.comparisons.emplace_back(ext.model_name, crcm::metric_t_tests(ext, full));
    report.performance.push_back(std::move(ext));
  }
  report.ablation = ablation;

  fs::create_directories(out_dir);
  write_file(out_dir + "/report.md", crcm::emit_report(report, crcm::ReportFormat::kMarkdown));
  write_file(out_dir + "/report.csv", crcm::emit_report(report, crcm::ReportFormat::kCsv));
  std::cout << "K = " << fitted.model.K << ", crcm_full mean accuracy = "
            << full.mean.accuracy << ", wrote " << out_dir << "/report.{md,csv}\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& title,
                const std::string& body, const std::string& community,
                const ProviderFlags& provider_flags) {
  const crcm::CrcmModel model = crcm::load_model(model_path);
  std::shared_ptr<const crcm::EmbeddingProvider> provider;
  if (provider_flags.set_by_user) {
    provider = build_provider(provider_flags);
  } else {
    provider = crcm::make_provider(model.provider);
    if (!provider_flags.cache_path.empty()) {
      provider = crcm::cached(provider, provider_flags.cache_path);
    }
  }
  crcm::check_dimension(model, *provider);

  crcm::Post post;
  post.title = title;
  post.body = body;
  post.community = community;
  const crcm::Prediction pred = crcm::predict(model, post, *provider);
  std::cout << crcm::moderation_response_json(pred, model,
                                              crcm::file_fingerprint(model_path))
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_serve(const std::string& config_path, const std::string& model_path,
              const std::string& bind, const ProviderFlags& provider_flags,
              double threshold, bool threshold_set) {
  crcm::ServiceConfig config;
  if (!config_path.empty()) {
    config = crcm::load_service_config(config_path);
  } else {
    if (model_path.empty()) {
      throw std::runtime_error("serve needs --config or --model");
    }
    config.model_path = model_path;
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("--bind must be host:port");
    }
    config.host = bind.substr(0, colon);
    config.port = std::stoi(bind.substr(colon + 1));
    if (provider_flags.set_by_user) {
      crcm::ProviderInfo info;
      info.name = provider_flags.kind;
      info.dim = provider_flags.dim;
      info.seed = provider_flags.hash_seed;
      info.endpoint = provider_flags.endpoint;
      config.provider = info;
    }
    if (threshold_set) config.threshold_override = threshold;
  }

  crcm::ModerationService service(config);
  std::cout << "serving on " << config.host << ":" << config.port << "\n";
  service.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-aware content moderation: topic-modeled community rules, "
               "affiliation-weighted classification, evaluation harness"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic rules/posts corpus");
  std::string synth_out;
  int synth_topics = 4, synth_posts = 2000;
  double synth_noise = 0.1;
  uint64_t synth_seed = 42;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--topics", synth_topics, "Number of planted keyword pools");
  synth->add_option("--posts", synth_posts, "Number of posts (even)");
  synth->add_option("--noise", synth_noise, "Label flip fraction in [0, 0.5)");
  synth->add_option("--seed", synth_seed, "RNG seed");

  // topics
  auto* topics = app.add_subcommand("topics", "Sweep the topic count and export summaries");
  std::string topics_rules, topics_out;
  LdaFlags topics_lda;
  uint64_t topics_seed = 42;
  topics->add_option("--rules", topics_rules, "rules.jsonl path")->required();
  topics->add_option("--out", topics_out, "Output JSON path")->required();
  add_lda_flags(topics, topics_lda);
  topics->add_option("--seed", topics_seed, "RNG seed");

  // train
  auto* train = app.add_subcommand("train", "Train a model end to end");
  std::string train_posts, train_rules, train_out, train_agg = "affiliation";
  ProviderFlags train_provider;
  LdaFlags train_lda;
  crcm::TrainConfig train_cfg;
  double train_dropout = 0.2, train_threshold = 0.5;
  bool train_balance = true;
  uint64_t train_seed = 42;
  train->add_option("--posts", train_posts, "posts.jsonl path")->required();
  train->add_option("--rules", train_rules, "rules.jsonl path")->required();
  train->add_option("--model,--out", train_out, "Output model path")->required();
  train->add_option("--aggregation", train_agg, "soft_vote or affiliation")
      ->check(CLI::IsMember({"soft_vote", "affiliation"}));
  train->add_option("--threshold", train_threshold, "Decision threshold");
  train->add_flag("--balance,!--no-balance", train_balance, "Undersample to balance classes");
  add_provider_flags(train, train_provider);
  add_lda_flags(train, train_lda);
  add_train_flags(train, train_cfg, train_dropout);
  train->add_option("--seed", train_seed, "RNG seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Cross-validated comparison and ablation report");
  std::string eval_posts, eval_rules, eval_out;
  ProviderFlags eval_provider;
  LdaFlags eval_lda;
  crcm::TrainConfig eval_cfg;
  double eval_dropout = 0.2, eval_threshold = 0.5, eval_l2 = 1e-4;
  int eval_kfolds = crcm::kDefaultKFolds;
  bool eval_balance = true;
  std::vector<std::string> eval_externals;
  uint64_t eval_seed = 42;
  eval->add_option("--posts", eval_posts, "posts.jsonl path")->required();
  eval->add_option("--rules", eval_rules, "rules.jsonl path")->required();
  eval->add_option("--out", eval_out, "Output directory for report.md/report.csv")->required();
  eval->add_option("--k-folds", eval_kfolds, "Cross-validation folds");
  eval->add_option("--threshold", eval_threshold, "Decision threshold");
  eval->add_option("--l2", eval_l2, "HATE-L2 regularization strength");
  eval->add_option("--external", eval_externals,
                   "NAME=PATH of per-fold metrics CSV for an external model");
  eval->add_flag("--balance,!--no-balance", eval_balance, "Undersample to balance classes");
  add_provider_flags(eval, eval_provider);
  add_lda_flags(eval, eval_lda);
  add_train_flags(eval, eval_cfg, eval_dropout);
  eval->add_option("--seed", eval_seed, "RNG seed");

  // predict
  auto* predict = app.add_subcommand("predict", "Score a single post with a trained model");
  std::string predict_model, predict_title, predict_body, predict_community;
  ProviderFlags predict_provider;
  predict->add_option("--model", predict_model, "Model path")->required();
  predict->add_option("--title", predict_title, "Post title")->required();
  predict->add_option("--body", predict_body, "Post body");
  predict->add_option("--community", predict_community, "Community id");
  add_provider_flags(predict, predict_provider);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a model over HTTP");
  std::string serve_config, serve_model, serve_bind = "127.0.0.1:8080";
  ProviderFlags serve_provider;
  double serve_threshold = 0.5;
  serve->add_option("--config", serve_config, "Service config JSON");
  serve->add_option("--model", serve_model, "Model path (when no --config)");
  serve->add_option("--bind", serve_bind, "host:port");
  serve->add_option("--threshold", serve_threshold, "Decision threshold override");
  add_provider_flags(serve, serve_provider);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto* cmd : {train, eval, predict, serve}) {
    ProviderFlags* flags = cmd == train     ? &train_provider
                           : cmd == eval    ? &eval_provider
                           : cmd == predict ? &predict_provider
                                            : &serve_provider;
    flags->set_by_user = cmd->count("--provider") || cmd->count("--endpoint") ||
                         cmd->count("--dim") || cmd->count("--hash-seed");
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_out, synth_topics, synth_posts, synth_noise, synth_seed);
    }
    if (topics->parsed()) {
      return cmd_topics(topics_rules, topics_out, topics_lda, topics_seed);
    }
    if (train->parsed()) {
      return cmd_train(train_posts, train_rules, train_out, train_provider, train_lda,
                       train_cfg, train_dropout, train_threshold, train_agg, train_balance,
                       train_seed);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_posts, eval_rules, eval_out, eval_provider, eval_lda, eval_cfg,
                      eval_dropout, eval_threshold, eval_l2, eval_kfolds, eval_balance,
                      eval_externals, eval_seed);
    }
    if (predict->parsed()) {
      return cmd_predict(predict_model, predict_title, predict_body, predict_community,
                         predict_provider);
    }
    if (serve->parsed()) {
      return cmd_serve(serve_config, serve_model, serve_bind, serve_provider,
                       serve_threshold, serve->count("--threshold") > 0);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
