#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "crcm/corpus.hpp"
#include "crcm/model.hpp"
#include "crcm/service.hpp"
#include "test_helpers.hpp"

using namespace crcm;
using nlohmann::json;

namespace {

// One small corpus shared by the CLI tests (generated once).
struct CliFixture {
  TempDir dir;
  std::string posts, rules;
  CliFixture() {
    posts = dir.file("posts.jsonl");
    rules = dir.file("rules.jsonl");
    const CliResult r = run_cli("synth --out " + dir.path.string() +
                                " --topics 3 --posts 200 --noise 0.05 --seed 5");
    REQUIRE(r.exit_code == 0);
  }
  std::string small_lda() const {
    return " --topics 3 --alpha 0.2 --lda-iterations 150 ";
  }
};

}  // namespace

TEST_CASE("synth output is deterministic and loadable") {
  TempDir dir;
  const std::string args = "synth --out {} --topics 3 --posts 150 --noise 0.1 --seed 9";
  auto subst = [&](const std::string& out) {
    std::string s = args;
    return s.replace(s.find("{}"), 2, out);
  };
  REQUIRE(run_cli(subst(dir.file("a"))).exit_code == 0);
  REQUIRE(run_cli(subst(dir.file("b"))).exit_code == 0);
  CHECK(read_text(dir.file("a") + "/posts.jsonl") == read_text(dir.file("b") + "/posts.jsonl"));
  CHECK(read_text(dir.file("a") + "/rules.jsonl") == read_text(dir.file("b") + "/rules.jsonl"));

  const Dataset data = load_posts(dir.file("a") + "/posts.jsonl");
  CHECK(data.posts.size() == 150);
  CHECK(load_rules(dir.file("a") + "/rules.jsonl").size() == 3);
}

TEST_CASE("topics subcommand sweeps and recovers the planted pool count") {
  TempDir dir;
  REQUIRE(run_cli("synth --out " + dir.path.string() +
                  " --topics 4 --posts 100 --noise 0 --seed 21")
              .exit_code == 0);
  const std::string out = dir.file("topics.json");
  const CliResult r =
      run_cli("topics --rules " + dir.file("rules.jsonl") + " --out " + out +
              " --topic-range 2..8 --alpha 0.2 --lda-iterations 250 --seed 21");
  REQUIRE(r.exit_code == 0);

  const json parsed = json::parse(read_text(out));
  CHECK(parsed["best_k"] == 4);  // planted structure fixes the answer
  CHECK(parsed["curve"].size() == 7);
  CHECK(parsed["summaries"].size() == 4);
  for (const auto& point : parsed["curve"]) {
    CHECK(point["k"].get<int>() >= 2);
    CHECK(point["k"].get<int>() <= 8);
  }

  // Determinism: identical flags, identical bytes.
  const std::string out2 = dir.file("topics2.json");
  REQUIRE(run_cli("topics --rules " + dir.file("rules.jsonl") + " --out " + out2 +
                  " --topic-range 2..8 --alpha 0.2 --lda-iterations 250 --seed 21")
              .exit_code == 0);
  CHECK(read_text(out) == read_text(out2));
}

TEST_CASE("train writes a loadable model and reports errors properly") {
  CliFixture fx;
  const std::string model_path = fx.dir.file("model.json");
  const CliResult ok = run_cli("train --posts " + fx.posts + " --rules " + fx.rules +
                               " --out " + model_path + fx.small_lda() +
                               "--dim 64 --epochs 4 --seed 5");
  REQUIRE(ok.exit_code == 0);
  const CrcmModel model = load_model(model_path);
  CHECK(model.K() == 3);
  CHECK(model.dim == 64);
  CHECK(model.aggregation == Aggregation::kAffiliation);

  const CliResult missing = run_cli("train --posts /nonexistent/posts.jsonl --rules " +
                                    fx.rules + " --out " + fx.dir.file("x.json") +
                                    fx.small_lda() + "--dim 64 --epochs 2");
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("/nonexistent/posts.jsonl") != std::string::npos);

  const CliResult usage = run_cli("train --no-such-flag");
  CHECK(usage.exit_code == 2);

  const CliResult no_sub = run_cli("");
  CHECK(no_sub.exit_code == 2);
}

TEST_CASE("aggregation flag changes only the mode and learned parameters") {
  CliFixture fx;
  const std::string soft_path = fx.dir.file("soft.json");
  const std::string affiliation_path = fx.dir.file("affiliation.json");
  const std::string common = "train --posts " + fx.posts + " --rules " + fx.rules +
                             fx.small_lda() + "--dim 64 --epochs 3 --seed 5 ";
  REQUIRE(run_cli(common + "--aggregation soft_vote --out " + soft_path).exit_code == 0);
  REQUIRE(run_cli(common + "--aggregation affiliation --out " + affiliation_path).exit_code ==
          0);

  const json soft = json::parse(read_text(soft_path));
  const json affiliation = json::parse(read_text(affiliation_path));
  CHECK(soft["aggregation"] == "soft_vote");
  CHECK(affiliation["aggregation"] == "affiliation");
  CHECK(soft["dim"] == affiliation["dim"]);
  CHECK(soft["K"] == affiliation["K"]);
  CHECK(soft["rule_matrix"] == affiliation["rule_matrix"]);
  CHECK(soft["summaries"] == affiliation["summaries"]);
  CHECK(soft["provider"] == affiliation["provider"]);
  // Training under a different mode produces different parameters.
  CHECK(soft["classifiers"] != affiliation["classifiers"]);
}

TEST_CASE("predict agrees with the moderation service byte for byte") {
  CliFixture fx;
  const std::string model_path = fx.dir.file("model.json");
  REQUIRE(run_cli("train --posts " + fx.posts + " --rules " + fx.rules + " --out " +
                  model_path + fx.small_lda() + "--dim 64 --epochs 4 --seed 5")
              .exit_code == 0);

  const CliResult predicted = run_cli("predict --model " + model_path +
                                      " --title \"kwaa kwba post\" --body \"plain words\"");
  REQUIRE(predicted.exit_code == 0);
  const json from_cli = json::parse(predicted.output);

  ServiceConfig config;
  config.model_path = model_path;
  ModerationService service(config);
  const int port = service.start_background();
  httplib::Client client("127.0.0.1", port);
  const json request = {{"title", "kwaa kwba post"}, {"body", "plain words"}};
  auto res = client.Post("/v1/moderate", request.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  CHECK(json::parse(res->body) == from_cli);
  service.stop();
}

TEST_CASE("eval writes deterministic reports with the full model grid") {
  CliFixture fx;
  const std::string common = "eval --posts " + fx.posts + " --rules " + fx.rules +
                             fx.small_lda() +
                             "--dim 64 --epochs 4 --k-folds 3 --seed 5 --out ";
  REQUIRE(run_cli(common + fx.dir.file("r1")).exit_code == 0);
  REQUIRE(run_cli(common + fx.dir.file("r2")).exit_code == 0);

  const std::string csv1 = read_text(fx.dir.file("r1") + "/report.csv");
  CHECK(csv1 == read_text(fx.dir.file("r2") + "/report.csv"));
  CHECK(read_text(fx.dir.file("r1") + "/report.md") ==
        read_text(fx.dir.file("r2") + "/report.md"));

  const std::string md = read_text(fx.dir.file("r1") + "/report.md");
  CHECK(md.find("crcm_full") != std::string::npos);
  CHECK(md.find("crcm_soft_vote") != std::string::npos);
  CHECK(md.find("rule_free") != std::string::npos);
  CHECK(md.find("hate_l2") != std::string::npos);

  // Three ablation variants in the CSV.
  int ablation_rows = 0;
  std::istringstream in(csv1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("ablation,", 0) == 0) ++ablation_rows;
  }
  CHECK(ablation_rows == 3 * 4);  // variants x metrics
}

TEST_CASE("eval accepts external fold metrics") {
  CliFixture fx;
  std::string csv = "fold,accuracy,precision,recall,f1\n";
  for (int f = 0; f < 3; ++f) csv += std::to_string(f) + ",0.61,0.60,0.62,0.6099\n";
  write_text(fx.dir.file("ext.csv"), csv);
  const CliResult r = run_cli("eval --posts " + fx.posts + " --rules " + fx.rules +
                              fx.small_lda() +
                              "--dim 64 --epochs 3 --k-folds 3 --seed 5 --external "
                              "legacy=" + fx.dir.file("ext.csv") + " --out " +
                              fx.dir.file("rext"));
  REQUIRE(r.exit_code == 0);
  const std::string md = read_text(fx.dir.file("rext") + "/report.md");
  CHECK(md.find("legacy") != std::string::npos);
}
