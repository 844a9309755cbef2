#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/rng.hpp"
#include "retro/suite.hpp"

using namespace retro;
using nlohmann::json;

namespace {

data::Dataset role_dataset(const std::string& name, int n) {
  data::Dataset ds;
  ds.name = name;
  for (int i = 0; i < n; ++i) {
    data::Entry e;
    e.id = name + "-" + std::to_string(i);
    e.question = name + " question " + std::to_string(i) + "?";
    e.options = {"Answer yes " + e.id, "Answer no " + e.id};
    e.correct_index = 0;
    ds.entries.push_back(e);
  }
  return ds;
}

struct SyntheticPair {
  data::DatasetPair pair;
  std::map<std::string, embed::EmbeddingVector> target;
  std::map<std::string, embed::EmbeddingVector> retro;
};

// Both roles drawn from one Gaussian (null), or offset by `shift` on the
// first axis (alternative).
SyntheticPair synthetic_pair(int per_role, std::size_t dim, std::uint64_t seed, double shift) {
  SyntheticPair out{
      data::make_pair(role_dataset("target", per_role), role_dataset("retro", per_role)), {}, {}};
  rng::CounterRng gen(seed);
  auto draw = [&](double offset) {
    embed::EmbeddingVector v;
    v.model_id = "synthetic";
    v.values.resize(dim);
    for (auto& x : v.values) x = gen.next_gaussian();
    v.values[0] += offset;
    return v;
  };
  for (const auto& e : out.pair.target.entries) out.target[e.id] = draw(0.0);
  for (const auto& e : out.pair.retro.entries) out.retro[e.id] = draw(shift);
  return out;
}

eval::EvalSummary summary_of(const std::string& model, long correct, long total,
                             const std::string& variant = "standard") {
  eval::EvalSummary s;
  s.model_id = model;
  s.dataset_name = "ds";
  s.variant_fingerprint = variant;
  s.accuracy = stats::make_accuracy(correct, total);
  return s;
}

} // namespace

TEST_CASE("fold plan partitions each dataset into near-equal folds") {
  auto pair = data::make_pair(role_dataset("target", 23), role_dataset("retro", 17));
  auto plan = suite::make_fold_plan(pair, 5);
  REQUIRE(plan.num_folds == 5);

  auto check = [&](const data::Dataset& ds, const std::map<std::string, int>& folds) {
    CHECK(folds.size() == ds.size());
    std::vector<int> sizes(5, 0);
    for (const auto& e : ds.entries) {
      auto it = folds.find(e.id);
      REQUIRE(it != folds.end());
      ++sizes[it->second];
    }
    int lo = *std::min_element(sizes.begin(), sizes.end());
    int hi = *std::max_element(sizes.begin(), sizes.end());
    CHECK(hi - lo <= 1);
  };
  check(pair.target, plan.target_folds);
  check(pair.retro, plan.retro_folds);

  auto plan2 = suite::make_fold_plan(pair, 5);
  CHECK(plan.target_folds == plan2.target_folds);
}

TEST_CASE("difficulty test: identical summaries give p = 1") {
  auto pair = data::make_pair(role_dataset("target", 4), role_dataset("retro", 4));
  std::vector<suite::DifficultyInput> in = {
      {"model-a", summary_of("model-a", 40, 100), summary_of("model-a", 40, 100), std::nullopt}};
  auto rows = suite::difficulty_test(pair, in);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].result.p_value == doctest::Approx(1.0));
  CHECK(rows[0].gap_pp == doctest::Approx(0.0));
}

TEST_CASE("difficulty test reproduces the pre-release gap outcomes") {
  auto pair = data::make_pair(role_dataset("target", 4), role_dataset("retro", 4));
  std::vector<suite::DifficultyInput> in = {
      {"neox-20b", summary_of("neox-20b", 237, 612), summary_of("neox-20b", 245, 612), std::nullopt},
      {"babbage-002", summary_of("babbage-002", 34, 88), summary_of("babbage-002", 35, 88),
       std::nullopt},
      {"davinci-002", summary_of("davinci-002", 33, 90), summary_of("davinci-002", 36, 90),
       std::nullopt}};
  auto rows = suite::difficulty_test(pair, in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].gap_pp == doctest::Approx(-1.31).epsilon(0.01));
  CHECK(rows[1].gap_pp == doctest::Approx(-1.14).epsilon(0.01));
  CHECK(rows[2].gap_pp == doctest::Approx(-3.33).epsilon(0.01));
  for (const auto& row : rows) {
    CHECK(row.result.p_value >= 0.5);
    CHECK_FALSE(row.result.reject_at_5pct);
  }
}

TEST_CASE("difficulty test rejects a synthetic 30-point gap") {
  auto pair = data::make_pair(role_dataset("target", 4), role_dataset("retro", 4));
  std::vector<suite::DifficultyInput> in = {
      {"leaky", summary_of("leaky", 140, 200), summary_of("leaky", 80, 200), std::nullopt}};
  auto rows = suite::difficulty_test(pair, in);
  CHECK(rows[0].result.reject_at_5pct);
  CHECK(rows[0].gap_pp == doctest::Approx(30.0));
}

TEST_CASE("difficulty test enforces matching variants and pre-release cutoffs") {
  auto pair = data::make_pair(role_dataset("target", 4), role_dataset("retro", 4));
  pair.target.release_date = "2021-09-06";

  std::vector<suite::DifficultyInput> mismatched = {
      {"m", summary_of("m", 10, 20, "standard"), summary_of("m", 10, 20, "five_shot"),
       std::nullopt}};
  CHECK_THROWS_AS(suite::difficulty_test(pair, mismatched), Error);

  std::vector<suite::DifficultyInput> late = {
      {"m", summary_of("m", 10, 20), summary_of("m", 10, 20), std::string("2023-01-01")}};
  CHECK_THROWS_AS(suite::difficulty_test(pair, late), Error);

  std::vector<suite::DifficultyInput> early = {
      {"m", summary_of("m", 10, 20), summary_of("m", 10, 20), std::string("2021-01-01")}};
  CHECK_NOTHROW(suite::difficulty_test(pair, early));
}

TEST_CASE("prediction test never trains on a held-out entry") {
  auto pair = data::make_pair(role_dataset("target", 20), role_dataset("retro", 20));
  auto plan = suite::make_fold_plan(pair, 3);
  for (int fold = 0; fold < plan.num_folds; ++fold) {
    std::set<std::string> test_ids, train_ids;
    for (const auto& [id, f] : plan.target_folds) (f == fold ? test_ids : train_ids).insert(id);
    for (const auto& [id, f] : plan.retro_folds) (f == fold ? test_ids : train_ids).insert(id);
    for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);
  }
}

TEST_CASE("prediction test stays near chance under the null") {
  int fails_to_reject = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto sp = synthetic_pair(30, 8, 500 + s, 0.0);
    auto plan = suite::make_fold_plan(sp.pair, 1000 + s);
    suite::ClassifierConfig cfg;
    cfg.logreg_cfg.epochs = 200;
    auto out = suite::prediction_accuracy_test(sp.pair, sp.target, sp.retro, plan, cfg);
    CHECK(out.pooled_total == 60);
    CHECK(out.fold_accuracies.size() == 5);
    if (!out.result.reject_at_5pct) ++fails_to_reject;
  }
  CHECK(fails_to_reject >= 18); // >= 90% of seeds
}

TEST_CASE("prediction test separates a shifted pair decisively") {
  auto sp = synthetic_pair(30, 8, 77, 6.0);
  auto plan = suite::make_fold_plan(sp.pair, 3);
  suite::ClassifierConfig cfg;
  auto out = suite::prediction_accuracy_test(sp.pair, sp.target, sp.retro, plan, cfg);
  CHECK(out.result.statistic > 0.9); // pooled held-out accuracy
  CHECK(out.result.p_value < 0.01);
  CHECK(out.result.reject_at_5pct);
}

TEST_CASE("prediction test works through the external command contract") {
  auto sp = synthetic_pair(10, 4, 3, 0.0);
  auto plan = suite::make_fold_plan(sp.pair, 4);
  suite::ClassifierConfig cfg;
  cfg.kind = suite::ClassifierConfig::Kind::external_command;
  cfg.command = std::string("python3 ") + RETRO_TEST_FIXTURES + "/classifier_cmd.py";
  auto out = suite::prediction_accuracy_test(sp.pair, sp.target, sp.retro, plan, cfg);
  CHECK(out.pooled_total == 20);
  // Majority-class predictor on balanced data: one label everywhere.
  CHECK(out.pooled_correct == 10);
}

TEST_CASE("prediction test works through the http classifier contract") {
  httplib::Server server;
  server.Post("/classify", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json labels = json::array();
    for (std::size_t i = 0; i < body.at("test").size(); ++i) labels.push_back(1);
    res.set_content(json{{"labels", labels}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto sp = synthetic_pair(10, 4, 4, 0.0);
  auto plan = suite::make_fold_plan(sp.pair, 5);
  suite::ClassifierConfig cfg;
  cfg.kind = suite::ClassifierConfig::Kind::http_endpoint;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/classify";
  auto out = suite::prediction_accuracy_test(sp.pair, sp.target, sp.retro, plan, cfg);
  CHECK(out.pooled_correct == 10); // constant "retro" answers: half right

  server.stop();
  worker.join();
}

TEST_CASE("semantic test fails to reject under the null in most seeds") {
  int fails = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto sp = synthetic_pair(20, 6, 9000 + s, 0.0);
    stats::PermutationConfig cfg;
    cfg.num_samples = 2000;
    cfg.seed = 100 + s;
    auto out = suite::semantic_test(sp.pair, sp.target, sp.retro, cfg);
    if (!out.reject) ++fails;
  }
  CHECK(fails >= 18);
}

TEST_CASE("semantic test on identical embeddings returns p = 1 for both roles") {
  auto sp = synthetic_pair(5, 4, 1, 0.0);
  embed::EmbeddingVector same;
  same.model_id = "synthetic";
  same.values = {1.0, 0.5, -0.25, 2.0};
  for (auto& [id, v] : sp.target) v = same;
  for (auto& [id, v] : sp.retro) v = same;
  stats::PermutationConfig cfg;
  cfg.num_samples = 500;
  auto out = suite::semantic_test(sp.pair, sp.target, sp.retro, cfg);
  CHECK(out.target.p_value == doctest::Approx(1.0));
  CHECK(out.retro.p_value == doctest::Approx(1.0));
  CHECK_FALSE(out.reject);
}

TEST_CASE("semantic test rejects disjoint clusters in both roles") {
  auto sp = synthetic_pair(20, 6, 321, 8.0);
  stats::PermutationConfig cfg;
  cfg.num_samples = 2000;
  cfg.seed = 7;
  auto out = suite::semantic_test(sp.pair, sp.target, sp.retro, cfg);
  CHECK(out.target.p_value < 0.01);
  CHECK(out.retro.p_value < 0.01);
  CHECK(out.reject);
}

TEST_CASE("human test scores the pooled survey outcome") {
  auto r = suite::human_test({72, 230});
  CHECK(r.p_value >= 0.5);
  CHECK_FALSE(r.reject_at_5pct);
  CHECK(r.statistic == doctest::Approx(72.0 / 230.0));
}

TEST_CASE("verdict logic: conjunction, rejection dominance, incompleteness") {
  auto pass = stats::TestResult::make(0.4, 0.6, "h0");
  auto fail = stats::TestResult::make(0.9, 0.001, "h0");

  suite::PredictionOutcome pred_pass;
  pred_pass.result = pass;
  suite::SemanticOutcome sem_pass;
  sem_pass.target = pass;
  sem_pass.retro = pass;
  sem_pass.reject = false;

  std::vector<suite::DifficultyRow> diff_pass = {{"m", pass, 0.0, 1.0}};

  auto all_pass = suite::assemble_report(diff_pass, pred_pass, sem_pass, pass);
  CHECK(all_pass.verdict == suite::Verdict::sufficiently_indistinguishable);

  auto no_human = suite::assemble_report(diff_pass, pred_pass, sem_pass, std::nullopt);
  CHECK(no_human.verdict == suite::Verdict::incomplete);

  suite::PredictionOutcome pred_fail;
  pred_fail.result = fail;
  auto rejected = suite::assemble_report(diff_pass, pred_fail, sem_pass, pass);
  CHECK(rejected.verdict == suite::Verdict::rejected);

  // Monotone: a rejecting test also rejects when another input goes missing.
  auto rejected_incomplete = suite::assemble_report(diff_pass, pred_fail, sem_pass, std::nullopt);
  CHECK(rejected_incomplete.verdict == suite::Verdict::rejected);

  // The informational model-annotator row never flips the verdict.
  auto with_model = suite::assemble_report(diff_pass, pred_pass, sem_pass, pass, fail);
  CHECK(with_model.verdict == suite::Verdict::sufficiently_indistinguishable);
}

TEST_CASE("the published indistinguishability results assemble into a pass") {
  // Difficulty rows from the reported gaps, prediction from the pooled
  // 53.7% outcome, distinguishability from the human and model counts.
  auto pair = data::make_pair(role_dataset("target", 4), role_dataset("retro", 4));
  std::vector<suite::DifficultyInput> in = {
      {"neox-20b", summary_of("neox-20b", 237, 612), summary_of("neox-20b", 245, 612), std::nullopt},
      {"babbage-002", summary_of("babbage-002", 34, 88), summary_of("babbage-002", 35, 88),
       std::nullopt},
      {"davinci-002", summary_of("davinci-002", 33, 90), summary_of("davinci-002", 36, 90),
       std::nullopt}};
  auto difficulty = suite::difficulty_test(pair, in);

  suite::PredictionOutcome prediction;
  auto binom = stats::binom_test(66, 123, 0.5);
  prediction.result = stats::TestResult::make(binom.statistic, binom.p_value, "prediction accuracy 50%");
  prediction.pooled_correct = 66;
  prediction.pooled_total = 123;
  prediction.mean_fold_accuracy = 0.537;
  CHECK(prediction.result.p_value == doctest::Approx(0.474).epsilon(0.05));

  suite::SemanticOutcome semantic;
  semantic.target = stats::TestResult::make(0.21, 0.0667, "shared distribution", 0.0186);
  semantic.retro = stats::TestResult::make(0.19, 0.9348, "shared distribution", 0.0185);
  semantic.reject = std::min(semantic.target.p_value, 1 - semantic.target.p_value) < 0.025 ||
                    std::min(semantic.retro.p_value, 1 - semantic.retro.p_value) < 0.025;
  CHECK_FALSE(semantic.reject);

  auto human = suite::human_test({72, 230});
  auto model = stats::TestResult::make(0.28, 0.56, "selection accuracy 33.3%");

  auto report = suite::assemble_report(difficulty, prediction, semantic, human, model);
  CHECK(report.verdict == suite::Verdict::sufficiently_indistinguishable);

  auto text = suite::report_to_json(report);
  auto parsed = json::parse(text);
  CHECK(parsed.at("verdict") == "sufficiently_indistinguishable");
  CHECK(parsed.at("difficulty").size() == 3);
  CHECK(parsed.at("prediction_accuracy").at("pooled_total") == 123);
  CHECK(parsed.at("distinguishability").at("human").at("p_value").get<double>() > 0.5);
  CHECK(parsed.at("semantic_similarity").at("retro").at("p_value") == doctest::Approx(0.9348));
}

TEST_CASE("run_suite wires the components and reports incompleteness") {
  auto sp = synthetic_pair(20, 6, 42, 0.0);
  suite::SuiteConfig cfg;
  cfg.permutation.num_samples = 1000;
  cfg.permutation.seed = 3;
  cfg.fold_seed = 4;
  cfg.classifier.logreg_cfg.epochs = 150;

  auto report = suite::run_suite(sp.pair, sp.target, sp.retro, {}, std::nullopt, cfg);
  CHECK(report.prediction.has_value());
  CHECK(report.semantic.has_value());
  CHECK(report.difficulty.empty());
  if (report.verdict != suite::Verdict::rejected)
    CHECK(report.verdict == suite::Verdict::incomplete); // difficulty and human missing

  std::vector<suite::DifficultyInput> din = {
      {"m", summary_of("m", 30, 60), summary_of("m", 31, 60), std::nullopt}};
  auto full = suite::run_suite(sp.pair, sp.target, sp.retro, din, suite::HumanCounts{70, 200}, cfg);
  if (full.verdict != suite::Verdict::rejected)
    CHECK(full.verdict == suite::Verdict::sufficiently_indistinguishable);
}
