#include "retro/suite.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/rng.hpp"

namespace retro::suite {

using nlohmann::json;

FoldPlan make_fold_plan(const data::DatasetPair& pair, std::uint64_t seed, int num_folds) {
  if (num_folds < 2) raise(ErrorKind::validation, "fold plan needs at least 2 folds");
  FoldPlan plan;
  plan.num_folds = num_folds;
  plan.seed = seed;
  auto deal = [&](const data::Dataset& ds, std::map<std::string, int>& folds,
                  std::string_view stream) {
    std::vector<std::string> ids;
    ids.reserve(ds.entries.size());
    for (const auto& e : ds.entries) ids.push_back(e.id);
    rng::CounterRng gen(seed, rng::derive_seed(0, stream));
    gen.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
      folds[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(num_folds));
  };
  deal(pair.target, plan.target_folds, "folds_target");
  deal(pair.retro, plan.retro_folds, "folds_retro");
  return plan;
}

std::vector<DifficultyRow> difficulty_test(const data::DatasetPair& pair,
                                           const std::vector<DifficultyInput>& inputs) {
  std::vector<DifficultyRow> rows;
  rows.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.target.variant_fingerprint != in.retro.variant_fingerprint)
      raise(ErrorKind::mismatch, "difficulty test: model " + in.model_id +
                                     " evaluated with different prompt variants (" +
                                     in.target.variant_fingerprint + " vs " +
                                     in.retro.variant_fingerprint + ")");
    if (in.training_cutoff && pair.target.release_date &&
        *in.training_cutoff >= *pair.target.release_date)
      raise(ErrorKind::validation, "difficulty test: model " + in.model_id +
                                       " training cutoff " + *in.training_cutoff +
                                       " is not before the target release date " +
                                       *pair.target.release_date);
    auto two_prop =
        stats::two_proportion_test(in.target.accuracy.correct, in.target.accuracy.total,
                                   in.retro.accuracy.correct, in.retro.accuracy.total);
    DifficultyRow row;
    row.model_id = in.model_id;
    row.result = stats::TestResult::make(two_prop.result.statistic, two_prop.result.p_value,
                                         "no accuracy gap (0 pp)");
    row.gap_pp = 100.0 * two_prop.gap;
    row.gap_sigma_pp = 100.0 * two_prop.gap_sigma;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct LabeledExample {
  const data::Entry* entry;
  const embed::EmbeddingVector* embedding;
  int fold;
  int label; // 0 = target, 1 = retro
};

std::vector<LabeledExample> collect_examples(
    const data::DatasetPair& pair, const std::map<std::string, embed::EmbeddingVector>& target_emb,
    const std::map<std::string, embed::EmbeddingVector>& retro_emb, const FoldPlan& plan) {
  std::vector<LabeledExample> all;
  auto add = [&](const data::Dataset& ds, const std::map<std::string, embed::EmbeddingVector>& embs,
                 const std::map<std::string, int>& folds, int label) {
    for (const auto& e : ds.entries) {
      auto emb_it = embs.find(e.id);
      if (emb_it == embs.end())
        raise(ErrorKind::validation, "prediction test: missing embedding for entry \"" + e.id + "\"");
      auto fold_it = folds.find(e.id);
      if (fold_it == folds.end())
        raise(ErrorKind::validation, "prediction test: entry \"" + e.id + "\" missing from fold plan");
      all.push_back({&e, &emb_it->second, fold_it->second, label});
    }
  };
  add(pair.target, target_emb, plan.target_folds, 0);
  add(pair.retro, retro_emb, plan.retro_folds, 1);
  return all;
}

// Predictions from the configured classifier for one train/test split.
std::vector<int> classify_fold(const std::vector<const LabeledExample*>& train,
                               const std::vector<const LabeledExample*>& test,
                               const ClassifierConfig& cfg, std::uint64_t fold_seed, bool& converged,
                               double& final_loss) {
  if (cfg.kind == ClassifierConfig::Kind::builtin_logreg) {
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    X.reserve(train.size());
    for (const auto* ex : train) {
      X.push_back(ex->embedding->values);
      y.push_back(ex->label);
    }
    logreg::TrainConfig tc = cfg.logreg_cfg;
    tc.seed = fold_seed;
    logreg::Model model = logreg::train(X, y, tc);
    converged = converged && model.loss_monotone;
    final_loss = model.final_loss;
    std::vector<int> preds;
    preds.reserve(test.size());
    for (const auto* ex : test) preds.push_back(logreg::predict_label(model, ex->embedding->values));
    return preds;
  }

  // Pluggable classifiers exchange labeled texts, so a fine-tuned
  // transformer can stand in for the default model.
  json train_payload = json::array();
  for (const auto* ex : train)
    train_payload.push_back(
        {{"text", data::canonical_text(*ex->entry).text}, {"label", ex->label}});
  json test_payload = json::array();
  for (const auto* ex : test) test_payload.push_back(data::canonical_text(*ex->entry).text);

  if (cfg.kind == ClassifierConfig::Kind::http_endpoint) {
    auto scheme_end = cfg.endpoint.find("://");
    if (scheme_end == std::string::npos)
      raise(ErrorKind::config, "classifier endpoint missing scheme: " + cfg.endpoint);
    auto path_start = cfg.endpoint.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? cfg.endpoint : cfg.endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : cfg.endpoint.substr(path_start);
    httplib::Client client(base);
    client.set_read_timeout(600, 0);
    json body;
    body["train"] = std::move(train_payload);
    body["test"] = std::move(test_payload);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200)
      raise(ErrorKind::transport, "classifier endpoint failed: " +
                                      (res ? "HTTP " + std::to_string(res->status)
                                           : httplib::to_string(res.error())));
    json reply = json::parse(res->body);
    auto labels = reply.at("labels").get<std::vector<int>>();
    if (labels.size() != test.size())
      raise(ErrorKind::parse, "classifier endpoint returned wrong label count");
    return labels;
  }

  // external_command: cmd <train.jsonl> <test.jsonl> <out.jsonl>
  auto tmp = std::filesystem::temp_directory_path() /
             ("retro-clf-" + std::to_string(fold_seed) + "-" + std::to_string(::getpid()));
  std::filesystem::create_directories(tmp);
  auto train_path = tmp / "train.jsonl";
  auto test_path = tmp / "test.jsonl";
  auto out_path = tmp / "out.jsonl";
  {
    std::ofstream tr(train_path);
    for (const auto& row : train_payload) tr << row.dump() << '\n';
    std::ofstream te(test_path);
    for (const auto& row : test_payload) te << json{{"text", row}}.dump() << '\n';
  }
  std::string command = cfg.command + " \"" + train_path.string() + "\" \"" + test_path.string() +
                        "\" \"" + out_path.string() + "\"";
  int rc = std::system(command.c_str());
  if (rc != 0)
    raise(ErrorKind::transport, "classifier command failed with status " + std::to_string(rc));
  std::ifstream out(out_path);
  if (!out) raise(ErrorKind::io, "classifier command produced no output file");
  std::vector<int> labels;
  std::string line;
  while (std::getline(out, line)) {
    if (line.empty()) continue;
    labels.push_back(json::parse(line).at("label").get<int>());
  }
  std::filesystem::remove_all(tmp);
  if (labels.size() != test.size())
    raise(ErrorKind::parse, "classifier command returned wrong label count");
  return labels;
}

} // namespace

PredictionOutcome prediction_accuracy_test(
    const data::DatasetPair& pair, const std::map<std::string, embed::EmbeddingVector>& target_emb,
    const std::map<std::string, embed::EmbeddingVector>& retro_emb, const FoldPlan& plan,
    const ClassifierConfig& cfg) {
  auto all = collect_examples(pair, target_emb, retro_emb, plan);

  PredictionOutcome out;
  long pooled_correct = 0, pooled_total = 0;
  for (int fold = 0; fold < plan.num_folds; ++fold) {
    std::vector<const LabeledExample*> train, test;
    for (const auto& ex : all) (ex.fold == fold ? test : train).push_back(&ex);
    if (test.empty()) continue;
    auto preds = classify_fold(train, test, cfg, rng::derive_seed(plan.seed, "fold" + std::to_string(fold)),
                               out.classifier_converged, out.final_loss);
    long correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (preds[i] == test[i]->label) ++correct;
    out.fold_accuracies.push_back(static_cast<double>(correct) / test.size());
    pooled_correct += correct;
    pooled_total += static_cast<long>(test.size());
  }
  out.pooled_correct = pooled_correct;
  out.pooled_total = pooled_total;

  double mean = 0.0;
  for (double a : out.fold_accuracies) mean += a;
  mean /= out.fold_accuracies.size();
  out.mean_fold_accuracy = mean;
  if (out.fold_accuracies.size() > 1) {
    double var = 0.0;
    for (double a : out.fold_accuracies) var += (a - mean) * (a - mean);
    out.fold_accuracy_sigma = std::sqrt(var / (out.fold_accuracies.size() - 1));
  }

  auto binom = stats::binom_test(pooled_correct, pooled_total, 0.5, stats::Sidedness::two_sided);
  out.result = stats::TestResult::make(binom.statistic, binom.p_value, "prediction accuracy 50%");
  return out;
}

SemanticOutcome semantic_test(const data::DatasetPair& pair,
                              const std::map<std::string, embed::EmbeddingVector>& target_emb,
                              const std::map<std::string, embed::EmbeddingVector>& retro_emb,
                              stats::PermutationConfig cfg) {
  auto pooled = embed::pool_pair(pair, target_emb, retro_emb);

  SemanticOutcome out;
  cfg.role = stats::Role::target;
  out.target = stats::permutation_test(pooled.vectors, pooled.n_target, cfg);
  cfg.role = stats::Role::retro;
  out.retro = stats::permutation_test(pooled.vectors, pooled.n_target, cfg);

  if (cfg.sidedness == stats::Sidedness::two_sided) {
    out.reject = out.target.reject_at_5pct || out.retro.reject_at_5pct;
  } else {
    // One-sided per-role p-values: extreme in either tail rejects at
    // alpha/2, mirroring a two-sided decision.
    auto tail = [](const stats::TestResult& r) { return std::min(r.p_value, 1.0 - r.p_value); };
    out.reject = tail(out.target) < 0.025 || tail(out.retro) < 0.025;
  }
  return out;
}

stats::TestResult human_test(const HumanCounts& counts) {
  auto r = stats::binom_test(counts.correct, counts.total, 1.0 / 3.0, stats::Sidedness::two_sided);
  return stats::TestResult::make(r.statistic, r.p_value, "selection accuracy 33.3%");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::sufficiently_indistinguishable: return "sufficiently_indistinguishable";
    case Verdict::rejected: return "rejected";
    case Verdict::incomplete: return "incomplete";
  }
  return "?";
}

SuiteReport assemble_report(std::vector<DifficultyRow> difficulty,
                            std::optional<PredictionOutcome> prediction,
                            std::optional<SemanticOutcome> semantic,
                            std::optional<stats::TestResult> human,
                            std::optional<stats::TestResult> model_distinguisher) {
  SuiteReport report;
  report.difficulty = std::move(difficulty);
  report.prediction = std::move(prediction);
  report.semantic = std::move(semantic);
  report.human = std::move(human);
  report.model_distinguisher = std::move(model_distinguisher);

  bool any_reject = false;
  for (const auto& row : report.difficulty) any_reject |= row.result.reject_at_5pct;
  if (report.prediction) any_reject |= report.prediction->result.reject_at_5pct;
  if (report.semantic) any_reject |= report.semantic->reject;
  if (report.human) any_reject |= report.human->reject_at_5pct;

  bool all_present = !report.difficulty.empty() && report.prediction.has_value() &&
                     report.semantic.has_value() && report.human.has_value();

  if (any_reject) report.verdict = Verdict::rejected;
  else if (all_present) report.verdict = Verdict::sufficiently_indistinguishable;
  else report.verdict = Verdict::incomplete;
  return report;
}

SuiteReport run_suite(const data::DatasetPair& pair,
                      const std::map<std::string, embed::EmbeddingVector>& target_emb,
                      const std::map<std::string, embed::EmbeddingVector>& retro_emb,
                      const std::vector<DifficultyInput>& difficulty_inputs,
                      const std::optional<HumanCounts>& human_counts, const SuiteConfig& cfg) {
  std::vector<DifficultyRow> difficulty;
  if (!difficulty_inputs.empty()) difficulty = difficulty_test(pair, difficulty_inputs);

  FoldPlan plan = make_fold_plan(pair, cfg.fold_seed);
  auto prediction = prediction_accuracy_test(pair, target_emb, retro_emb, plan, cfg.classifier);
  auto semantic = semantic_test(pair, target_emb, retro_emb, cfg.permutation);

  std::optional<stats::TestResult> human;
  if (human_counts) human = human_test(*human_counts);

  return assemble_report(std::move(difficulty), std::move(prediction), std::move(semantic),
                         std::move(human));
}

std::string report_to_json(const SuiteReport& report) {
  json j;
  json difficulty = json::array();
  for (const auto& row : report.difficulty) {
    difficulty.push_back({{"model_id", row.model_id},
                          {"gap_pp", row.gap_pp},
                          {"gap_sigma_pp", row.gap_sigma_pp},
                          {"p_value", row.result.p_value},
                          {"h0", row.result.h0},
                          {"reject_at_5pct", row.result.reject_at_5pct}});
  }
  j["difficulty"] = std::move(difficulty);

  if (report.prediction) {
    const auto& p = *report.prediction;
    j["prediction_accuracy"] = {{"mean_fold_accuracy", p.mean_fold_accuracy},
                                {"fold_accuracy_sigma", p.fold_accuracy_sigma},
                                {"fold_accuracies", p.fold_accuracies},
                                {"pooled_correct", p.pooled_correct},
                                {"pooled_total", p.pooled_total},
                                {"pooled_accuracy", p.result.statistic},
                                {"p_value", p.result.p_value},
                                {"h0", p.result.h0},
                                {"reject_at_5pct", p.result.reject_at_5pct},
                                {"classifier_converged", p.classifier_converged},
                                {"final_loss", p.final_loss}};
  } else {
    j["prediction_accuracy"] = nullptr;
  }

  auto test_json = [](const stats::TestResult& r) {
    json t = {{"statistic", r.statistic},
              {"p_value", r.p_value},
              {"h0", r.h0},
              {"reject_at_5pct", r.reject_at_5pct}};
    if (r.mc_ci_halfwidth) t["mc_ci_halfwidth"] = *r.mc_ci_halfwidth;
    return t;
  };

  if (report.semantic) {
    j["semantic_similarity"] = {{"target", test_json(report.semantic->target)},
                                {"retro", test_json(report.semantic->retro)},
                                {"reject_at_5pct", report.semantic->reject}};
  } else {
    j["semantic_similarity"] = nullptr;
  }

  json dist;
  dist["human"] = report.human ? test_json(*report.human) : json();
  dist["model"] = report.model_distinguisher ? test_json(*report.model_distinguisher) : json();
  j["distinguishability"] = std::move(dist);

  j["verdict"] = to_string(report.verdict);
  return j.dump(2) + "\n";
}

} // namespace retro::suite
