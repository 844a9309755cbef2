#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/embedding.hpp"
#include "retro/eval.hpp"
#include "retro/logreg.hpp"
#include "retro/stats.hpp"

namespace retro::suite {

// Five-fold split of each dataset; folds partition the ids and differ in
// size by at most one.
struct FoldPlan {
  int num_folds = 5;
  std::map<std::string, int> target_folds;
  std::map<std::string, int> retro_folds;
  std::uint64_t seed = 0;
};

FoldPlan make_fold_plan(const data::DatasetPair& pair, std::uint64_t seed, int num_folds = 5);

struct DifficultyInput {
  std::string model_id;
  eval::EvalSummary target;
  eval::EvalSummary retro;
  std::optional<std::string> training_cutoff; // ISO date, checked against release when present
};

struct DifficultyRow {
  std::string model_id;
  stats::TestResult result;
  double gap_pp = 0.0; // target - retro, percentage points
  double gap_sigma_pp = 0.0;
};

// Per-model two-proportion test of equal accuracy on both datasets.
std::vector<DifficultyRow> difficulty_test(const data::DatasetPair& pair,
                                           const std::vector<DifficultyInput>& inputs);

struct ClassifierConfig {
  enum class Kind { builtin_logreg, external_command, http_endpoint };
  Kind kind = Kind::builtin_logreg;
  logreg::TrainConfig logreg_cfg;
  std::string command;  // external_command: invoked as `cmd train.jsonl test.jsonl out.jsonl`
  std::string endpoint; // http_endpoint: POST {train, test} -> {labels}
};

struct PredictionOutcome {
  stats::TestResult result; // pooled exact binomial against 1/2
  std::vector<double> fold_accuracies;
  double mean_fold_accuracy = 0.0;
  double fold_accuracy_sigma = 0.0; // sample sd across folds
  long pooled_correct = 0;
  long pooled_total = 0;
  bool classifier_converged = true;
  double final_loss = 0.0;
};

// Fold-held-out classification of role labels; pooled held-out accuracy is
// tested against chance.
PredictionOutcome prediction_accuracy_test(
    const data::DatasetPair& pair, const std::map<std::string, embed::EmbeddingVector>& target_emb,
    const std::map<std::string, embed::EmbeddingVector>& retro_emb, const FoldPlan& plan,
    const ClassifierConfig& cfg);

struct SemanticOutcome {
  stats::TestResult target;
  stats::TestResult retro;
  bool reject = false; // either role extreme in either tail at alpha/2
};

// One-sided permutation p-values per role (upper tail by default);
// rejection applies min(p, 1-p) < alpha/2 per role.
SemanticOutcome semantic_test(const data::DatasetPair& pair,
                              const std::map<std::string, embed::EmbeddingVector>& target_emb,
                              const std::map<std::string, embed::EmbeddingVector>& retro_emb,
                              stats::PermutationConfig cfg);

struct HumanCounts {
  long correct = 0;
  long total = 0;
};

// Pooled exact binomial against the 1-in-3 chance level.
stats::TestResult human_test(const HumanCounts& counts);

enum class Verdict { sufficiently_indistinguishable, rejected, incomplete };

std::string to_string(Verdict v);

struct SuiteReport {
  std::vector<DifficultyRow> difficulty; // empty = test missing
  std::optional<PredictionOutcome> prediction;
  std::optional<SemanticOutcome> semantic;
  std::optional<stats::TestResult> human;
  std::optional<stats::TestResult> model_distinguisher; // informational, outside the verdict
  Verdict verdict = Verdict::incomplete;
};

// Verdict: any rejection wins; otherwise all four tests must be present.
SuiteReport assemble_report(std::vector<DifficultyRow> difficulty,
                            std::optional<PredictionOutcome> prediction,
                            std::optional<SemanticOutcome> semantic,
                            std::optional<stats::TestResult> human,
                            std::optional<stats::TestResult> model_distinguisher = std::nullopt);

struct SuiteConfig {
  stats::PermutationConfig permutation;
  ClassifierConfig classifier;
  std::uint64_t fold_seed = 0;
};

// Runs semantic + prediction from embeddings, difficulty from the supplied
// summaries (when any), human from counts (when supplied).
SuiteReport run_suite(const data::DatasetPair& pair,
                      const std::map<std::string, embed::EmbeddingVector>& target_emb,
                      const std::map<std::string, embed::EmbeddingVector>& retro_emb,
                      const std::vector<DifficultyInput>& difficulty_inputs,
                      const std::optional<HumanCounts>& human_counts, const SuiteConfig& cfg);

std::string report_to_json(const SuiteReport& report);

} // namespace retro::suite
