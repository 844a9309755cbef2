#include "retro/calibrate.hpp"

#include <algorithm>

#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/rng.hpp"
#include "retro/stats.hpp"
#include "retro/suite.hpp"

namespace retro::calibrate {

SimulatedChatProvider::SimulatedChatProvider(const data::Dataset& ds, double accuracy,
                                             std::uint64_t seed, std::string model_id)
    : accuracy_(accuracy), seed_(seed), model_id_(std::move(model_id)) {
  for (const auto& e : ds.entries) entries_[e.id] = &e;
}

std::string SimulatedChatProvider::complete(const std::string&, std::string_view scope) {
  const data::Entry* entry = nullptr;
  std::uint64_t call = 0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(std::string(scope));
    if (it == entries_.end())
      raise(ErrorKind::validation, "simulated provider knows no entry \"" + std::string(scope) + "\"");
    entry = it->second;
    call = call_counts_[std::string(scope)]++;
  }
  rng::CounterRng gen(seed_, rng::derive_seed(call, scope));
  if (gen.next_double() < accuracy_) return entry->options[entry->correct_index];
  std::size_t wrong = gen.next_below(entry->options.size() - 1);
  std::size_t idx = wrong < static_cast<std::size_t>(entry->correct_index) ? wrong : wrong + 1;
  return entry->options[idx];
}

namespace {

data::Dataset synthetic_dataset(const std::string& name, std::size_t n, std::size_t offset) {
  data::Dataset ds;
  ds.name = name;
  for (std::size_t i = 0; i < n; ++i) {
    data::Entry e;
    std::string tag = std::to_string(offset + i);
    e.id = name + "-" + tag;
    e.question = "Calibration question " + tag + "?";
    e.options = {"Calibration answer A" + tag, "Calibration answer B" + tag};
    e.correct_index = 0;
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

} // namespace

CalibrationResult run_null_calibration(const CalibrationConfig& cfg) {
  if (cfg.trials < 1) raise(ErrorKind::validation, "calibration needs at least 1 trial");
  CalibrationResult result;
  result.trials = cfg.trials;

  const std::size_t per_role = cfg.entries_per_role;
  const std::size_t pool = 2 * per_role;

  for (int trial = 0; trial < cfg.trials; ++trial) {
    std::uint64_t trial_seed = rng::derive_seed(cfg.seed, "trial" + std::to_string(trial));

    // One distribution, randomly split: the shared-origin null holds by
    // construction.
    rng::CounterRng gen(trial_seed, rng::derive_seed(0, "embeddings"));
    std::vector<embed::EmbeddingVector> vectors(pool);
    for (auto& v : vectors) {
      v.model_id = "calibration";
      v.values.resize(cfg.embedding_dim);
      for (auto& x : v.values) x = gen.next_gaussian();
    }

    data::Dataset pseudo_target = synthetic_dataset("pseudo-target", per_role, 0);
    data::Dataset pseudo_retro = synthetic_dataset("pseudo-retro", per_role, per_role);
    auto pair = data::make_pair(pseudo_target, pseudo_retro);

    std::map<std::string, embed::EmbeddingVector> target_emb, retro_emb;
    std::vector<std::size_t> order(pool);
    for (std::size_t i = 0; i < pool; ++i) order[i] = i;
    rng::CounterRng split_gen(trial_seed, rng::derive_seed(0, "split"));
    split_gen.shuffle(order);
    for (std::size_t i = 0; i < per_role; ++i) {
      target_emb[pair.target.entries[i].id] = vectors[order[i]];
      retro_emb[pair.retro.entries[i].id] = vectors[order[per_role + i]];
    }

    // Semantic arm.
    stats::PermutationConfig perm;
    perm.num_samples = cfg.permutation_samples;
    perm.seed = rng::derive_seed(trial_seed, "perm");
    perm.sidedness = stats::Sidedness::upper;
    auto semantic = suite::semantic_test(pair, target_emb, retro_emb, perm);
    bool semantic_reject = semantic.reject;

    // Prediction arm.
    auto plan = suite::make_fold_plan(pair, rng::derive_seed(trial_seed, "folds"));
    suite::ClassifierConfig clf;
    clf.logreg_cfg = cfg.logreg_cfg;
    auto prediction = suite::prediction_accuracy_test(pair, target_emb, retro_emb, plan, clf);
    bool prediction_reject = prediction.result.reject_at_5pct;

    // Difficulty arm: the full harness against the simulated provider,
    // identical response behavior on both pseudo-roles.
    eval::PromptVariant variant;
    eval::EvalOptions opts;
    opts.parallelism = 1;
    opts.seed = trial_seed;
    SimulatedChatProvider provider_t(pair.target, cfg.provider_accuracy,
                                     rng::derive_seed(trial_seed, "provider"));
    SimulatedChatProvider provider_r(pair.retro, cfg.provider_accuracy,
                                     rng::derive_seed(trial_seed, "provider"));
    opts.role = "target";
    auto run_t = eval::evaluate_dataset(pair.target, provider_t, variant, opts);
    opts.role = "retro";
    auto run_r = eval::evaluate_dataset(pair.retro, provider_r, variant, opts);
    suite::DifficultyInput din{provider_t.model_id(), run_t.summary, run_r.summary, std::nullopt};
    auto difficulty = suite::difficulty_test(pair, {din});
    bool difficulty_reject = difficulty.front().result.reject_at_5pct;

    result.semantic_rejections += semantic_reject;
    result.prediction_rejections += prediction_reject;
    result.difficulty_rejections += difficulty_reject;
    result.any_rejections += (semantic_reject || prediction_reject || difficulty_reject);
  }
  return result;
}

} // namespace retro::calibrate
