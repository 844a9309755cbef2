#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include "retro/dataset.hpp"
#include "retro/eval.hpp"
#include "retro/logreg.hpp"

namespace retro::calibrate {

// Scripted provider for offline runs: answers the correct option text with
// probability `accuracy`, otherwise a uniformly random wrong option.
// Responses are a pure function of (seed, entry id, call index).
class SimulatedChatProvider : public eval::ChatProvider {
public:
  SimulatedChatProvider(const data::Dataset& ds, double accuracy, std::uint64_t seed,
                        std::string model_id = "simulated");

  std::string model_id() const override { return model_id_; }
  double temperature() const override { return 0.5; }
  std::string complete(const std::string& prompt, std::string_view scope) override;

private:
  std::map<std::string, const data::Entry*> entries_;
  double accuracy_;
  std::uint64_t seed_;
  std::string model_id_;
  std::map<std::string, std::uint64_t> call_counts_;
  std::mutex mutex_;
};

struct CalibrationConfig {
  int trials = 200;
  std::uint64_t seed = 0;
  std::size_t entries_per_role = 30;
  std::size_t embedding_dim = 16;
  long permutation_samples = 10000;
  double provider_accuracy = 0.6;
  logreg::TrainConfig logreg_cfg{1e-3, 300, 0.5, 0, true};
};

struct CalibrationResult {
  int trials = 0;
  int semantic_rejections = 0;
  int prediction_rejections = 0;
  int difficulty_rejections = 0;
  int any_rejections = 0;

  double semantic_rate() const { return static_cast<double>(semantic_rejections) / trials; }
  double prediction_rate() const { return static_cast<double>(prediction_rejections) / trials; }
  double difficulty_rate() const { return static_cast<double>(difficulty_rejections) / trials; }
  double pass_rate() const { return 1.0 - static_cast<double>(any_rejections) / trials; }
};

// Null calibration: one synthetic dataset is split into pseudo-roles, so
// every true rejection is a type-I error. The difficulty arm runs the full
// evaluation harness against the simulated provider.
CalibrationResult run_null_calibration(const CalibrationConfig& cfg);

} // namespace retro::calibrate
