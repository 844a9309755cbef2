#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/stats.hpp"

namespace retro::eval {

// Escalation stages within one resample: free-text repetition first, then
// numeric indices, then letter indices.
enum class Stage { literal, numeric_index, letter_index };

enum class VariantMode { standard, five_shot, helpful_prompt, top_k };

enum class SelectionReason { dominance, cap_reached };

std::string to_string(Stage s);
std::string to_string(VariantMode m);
std::string to_string(SelectionReason r);

struct PromptVariant {
  VariantMode mode = VariantMode::standard;
  std::optional<int> k;                        // top_k: 1 <= k < |options|
  std::vector<data::Entry> shot_entries;       // five_shot: exactly 5, disjoint from entry
  std::optional<std::string> helpful_preamble; // helpful_prompt: configuration asset

  void validate_for(const data::Entry& e) const;
  // Stable descriptor used to check that paired runs used the same variant.
  std::string fingerprint() const;
};

// Chat-completion source. `scope` names the logical caller (the entry id);
// transcript providers key request streams on it so replay stays exact
// under entry-level parallelism.
class ChatProvider {
public:
  virtual ~ChatProvider() = default;
  virtual std::string model_id() const = 0;
  virtual double temperature() const = 0;
  virtual std::string complete(const std::string& prompt, std::string_view scope) = 0;
};

struct HttpChatConfig {
  std::string endpoint;
  std::string model_id;
  std::string api_key;
  double temperature = 0.5;
  int max_tokens = 64;
  int max_retries = 3;
  int backoff_ms = 250;
  int timeout_s = 120;
};

class HttpChatProvider : public ChatProvider {
public:
  explicit HttpChatProvider(HttpChatConfig cfg);
  std::string model_id() const override { return cfg_.model_id; }
  double temperature() const override { return cfg_.temperature; }
  std::string complete(const std::string& prompt, std::string_view scope) override;

private:
  HttpChatConfig cfg_;
};

// Tees every request/response pair into a JSONL transcript.
class RecordingProvider : public ChatProvider {
public:
  RecordingProvider(ChatProvider& inner, std::filesystem::path path);
  std::string model_id() const override { return inner_.model_id(); }
  double temperature() const override { return inner_.temperature(); }
  std::string complete(const std::string& prompt, std::string_view scope) override;

private:
  ChatProvider& inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

// Serves responses from a transcript; per-request-key FIFO order matches
// the strictly sequential per-entry protocol.
class ReplayProvider : public ChatProvider {
public:
  explicit ReplayProvider(const std::filesystem::path& path);
  std::string model_id() const override { return model_id_; }
  double temperature() const override { return temperature_; }
  std::string complete(const std::string& prompt, std::string_view scope) override;

private:
  std::string model_id_;
  double temperature_ = 0.0;
  std::map<std::string, std::deque<std::string>> responses_;
  std::mutex mutex_;
};

struct AttemptTrace {
  int resample = 0; // 0-based resample index
  int rotation_offset = 0;
  Stage stage = Stage::literal;
  std::string raw_response;
  std::string normalized;
  std::optional<int> matched_option;           // original option index
  std::optional<std::vector<int>> matched_set; // top_k only
};

struct EvalRecord {
  std::string entry_id;
  std::string role;
  int repeat = 0;
  std::vector<AttemptTrace> attempts;
  int resamples = 0;
  std::optional<int> selected_option;
  std::optional<std::vector<int>> selected_set; // top_k only
  std::optional<SelectionReason> selection_reason;
  bool correct = false;
  bool errored = false;
  std::string error;
  double temperature = 0.0;
};

struct EvalSummary {
  std::string model_id;
  std::string dataset_name;
  std::string variant_fingerprint;
  stats::AccuracyEstimate accuracy; // over non-errored records
  long errored_entries = 0;
  std::optional<double> empirical_sigma; // across repeats, when repeats > 1
  std::uint64_t run_seed = 0;
  int repeats = 1;
};

struct EvalRun {
  EvalSummary summary;
  std::vector<EvalRecord> records;
};

// Renders the stage prompt: options sorted alphabetically, rotated left by
// rotation_offset, with the variant's decorations applied.
std::string build_prompt(const data::Entry& e, Stage stage, int rotation_offset,
                         const PromptVariant& variant);

// Strips outer whitespace, then keeps only the first line.
std::string normalize_response(std::string_view raw);

// Maps a normalized response back to an original option index, or nothing.
std::optional<int> match_option(const std::string& normalized, const data::Entry& e, Stage stage,
                                int rotation_offset);

// top_k: exactly k distinct bare index tokens.
std::optional<std::vector<int>> match_option_set(const std::string& normalized,
                                                 const data::Entry& e, Stage stage,
                                                 int rotation_offset, int k);

// Option display order for a given rotation: original indices in displayed
// order. Shared by prompt construction and response mapping.
std::vector<int> displayed_order(const data::Entry& e, int rotation_offset);

EvalRecord evaluate_entry(const data::Entry& e, ChatProvider& provider,
                          const PromptVariant& variant, std::string role = "", int repeat = 0);

struct EvalOptions {
  int repeats = 1;
  int parallelism = 4;
  std::uint64_t seed = 0;
  std::string role;
};

EvalRun evaluate_dataset(const data::Dataset& ds, ChatProvider& provider,
                         const PromptVariant& variant, const EvalOptions& opts = {});

// Summary over an arbitrary record set (used by resumed runs).
EvalSummary summarize_records(const std::string& model_id, const std::string& dataset_name,
                              const std::string& variant_fingerprint, std::uint64_t run_seed,
                              int repeats, const std::vector<EvalRecord>& records);

std::string records_to_jsonl(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_jsonl(std::string_view text);
void save_records(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
std::vector<EvalRecord> load_records(const std::filesystem::path& path);

std::string summary_to_json(const EvalSummary& s);
EvalSummary summary_from_json(std::string_view text);

} // namespace retro::eval
