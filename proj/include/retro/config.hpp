#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace retro::config {

struct DatasetConfig {
  std::string path;
  std::string format = "jsonl"; // jsonl | csv
  std::optional<std::string> name;
  std::optional<std::string> release_date;
};

struct EmbeddingConfig {
  std::string provider = "hash"; // hash (offline) | http
  std::string endpoint;
  std::string model_id;
  std::string api_key_env = "RETRO_EMBED_API_KEY";
  std::size_t dimension = 0; // hash: output dim (default 128); http: declared dim (0 = discover)
  int batch_size = 64;
  int parallelism = 4;
  std::string cache_path; // empty = <out_dir>/embeddings.cache.jsonl
};

struct ModelConfig {
  std::string model_id;
  std::string endpoint;
  std::string api_key_env = "RETRO_CHAT_API_KEY";
  double temperature = 0.5;
  int max_tokens = 64;
  std::optional<std::string> training_cutoff; // ISO date
  bool pre_release_attested = false;          // operator's claim, required for the difficulty test
  std::string transcript_mode = "off";        // off | record | replay
  std::string transcript_path;                // empty = <out_dir>/eval/<model>/<role>.transcript.jsonl
};

struct VariantConfig {
  std::string mode = "standard"; // standard | five_shot | helpful_prompt | top_k
  std::optional<int> k;
  std::optional<std::string> helpful_preamble; // inline text
  std::string helpful_preamble_path;           // or loaded from file
  std::string shots_path;                      // JSONL with exactly 5 entries
};

struct RunConfig {
  std::uint64_t master_seed = 1u;
  int parallelism = 4;
  bool offline = false;
  std::string out_dir = "out";

  std::optional<DatasetConfig> target;
  std::optional<DatasetConfig> retro;
  std::optional<std::string> filter_category;
  std::optional<std::string> filter_type;

  EmbeddingConfig embedding;
  std::vector<ModelConfig> models;
  VariantConfig variant;

  long permutation_samples = 10000;
  std::string permutation_sidedness = "upper"; // upper | lower | two_sided

  double logreg_l2 = 1e-3;
  int logreg_epochs = 400;
  double logreg_lr = 0.5;

  std::optional<std::string> survey_responses_path; // CSV
  std::optional<std::string> survey_key_path;       // JSON

  // Every stochastic stage draws its seed from the master seed and a label.
  std::uint64_t seed_for(std::string_view label) const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

} // namespace retro::config
