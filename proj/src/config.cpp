#include "retro/config.hpp"

#include <fstream>
#include <sstream>

#include "retro/error.hpp"
#include "retro/rng.hpp"

namespace retro::config {

using nlohmann::json;

std::uint64_t RunConfig::seed_for(std::string_view label) const {
  return rng::derive_seed(master_seed, label);
}

namespace {

DatasetConfig dataset_from_json(const json& j) {
  DatasetConfig d;
  d.path = j.at("path").get<std::string>();
  d.format = j.value("format", std::string("jsonl"));
  if (d.format != "jsonl" && d.format != "csv")
    raise(ErrorKind::config, "dataset format must be jsonl or csv, got " + d.format);
  if (j.contains("name")) d.name = j.at("name").get<std::string>();
  if (j.contains("release_date")) d.release_date = j.at("release_date").get<std::string>();
  return d;
}

json dataset_to_json(const DatasetConfig& d) {
  json j;
  j["path"] = d.path;
  j["format"] = d.format;
  if (d.name) j["name"] = *d.name;
  if (d.release_date) j["release_date"] = *d.release_date;
  return j;
}

} // namespace

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  cfg.master_seed = j.value("seed", cfg.master_seed);
  cfg.parallelism = j.value("parallelism", cfg.parallelism);
  cfg.offline = j.value("offline", cfg.offline);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);

  if (j.contains("datasets")) {
    const auto& d = j.at("datasets");
    if (d.contains("target")) cfg.target = dataset_from_json(d.at("target"));
    if (d.contains("retro")) cfg.retro = dataset_from_json(d.at("retro"));
  }
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    if (f.contains("category")) cfg.filter_category = f.at("category").get<std::string>();
    if (f.contains("type")) cfg.filter_type = f.at("type").get<std::string>();
  }
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    cfg.embedding.provider = e.value("provider", cfg.embedding.provider);
    cfg.embedding.endpoint = e.value("endpoint", std::string());
    cfg.embedding.model_id = e.value("model_id", std::string());
    cfg.embedding.api_key_env = e.value("api_key_env", cfg.embedding.api_key_env);
    cfg.embedding.dimension = e.value("dimension", std::size_t{0});
    cfg.embedding.batch_size = e.value("batch_size", cfg.embedding.batch_size);
    cfg.embedding.parallelism = e.value("parallelism", cfg.embedding.parallelism);
    cfg.embedding.cache_path = e.value("cache_path", std::string());
    if (cfg.embedding.provider != "hash" && cfg.embedding.provider != "http")
      raise(ErrorKind::config, "embedding provider must be hash or http");
  }
  for (const auto& m : j.value("models", json::array())) {
    ModelConfig mc;
    mc.model_id = m.at("model_id").get<std::string>();
    mc.endpoint = m.value("endpoint", std::string());
    mc.api_key_env = m.value("api_key_env", mc.api_key_env);
    mc.temperature = m.value("temperature", mc.temperature);
    mc.max_tokens = m.value("max_tokens", mc.max_tokens);
    if (m.contains("training_cutoff")) mc.training_cutoff = m.at("training_cutoff").get<std::string>();
    mc.pre_release_attested = m.value("pre_release_attested", false);
    mc.transcript_mode = m.value("transcript_mode", std::string("off"));
    if (mc.transcript_mode != "off" && mc.transcript_mode != "record" &&
        mc.transcript_mode != "replay")
      raise(ErrorKind::config, "transcript_mode must be off, record or replay");
    mc.transcript_path = m.value("transcript_path", std::string());
    cfg.models.push_back(std::move(mc));
  }
  if (j.contains("variant")) {
    const auto& v = j.at("variant");
    cfg.variant.mode = v.value("mode", cfg.variant.mode);
    if (v.contains("k")) cfg.variant.k = v.at("k").get<int>();
    if (v.contains("helpful_preamble"))
      cfg.variant.helpful_preamble = v.at("helpful_preamble").get<std::string>();
    cfg.variant.helpful_preamble_path = v.value("helpful_preamble_path", std::string());
    cfg.variant.shots_path = v.value("shots_path", std::string());
  }
  if (j.contains("permutation")) {
    const auto& p = j.at("permutation");
    cfg.permutation_samples = p.value("num_samples", cfg.permutation_samples);
    cfg.permutation_sidedness = p.value("sidedness", cfg.permutation_sidedness);
  }
  if (j.contains("logreg")) {
    const auto& l = j.at("logreg");
    cfg.logreg_l2 = l.value("l2", cfg.logreg_l2);
    cfg.logreg_epochs = l.value("epochs", cfg.logreg_epochs);
    cfg.logreg_lr = l.value("lr", cfg.logreg_lr);
  }
  if (j.contains("survey")) {
    const auto& s = j.at("survey");
    if (s.contains("responses_path"))
      cfg.survey_responses_path = s.at("responses_path").get<std::string>();
    if (s.contains("key_path")) cfg.survey_key_path = s.at("key_path").get<std::string>();
  }
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.master_seed;
  j["parallelism"] = cfg.parallelism;
  j["offline"] = cfg.offline;
  j["out_dir"] = cfg.out_dir;
  json datasets;
  if (cfg.target) datasets["target"] = dataset_to_json(*cfg.target);
  if (cfg.retro) datasets["retro"] = dataset_to_json(*cfg.retro);
  if (!datasets.is_null()) j["datasets"] = std::move(datasets);
  if (cfg.filter_category || cfg.filter_type) {
    json f;
    if (cfg.filter_category) f["category"] = *cfg.filter_category;
    if (cfg.filter_type) f["type"] = *cfg.filter_type;
    j["filter"] = std::move(f);
  }
  j["embedding"] = {{"provider", cfg.embedding.provider},
                    {"endpoint", cfg.embedding.endpoint},
                    {"model_id", cfg.embedding.model_id},
                    {"api_key_env", cfg.embedding.api_key_env},
                    {"dimension", cfg.embedding.dimension},
                    {"batch_size", cfg.embedding.batch_size},
                    {"parallelism", cfg.embedding.parallelism},
                    {"cache_path", cfg.embedding.cache_path}};
  json models = json::array();
  for (const auto& m : cfg.models) {
    json mj = {{"model_id", m.model_id},
               {"endpoint", m.endpoint},
               {"api_key_env", m.api_key_env},
               {"temperature", m.temperature},
               {"max_tokens", m.max_tokens},
               {"pre_release_attested", m.pre_release_attested},
               {"transcript_mode", m.transcript_mode},
               {"transcript_path", m.transcript_path}};
    if (m.training_cutoff) mj["training_cutoff"] = *m.training_cutoff;
    models.push_back(std::move(mj));
  }
  j["models"] = std::move(models);
  json v = {{"mode", cfg.variant.mode}};
  if (cfg.variant.k) v["k"] = *cfg.variant.k;
  if (cfg.variant.helpful_preamble) v["helpful_preamble"] = *cfg.variant.helpful_preamble;
  if (!cfg.variant.helpful_preamble_path.empty())
    v["helpful_preamble_path"] = cfg.variant.helpful_preamble_path;
  if (!cfg.variant.shots_path.empty()) v["shots_path"] = cfg.variant.shots_path;
  j["variant"] = std::move(v);
  j["permutation"] = {{"num_samples", cfg.permutation_samples},
                      {"sidedness", cfg.permutation_sidedness}};
  j["logreg"] = {{"l2", cfg.logreg_l2}, {"epochs", cfg.logreg_epochs}, {"lr", cfg.logreg_lr}};
  if (cfg.survey_responses_path || cfg.survey_key_path) {
    json s;
    if (cfg.survey_responses_path) s["responses_path"] = *cfg.survey_responses_path;
    if (cfg.survey_key_path) s["key_path"] = *cfg.survey_key_path;
    j["survey"] = std::move(s);
  }
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::io, "cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    raise(ErrorKind::parse, "config " + path.string() + ": " + ex.what());
  }
  return config_from_json(j);
}

} // namespace retro::config
