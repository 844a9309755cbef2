#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "retro/calibrate.hpp"
#include "retro/config.hpp"
#include "retro/dataset.hpp"
#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/eval.hpp"
#include "retro/inflation.hpp"
#include "retro/iterate.hpp"
#include "retro/manifest.hpp"
#include "retro/parallel.hpp"
#include "retro/stats.hpp"
#include "retro/suite.hpp"
#include "retro/survey.hpp"
#include "retro/version.hpp"

namespace {

using namespace retro;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRejected = 2;
constexpr int kExitIncomplete = 3;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write " + path.string());
  out << content;
}

std::string env_or_empty(const std::string& name) {
  const char* v = name.empty() ? nullptr : std::getenv(name.c_str());
  return v ? v : "";
}

data::FileFormat format_from(const std::string& name) {
  if (name == "jsonl") return data::FileFormat::jsonl;
  if (name == "csv") return data::FileFormat::csv;
  raise(ErrorKind::unsupported, "unknown dataset format: " + name);
}

data::Dataset load_one(const config::DatasetConfig& dc,
                       const std::optional<std::string>& category,
                       const std::optional<std::string>& type_name) {
  data::Dataset ds = data::load_dataset(dc.path, format_from(dc.format));
  if (dc.name) ds.name = *dc.name;
  ds.release_date = dc.release_date;
  if (category || type_name) {
    std::optional<data::QType> qtype;
    if (type_name) qtype = data::qtype_from_string(*type_name);
    auto filtered = data::filter(ds, category, qtype);
    if (filtered.empty_warning)
      std::cerr << "warning: filter left dataset \"" << ds.name << "\" empty\n";
    filtered.dataset.release_date = ds.release_date;
    ds = std::move(filtered.dataset);
  }
  return ds;
}

data::DatasetPair load_pair(const config::RunConfig& cfg) {
  if (!cfg.target || !cfg.retro)
    raise(ErrorKind::config, "config must name both datasets.target and datasets.retro");
  return data::make_pair(load_one(*cfg.target, cfg.filter_category, cfg.filter_type),
                         load_one(*cfg.retro, cfg.filter_category, cfg.filter_type));
}

std::unique_ptr<embed::EmbeddingProvider> make_embedding_provider(const config::RunConfig& cfg) {
  if (cfg.embedding.provider == "hash") {
    std::size_t dim = cfg.embedding.dimension ? cfg.embedding.dimension : 128;
    return std::make_unique<embed::HashEmbeddingProvider>(dim);
  }
  embed::HttpEmbeddingConfig hc;
  hc.endpoint = cfg.embedding.endpoint;
  hc.model_id = cfg.embedding.model_id;
  hc.api_key = env_or_empty(cfg.embedding.api_key_env);
  hc.dimension = cfg.embedding.dimension;
  return std::make_unique<embed::HttpEmbeddingProvider>(std::move(hc));
}

std::filesystem::path cache_path(const config::RunConfig& cfg) {
  if (!cfg.embedding.cache_path.empty()) return cfg.embedding.cache_path;
  return std::filesystem::path(cfg.out_dir) / "embeddings.cache.jsonl";
}

// Offline http runs read straight from the cache keyed by the configured
// model id; nothing is fetched.
struct CachedOnlyProvider : embed::EmbeddingProvider {
  std::string model;
  std::size_t dim;
  CachedOnlyProvider(std::string m, std::size_t d) : model(std::move(m)), dim(d) {}
  std::string model_id() const override { return model; }
  std::size_t dimension() const override { return dim; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string>) override {
    raise(ErrorKind::transport, "offline run hit an embedding cache miss");
  }
};

struct EmbeddedPair {
  data::DatasetPair pair;
  std::map<std::string, embed::EmbeddingVector> target;
  std::map<std::string, embed::EmbeddingVector> retro;
  std::filesystem::path cache;
};

EmbeddedPair embed_pair(const config::RunConfig& cfg) {
  EmbeddedPair out{load_pair(cfg), {}, {}, cache_path(cfg)};
  std::filesystem::create_directories(std::filesystem::path(cfg.out_dir));
  embed::EmbeddingCache cache(out.cache);
  std::unique_ptr<embed::EmbeddingProvider> provider;
  if (cfg.offline && cfg.embedding.provider == "http") {
    provider = std::make_unique<CachedOnlyProvider>(cfg.embedding.model_id, cfg.embedding.dimension);
  } else {
    provider = make_embedding_provider(cfg);
  }
  embed::EmbedOptions opts;
  opts.batch_size = cfg.embedding.batch_size;
  opts.parallelism = cfg.embedding.parallelism;
  out.target = embed::embed_all(out.pair.target, *provider, cache, opts);
  out.retro = embed::embed_all(out.pair.retro, *provider, cache, opts);
  return out;
}

eval::PromptVariant make_variant(const config::RunConfig& cfg) {
  eval::PromptVariant variant;
  const auto& vc = cfg.variant;
  if (vc.mode == "standard") variant.mode = eval::VariantMode::standard;
  else if (vc.mode == "five_shot") variant.mode = eval::VariantMode::five_shot;
  else if (vc.mode == "helpful_prompt") variant.mode = eval::VariantMode::helpful_prompt;
  else if (vc.mode == "top_k") variant.mode = eval::VariantMode::top_k;
  else raise(ErrorKind::config, "unknown variant mode: " + vc.mode);
  variant.k = vc.k;
  if (variant.mode == eval::VariantMode::five_shot) {
    if (vc.shots_path.empty()) raise(ErrorKind::config, "five_shot variant needs variant.shots_path");
    auto shots = data::load_dataset(vc.shots_path, data::FileFormat::jsonl);
    variant.shot_entries = shots.entries;
  }
  if (variant.mode == eval::VariantMode::helpful_prompt) {
    if (vc.helpful_preamble) variant.helpful_preamble = *vc.helpful_preamble;
    else if (!vc.helpful_preamble_path.empty())
      variant.helpful_preamble = read_file(vc.helpful_preamble_path);
    else raise(ErrorKind::config, "helpful_prompt variant needs a preamble (inline or path)");
  }
  return variant;
}

const config::ModelConfig& find_model(const config::RunConfig& cfg, const std::string& id) {
  for (const auto& m : cfg.models)
    if (m.model_id == id) return m;
  raise(ErrorKind::config, "model \"" + id + "\" not found in config");
}

struct ProviderBundle {
  std::unique_ptr<eval::ChatProvider> inner;
  std::unique_ptr<eval::ChatProvider> wrapper;
  eval::ChatProvider& use() { return wrapper ? *wrapper : *inner; }
};

std::filesystem::path eval_dir(const config::RunConfig& cfg, const std::string& model_id) {
  return std::filesystem::path(cfg.out_dir) / "eval" / model_id;
}

ProviderBundle make_chat_provider(const config::RunConfig& cfg, const config::ModelConfig& mc,
                                  const std::string& role) {
  ProviderBundle bundle;
  std::filesystem::path transcript = mc.transcript_path.empty()
                                         ? eval_dir(cfg, mc.model_id) / (role + ".transcript.jsonl")
                                         : std::filesystem::path(mc.transcript_path);
  std::string mode = mc.transcript_mode;
  if (cfg.offline && mode != "replay") mode = "replay"; // offline runs never call out
  if (mode == "replay") {
    bundle.inner = std::make_unique<eval::ReplayProvider>(transcript);
    return bundle;
  }
  eval::HttpChatConfig hc;
  hc.endpoint = mc.endpoint;
  hc.model_id = mc.model_id;
  hc.api_key = env_or_empty(mc.api_key_env);
  hc.temperature = mc.temperature;
  hc.max_tokens = mc.max_tokens;
  bundle.inner = std::make_unique<eval::HttpChatProvider>(std::move(hc));
  if (mode == "record") {
    std::filesystem::create_directories(transcript.parent_path());
    bundle.wrapper = std::make_unique<eval::RecordingProvider>(*bundle.inner, transcript);
  }
  return bundle;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const config::RunConfig& cfg, const std::string& in_path, const std::string& format,
               const std::string& out_file, const std::string& category, const std::string& type) {
  data::Dataset ds = data::load_dataset(in_path, format_from(format));
  if (!category.empty() || !type.empty()) {
    std::optional<std::string> cat = category.empty() ? std::nullopt : std::optional(category);
    std::optional<data::QType> qt =
        type.empty() ? std::nullopt : std::optional(data::qtype_from_string(type));
    auto filtered = data::filter(ds, cat, qt);
    if (filtered.empty_warning) std::cerr << "warning: filter left the dataset empty\n";
    ds = std::move(filtered.dataset);
    if (ds.entries.empty()) raise(ErrorKind::validation, "refusing to write an empty dataset");
  }
  std::filesystem::path out = out_file.empty()
                                  ? std::filesystem::path(cfg.out_dir) / "datasets" /
                                        (std::filesystem::path(in_path).stem().string() + ".jsonl")
                                  : std::filesystem::path(out_file);
  write_file(out, data::to_jsonl(ds));

  auto m = manifest::start_manifest("ingest", cfg.master_seed, config::config_to_json(cfg));
  manifest::add_input(m, in_path);
  manifest::add_output(m, out);
  manifest::write(m, out.parent_path());

  std::cout << "ingested " << ds.entries.size() << " entries from " << in_path << " -> "
            << out.string() << "\n";
  return kExitOk;
}

int cmd_embed(const config::RunConfig& cfg, const std::string& config_path) {
  auto embedded = embed_pair(cfg);
  std::filesystem::path out = std::filesystem::path(cfg.out_dir) / "embeddings.csv";
  write_file(out, iterate::embeddings_to_csv(embedded.pair, embedded.target, embedded.retro));

  auto m = manifest::start_manifest("embed", cfg.master_seed, config::config_to_json(cfg));
  if (!config_path.empty()) manifest::add_input(m, config_path);
  manifest::add_input(m, cfg.target->path);
  manifest::add_input(m, cfg.retro->path);
  manifest::add_output(m, out);
  manifest::add_output(m, embedded.cache);
  manifest::write(m, cfg.out_dir);

  std::cout << "embedded " << embedded.target.size() << " target + " << embedded.retro.size()
            << " retro entries (cache: " << embedded.cache.string() << ")\n";
  return kExitOk;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& config_path,
             const std::string& model_id, const std::string& role, int repeats, bool resume) {
  if (role != "target" && role != "retro") raise(ErrorKind::config, "--role must be target or retro");
  auto pair = load_pair(cfg);
  const data::Dataset& ds = role == "target" ? pair.target : pair.retro;
  const auto& mc = find_model(cfg, model_id);
  auto variant = make_variant(cfg);
  auto provider = make_chat_provider(cfg, mc, role);

  auto dir = eval_dir(cfg, model_id);
  auto records_path = dir / (role + ".records.jsonl");
  auto summary_path = dir / (role + ".summary.json");

  std::vector<eval::EvalRecord> done;
  if (resume && std::filesystem::exists(records_path)) done = eval::load_records(records_path);
  std::map<std::pair<std::string, int>, const eval::EvalRecord*> done_index;
  for (const auto& r : done)
    if (!r.errored) done_index[{r.entry_id, r.repeat}] = &r;

  std::uint64_t run_seed = cfg.seed_for("eval:" + model_id + ":" + role);
  std::vector<eval::EvalRecord> records;
  records.reserve(ds.entries.size() * static_cast<std::size_t>(repeats));
  long fresh = 0;
  for (int rep = 0; rep < repeats; ++rep) {
    std::vector<eval::EvalRecord> rep_records(ds.entries.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
      auto it = done_index.find({ds.entries[i].id, rep});
      if (it != done_index.end()) rep_records[i] = *it->second;
      else missing.push_back(i);
    }
    fresh += static_cast<long>(missing.size());
    parallel_for(missing.size(), cfg.parallelism, [&](std::size_t k) {
      std::size_t i = missing[k];
      rep_records[i] = eval::evaluate_entry(ds.entries[i], provider.use(), variant, role, rep);
    });
    for (auto& r : rep_records) records.push_back(std::move(r));
  }

  eval::save_records(records, records_path);
  auto summary = eval::summarize_records(provider.use().model_id(), ds.name,
                                         variant.fingerprint(), run_seed, repeats, records);
  write_file(summary_path, eval::summary_to_json(summary));

  auto m = manifest::start_manifest("eval", cfg.master_seed, config::config_to_json(cfg));
  if (!config_path.empty()) manifest::add_input(m, config_path);
  manifest::add_input(m, role == "target" ? cfg.target->path : cfg.retro->path);
  manifest::add_output(m, records_path);
  manifest::add_output(m, summary_path);
  manifest::write(m, dir);

  std::cout << "evaluated " << ds.entries.size() << " entries x" << repeats << " (" << fresh
            << " fresh); accuracy " << summary.accuracy.acc() << " +- " << summary.accuracy.sigma()
            << " (errored: " << summary.errored_entries << ") -> " << summary_path.string() << "\n";
  return kExitOk;
}

int cmd_suite(const config::RunConfig& cfg, const std::string& config_path) {
  auto embedded = embed_pair(cfg);

  stats::PermutationConfig perm;
  perm.num_samples = cfg.permutation_samples;
  perm.seed = cfg.seed_for("permutation");
  if (cfg.permutation_sidedness == "upper") perm.sidedness = stats::Sidedness::upper;
  else if (cfg.permutation_sidedness == "lower") perm.sidedness = stats::Sidedness::lower;
  else if (cfg.permutation_sidedness == "two_sided") perm.sidedness = stats::Sidedness::two_sided;
  else raise(ErrorKind::config, "permutation sidedness must be upper, lower or two_sided");

  suite::SuiteConfig sc;
  sc.permutation = perm;
  sc.fold_seed = cfg.seed_for("folds");
  sc.classifier.logreg_cfg =
      logreg::TrainConfig{cfg.logreg_l2, cfg.logreg_epochs, cfg.logreg_lr, 0, true};

  std::vector<suite::DifficultyInput> difficulty;
  for (const auto& mc : cfg.models) {
    if (!mc.pre_release_attested) continue;
    auto dir = eval_dir(cfg, mc.model_id);
    auto t_path = dir / "target.summary.json";
    auto r_path = dir / "retro.summary.json";
    if (!std::filesystem::exists(t_path) || !std::filesystem::exists(r_path)) {
      std::cerr << "note: skipping difficulty input for " << mc.model_id
                << " (missing eval summaries)\n";
      continue;
    }
    suite::DifficultyInput din;
    din.model_id = mc.model_id;
    din.target = eval::summary_from_json(read_file(t_path));
    din.retro = eval::summary_from_json(read_file(r_path));
    din.training_cutoff = mc.training_cutoff;
    difficulty.push_back(std::move(din));
  }

  std::optional<suite::HumanCounts> human;
  if (cfg.survey_responses_path && cfg.survey_key_path) {
    auto key = survey::key_from_json(read_file(*cfg.survey_key_path));
    auto responses = survey::parse_responses_csv(read_file(*cfg.survey_responses_path));
    auto breakdown = survey::score_survey(responses, key);
    human = suite::HumanCounts{breakdown.correct, breakdown.total};
  }

  auto report = suite::run_suite(embedded.pair, embedded.target, embedded.retro, difficulty,
                                 human, sc);

  auto report_path = std::filesystem::path(cfg.out_dir) / "suite_report.json";
  write_file(report_path, suite::report_to_json(report));

  auto m = manifest::start_manifest("suite", cfg.master_seed, config::config_to_json(cfg));
  if (!config_path.empty()) manifest::add_input(m, config_path);
  manifest::add_input(m, cfg.target->path);
  manifest::add_input(m, cfg.retro->path);
  if (std::filesystem::exists(embedded.cache)) manifest::add_input(m, embedded.cache);
  manifest::add_output(m, report_path);
  manifest::write(m, cfg.out_dir);

  std::cout << "verdict: " << suite::to_string(report.verdict) << " -> " << report_path.string()
            << "\n";
  switch (report.verdict) {
    case suite::Verdict::sufficiently_indistinguishable: return kExitOk;
    case suite::Verdict::rejected: return kExitRejected;
    case suite::Verdict::incomplete: return kExitIncomplete;
  }
  return kExitError;
}

int cmd_inflation(const config::RunConfig& cfg, const std::string& config_path,
                  const std::vector<std::string>& formats) {
  std::vector<inflation::InflationRow> rows;
  std::vector<std::filesystem::path> inputs;
  for (const auto& mc : cfg.models) {
    auto dir = eval_dir(cfg, mc.model_id);
    auto t_path = dir / "target.summary.json";
    auto r_path = dir / "retro.summary.json";
    if (!std::filesystem::exists(t_path) || !std::filesystem::exists(r_path)) continue;
    auto target = eval::summary_from_json(read_file(t_path));
    auto retro = eval::summary_from_json(read_file(r_path));
    rows.push_back(inflation::compute_inflation(target, retro));
    inputs.push_back(t_path);
    inputs.push_back(r_path);
  }
  if (rows.empty())
    raise(ErrorKind::validation, "no model has paired target/retro eval summaries under " +
                                     cfg.out_dir + "/eval");

  auto m = manifest::start_manifest("inflation", cfg.master_seed, config::config_to_json(cfg));
  if (!config_path.empty()) manifest::add_input(m, config_path);
  for (const auto& p : inputs) manifest::add_input(m, p);
  for (const auto& f : formats) {
    auto fmt = inflation::format_from_string(f);
    std::string ext = (f == "svg_scatter" || f == "svg_bars") ? ".svg" : "." + f;
    auto path = std::filesystem::path(cfg.out_dir) / ("inflation_" + f + ext);
    write_file(path, inflation::render_report(rows, fmt));
    manifest::add_output(m, path);
    std::cout << "wrote " << path.string() << "\n";
  }
  manifest::write(m, cfg.out_dir);
  for (const auto& r : rows) {
    std::cout << r.model_id << ": BI " << r.gap.gap_pp << " pp (fisher p " << r.gap.fisher_p
              << (r.significant ? ", significant" : "") << ")\n";
  }
  return kExitOk;
}

int cmd_iterate(const config::RunConfig& cfg, const std::string& tool, int ngram_n,
                std::size_t top, const std::string& role, int bins, std::size_t k) {
  auto dataset_of = [&](const data::DatasetPair& pair) -> const data::Dataset& {
    if (role == "target") return pair.target;
    if (role == "retro") return pair.retro;
    raise(ErrorKind::config, "--role must be target or retro");
  };
  std::filesystem::path dir = std::filesystem::path(cfg.out_dir) / "iterate";
  auto m = manifest::start_manifest("iterate:" + tool, cfg.master_seed, config::config_to_json(cfg));

  if (tool == "ngram") {
    auto pair = load_pair(cfg);
    auto report = iterate::ngram_diff(pair, ngram_n, top);
    write_file(dir / ("ngram" + std::to_string(ngram_n) + ".json"),
               iterate::ngram_report_to_json(report));
    write_file(dir / ("ngram" + std::to_string(ngram_n) + ".md"),
               iterate::ngram_report_to_markdown(report));
    manifest::add_output(m, dir / ("ngram" + std::to_string(ngram_n) + ".json"));
    std::cout << "ngram report: " << report.rows.size() << " rows\n";
  } else if (tool == "hist") {
    auto embedded = embed_pair(cfg);
    const auto& ds = dataset_of(embedded.pair);
    const auto& embs = role == "target" ? embedded.target : embedded.retro;
    auto h = iterate::internal_similarity_histogram(ds, embs, bins);
    write_file(dir / ("hist_" + role + ".csv"), iterate::histogram_to_csv(h));
    write_file(dir / ("hist_" + role + ".svg"),
               iterate::histogram_to_svg(h, "internal cosine similarity: " + role));
    manifest::add_output(m, dir / ("hist_" + role + ".csv"));
    std::cout << "histogram over " << h.pair_count << " pairs\n";
  } else if (tool == "pairs") {
    auto embedded = embed_pair(cfg);
    const auto& ds = dataset_of(embedded.pair);
    const auto& embs = role == "target" ? embedded.target : embedded.retro;
    auto pairs = iterate::top_similar_pairs(ds, embs, k);
    write_file(dir / ("pairs_" + role + ".json"), iterate::pairs_to_json(pairs));
    write_file(dir / ("pairs_" + role + ".md"), iterate::pairs_to_markdown(pairs));
    manifest::add_output(m, dir / ("pairs_" + role + ".json"));
    std::cout << "top " << pairs.size() << " pairs written\n";
  } else if (tool == "project") {
    auto embedded = embed_pair(cfg);
    auto points = iterate::project_2d(embedded.pair, embedded.target, embedded.retro,
                                      cfg.seed_for("projection"));
    write_file(dir / "projection.csv", iterate::projection_to_csv(points));
    write_file(dir / "projection.svg", iterate::projection_to_svg(points));
    write_file(dir / "embeddings.csv",
               iterate::embeddings_to_csv(embedded.pair, embedded.target, embedded.retro));
    manifest::add_output(m, dir / "projection.csv");
    std::cout << "projected " << points.size() << " points\n";
  } else {
    raise(ErrorKind::unsupported, "unknown iterate tool: " + tool);
  }
  manifest::write(m, dir);
  return kExitOk;
}

int cmd_survey_generate(const config::RunConfig& cfg) {
  auto pair = load_pair(cfg);
  auto generated = survey::generate_survey(pair, cfg.seed_for("survey"));
  std::filesystem::path dir = std::filesystem::path(cfg.out_dir) / "survey";
  write_file(dir / "form.json", survey::form_to_json(generated.form));
  write_file(dir / "form.md", survey::form_to_markdown(generated.form));
  write_file(dir / "form.html", survey::form_to_html(generated.form));
  write_file(dir / "key.json", survey::key_to_json(generated.key));

  auto m = manifest::start_manifest("survey:generate", cfg.master_seed, config::config_to_json(cfg));
  manifest::add_output(m, dir / "form.json");
  manifest::add_output(m, dir / "key.json");
  manifest::write(m, dir);
  std::cout << "survey form " << generated.form.form_id << " -> " << (dir / "form.json").string()
            << " (key kept separately)\n";
  return kExitOk;
}

int cmd_survey_score(const config::RunConfig& cfg, const std::string& responses_path,
                     const std::string& key_path, const std::string& model_id) {
  auto key = survey::key_from_json(read_file(key_path));
  std::vector<survey::ResponseRow> responses;
  if (!model_id.empty()) {
    // Model-as-annotator: answer the form through the chat provider first.
    auto form = survey::form_from_json(
        read_file(std::filesystem::path(cfg.out_dir) / "survey" / "form.json"));
    const auto& mc = find_model(cfg, model_id);
    auto provider = make_chat_provider(cfg, mc, "survey");
    responses = survey::run_survey_with_model(form, provider.use());
    write_file(std::filesystem::path(cfg.out_dir) / "survey" / (model_id + ".responses.csv"),
               survey::responses_to_csv(responses));
  } else {
    responses = survey::parse_responses_csv(read_file(responses_path));
  }
  auto breakdown = survey::score_survey(responses, key);
  json j;
  j["correct"] = breakdown.correct;
  j["total"] = breakdown.total;
  j["accuracy"] = breakdown.result.statistic;
  j["p_value"] = breakdown.result.p_value;
  j["reject_at_5pct"] = breakdown.result.reject_at_5pct;
  j["participants_scored"] = breakdown.participants_scored;
  j["participants_excluded"] = breakdown.participants_excluded;
  auto path = std::filesystem::path(cfg.out_dir) / "survey" / "score.json";
  write_file(path, j.dump(2) + "\n");
  std::cout << "survey: " << breakdown.correct << "/" << breakdown.total << " correct, p = "
            << breakdown.result.p_value << (breakdown.result.reject_at_5pct ? " (reject)" : "")
            << " -> " << path.string() << "\n";
  return kExitOk;
}

int cmd_calibrate(const config::RunConfig& cfg, int trials) {
  calibrate::CalibrationConfig cc;
  cc.trials = trials;
  cc.seed = cfg.seed_for("calibration");
  cc.permutation_samples = cfg.permutation_samples;
  cc.logreg_cfg = logreg::TrainConfig{cfg.logreg_l2, cfg.logreg_epochs, cfg.logreg_lr, 0, true};
  auto result = calibrate::run_null_calibration(cc);
  json j;
  j["trials"] = result.trials;
  j["semantic_rejection_rate"] = result.semantic_rate();
  j["prediction_rejection_rate"] = result.prediction_rate();
  j["difficulty_rejection_rate"] = result.difficulty_rate();
  j["pass_rate"] = result.pass_rate();
  auto path = std::filesystem::path(cfg.out_dir) / "calibration.json";
  write_file(path, j.dump(2) + "\n");
  std::cout << "calibration over " << result.trials << " trials: semantic "
            << result.semantic_rate() << ", prediction " << result.prediction_rate()
            << ", difficulty " << result.difficulty_rate() << ", pass rate " << result.pass_rate()
            << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"retro-holdout indistinguishability and benchmark-inflation toolkit"};
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_override;
  std::optional<int> parallelism_override;
  bool offline = false;
  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--seed", seed_override, "master seed override");
  app.add_option("--out", out_override, "output directory override");
  app.add_option("--parallelism", parallelism_override, "parallelism cap override");
  app.add_flag("--offline", offline, "never touch the network (cache and transcripts only)");

  auto* ingest = app.add_subcommand("ingest", "validate a dataset file and emit normalized JSONL");
  std::string in_path, in_format = "jsonl", out_file, flt_category, flt_type;
  ingest->add_option("--in", in_path, "input dataset path")->required();
  ingest->add_option("--format", in_format, "jsonl | csv");
  ingest->add_option("--out-file", out_file, "output JSONL path");
  ingest->add_option("--category", flt_category, "keep only this category");
  ingest->add_option("--type", flt_type, "keep only this type (adversarial | non_adversarial)");

  auto* embed_cmd = app.add_subcommand("embed", "embed both datasets into the cache");

  auto* eval_cmd = app.add_subcommand("eval", "run the evaluation protocol for one model");
  std::string eval_model, eval_role = "target";
  int eval_repeats = 1;
  bool eval_resume = false;
  eval_cmd->add_option("--model", eval_model, "model id from the config")->required();
  eval_cmd->add_option("--role", eval_role, "target | retro")->required();
  eval_cmd->add_option("--repeats", eval_repeats, "independent repeats");
  eval_cmd->add_flag("--resume", eval_resume, "reuse completed records");

  auto* suite_cmd = app.add_subcommand("suite", "run the indistinguishability test suite");

  auto* inflation_cmd = app.add_subcommand("inflation", "benchmark inflation report per model");
  std::vector<std::string> formats{"json", "csv", "svg_scatter", "svg_bars"};
  inflation_cmd->add_option("--format", formats, "report formats");

  auto* iterate_cmd = app.add_subcommand("iterate", "dataset iteration analysis tools");
  std::string tool, it_role = "target";
  int ngram_n = 1, bins = 40;
  std::size_t it_top = 50, it_k = 10;
  iterate_cmd->add_option("tool", tool, "ngram | hist | pairs | project")->required();
  iterate_cmd->add_option("--n", ngram_n, "n-gram size (1 or 2)");
  iterate_cmd->add_option("--top", it_top, "rows to keep");
  iterate_cmd->add_option("--role", it_role, "target | retro");
  iterate_cmd->add_option("--bins", bins, "histogram bins");
  iterate_cmd->add_option("--k", it_k, "pair count");

  auto* survey_cmd = app.add_subcommand("survey", "human distinguishability survey");
  std::string survey_action, responses_path, key_path, survey_model;
  survey_cmd->add_option("action", survey_action, "generate | score")->required();
  survey_cmd->add_option("--responses", responses_path, "responses CSV (score)");
  survey_cmd->add_option("--key", key_path, "answer key JSON (score)");
  survey_cmd->add_option("--model", survey_model, "score a model as the annotator");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "type-I-error calibration on a null split");
  int trials = 200;
  calibrate_cmd->add_option("--trials", trials, "number of null trials");

  app.require_subcommand(1);
  CLI11_PARSE(app, argc, argv);

  try {
    config::RunConfig cfg;
    if (!config_path.empty()) cfg = config::load_config(config_path);
    if (seed_override) cfg.master_seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (parallelism_override) cfg.parallelism = *parallelism_override;
    if (offline) cfg.offline = true;

    if (*ingest) return cmd_ingest(cfg, in_path, in_format, out_file, flt_category, flt_type);
    if (*embed_cmd) return cmd_embed(cfg, config_path);
    if (*eval_cmd) return cmd_eval(cfg, config_path, eval_model, eval_role, eval_repeats, eval_resume);
    if (*suite_cmd) return cmd_suite(cfg, config_path);
    if (*inflation_cmd) return cmd_inflation(cfg, config_path, formats);
    if (*iterate_cmd) return cmd_iterate(cfg, tool, ngram_n, it_top, it_role, bins, it_k);
    if (*survey_cmd) {
      if (survey_action == "generate") return cmd_survey_generate(cfg);
      if (survey_action == "score") {
        if (survey_model.empty() && (responses_path.empty() || key_path.empty()))
          raise(ErrorKind::config, "survey score needs --responses and --key (or --model)");
        if (!survey_model.empty() && key_path.empty())
          key_path = (std::filesystem::path(cfg.out_dir) / "survey" / "key.json").string();
        return cmd_survey_score(cfg, responses_path, key_path, survey_model);
      }
      raise(ErrorKind::unsupported, "survey action must be generate or score");
    }
    if (*calibrate_cmd) return cmd_calibrate(cfg, trials);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitError;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
