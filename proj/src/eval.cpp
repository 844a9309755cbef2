#include "retro/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "retro/error.hpp"
#include "retro/hash.hpp"
#include "retro/parallel.hpp"

namespace retro::eval {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::literal: return "literal";
    case Stage::numeric_index: return "numeric_index";
    case Stage::letter_index: return "letter_index";
  }
  return "?";
}

std::string to_string(VariantMode m) {
  switch (m) {
    case VariantMode::standard: return "standard";
    case VariantMode::five_shot: return "five_shot";
    case VariantMode::helpful_prompt: return "helpful_prompt";
    case VariantMode::top_k: return "top_k";
  }
  return "?";
}

std::string to_string(SelectionReason r) {
  return r == SelectionReason::dominance ? "dominance" : "cap_reached";
}

void PromptVariant::validate_for(const data::Entry& e) const {
  switch (mode) {
    case VariantMode::standard: break;
    case VariantMode::five_shot: {
      if (shot_entries.size() != 5)
        raise(ErrorKind::validation, "five_shot variant needs exactly 5 shot entries, got " +
                                         std::to_string(shot_entries.size()));
      for (const auto& shot : shot_entries) {
        if (shot.id == e.id || shot.question == e.question)
          raise(ErrorKind::validation,
                "five_shot shot entry \"" + shot.id + "\" collides with the entry under test");
      }
      break;
    }
    case VariantMode::helpful_prompt:
      if (!helpful_preamble || helpful_preamble->empty())
        raise(ErrorKind::validation, "helpful_prompt variant needs a preamble text");
      break;
    case VariantMode::top_k: {
      if (!k) raise(ErrorKind::validation, "top_k variant needs k");
      int n = static_cast<int>(e.options.size());
      if (*k < 1 || *k >= n)
        raise(ErrorKind::validation, "top_k needs 1 <= k < |options|, got k=" + std::to_string(*k) +
                                         " for " + std::to_string(n) + " options");
      break;
    }
  }
}

std::string PromptVariant::fingerprint() const {
  std::string fp = to_string(mode);
  if (mode == VariantMode::top_k && k) fp += ":k=" + std::to_string(*k);
  if (mode == VariantMode::five_shot) {
    std::string ids;
    for (const auto& shot : shot_entries) {
      ids += shot.id;
      ids.push_back(',');
    }
    fp += ":shots=" + hash::sha256_hex(ids).substr(0, 12);
  }
  if (mode == VariantMode::helpful_prompt && helpful_preamble)
    fp += ":preamble=" + hash::sha256_hex(*helpful_preamble).substr(0, 12);
  return fp;
}

std::vector<int> displayed_order(const data::Entry& e, int rotation_offset) {
  const int n = static_cast<int>(e.options.size());
  std::vector<int> sorted_idx(n);
  for (int i = 0; i < n; ++i) sorted_idx[i] = i;
  std::sort(sorted_idx.begin(), sorted_idx.end(), [&](int a, int b) {
    return data::alpha_less(e.options[a], e.options[b]);
  });
  std::vector<int> order(n);
  for (int j = 0; j < n; ++j) order[j] = sorted_idx[(j + rotation_offset) % n];
  return order;
}

namespace {

std::string index_label(Stage stage, int displayed_pos) {
  if (stage == Stage::numeric_index) return std::to_string(displayed_pos + 1);
  return std::string(1, static_cast<char>('a' + displayed_pos));
}

// The stage prompt body shared by real questions and worked examples.
std::string question_block(const data::Entry& e, Stage stage, int rotation_offset) {
  auto order = displayed_order(e, rotation_offset);
  std::string out = e.question;
  out += "\nAvailable options:\n";
  for (std::size_t j = 0; j < order.size(); ++j) {
    if (stage != Stage::literal) {
      out += index_label(stage, static_cast<int>(j));
      out += ". ";
    }
    out += e.options[order[j]];
    out.push_back('\n');
  }
  return out;
}

std::string header_line(Stage stage, const PromptVariant& variant) {
  if (variant.mode == VariantMode::top_k) {
    return "This is a multiple-choice question. Select the " + std::to_string(*variant.k) +
           " options most likely to be correct by providing their indices, separated by commas.\n";
  }
  if (stage == Stage::literal)
    return "This is a multiple-choice question. Answer it by repeating one of the options, "
           "exactly and literally.\n";
  return "This is a multiple-choice question. Select one of the options by providing its index.\n";
}

std::string footer_line(const PromptVariant& variant) {
  if (variant.mode == VariantMode::top_k)
    return "Answer with " + std::to_string(*variant.k) + " of the options.";
  return "Answer with one of the options.";
}

} // namespace

std::string build_prompt(const data::Entry& e, Stage stage, int rotation_offset,
                         const PromptVariant& variant) {
  variant.validate_for(e);
  const int n = static_cast<int>(e.options.size());
  if (rotation_offset < 0 || rotation_offset >= n)
    raise(ErrorKind::validation, "rotation_offset out of range");
  if (variant.mode == VariantMode::top_k && stage == Stage::literal)
    raise(ErrorKind::validation, "top_k prompts are index-based; literal stage does not apply");
  if (stage == Stage::letter_index && n > 26)
    raise(ErrorKind::validation, "letter_index stage supports at most 26 options");

  std::string prompt;
  if (variant.mode == VariantMode::helpful_prompt) {
    prompt += *variant.helpful_preamble;
    prompt += "\n\n";
  }
  if (variant.mode == VariantMode::five_shot) {
    for (const auto& shot : variant.shot_entries) {
      prompt += "Example:\n";
      prompt += question_block(shot, stage, 0);
      prompt += "Answer: ";
      if (stage == Stage::literal) {
        prompt += shot.options[shot.correct_index];
      } else {
        auto order = displayed_order(shot, 0);
        int pos = static_cast<int>(std::find(order.begin(), order.end(), shot.correct_index) -
                                   order.begin());
        prompt += index_label(stage, pos);
      }
      prompt += "\n\n";
    }
  }
  prompt += header_line(stage, variant);
  prompt += question_block(e, stage, rotation_offset);
  prompt += footer_line(variant);
  return prompt;
}

std::string normalize_response(std::string_view raw) {
  std::size_t begin = 0, end = raw.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
  std::string_view stripped = raw.substr(begin, end - begin);
  std::size_t nl = stripped.find('\n');
  if (nl != std::string_view::npos) stripped = stripped.substr(0, nl);
  // The first line may still end in \r from CRLF responses.
  while (!stripped.empty() && std::isspace(static_cast<unsigned char>(stripped.back())))
    stripped.remove_suffix(1);
  return std::string(stripped);
}

namespace {

// A bare index token: the whole response is the label, optionally with a
// trailing period ("2", "2.", "b", "b.").
std::optional<int> parse_bare_index(const std::string& token, Stage stage, int n_options) {
  if (token.empty()) return std::nullopt;
  std::string t = token;
  if (t.size() > 1 && t.back() == '.') t.pop_back();
  if (stage == Stage::numeric_index) {
    if (t.empty() || t.size() > 2) return std::nullopt;
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    int v = std::stoi(t);
    if (v < 1 || v > n_options) return std::nullopt;
    return v - 1; // displayed position
  }
  if (stage == Stage::letter_index) {
    if (t.size() != 1) return std::nullopt;
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0])));
    if (c < 'a' || c >= 'a' + n_options) return std::nullopt;
    return c - 'a';
  }
  return std::nullopt;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

} // namespace

std::optional<int> match_option(const std::string& normalized, const data::Entry& e, Stage stage,
                                int rotation_offset) {
  const int n = static_cast<int>(e.options.size());
  if (stage == Stage::literal) {
    for (int i = 0; i < n; ++i)
      if (normalized == e.options[i]) return i;
    // Single case-insensitive fallback pass; ambiguity yields no match.
    std::string lowered = ascii_lower(normalized);
    std::optional<int> hit;
    for (int i = 0; i < n; ++i) {
      if (lowered == ascii_lower(e.options[i])) {
        if (hit) return std::nullopt;
        hit = i;
      }
    }
    return hit;
  }
  auto pos = parse_bare_index(normalized, stage, n);
  if (!pos) return std::nullopt;
  auto order = displayed_order(e, rotation_offset);
  return order[static_cast<std::size_t>(*pos)];
}

std::optional<std::vector<int>> match_option_set(const std::string& normalized,
                                                 const data::Entry& e, Stage stage,
                                                 int rotation_offset, int k) {
  if (stage == Stage::literal) return std::nullopt;
  const int n = static_cast<int>(e.options.size());
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : normalized) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  if (static_cast<int>(tokens.size()) != k) return std::nullopt;
  auto order = displayed_order(e, rotation_offset);
  std::vector<int> selected;
  for (const auto& token : tokens) {
    auto pos = parse_bare_index(token, stage, n);
    if (!pos) return std::nullopt;
    int orig = order[static_cast<std::size_t>(*pos)];
    if (std::find(selected.begin(), selected.end(), orig) != selected.end()) return std::nullopt;
    selected.push_back(orig);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

namespace {

constexpr int kMinResamples = 5;
constexpr int kMaxResamples = 100;
constexpr int kDominanceMargin = 3;

std::vector<Stage> stages_for(const PromptVariant& variant, std::size_t n_options) {
  std::vector<Stage> stages;
  if (variant.mode != VariantMode::top_k) stages.push_back(Stage::literal);
  stages.push_back(Stage::numeric_index);
  if (n_options <= 26) stages.push_back(Stage::letter_index);
  return stages;
}

} // namespace

EvalRecord evaluate_entry(const data::Entry& e, ChatProvider& provider,
                          const PromptVariant& variant, std::string role, int repeat) {
  variant.validate_for(e);
  EvalRecord rec;
  rec.entry_id = e.id;
  rec.role = std::move(role);
  rec.repeat = repeat;
  rec.temperature = provider.temperature();

  const int n = static_cast<int>(e.options.size());
  const bool top_k = variant.mode == VariantMode::top_k;
  const auto stages = stages_for(variant, e.options.size());

  // Selection keys: single option index, or the sorted k-set for top_k.
  std::map<std::vector<int>, int> counts;
  std::map<std::vector<int>, int> last_increment; // resample at which the count last grew

  for (int t = 0; t < kMaxResamples; ++t) {
    int offset = t % n;
    std::optional<std::vector<int>> selection;
    for (Stage stage : stages) {
      std::string prompt = build_prompt(e, stage, offset, variant);
      std::string raw;
      try {
        raw = provider.complete(prompt, e.id);
      } catch (const Error& ex) {
        rec.errored = true;
        rec.error = ex.what();
        rec.resamples = t + 1;
        return rec;
      }
      AttemptTrace trace;
      trace.resample = t;
      trace.rotation_offset = offset;
      trace.stage = stage;
      trace.raw_response = raw;
      trace.normalized = normalize_response(raw);
      if (top_k) {
        trace.matched_set = match_option_set(trace.normalized, e, stage, offset, *variant.k);
        if (trace.matched_set) selection = trace.matched_set;
      } else {
        trace.matched_option = match_option(trace.normalized, e, stage, offset);
        if (trace.matched_option) selection = std::vector<int>{*trace.matched_option};
      }
      rec.attempts.push_back(std::move(trace));
      if (selection) break;
    }
    rec.resamples = t + 1;
    if (selection) {
      int c = ++counts[*selection];
      (void)c;
      last_increment[*selection] = t;
    }
    if (rec.resamples >= kMinResamples && !counts.empty()) {
      auto top = std::max_element(counts.begin(), counts.end(),
                                  [](const auto& a, const auto& b) { return a.second < b.second; });
      int second = 0;
      for (const auto& [key, count] : counts)
        if (key != top->first) second = std::max(second, count);
      if (top->second >= second + kDominanceMargin) {
        rec.selection_reason = SelectionReason::dominance;
        if (top_k) rec.selected_set = top->first;
        else rec.selected_option = top->first.front();
        break;
      }
    }
  }

  if (!rec.selection_reason) {
    if (counts.empty()) {
      rec.errored = true;
      rec.error = "no response matched any option across all stages within " +
                  std::to_string(kMaxResamples) + " attempts";
      return rec;
    }
    // Cap reached: the first selection to have arrived at the final
    // maximum count wins.
    int max_count = 0;
    for (const auto& [key, count] : counts) max_count = std::max(max_count, count);
    const std::vector<int>* winner = nullptr;
    int earliest = kMaxResamples;
    for (const auto& [key, count] : counts) {
      if (count == max_count && last_increment[key] < earliest) {
        earliest = last_increment[key];
        winner = &key;
      }
    }
    rec.selection_reason = SelectionReason::cap_reached;
    if (top_k) rec.selected_set = *winner;
    else rec.selected_option = winner->front();
  }

  if (top_k) {
    rec.correct = rec.selected_set &&
                  std::find(rec.selected_set->begin(), rec.selected_set->end(), e.correct_index) !=
                      rec.selected_set->end();
  } else {
    rec.correct = rec.selected_option && *rec.selected_option == e.correct_index;
  }
  return rec;
}

EvalSummary summarize_records(const std::string& model_id, const std::string& dataset_name,
                              const std::string& variant_fingerprint, std::uint64_t run_seed,
                              int repeats, const std::vector<EvalRecord>& records) {
  EvalSummary s;
  s.model_id = model_id;
  s.dataset_name = dataset_name;
  s.variant_fingerprint = variant_fingerprint;
  s.run_seed = run_seed;
  s.repeats = repeats;

  long correct = 0, scored = 0;
  std::map<int, std::pair<long, long>> by_repeat; // repeat -> (correct, scored)
  for (const auto& r : records) {
    if (r.errored) {
      ++s.errored_entries;
      continue;
    }
    ++scored;
    auto& agg = by_repeat[r.repeat];
    ++agg.second;
    if (r.correct) {
      ++correct;
      ++agg.first;
    }
  }
  s.accuracy = stats::make_accuracy(correct, scored);
  if (repeats > 1 && by_repeat.size() > 1) {
    std::vector<double> accs;
    for (const auto& [rep, agg] : by_repeat)
      if (agg.second > 0) accs.push_back(static_cast<double>(agg.first) / agg.second);
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= accs.size();
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    var /= (accs.size() - 1);
    s.empirical_sigma = std::sqrt(var);
  }
  return s;
}

EvalRun evaluate_dataset(const data::Dataset& ds, ChatProvider& provider,
                         const PromptVariant& variant, const EvalOptions& opts) {
  if (opts.repeats < 1) raise(ErrorKind::validation, "evaluate_dataset: repeats must be >= 1");
  data::validate_dataset(ds);

  EvalRun run;
  run.records.resize(ds.entries.size() * static_cast<std::size_t>(opts.repeats));
  for (int rep = 0; rep < opts.repeats; ++rep) {
    std::size_t base = static_cast<std::size_t>(rep) * ds.entries.size();
    parallel_for(ds.entries.size(), opts.parallelism, [&](std::size_t i) {
      run.records[base + i] =
          evaluate_entry(ds.entries[i], provider, variant, opts.role, rep);
    });
  }
  run.summary = summarize_records(provider.model_id(), ds.name, variant.fingerprint(), opts.seed,
                                  opts.repeats, run.records);
  return run;
}

// --- transport ---------------------------------------------------------

namespace {

struct SplitUrl {
  std::string base;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) raise(ErrorKind::config, "endpoint URL missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string transcript_key(std::string_view scope, const std::string& prompt) {
  std::string payload(scope);
  payload.push_back('\x1f');
  payload += prompt;
  return hash::sha256_hex(payload);
}

} // namespace

HttpChatProvider::HttpChatProvider(HttpChatConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) raise(ErrorKind::config, "chat endpoint not configured");
  if (cfg_.model_id.empty()) raise(ErrorKind::config, "chat model_id not configured");
}

std::string HttpChatProvider::complete(const std::string& prompt, std::string_view) {
  auto [base, path] = split_url(cfg_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(cfg_.timeout_s, 0);
  client.set_connection_timeout(cfg_.timeout_s, 0);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  json body;
  body["model"] = cfg_.model_id;
  body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = cfg_.temperature;
  body["max_tokens"] = cfg_.max_tokens;
  std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      // Rate-limit hints from the provider take precedence over backoff.
      if (res->has_header("Retry-After")) {
        int wait_s = std::atoi(res->get_header_value("Retry-After").c_str());
        if (wait_s > 0 && wait_s <= 120) std::this_thread::sleep_for(std::chrono::seconds(wait_s));
      }
      continue;
    }
    if (res->status != 200)
      raise(ErrorKind::transport,
            "chat request failed with HTTP " + std::to_string(res->status) + ": " +
                res->body.substr(0, 200));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& ex) {
      raise(ErrorKind::parse, std::string("chat response is not JSON: ") + ex.what());
    }
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      raise(ErrorKind::parse, "chat response missing choices[0].message.content");
    }
  }
  raise(ErrorKind::transport, "chat provider unreachable after " +
                                  std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

RecordingProvider::RecordingProvider(ChatProvider& inner, std::filesystem::path path)
    : inner_(inner), path_(std::move(path)) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0) {
    std::ofstream out(path_, std::ios::binary);
    if (!out) raise(ErrorKind::io, "cannot open transcript for writing: " + path_.string());
    json header;
    header["model_id"] = inner_.model_id();
    header["temperature"] = inner_.temperature();
    out << header.dump() << '\n';
  }
}

std::string RecordingProvider::complete(const std::string& prompt, std::string_view scope) {
  std::string response = inner_.complete(prompt, scope);
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot append to transcript: " + path_.string());
  json line;
  line["key"] = transcript_key(scope, prompt);
  line["scope"] = std::string(scope);
  line["prompt"] = prompt;
  line["response"] = response;
  out << line.dump() << '\n';
  return response;
}

ReplayProvider::ReplayProvider(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open transcript: " + path.string());
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      raise(ErrorKind::parse, "transcript " + path.string() + ": " + ex.what());
    }
    if (!have_header) {
      model_id_ = j.at("model_id").get<std::string>();
      temperature_ = j.at("temperature").get<double>();
      have_header = true;
      continue;
    }
    responses_[j.at("key").get<std::string>()].push_back(j.at("response").get<std::string>());
  }
  if (!have_header) raise(ErrorKind::parse, "transcript missing header line: " + path.string());
}

std::string ReplayProvider::complete(const std::string& prompt, std::string_view scope) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = responses_.find(transcript_key(scope, prompt));
  if (it == responses_.end() || it->second.empty())
    raise(ErrorKind::transport, "transcript has no recorded response for this request (scope " +
                                    std::string(scope) + ")");
  std::string response = std::move(it->second.front());
  it->second.pop_front();
  return response;
}

// --- persistence --------------------------------------------------------

namespace {

Stage stage_from_string(const std::string& s) {
  if (s == "literal") return Stage::literal;
  if (s == "numeric_index") return Stage::numeric_index;
  if (s == "letter_index") return Stage::letter_index;
  raise(ErrorKind::parse, "unknown stage: " + s);
}

SelectionReason reason_from_string(const std::string& s) {
  if (s == "dominance") return SelectionReason::dominance;
  if (s == "cap_reached") return SelectionReason::cap_reached;
  raise(ErrorKind::parse, "unknown selection reason: " + s);
}

} // namespace

std::string records_to_jsonl(const std::vector<EvalRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["entry_id"] = r.entry_id;
    j["role"] = r.role;
    j["repeat"] = r.repeat;
    j["resamples"] = r.resamples;
    ordered_json attempts = ordered_json::array();
    for (const auto& a : r.attempts) {
      ordered_json t;
      t["resample"] = a.resample;
      t["rotation_offset"] = a.rotation_offset;
      t["stage"] = to_string(a.stage);
      t["raw_response"] = a.raw_response;
      t["normalized_response"] = a.normalized;
      t["matched_option"] = a.matched_option ? ordered_json(*a.matched_option) : ordered_json();
      if (a.matched_set) t["matched_set"] = *a.matched_set;
      attempts.push_back(std::move(t));
    }
    j["attempts"] = std::move(attempts);
    j["selected_option"] = r.selected_option ? ordered_json(*r.selected_option) : ordered_json();
    if (r.selected_set) j["selected_set"] = *r.selected_set;
    j["selection_reason"] =
        r.selection_reason ? ordered_json(to_string(*r.selection_reason)) : ordered_json();
    j["correct"] = r.correct;
    j["errored"] = r.errored;
    if (!r.error.empty()) j["error"] = r.error;
    j["temperature"] = r.temperature;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<EvalRecord> records_from_jsonl(std::string_view text) {
  std::vector<EvalRecord> records;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      raise(ErrorKind::parse, "records line " + std::to_string(line_no) + ": " + ex.what());
    }
    EvalRecord r;
    r.entry_id = j.at("entry_id").get<std::string>();
    r.role = j.value("role", std::string());
    r.repeat = j.value("repeat", 0);
    r.resamples = j.value("resamples", 0);
    for (const auto& t : j.value("attempts", json::array())) {
      AttemptTrace a;
      a.resample = t.value("resample", 0);
      a.rotation_offset = t.value("rotation_offset", 0);
      a.stage = stage_from_string(t.at("stage").get<std::string>());
      a.raw_response = t.value("raw_response", std::string());
      a.normalized = t.value("normalized_response", std::string());
      if (t.contains("matched_option") && !t["matched_option"].is_null())
        a.matched_option = t["matched_option"].get<int>();
      if (t.contains("matched_set") && !t["matched_set"].is_null())
        a.matched_set = t["matched_set"].get<std::vector<int>>();
      r.attempts.push_back(std::move(a));
    }
    if (j.contains("selected_option") && !j["selected_option"].is_null())
      r.selected_option = j["selected_option"].get<int>();
    if (j.contains("selected_set") && !j["selected_set"].is_null())
      r.selected_set = j["selected_set"].get<std::vector<int>>();
    if (j.contains("selection_reason") && !j["selection_reason"].is_null())
      r.selection_reason = reason_from_string(j["selection_reason"].get<std::string>());
    r.correct = j.value("correct", false);
    r.errored = j.value("errored", false);
    r.error = j.value("error", std::string());
    r.temperature = j.value("temperature", 0.0);
    records.push_back(std::move(r));
  }
  return records;
}

void save_records(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write records: " + path.string());
  out << records_to_jsonl(records);
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot read records: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return records_from_jsonl(buf.str());
}

std::string summary_to_json(const EvalSummary& s) {
  json j;
  j["model_id"] = s.model_id;
  j["dataset"] = s.dataset_name;
  j["variant"] = s.variant_fingerprint;
  j["accuracy"] = {{"correct", s.accuracy.correct},
                   {"total", s.accuracy.total},
                   {"acc", s.accuracy.acc()},
                   {"sigma", s.accuracy.sigma()}};
  j["errored_entries"] = s.errored_entries;
  j["empirical_sigma"] = s.empirical_sigma ? json(*s.empirical_sigma) : json();
  j["run_seed"] = s.run_seed;
  j["repeats"] = s.repeats;
  return j.dump(2) + "\n";
}

EvalSummary summary_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    raise(ErrorKind::parse, std::string("summary JSON: ") + ex.what());
  }
  EvalSummary s;
  s.model_id = j.at("model_id").get<std::string>();
  s.dataset_name = j.at("dataset").get<std::string>();
  s.variant_fingerprint = j.at("variant").get<std::string>();
  s.accuracy = stats::make_accuracy(j.at("accuracy").at("correct").get<long>(),
                                    j.at("accuracy").at("total").get<long>());
  s.errored_entries = j.value("errored_entries", 0L);
  if (j.contains("empirical_sigma") && !j["empirical_sigma"].is_null())
    s.empirical_sigma = j["empirical_sigma"].get<double>();
  s.run_seed = j.value("run_seed", 0ULL);
  s.repeats = j.value("repeats", 1);
  return s;
}

} // namespace retro::eval
