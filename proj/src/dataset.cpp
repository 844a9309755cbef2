#include "retro/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "retro/csv.hpp"
#include "retro/error.hpp"
#include "retro/hash.hpp"
#include "retro/rng.hpp"

namespace retro::data {

using nlohmann::ordered_json;

std::string to_string(QType t) {
  return t == QType::adversarial ? "adversarial" : "non_adversarial";
}

QType qtype_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(lower.begin(), lower.end(), '-', '_');
  if (lower == "adversarial") return QType::adversarial;
  if (lower == "non_adversarial") return QType::non_adversarial;
  raise(ErrorKind::parse, "unknown entry type: " + std::string(s));
}

bool alpha_less(std::string_view a, std::string_view b) {
  auto fold = [](unsigned char c) -> unsigned char {
    return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
  };
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char fa = fold(static_cast<unsigned char>(a[i]));
    unsigned char fb = fold(static_cast<unsigned char>(b[i]));
    if (fa != fb) return fa < fb;
  }
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b; // case-sensitive tie break
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true; // leading spaces dropped
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(static_cast<char>(c));
      in_space = false;
    }
  }
  return out;
}

void finalize_entry(Entry& e, std::string_view context) {
  std::string where(context);
  if (normalize_whitespace(e.question).empty())
    raise(ErrorKind::validation, where + ": empty question");
  if (e.options.size() < 2)
    raise(ErrorKind::validation, where + ": entry needs at least 2 options, got " +
                                     std::to_string(e.options.size()));
  std::unordered_set<std::string> seen;
  for (const auto& opt : e.options) {
    std::string norm = normalize_whitespace(opt);
    if (norm.empty()) raise(ErrorKind::validation, where + ": empty option text");
    if (!seen.insert(norm).second)
      raise(ErrorKind::validation, where + ": duplicate option after whitespace normalization: \"" + norm + "\"");
  }
  if (e.correct_index < 0 || static_cast<std::size_t>(e.correct_index) >= e.options.size())
    raise(ErrorKind::validation, where + ": correct_index " + std::to_string(e.correct_index) +
                                     " out of range for " + std::to_string(e.options.size()) + " options");
  if (e.id.empty()) {
    // Content-hash id keeps cache keys stable across re-ingestion.
    std::string payload = e.question;
    for (const auto& opt : e.options) {
      payload.push_back('\x1f');
      payload += opt;
    }
    e.id = hash::sha256_hex(payload).substr(0, 12);
  }
}

void validate_dataset(const Dataset& ds) {
  if (ds.entries.empty()) raise(ErrorKind::validation, "dataset \"" + ds.name + "\" is empty");
  std::unordered_set<std::string> ids;
  for (const auto& e : ds.entries) {
    if (!ids.insert(e.id).second)
      raise(ErrorKind::validation, "dataset \"" + ds.name + "\": duplicate id \"" + e.id + "\"");
  }
}

namespace {

Entry entry_from_json(const ordered_json& j, std::string_view context) {
  Entry e;
  if (!j.is_object()) raise(ErrorKind::parse, std::string(context) + ": line is not a JSON object");
  if (j.contains("id")) e.id = j.at("id").get<std::string>();
  if (!j.contains("question") || !j.at("question").is_string())
    raise(ErrorKind::parse, std::string(context) + ": missing string field \"question\"");
  e.question = j.at("question").get<std::string>();
  if (!j.contains("options") || !j.at("options").is_array())
    raise(ErrorKind::parse, std::string(context) + ": missing array field \"options\"");
  for (const auto& o : j.at("options")) {
    if (!o.is_string()) raise(ErrorKind::parse, std::string(context) + ": options must be strings");
    e.options.push_back(o.get<std::string>());
  }
  if (!j.contains("correct_index") || !j.at("correct_index").is_number_integer())
    raise(ErrorKind::parse, std::string(context) + ": missing integer field \"correct_index\"");
  e.correct_index = j.at("correct_index").get<int>();
  if (j.contains("category") && !j.at("category").is_null())
    e.category = j.at("category").get<std::string>();
  if (j.contains("type") && !j.at("type").is_null())
    e.qtype = qtype_from_string(j.at("type").get<std::string>());
  if (j.contains("source_note") && !j.at("source_note").is_null())
    e.source_note = j.at("source_note").get<std::string>();
  return e;
}

} // namespace

Dataset parse_jsonl(std::string_view text, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    std::string context = ds.name + ":" + std::to_string(line_no);
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      raise(ErrorKind::parse, context + ": invalid JSON: " + ex.what());
    }
    Entry e = entry_from_json(j, context);
    finalize_entry(e, context);
    ds.entries.push_back(std::move(e));
  }
  validate_dataset(ds);
  return ds;
}

Dataset parse_truthfulqa_csv(std::string_view text, std::string name) {
  auto rows = csv::parse(text);
  if (rows.empty()) raise(ErrorKind::parse, name + ": empty CSV");
  const auto& header = rows.front();
  auto col = [&](std::string_view want) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == want) return static_cast<int>(i);
    return -1;
  };
  int c_question = col("Question");
  int c_best = col("Best Answer");
  int c_incorrect = col("Incorrect Answers");
  int c_category = col("Category");
  int c_type = col("Type");
  int c_source = col("Source");
  if (c_question < 0 || c_best < 0 || c_incorrect < 0)
    raise(ErrorKind::parse, name + ": CSV must carry Question, Best Answer and Incorrect Answers columns");

  Dataset ds;
  ds.name = std::move(name);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    std::string context = ds.name + ":" + std::to_string(r + 1);
    auto cell = [&](int c) -> std::string {
      return (c >= 0 && static_cast<std::size_t>(c) < row.size()) ? row[c] : std::string();
    };
    Entry e;
    e.question = cell(c_question);
    std::string best = cell(c_best);
    if (best.empty()) raise(ErrorKind::parse, context + ": empty Best Answer");
    e.options.push_back(best);
    std::string inc = cell(c_incorrect);
    std::size_t pos = 0;
    while (pos <= inc.size()) {
      std::size_t semi = inc.find(';', pos);
      std::string part = inc.substr(pos, semi == std::string::npos ? inc.size() - pos : semi - pos);
      pos = semi == std::string::npos ? inc.size() + 1 : semi + 1;
      std::string trimmed = normalize_whitespace(part);
      if (!trimmed.empty()) e.options.push_back(trimmed);
    }
    e.correct_index = 0;
    if (std::string cat = cell(c_category); !cat.empty()) e.category = cat;
    if (std::string ty = cell(c_type); !ty.empty()) e.qtype = qtype_from_string(ty);
    if (std::string src = cell(c_source); !src.empty()) e.source_note = src;
    finalize_entry(e, context);
    ds.entries.push_back(std::move(e));
  }
  validate_dataset(ds);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open dataset file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string name = path.stem().string();
  switch (format) {
    case FileFormat::jsonl: return parse_jsonl(buf.str(), std::move(name));
    case FileFormat::csv: return parse_truthfulqa_csv(buf.str(), std::move(name));
  }
  raise(ErrorKind::unsupported, "unknown dataset format");
}

std::string to_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& e : ds.entries) {
    ordered_json j;
    j["id"] = e.id;
    j["question"] = e.question;
    j["options"] = e.options;
    j["correct_index"] = e.correct_index;
    if (e.category) j["category"] = *e.category;
    if (e.qtype) j["type"] = to_string(*e.qtype);
    if (e.source_note) j["source_note"] = *e.source_note;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

void save_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write dataset file: " + path.string());
  out << to_jsonl(ds);
}

FilterResult filter(const Dataset& ds, const std::optional<std::string>& category,
                    const std::optional<QType>& qtype) {
  FilterResult res;
  res.dataset.name = ds.name;
  res.dataset.release_date = ds.release_date;
  if (category) res.dataset.name += " [category=" + *category + "]";
  if (qtype) res.dataset.name += " [type=" + to_string(*qtype) + "]";
  for (const auto& e : ds.entries) {
    if (category && (!e.category || *e.category != *category)) continue;
    if (qtype && (!e.qtype || *e.qtype != *qtype)) continue;
    res.dataset.entries.push_back(e);
  }
  res.empty_warning = res.dataset.entries.empty();
  return res;
}

CanonicalText canonical_text(const Entry& e) {
  std::string q = e.question;
  while (!q.empty() && std::isspace(static_cast<unsigned char>(q.back()))) q.pop_back();
  if (q.empty() || q.back() != '?') q.push_back('?');
  std::vector<std::string> opts = e.options;
  std::sort(opts.begin(), opts.end(), [](const std::string& a, const std::string& b) {
    return alpha_less(a, b);
  });
  std::string text = q;
  for (const auto& opt : opts) {
    text.push_back('\n');
    text += opt;
  }
  return CanonicalText{std::move(text)};
}

std::vector<Entry> sample_without_replacement(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.entries.size())
    raise(ErrorKind::capacity, "cannot sample " + std::to_string(n) + " entries from \"" + ds.name +
                                   "\" of size " + std::to_string(ds.entries.size()));
  std::vector<std::size_t> idx(ds.entries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng::CounterRng gen(seed, rng::derive_seed(0, "sample_without_replacement"));
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(gen.next_below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Entry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ds.entries[idx[i]]);
  return out;
}

DatasetPair make_pair(Dataset target, Dataset retro) {
  validate_dataset(target);
  validate_dataset(retro);
  std::unordered_set<std::string> target_ids;
  std::unordered_set<std::string> target_questions;
  for (const auto& e : target.entries) {
    target_ids.insert(e.id);
    target_questions.insert(normalize_whitespace(e.question));
  }
  for (const auto& e : retro.entries) {
    if (target_ids.count(e.id))
      raise(ErrorKind::validation, "datasets share entry id \"" + e.id + "\"");
    if (target_questions.count(normalize_whitespace(e.question)))
      raise(ErrorKind::validation, "datasets share question text: \"" + e.question + "\"");
  }
  return DatasetPair{std::move(target), std::move(retro)};
}

} // namespace retro::data
