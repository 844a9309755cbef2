#include "retro/survey.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "retro/csv.hpp"
#include "retro/error.hpp"
#include "retro/hash.hpp"
#include "retro/rng.hpp"

namespace retro::survey {

using nlohmann::json;

namespace {

constexpr int kExamplesPerRole = 10;
constexpr int kNumTests = 10;
constexpr int kTargetPerTest = 2;
constexpr int kNumAttentiveness = 3;
constexpr int kAttentivenessBase = 100; // test_index 101..103

const char* kInstructions =
    "Instructions\n"
    "\n"
    "This form assesses to what extent humans are able to distinguish two datasets.\n"
    "\n"
    "You will be presented with a number of tests. Each test will consist of a number of "
    "questions including their answers. One of these questions comes from a different dataset "
    "than the others.\n"
    "\n"
    "Your task is to identify which question comes from a different dataset than the others.\n"
    "\n"
    "You will be shown a number of examples from the two datasets to give you an opportunity to "
    "identify high-level patterns.\n"
    "\n"
    "Please do not look up these datasets nor google the answers - use your own best judgement.";

const char* kOrdinals[3] = {"first", "second", "third"};

std::string render_entry(const data::Entry& e) {
  std::string out = e.question;
  for (const auto& opt : e.options) {
    out += "\n- ";
    out += opt;
  }
  return out;
}

} // namespace

GeneratedSurvey generate_survey(const data::DatasetPair& pair, std::uint64_t seed) {
  const std::size_t need_target = kExamplesPerRole + kNumTests * kTargetPerTest; // 30
  const std::size_t need_retro = kExamplesPerRole + kNumTests;                   // 20
  if (pair.target.size() < need_target)
    raise(ErrorKind::capacity, "survey needs at least " + std::to_string(need_target) +
                                   " target entries, have " + std::to_string(pair.target.size()));
  if (pair.retro.size() < need_retro)
    raise(ErrorKind::capacity, "survey needs at least " + std::to_string(need_retro) +
                                   " retro entries, have " + std::to_string(pair.retro.size()));

  auto target_draw =
      data::sample_without_replacement(pair.target, need_target, rng::derive_seed(seed, "survey_target"));
  auto retro_draw =
      data::sample_without_replacement(pair.retro, need_retro, rng::derive_seed(seed, "survey_retro"));

  GeneratedSurvey out;
  out.form.seed = seed;
  out.form.instructions = kInstructions;
  out.form.target_examples.assign(target_draw.begin(), target_draw.begin() + kExamplesPerRole);
  out.form.retro_examples.assign(retro_draw.begin(), retro_draw.begin() + kExamplesPerRole);

  rng::CounterRng gen(seed, rng::derive_seed(0, "survey_layout"));
  for (int t = 0; t < kNumTests; ++t) {
    SurveyTest test;
    test.entries.push_back(target_draw[kExamplesPerRole + 2 * t]);
    test.entries.push_back(target_draw[kExamplesPerRole + 2 * t + 1]);
    test.entries.push_back(retro_draw[kExamplesPerRole + t]);
    int retro_pos = 2;
    // Fisher-Yates over the three display slots, tracking the retro entry.
    for (int i = 2; i > 0; --i) {
      int j = static_cast<int>(gen.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(test.entries[i], test.entries[j]);
      if (retro_pos == i) retro_pos = j;
      else if (retro_pos == j) retro_pos = i;
    }
    out.form.tests.push_back(std::move(test));
    out.key.test_answers.push_back(retro_pos);
  }

  for (int a = 0; a < kNumAttentiveness; ++a) {
    int required = static_cast<int>(gen.next_below(3));
    AttentivenessItem item;
    item.instruction = std::string("Attention check: select the ") + kOrdinals[required] +
                       " entry below, regardless of content.";
    item.options = {"This is a placeholder entry.", "This is another placeholder entry.",
                    "This is a third placeholder entry."};
    out.form.attentiveness.push_back(std::move(item));
    out.key.attentiveness_answers.push_back(required);
  }

  // Global uniqueness across the whole form.
  std::set<std::string> seen;
  auto check = [&](const data::Entry& e) {
    if (!seen.insert(e.id).second)
      raise(ErrorKind::validation, "survey drew entry \"" + e.id + "\" twice");
  };
  for (const auto& e : out.form.target_examples) check(e);
  for (const auto& e : out.form.retro_examples) check(e);
  for (const auto& t : out.form.tests)
    for (const auto& e : t.entries) check(e);

  std::string id_payload = std::to_string(seed);
  for (const auto& id : seen) {
    id_payload.push_back('\x1f');
    id_payload += id;
  }
  out.form.form_id = hash::sha256_hex(id_payload).substr(0, 16);
  out.key.form_id = out.form.form_id;
  return out;
}

ScoreBreakdown score_survey(const std::vector<ResponseRow>& responses, const SurveyKey& key) {
  struct Participant {
    std::map<int, int> answers; // test_index -> 0-based chosen position
  };
  std::map<std::string, Participant> participants;
  for (const auto& row : responses) {
    if (row.form_id && *row.form_id != key.form_id)
      raise(ErrorKind::mismatch, "response references unknown form id \"" + *row.form_id + "\"");
    bool is_test = row.test_index >= 1 && row.test_index <= static_cast<int>(key.test_answers.size());
    bool is_attention = row.test_index > kAttentivenessBase &&
                        row.test_index <= kAttentivenessBase +
                                              static_cast<int>(key.attentiveness_answers.size());
    if (!is_test && !is_attention)
      raise(ErrorKind::validation,
            "response row has unknown test_index " + std::to_string(row.test_index));
    if (row.chosen_entry_index < 1 || row.chosen_entry_index > 3)
      raise(ErrorKind::validation, "chosen_entry_index must be 1..3");
    participants[row.participant_id].answers[row.test_index] = row.chosen_entry_index - 1;
  }

  ScoreBreakdown out;
  for (const auto& [pid, part] : participants) {
    bool attentive = true;
    for (std::size_t a = 0; a < key.attentiveness_answers.size(); ++a) {
      auto it = part.answers.find(kAttentivenessBase + static_cast<int>(a) + 1);
      if (it == part.answers.end() || it->second != key.attentiveness_answers[a]) {
        attentive = false;
        break;
      }
    }
    if (!attentive) {
      ++out.participants_excluded;
      continue;
    }
    ++out.participants_scored;
    for (std::size_t t = 0; t < key.test_answers.size(); ++t) {
      auto it = part.answers.find(static_cast<int>(t) + 1);
      if (it == part.answers.end()) continue;
      ++out.total;
      if (it->second == key.test_answers[t]) ++out.correct;
    }
  }
  if (out.total == 0)
    raise(ErrorKind::degenerate_input, "no scorable survey answers after attentiveness exclusion");
  auto r = stats::binom_test(out.correct, out.total, 1.0 / 3.0, stats::Sidedness::two_sided);
  out.result = stats::TestResult::make(r.statistic, r.p_value, "selection accuracy 33.3%");
  return out;
}

std::vector<ResponseRow> parse_responses_csv(std::string_view text) {
  auto rows = csv::parse(text);
  if (rows.empty()) raise(ErrorKind::parse, "empty survey responses CSV");
  const auto& header = rows.front();
  auto col = [&](std::string_view want) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == want) return static_cast<int>(i);
    return -1;
  };
  int c_pid = col("participant_id");
  int c_test = col("test_index");
  int c_chosen = col("chosen_entry_index");
  int c_form = col("form_id");
  if (c_pid < 0 || c_test < 0 || c_chosen < 0)
    raise(ErrorKind::parse,
          "responses CSV needs participant_id, test_index and chosen_entry_index columns");
  std::vector<ResponseRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ResponseRow rr;
    rr.participant_id = row.at(static_cast<std::size_t>(c_pid));
    try {
      rr.test_index = std::stoi(row.at(static_cast<std::size_t>(c_test)));
      rr.chosen_entry_index = std::stoi(row.at(static_cast<std::size_t>(c_chosen)));
    } catch (const std::exception&) {
      raise(ErrorKind::parse, "responses CSV row " + std::to_string(r + 1) + ": bad integer");
    }
    if (c_form >= 0 && static_cast<std::size_t>(c_form) < row.size() && !row[c_form].empty())
      rr.form_id = row[c_form];
    out.push_back(std::move(rr));
  }
  return out;
}

std::string responses_to_csv(const std::vector<ResponseRow>& rows) {
  std::string out = "participant_id,test_index,chosen_entry_index,form_id\n";
  for (const auto& r : rows) {
    out += csv::format_row({r.participant_id, std::to_string(r.test_index),
                            std::to_string(r.chosen_entry_index), r.form_id.value_or("")});
  }
  return out;
}

namespace {

json entry_to_json(const data::Entry& e) {
  json j;
  j["id"] = e.id;
  j["question"] = e.question;
  j["options"] = e.options;
  j["correct_index"] = e.correct_index;
  return j;
}

data::Entry entry_from_json(const json& j) {
  data::Entry e;
  e.id = j.at("id").get<std::string>();
  e.question = j.at("question").get<std::string>();
  e.options = j.at("options").get<std::vector<std::string>>();
  e.correct_index = j.at("correct_index").get<int>();
  return e;
}

} // namespace

std::string form_to_json(const SurveyForm& form) {
  json j;
  j["form_id"] = form.form_id;
  j["seed"] = form.seed;
  j["instructions"] = form.instructions;
  j["target_examples"] = json::array();
  for (const auto& e : form.target_examples) j["target_examples"].push_back(entry_to_json(e));
  j["retro_examples"] = json::array();
  for (const auto& e : form.retro_examples) j["retro_examples"].push_back(entry_to_json(e));
  j["tests"] = json::array();
  for (const auto& t : form.tests) {
    json entries = json::array();
    for (const auto& e : t.entries) entries.push_back(entry_to_json(e));
    j["tests"].push_back({{"entries", std::move(entries)}});
  }
  j["attentiveness"] = json::array();
  for (const auto& a : form.attentiveness)
    j["attentiveness"].push_back({{"instruction", a.instruction}, {"options", a.options}});
  return j.dump(2) + "\n";
}

SurveyForm form_from_json(std::string_view text) {
  json j = json::parse(text);
  SurveyForm form;
  form.form_id = j.at("form_id").get<std::string>();
  form.seed = j.value("seed", 0ULL);
  form.instructions = j.at("instructions").get<std::string>();
  for (const auto& e : j.at("target_examples")) form.target_examples.push_back(entry_from_json(e));
  for (const auto& e : j.at("retro_examples")) form.retro_examples.push_back(entry_from_json(e));
  for (const auto& t : j.at("tests")) {
    SurveyTest test;
    for (const auto& e : t.at("entries")) test.entries.push_back(entry_from_json(e));
    form.tests.push_back(std::move(test));
  }
  for (const auto& a : j.value("attentiveness", json::array())) {
    AttentivenessItem item;
    item.instruction = a.at("instruction").get<std::string>();
    item.options = a.at("options").get<std::vector<std::string>>();
    form.attentiveness.push_back(std::move(item));
  }
  return form;
}

std::string key_to_json(const SurveyKey& key) {
  json j;
  j["form_id"] = key.form_id;
  j["test_answers"] = key.test_answers;
  j["attentiveness_answers"] = key.attentiveness_answers;
  return j.dump(2) + "\n";
}

SurveyKey key_from_json(std::string_view text) {
  json j = json::parse(text);
  SurveyKey key;
  key.form_id = j.at("form_id").get<std::string>();
  key.test_answers = j.at("test_answers").get<std::vector<int>>();
  key.attentiveness_answers = j.at("attentiveness_answers").get<std::vector<int>>();
  return key;
}

std::string form_to_markdown(const SurveyForm& form) {
  std::ostringstream md;
  md << "# Dataset Distinguishability Survey (" << form.form_id << ")\n\n";
  md << form.instructions << "\n\n";
  md << "## Examples from dataset A (target)\n\n";
  for (const auto& e : form.target_examples) md << render_entry(e) << "\n\n";
  md << "## Examples from dataset B (retro)\n\n";
  for (const auto& e : form.retro_examples) md << render_entry(e) << "\n\n";
  md << "## Tests\n\n";
  md << "For each test, mark the entry (1, 2 or 3) that comes from dataset B.\n\n";
  for (std::size_t t = 0; t < form.tests.size(); ++t) {
    md << "### Test " << (t + 1) << "\n\n";
    for (std::size_t i = 0; i < form.tests[t].entries.size(); ++i)
      md << (i + 1) << ". " << render_entry(form.tests[t].entries[i]) << "\n\n";
  }
  md << "## Attention checks\n\n";
  for (std::size_t a = 0; a < form.attentiveness.size(); ++a) {
    md << "### Check " << (a + 1) << " (answer as test index " << (kAttentivenessBase + a + 1)
       << ")\n\n";
    md << form.attentiveness[a].instruction << "\n\n";
    for (std::size_t i = 0; i < form.attentiveness[a].options.size(); ++i)
      md << (i + 1) << ". " << form.attentiveness[a].options[i] << "\n";
    md << "\n";
  }
  return md.str();
}

std::string form_to_html(const SurveyForm& form) {
  auto escape = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out.push_back(c);
      }
    }
    return out;
  };
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Survey " << form.form_id
       << "</title></head><body>\n";
  html << "<h1>Dataset Distinguishability Survey</h1>\n<pre>" << escape(form.instructions)
       << "</pre>\n";
  auto block = [&](const char* title, const std::vector<data::Entry>& entries) {
    html << "<h2>" << title << "</h2>\n";
    for (const auto& e : entries) html << "<pre>" << escape(render_entry(e)) << "</pre>\n";
  };
  block("Examples from dataset A (target)", form.target_examples);
  block("Examples from dataset B (retro)", form.retro_examples);
  html << "<h2>Tests</h2>\n";
  for (std::size_t t = 0; t < form.tests.size(); ++t) {
    html << "<h3>Test " << (t + 1) << "</h3>\n<ol>\n";
    for (const auto& e : form.tests[t].entries)
      html << "<li><pre>" << escape(render_entry(e)) << "</pre></li>\n";
    html << "</ol>\n";
  }
  html << "<h2>Attention checks</h2>\n";
  for (std::size_t a = 0; a < form.attentiveness.size(); ++a) {
    html << "<h3>Check " << (a + 1) << "</h3>\n<p>" << escape(form.attentiveness[a].instruction)
         << "</p>\n<ol>\n";
    for (const auto& opt : form.attentiveness[a].options)
      html << "<li>" << escape(opt) << "</li>\n";
    html << "</ol>\n";
  }
  html << "</body></html>\n";
  return html.str();
}

std::vector<ResponseRow> run_survey_with_model(const SurveyForm& form,
                                               eval::ChatProvider& provider) {
  std::vector<ResponseRow> rows;
  std::string preamble = form.instructions;
  preamble += "\n\nExamples from dataset A:\n\n";
  for (const auto& e : form.target_examples) preamble += render_entry(e) + "\n\n";
  preamble += "Examples from dataset B:\n\n";
  for (const auto& e : form.retro_examples) preamble += render_entry(e) + "\n\n";

  auto ask = [&](const std::string& body, int test_index) {
    std::string prompt = preamble + body +
                         "\nAnswer with a single number: 1, 2 or 3.";
    std::string raw = provider.complete(prompt, form.form_id + ":" + std::to_string(test_index));
    std::string norm = eval::normalize_response(raw);
    if (norm.size() > 1 && norm.back() == '.') norm.pop_back();
    int chosen = 0;
    if (norm == "1" || norm == "2" || norm == "3") chosen = norm[0] - '0';
    if (chosen == 0) return; // unparseable answer: item left unanswered
    rows.push_back({provider.model_id(), test_index, chosen, form.form_id});
  };

  for (std::size_t t = 0; t < form.tests.size(); ++t) {
    std::string body = "Which of the following three entries comes from dataset B?\n\n";
    for (std::size_t i = 0; i < form.tests[t].entries.size(); ++i)
      body += std::to_string(i + 1) + ". " + render_entry(form.tests[t].entries[i]) + "\n\n";
    ask(body, static_cast<int>(t) + 1);
  }
  for (std::size_t a = 0; a < form.attentiveness.size(); ++a) {
    std::string body = form.attentiveness[a].instruction + "\n\n";
    for (std::size_t i = 0; i < form.attentiveness[a].options.size(); ++i)
      body += std::to_string(i + 1) + ". " + form.attentiveness[a].options[i] + "\n";
    ask(body, kAttentivenessBase + static_cast<int>(a) + 1);
  }
  return rows;
}

} // namespace retro::survey
