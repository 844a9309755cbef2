#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/eval.hpp"
#include "retro/stats.hpp"
#include "retro/suite.hpp"

namespace retro::survey {

// One distinguishability test: three displayed entries, exactly one drawn
// from the retro dataset. The answer lives in the key, not the form.
struct SurveyTest {
  std::vector<data::Entry> entries; // size 3, display order
};

// Instructed-response check; participants failing any are excluded.
struct AttentivenessItem {
  std::string instruction;
  std::vector<std::string> options; // size 3
};

struct SurveyForm {
  std::string form_id;
  std::string instructions;
  std::vector<data::Entry> target_examples; // 10, labeled
  std::vector<data::Entry> retro_examples;  // 10, labeled
  std::vector<SurveyTest> tests;            // 10
  std::vector<AttentivenessItem> attentiveness; // 3
  std::uint64_t seed = 0;
};

struct SurveyKey {
  std::string form_id;
  std::vector<int> test_answers;          // 0-based retro position per test
  std::vector<int> attentiveness_answers; // 0-based required position per item
};

struct GeneratedSurvey {
  SurveyForm form;
  SurveyKey key;
};

// Draws 10+20 target entries and 10+10 retro entries without replacement;
// every entry appears exactly once across the whole form.
GeneratedSurvey generate_survey(const data::DatasetPair& pair, std::uint64_t seed);

// One answered item. Tests are numbered 1..10; attentiveness items 101..103.
// chosen_entry_index is 1-based display position.
struct ResponseRow {
  std::string participant_id;
  int test_index = 0;
  int chosen_entry_index = 0;
  std::optional<std::string> form_id;
};

struct ScoreBreakdown {
  stats::TestResult result;
  long correct = 0;
  long total = 0;
  long participants_scored = 0;
  long participants_excluded = 0;
};

// Pools all included participants' answers into one exact binomial test
// against the 1-in-3 chance level.
ScoreBreakdown score_survey(const std::vector<ResponseRow>& responses, const SurveyKey& key);

std::vector<ResponseRow> parse_responses_csv(std::string_view text);
std::string responses_to_csv(const std::vector<ResponseRow>& rows);

std::string form_to_json(const SurveyForm& form);
SurveyForm form_from_json(std::string_view text);
std::string key_to_json(const SurveyKey& key);
SurveyKey key_from_json(std::string_view text);
// Printable rendering for distribution to annotators.
std::string form_to_markdown(const SurveyForm& form);
std::string form_to_html(const SurveyForm& form);

// Model-as-annotator variant: each test rendered as a prompt through the
// chat provider; answers come back as response rows scored the usual way.
std::vector<ResponseRow> run_survey_with_model(const SurveyForm& form, eval::ChatProvider& provider);

} // namespace retro::survey
