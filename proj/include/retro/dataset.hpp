#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace retro::data {

enum class QType { adversarial, non_adversarial };

std::string to_string(QType t);
QType qtype_from_string(std::string_view s);

// One benchmark item. Immutable after dataset construction.
struct Entry {
  std::string id;
  std::string question;
  std::vector<std::string> options; // >= 2, pairwise distinct after whitespace normalization
  int correct_index = 0;            // index into options
  std::optional<std::string> category;
  std::optional<QType> qtype;
  std::optional<std::string> source_note;
};

struct Dataset {
  std::string name;
  std::vector<Entry> entries;
  std::optional<std::string> release_date; // ISO date, e.g. "2021-09-06"

  std::size_t size() const { return entries.size(); }
};

// The (public target, retro-holdout candidate) pair under comparison.
struct DatasetPair {
  Dataset target;
  Dataset retro;
};

// Serialized form of an entry used as the embedding unit: question
// terminated "?\n", then the options in alphabetical order, one per line.
struct CanonicalText {
  std::string text;
};

enum class FileFormat { jsonl, csv };

struct FilterResult {
  Dataset dataset;
  bool empty_warning = false;
};

// Alphabetical option ordering: ASCII case-folded lexicographic compare on
// the UTF-8 bytes (= code point order), ties broken case-sensitively.
bool alpha_less(std::string_view a, std::string_view b);

// Collapses whitespace runs to single spaces and trims; the equality key
// used by the distinct-options and distinct-questions invariants.
std::string normalize_whitespace(std::string_view s);

// Validates one entry and assigns a content-hash id if none present.
void finalize_entry(Entry& e, std::string_view context);

// Validates dataset-level invariants (non-empty, unique ids).
void validate_dataset(const Dataset& ds);

Dataset load_dataset(const std::filesystem::path& path, FileFormat format);
Dataset parse_jsonl(std::string_view text, std::string name);
Dataset parse_truthfulqa_csv(std::string_view text, std::string name);

std::string to_jsonl(const Dataset& ds);
void save_jsonl(const Dataset& ds, const std::filesystem::path& path);

// Entries matching every supplied predicate, original order kept. The
// result name records the filter; an empty result is flagged, not an error.
FilterResult filter(const Dataset& ds, const std::optional<std::string>& category,
                    const std::optional<QType>& qtype);

CanonicalText canonical_text(const Entry& e);

// n distinct entries, deterministic for a fixed seed.
std::vector<Entry> sample_without_replacement(const Dataset& ds, std::size_t n, std::uint64_t seed);

// Validates the pair invariants: disjoint ids, no shared question text.
DatasetPair make_pair(Dataset target, Dataset retro);

} // namespace retro::data
