#pragma once

// Hierarchical multimodal EHR data model: ontology, visits, patient records,
// the synthetic cohort generator, missing-value encoding, the line-delimited
// dataset format and patient-level splitting.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace necho {

// Three-level diagnosis hierarchy: unique (leaf) -> category -> typing (root).
struct Ontology {
  int typing_count = 0;
  int category_count = 0;
  int unique_count = 0;
  std::vector<int> category_of_unique;  // size unique_count
  std::vector<int> typing_of_category;  // size category_count

  int typing_of_unique(int unique_code) const {
    return typing_of_category[static_cast<std::size_t>(category_of_unique[static_cast<std::size_t>(unique_code)])];
  }
  // Throws std::invalid_argument when the parent maps do not form a tree.
  void validate() const;

  bool operator==(const Ontology&) const = default;
};

// Uniformly random tree with every category and every typing code covering at
// least one child. Counts must satisfy 0 < typing <= category <= unique.
Ontology build_ontology(int typing_count, int category_count, int unique_count,
                        std::mt19937_64& rng);

enum class Modality : int { kDemographics = 0, kNote = 1, kCodes = 2 };
inline constexpr std::array<Modality, 3> kModalities = {Modality::kDemographics, Modality::kNote,
                                                        Modality::kCodes};
const char* modality_name(Modality m);

// Per-visit modality presence flags.
struct Presence {
  std::array<bool, 3> flags = {true, true, true};

  bool operator[](Modality m) const { return flags[static_cast<std::size_t>(m)]; }
  bool& operator[](Modality m) { return flags[static_cast<std::size_t>(m)]; }
  bool any() const { return flags[0] || flags[1] || flags[2]; }
  bool complete() const { return flags[0] && flags[1] && flags[2]; }
  int count() const { return int(flags[0]) + int(flags[1]) + int(flags[2]); }
  // 1..7 for legal patterns (bit 0 demo, bit 1 note, bit 2 codes); 0 = all missing.
  int pattern_id() const { return int(flags[0]) | (int(flags[1]) << 1) | (int(flags[2]) << 2); }
  static Presence from_pattern_id(int id);
  // e.g. "D-C" for demographics and codes present, note missing.
  std::string label() const;

  bool operator==(const Presence&) const = default;
};

struct Visit {
  std::vector<int> demographics;  // one categorical index per field
  std::vector<int> note;          // token ids
  std::vector<int> codes;         // sorted, distinct unique-code ids
  Presence present;

  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::int64_t patient_id = 0;
  std::vector<Visit> visits;  // temporal order; the last one is the prediction target

  bool operator==(const PatientRecord&) const = default;
};

struct DatasetConfig {
  int typing_count = 5;
  int category_count = 25;
  int unique_count = 200;
  std::vector<int> demographic_cardinalities = {2, 9, 5};
  int note_vocab_size = 500;
  int max_note_length = 32;
  int max_visits = 8;
  int patient_count = 2000;
  // Scales every structured effect in the code dynamics; 0 gives uniform,
  // history-independent visits.
  double transition_sharpness = 1.0;
  std::uint64_t seed = 42;

  void validate() const;

  int code_sentinel() const { return unique_count; }
  int demographic_sentinel(std::size_t field) const { return demographic_cardinalities[field]; }
  int unk_token() const { return note_vocab_size; }

  bool operator==(const DatasetConfig&) const = default;
};

struct Dataset {
  DatasetConfig config;
  Ontology ontology;
  std::vector<PatientRecord> patients;

  bool operator==(const Dataset&) const = default;
};

// Checks the visit-level invariants against a config/ontology pair.
void validate_visit(const Visit& visit, const DatasetConfig& config);

// Synthetic cohort: first-order Markov dynamics over category codes with
// demographic and per-patient effects, code-conditioned note tokens.
Dataset generate_dataset(const DatasetConfig& config);

// A visit with sentinels substituted for missing modalities.
struct EncodedVisit {
  std::vector<int> demographics;
  std::vector<int> note;
  std::vector<int> codes;
  Presence present;

  bool operator==(const EncodedVisit&) const = default;
};

// Missing codes become {unique_count}, missing demographic fields become their
// cardinality, a missing note becomes max_note_length UNK tokens.
EncodedVisit encode_missing(const Visit& visit, const DatasetConfig& config);

class DatasetFormatError : public std::runtime_error {
 public:
  DatasetFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// One JSON header line (config, ontology, sentinels, record count), then one
// JSON object per patient.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
std::string serialize_dataset(const Dataset& dataset);
Dataset deserialize_dataset(std::string_view text);

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

struct DatasetSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> valid;
  std::vector<PatientRecord> test;
};

// Patient-level split. Ratios must be positive and sum to 1; each split gets
// at least one patient.
DatasetSplit split_dataset(const std::vector<PatientRecord>& records,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

// Cohort statistics with the same rows as the reference preprocessing table.
struct DatasetStats {
  std::size_t patients = 0;
  int unique_codes = 0;
  int category_codes = 0;
  int typing_codes = 0;
  std::size_t visits = 0;
  double avg_visits_per_patient = 0.0;
  std::size_t max_visits_per_patient = 0;
  double avg_unique_per_visit = 0.0;
  std::size_t max_unique_per_visit = 0;
  double avg_category_per_visit = 0.0;
  std::size_t max_category_per_visit = 0;
  double avg_typing_per_visit = 0.0;
  std::size_t max_typing_per_visit = 0;
};

DatasetStats compute_stats(const Dataset& dataset);
std::string format_stats(const DatasetStats& stats);

// Distinct category / typing sets of a unique-code set.
std::vector<int> categories_of(const std::vector<int>& codes, const Ontology& ontology);
std::vector<int> typings_of(const std::vector<int>& codes, const Ontology& ontology);

// Deterministic 64-bit mixing used to derive independent rng streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace necho
