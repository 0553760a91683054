#pragma once

// Uncertain-missingness corruption of visit sequences and the epoch-scheduled
// random erasing used while training and distilling the teacher.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "necho/ehr_data.hpp"

namespace necho {

// Per-modality drop probabilities, ordered (demographics, note, codes).
struct MissingnessSpec {
  double p_demo = 0.0;
  double p_note = 0.0;
  double p_codes = 0.0;

  double probability(Modality m) const;
  void validate() const;
  bool is_zero() const { return p_demo == 0.0 && p_note == 0.0 && p_codes == 0.0; }

  // Parses "(p_D, p_N, p_C)"; parentheses and whitespace optional.
  static MissingnessSpec parse(const std::string& text);
  std::string to_string() const;

  bool operator==(const MissingnessSpec&) const = default;
};

// Drops each modality of every input visit (all but the last, which is the
// prediction target) independently with its probability. A mask that would
// leave a visit with nothing is redrawn.
PatientRecord apply_missingness(const PatientRecord& record, const MissingnessSpec& spec,
                                std::mt19937_64& rng);

// Probability that a modality is missing after rejection of the all-missing
// pattern, by enumerating the 2^3 masks.
std::array<double, 3> conditional_missing_rates(const MissingnessSpec& spec);

enum class ErasePhase { kTeacherTraining, kDistillation };

struct CurriculumSchedule {
  int e1 = 5;
  int e2 = 10;
  std::vector<double> teacher_early_menu = {0.0, 0.1};
  std::vector<double> teacher_late_menu = {0.0, 0.1, 0.2};
  std::vector<double> distill_late_menu = {0.0, 0.1};

  void validate() const;

  bool operator==(const CurriculumSchedule&) const = default;
};

// Teacher training: uniform over the early menu before e1, the late menu
// after. Distillation: 0 before e2, uniform over the distillation menu after.
double sample_erase_probability(int epoch, ErasePhase phase, const CurriculumSchedule& schedule,
                                std::mt19937_64& rng);

enum class EraseMode {
  kSinglePoint,  // at most `points_per_record` visits per modality per record
  kPerVisit,     // every input visit independently
};

struct EraseOptions {
  EraseMode mode = EraseMode::kSinglePoint;
  int points_per_record = 1;

  bool operator==(const EraseOptions&) const = default;
};

// For each modality, with probability p erase it at `points_per_record`
// uniformly chosen input visits (single-point mode) or at each input visit
// independently (per-visit mode). Visits are only chosen where the erase
// keeps at least one modality present; with no such visit the erase is
// skipped.
PatientRecord curriculum_erase(const PatientRecord& record, double p, std::mt19937_64& rng,
                               const EraseOptions& options = {});

}  // namespace necho
