#include "necho/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace necho {

double MissingnessSpec::probability(Modality m) const {
  switch (m) {
    case Modality::kDemographics: return p_demo;
    case Modality::kNote: return p_note;
    case Modality::kCodes: return p_codes;
  }
  return 0.0;
}

void MissingnessSpec::validate() const {
  for (double p : {p_demo, p_note, p_codes}) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw std::invalid_argument("missingness: probabilities must lie in [0, 1), got " + to_string());
    }
  }
}

MissingnessSpec MissingnessSpec::parse(const std::string& text) {
  std::string cleaned;
  for (char ch : text) {
    if (ch == '(' || ch == ')') continue;
    cleaned.push_back(ch == ',' ? ' ' : ch);
  }
  std::istringstream in(cleaned);
  MissingnessSpec s;
  std::string extra;
  if (!(in >> s.p_demo >> s.p_note >> s.p_codes) || (in >> extra)) {
    throw std::invalid_argument("missingness: expected \"(p_D, p_N, p_C)\", got \"" + text + "\"");
  }
  s.validate();
  return s;
}

std::string MissingnessSpec::to_string() const {
  auto fmt = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  return "(" + fmt(p_demo) + ", " + fmt(p_note) + ", " + fmt(p_codes) + ")";
}

PatientRecord apply_missingness(const PatientRecord& record, const MissingnessSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  PatientRecord out = record;
  if (out.visits.size() < 2) return out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::array<double, 3> p = {spec.p_demo, spec.p_note, spec.p_codes};
  for (std::size_t t = 0; t + 1 < out.visits.size(); ++t) {
    auto& flags = out.visits[t].present.flags;
    const auto before = flags;
    do {
      for (std::size_t m = 0; m < 3; ++m) flags[m] = before[m] && !(unit(rng) < p[m]);
    } while (!out.visits[t].present.any());
  }
  return out;
}

std::array<double, 3> conditional_missing_rates(const MissingnessSpec& spec) {
  const std::array<double, 3> p = {spec.p_demo, spec.p_note, spec.p_codes};
  std::array<double, 3> missing = {0.0, 0.0, 0.0};
  double kept = 0.0;
  for (int id = 1; id < 8; ++id) {
    const Presence mask = Presence::from_pattern_id(id);
    double prob = 1.0;
    for (std::size_t m = 0; m < 3; ++m) prob *= mask.flags[m] ? 1.0 - p[m] : p[m];
    kept += prob;
    for (std::size_t m = 0; m < 3; ++m) {
      if (!mask.flags[m]) missing[m] += prob;
    }
  }
  for (double& x : missing) x /= kept;
  return missing;
}

void CurriculumSchedule::validate() const {
  if (e1 < 0 || e2 < 0 || e1 >= e2) throw std::invalid_argument("curriculum: need 0 <= e1 < e2");
  for (const auto* menu : {&teacher_early_menu, &teacher_late_menu, &distill_late_menu}) {
    if (menu->empty()) throw std::invalid_argument("curriculum: empty probability menu");
    for (double p : *menu) {
      if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("curriculum: menu entries must lie in [0, 1)");
    }
  }
}

double sample_erase_probability(int epoch, ErasePhase phase, const CurriculumSchedule& schedule,
                                std::mt19937_64& rng) {
  if (epoch < 0) throw std::invalid_argument("curriculum: negative epoch");
  const std::vector<double>* menu = nullptr;
  if (phase == ErasePhase::kTeacherTraining) {
    menu = epoch < schedule.e1 ? &schedule.teacher_early_menu : &schedule.teacher_late_menu;
  } else {
    if (epoch < schedule.e2) return 0.0;
    menu = &schedule.distill_late_menu;
  }
  std::uniform_int_distribution<std::size_t> pick(0, menu->size() - 1);
  return (*menu)[pick(rng)];
}

PatientRecord curriculum_erase(const PatientRecord& record, double p, std::mt19937_64& rng,
                               const EraseOptions& options) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("curriculum_erase: p must lie in [0, 1)");
  PatientRecord out = record;
  if (p == 0.0 || out.visits.size() < 2) return out;
  const std::size_t inputs = out.visits.size() - 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto erasable = [&](std::size_t t, Modality m) {
    const Presence& pr = out.visits[t].present;
    return pr[m] && pr.count() > 1;
  };

  for (Modality m : kModalities) {
    if (options.mode == EraseMode::kPerVisit) {
      for (std::size_t t = 0; t < inputs; ++t) {
        if (unit(rng) < p && erasable(t, m)) out.visits[t].present[m] = false;
      }
      continue;
    }
    if (!(unit(rng) < p)) continue;
    for (int point = 0; point < options.points_per_record; ++point) {
      std::vector<std::size_t> candidates;
      for (std::size_t t = 0; t < inputs; ++t) {
        if (erasable(t, m)) candidates.push_back(t);
      }
      if (candidates.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      out.visits[candidates[pick(rng)]].present[m] = false;
    }
  }
  return out;
}

}  // namespace necho
