#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "necho/missingness.hpp"
#include "support.hpp"

using namespace necho;

namespace {

PatientRecord complete_record(int visits, std::int64_t id = 1) {
  PatientRecord r;
  r.patient_id = id;
  for (int t = 0; t < visits; ++t) {
    Visit v;
    v.demographics = {0, 1};
    v.note = {1, 2, 3};
    v.codes = {t};
    r.visits.push_back(v);
  }
  return r;
}

// P(modality missing | not all missing), enumerating masks by hand.
std::array<double, 3> enumerated_rates(const std::array<double, 3>& p) {
  std::array<double, 3> missing{};
  double kept = 0.0;
  for (int mask = 0; mask < 8; ++mask) {  // bit set = missing
    double w = 1.0;
    for (int m = 0; m < 3; ++m) w *= (mask >> m & 1) ? p[m] : 1.0 - p[m];
    if (mask == 7) continue;
    kept += w;
    for (int m = 0; m < 3; ++m) {
      if (mask >> m & 1) missing[m] += w;
    }
  }
  for (double& x : missing) x /= kept;
  return missing;
}

}  // namespace

TEST_CASE("spec parsing and validation") {
  CHECK(MissingnessSpec::parse("(0.5, 0.2, 0.8)") == MissingnessSpec{0.5, 0.2, 0.8});
  CHECK(MissingnessSpec::parse("0.1,0,0.3") == MissingnessSpec{0.1, 0.0, 0.3});
  CHECK(MissingnessSpec::parse(MissingnessSpec{0.5, 0.2, 0.8}.to_string()) == MissingnessSpec{0.5, 0.2, 0.8});
  CHECK_THROWS(MissingnessSpec::parse("(0.5, 0.5)"));
  CHECK_THROWS(MissingnessSpec::parse("(a, b, c)"));
  CHECK_THROWS(MissingnessSpec{1.0, 1.0, 1.0}.validate());
  CHECK_THROWS(MissingnessSpec{-0.1, 0.0, 0.0}.validate());
  CHECK_THROWS(MissingnessSpec{1.0, 0.0, 0.0}.validate());
}

TEST_CASE("zero spec leaves records unchanged") {
  const auto r = complete_record(4);
  std::mt19937_64 rng(1);
  CHECK(apply_missingness(r, {}, rng) == r);

  auto corrupted = apply_missingness(r, {0.5, 0.5, 0.5}, rng);
  CHECK(apply_missingness(corrupted, {}, rng) == corrupted);
}

TEST_CASE("last visit is never corrupted") {
  const auto r = complete_record(3);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) CHECK(apply_missingness(r, {0.9, 0.9, 0.9}, rng).visits.back().present.complete());
}

TEST_CASE("corruption is deterministic under the rng seed") {
  const auto r = complete_record(6);
  std::mt19937_64 a(11), b(11);
  CHECK(apply_missingness(r, {0.5, 0.3, 0.6}, a) == apply_missingness(r, {0.5, 0.3, 0.6}, b));
}

TEST_CASE("seven patterns and rejection-conditioned marginals") {
  for (const MissingnessSpec spec : {MissingnessSpec{0.5, 0.5, 0.5}, MissingnessSpec{0.8, 0.2, 0.8}}) {
    const auto r = complete_record(11);  // 10 input visits per record
    std::mt19937_64 rng(7);
    std::map<int, int> patterns;
    std::array<double, 3> missing{};
    int visits = 0;
    while (visits < 100000) {
      const auto c = apply_missingness(r, spec, rng);
      for (std::size_t t = 0; t + 1 < c.visits.size(); ++t) {
        const auto& p = c.visits[t].present;
        patterns[p.pattern_id()]++;
        for (int m = 0; m < 3; ++m) missing[static_cast<std::size_t>(m)] += p.flags[static_cast<std::size_t>(m)] ? 0 : 1;
        ++visits;
      }
    }
    CHECK(patterns.size() == 7);
    CHECK(patterns.count(0) == 0);
    const auto expected = enumerated_rates({spec.p_demo, spec.p_note, spec.p_codes});
    const auto library = conditional_missing_rates(spec);
    for (std::size_t m = 0; m < 3; ++m) {
      CHECK(library[m] == doctest::Approx(expected[m]).epsilon(1e-12));
      CHECK(std::abs(missing[m] / visits - expected[m]) < 0.01);
    }
  }
}

TEST_CASE("symmetric spec marginal has a closed form") {
  // p / (1 - p^3) * (1 - p^2) for p = 0.5 gives 3/7.
  CHECK(conditional_missing_rates({0.5, 0.5, 0.5})[0] == doctest::Approx(3.0 / 7.0));
}

TEST_CASE("curriculum menus by phase and epoch") {
  const CurriculumSchedule s;
  std::mt19937_64 rng(3);
  auto freq = [&](int epoch, ErasePhase phase) {
    std::map<double, int> counts;
    for (int i = 0; i < 30000; ++i) counts[sample_erase_probability(epoch, phase, s, rng)]++;
    std::map<double, double> f;
    for (auto [p, n] : counts) f[p] = n / 30000.0;
    return f;
  };
  const auto early = freq(3, ErasePhase::kTeacherTraining);
  CHECK(early.size() == 2);
  CHECK(std::abs(early.at(0.0) - 0.5) < 0.02);
  CHECK(std::abs(early.at(0.1) - 0.5) < 0.02);

  const auto late = freq(7, ErasePhase::kTeacherTraining);
  CHECK(late.size() == 3);
  for (double p : {0.0, 0.1, 0.2}) CHECK(std::abs(late.at(p) - 1.0 / 3.0) < 0.02);

  const auto warm = freq(2, ErasePhase::kDistillation);
  CHECK(warm.size() == 1);
  CHECK(warm.at(0.0) == 1.0);

  const auto after = freq(10, ErasePhase::kDistillation);
  CHECK(after.size() == 2);
  CHECK(std::abs(after.at(0.1) - 0.5) < 0.02);

  CHECK(freq(4, ErasePhase::kTeacherTraining).size() == 2);
  CHECK(freq(5, ErasePhase::kTeacherTraining).size() == 3);
  CHECK(freq(9, ErasePhase::kDistillation).size() == 1);
}

TEST_CASE("schedule validation") {
  CurriculumSchedule s;
  s.e1 = 10;
  s.e2 = 5;
  CHECK_THROWS(s.validate());
  s = {};
  s.teacher_late_menu.clear();
  CHECK_THROWS(s.validate());
  s = {};
  s.distill_late_menu = {1.0};
  CHECK_THROWS(s.validate());
}

TEST_CASE("curriculum erase") {
  SUBCASE("p = 0 is the identity") {
    const auto r = complete_record(5);
    std::mt19937_64 rng(1);
    CHECK(curriculum_erase(r, 0.0, rng) == r);
  }
  SUBCASE("erase frequency matches p") {
    const auto r = complete_record(4);
    std::mt19937_64 rng(5);
    int erased = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto c = curriculum_erase(r, 0.1, rng);
      int slots = 0;
      for (const auto& v : c.visits) slots += v.present[Modality::kDemographics] ? 0 : 1;
      CHECK(slots <= 1);
      erased += slots > 0;
    }
    CHECK(std::abs(erased / static_cast<double>(n) - 0.1) < 0.005);
  }
  SUBCASE("a visit's last present modality survives") {
    auto r = complete_record(2);
    r.visits[0].present = Presence::from_pattern_id(4);  // codes only
    std::mt19937_64 rng(8);
    for (int i = 0; i < 2000; ++i) {
      const auto c = curriculum_erase(r, 0.9, rng);
      CHECK(c.visits[0].present[Modality::kCodes]);
      CHECK(c.visits[0].present.any());
    }
  }
  SUBCASE("per-visit mode erases independently at every input visit") {
    const auto r = complete_record(6);
    std::mt19937_64 rng(9);
    EraseOptions opts;
    opts.mode = EraseMode::kPerVisit;
    int slots = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const auto c = curriculum_erase(r, 0.2, rng, opts);
      for (const auto& v : c.visits) {
        slots += v.present[Modality::kNote] ? 0 : 1;
        CHECK(v.present.any());
      }
    }
    // Five input visits each erased with probability close to 0.2, less the rare guard skips.
    CHECK(slots / static_cast<double>(n * 5) == doctest::Approx(0.2).epsilon(0.05));
  }
  SUBCASE("never produces an all-missing visit") {
    const auto base = complete_record(3);
    std::mt19937_64 rng(10);
    for (int i = 0; i < 5000; ++i) {
      const auto c = curriculum_erase(apply_missingness(base, {0.6, 0.6, 0.6}, rng), 0.9, rng);
      for (const auto& v : c.visits) CHECK(v.present.any());
    }
  }
}

TEST_CASE("presence labels and pattern ids") {
  CHECK(Presence::from_pattern_id(7).complete());
  CHECK(Presence::from_pattern_id(5).label() == "D-C");
  for (int id = 1; id < 8; ++id) CHECK(Presence::from_pattern_id(id).pattern_id() == id);
  CHECK_THROWS(Presence::from_pattern_id(0));
}
