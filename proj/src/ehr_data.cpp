#include "necho/ehr_data.hpp"

#include "necho/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace necho {

using json = nlohmann::json;

namespace {

constexpr const char* kFormatName = "necho-ehr";
constexpr int kFormatVersion = 1;

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Draws `count` distinct indices with probability proportional to weights,
// one at a time.
std::vector<int> sample_without_replacement(std::vector<double> weights, int count,
                                            std::mt19937_64& rng) {
  std::vector<int> picked;
  count = std::min<int>(count, static_cast<int>(weights.size()));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int n = 0; n < count; ++n) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = unit(rng) * total;
    int chosen = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      chosen = static_cast<int>(i);
      u -= weights[i];
      if (u <= 0.0) break;
    }
    if (chosen < 0) break;
    picked.push_back(chosen);
    weights[static_cast<std::size_t>(chosen)] = 0.0;
  }
  return picked;
}

json record_to_json(const PatientRecord& r) {
  json visits = json::array();
  for (const auto& v : r.visits) {
    visits.push_back(json{{"d", v.demographics},
                          {"n", v.note},
                          {"c", v.codes},
                          {"p", {int(v.present.flags[0]), int(v.present.flags[1]),
                                 int(v.present.flags[2])}}});
  }
  return json{{"id", r.patient_id}, {"visits", std::move(visits)}};
}

}  // namespace

// ------------------------------------------------------------------ ontology

void Ontology::validate() const {
  check(typing_count > 0 && category_count > 0 && unique_count > 0, "ontology: counts must be positive");
  check(typing_count <= category_count && category_count <= unique_count,
        "ontology: counts must satisfy typing <= category <= unique");
  check(category_of_unique.size() == static_cast<std::size_t>(unique_count) &&
            typing_of_category.size() == static_cast<std::size_t>(category_count),
        "ontology: parent map sizes do not match counts");
  std::vector<int> category_children(static_cast<std::size_t>(category_count), 0);
  for (int c : category_of_unique) {
    check(c >= 0 && c < category_count, "ontology: unique code parent out of range");
    ++category_children[static_cast<std::size_t>(c)];
  }
  std::vector<int> typing_children(static_cast<std::size_t>(typing_count), 0);
  for (int t : typing_of_category) {
    check(t >= 0 && t < typing_count, "ontology: category parent out of range");
    ++typing_children[static_cast<std::size_t>(t)];
  }
  for (int n : category_children) check(n > 0, "ontology: category without unique children");
  for (int n : typing_children) check(n > 0, "ontology: typing code without category children");
}

namespace {

// Surjective random parent assignment: a random permutation guarantees one
// child per parent, the remainder picks parents uniformly.
std::vector<int> assign_parents(int children, int parents, std::mt19937_64& rng) {
  std::vector<int> order(static_cast<std::size_t>(children));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> parent_of(static_cast<std::size_t>(children));
  std::uniform_int_distribution<int> any(0, parents - 1);
  for (int i = 0; i < children; ++i) {
    parent_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i < parents ? i : any(rng);
  }
  return parent_of;
}

}  // namespace

Ontology build_ontology(int typing_count, int category_count, int unique_count, std::mt19937_64& rng) {
  check(typing_count > 0 && category_count > 0 && unique_count > 0,
        "build_ontology: counts must be positive");
  check(typing_count <= category_count && category_count <= unique_count,
        "build_ontology: counts must satisfy typing <= category <= unique");
  Ontology o;
  o.typing_count = typing_count;
  o.category_count = category_count;
  o.unique_count = unique_count;
  o.category_of_unique = assign_parents(unique_count, category_count, rng);
  o.typing_of_category = assign_parents(category_count, typing_count, rng);
  return o;
}

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kDemographics: return "demo";
    case Modality::kNote: return "note";
    case Modality::kCodes: return "codes";
  }
  return "?";
}

Presence Presence::from_pattern_id(int id) {
  if (id < 1 || id > 7) throw std::invalid_argument("presence pattern id must be in 1..7");
  Presence p;
  p.flags = {(id & 1) != 0, (id & 2) != 0, (id & 4) != 0};
  return p;
}

std::string Presence::label() const {
  std::string s = "---";
  if (flags[0]) s[0] = 'D';
  if (flags[1]) s[1] = 'N';
  if (flags[2]) s[2] = 'C';
  return s;
}

// ------------------------------------------------------------------ config

void DatasetConfig::validate() const {
  check(typing_count > 0 && category_count > 0 && unique_count > 0,
        "dataset config: ontology counts must be positive");
  check(typing_count <= category_count && category_count <= unique_count,
        "dataset config: ontology counts must satisfy typing <= category <= unique");
  check(!demographic_cardinalities.empty(), "dataset config: need at least one demographic field");
  for (int c : demographic_cardinalities) check(c > 0, "dataset config: demographic cardinality must be positive");
  check(note_vocab_size > 0, "dataset config: note_vocab_size must be positive");
  check(max_note_length > 0 && max_note_length <= 64, "dataset config: max_note_length must be in [1, 64]");
  check(max_visits >= 2, "dataset config: max_visits must be >= 2");
  check(patient_count >= 0, "dataset config: patient_count must be >= 0");
  check(transition_sharpness >= 0.0 && std::isfinite(transition_sharpness),
        "dataset config: transition_sharpness must be finite and >= 0");
}

void validate_visit(const Visit& visit, const DatasetConfig& config) {
  check(visit.present.any(), "visit: all modalities missing");
  check(visit.demographics.size() == config.demographic_cardinalities.size(),
        "visit: demographic field count mismatch");
  for (std::size_t f = 0; f < visit.demographics.size(); ++f) {
    check(visit.demographics[f] >= 0 && visit.demographics[f] < config.demographic_cardinalities[f],
          "visit: demographic value out of range");
  }
  check(visit.note.size() <= static_cast<std::size_t>(config.max_note_length),
        "visit: note longer than max_note_length");
  for (int tok : visit.note) check(tok >= 0 && tok < config.note_vocab_size, "visit: note token out of range");
  if (visit.present[Modality::kCodes]) check(!visit.codes.empty(), "visit: present code set is empty");
  if (visit.present[Modality::kNote]) check(!visit.note.empty(), "visit: present note is empty");
  for (int c : visit.codes) {
    check(c >= 0 && c < config.unique_count, "visit: code id " + std::to_string(c) + " out of range");
  }
}

// ------------------------------------------------------------------ generator

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr int kSignatureTokens = 6;
constexpr int kStrongSuccessors = 3;
constexpr double kStrongSuccessorBoost = 1.6;
constexpr double kTransitionNoise = 0.3;
constexpr double kDemographicEffect = 0.6;
constexpr double kPatientEffect = 0.4;
constexpr double kExtraVisitProbability = 0.58;  // geometric tail, mean ~1.4 extra visits
constexpr double kExtraCategoriesMean = 2.5;
constexpr double kSecondUniqueProbability = 0.4;
constexpr double kSignatureTokenProbability = 0.8;

struct CohortModel {
  std::vector<std::vector<double>> transition;          // [category][category]
  std::vector<std::vector<std::vector<double>>> demo;   // [field][value][category]
  std::vector<std::vector<int>> signature;              // [category] -> tokens
  std::vector<std::vector<int>> children;               // [category] -> unique codes
  std::vector<double> unique_weight;                    // [unique]
};

CohortModel build_cohort_model(const DatasetConfig& cfg, const Ontology& onto, std::mt19937_64& rng) {
  CohortModel m;
  const auto C = static_cast<std::size_t>(cfg.category_count);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> any_cat(0, cfg.category_count - 1);
  std::uniform_int_distribution<int> any_tok(0, cfg.note_vocab_size - 1);

  m.transition.assign(C, std::vector<double>(C, 0.0));
  for (auto& row : m.transition) {
    for (double& x : row) x = kTransitionNoise * normal(rng);
    for (int s = 0; s < kStrongSuccessors; ++s) row[static_cast<std::size_t>(any_cat(rng))] += kStrongSuccessorBoost;
  }
  m.demo.resize(cfg.demographic_cardinalities.size());
  for (std::size_t f = 0; f < m.demo.size(); ++f) {
    m.demo[f].assign(static_cast<std::size_t>(cfg.demographic_cardinalities[f]), std::vector<double>(C));
    for (auto& row : m.demo[f]) {
      for (double& x : row) x = kDemographicEffect * normal(rng);
    }
  }
  m.signature.resize(C);
  for (auto& sig : m.signature) {
    for (int i = 0; i < kSignatureTokens; ++i) sig.push_back(any_tok(rng));
  }
  m.children.resize(C);
  for (int u = 0; u < onto.unique_count; ++u) {
    m.children[static_cast<std::size_t>(onto.category_of_unique[static_cast<std::size_t>(u)])].push_back(u);
  }
  m.unique_weight.resize(static_cast<std::size_t>(onto.unique_count));
  for (double& w : m.unique_weight) w = std::exp(normal(rng));
  return m;
}

PatientRecord generate_patient(const DatasetConfig& cfg, const CohortModel& model, std::int64_t id,
                               std::mt19937_64& rng) {
  const auto C = static_cast<std::size_t>(cfg.category_count);
  const double s = cfg.transition_sharpness;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PatientRecord rec;
  rec.patient_id = id;

  std::vector<int> demo;
  for (int card : cfg.demographic_cardinalities) demo.push_back(std::uniform_int_distribution<int>(0, card - 1)(rng));

  std::vector<double> base(C, 0.0);
  for (std::size_t j = 0; j < C; ++j) {
    for (std::size_t f = 0; f < demo.size(); ++f) base[j] += model.demo[f][static_cast<std::size_t>(demo[f])][j];
    base[j] += kPatientEffect * normal(rng);
  }

  int visit_count = 2;
  while (visit_count < cfg.max_visits && unit(rng) < kExtraVisitProbability) ++visit_count;

  std::poisson_distribution<int> extra_categories(kExtraCategoriesMean);
  std::vector<int> previous;
  for (int t = 0; t < visit_count; ++t) {
    std::vector<double> weights(C);
    for (std::size_t j = 0; j < C; ++j) {
      double score = base[j];
      for (int c : previous) score += model.transition[static_cast<std::size_t>(c)][j];
      weights[j] = std::exp(s * score);
    }
    const int k = std::min<int>(1 + extra_categories(rng), cfg.category_count);
    std::vector<int> cats = sample_without_replacement(weights, k, rng);
    std::sort(cats.begin(), cats.end());

    std::set<int> codes;
    for (int c : cats) {
      const auto& kids = model.children[static_cast<std::size_t>(c)];
      std::vector<double> w;
      for (int u : kids) w.push_back(model.unique_weight[static_cast<std::size_t>(u)]);
      const int n = unit(rng) < kSecondUniqueProbability ? 2 : 1;
      for (int idx : sample_without_replacement(w, n, rng)) codes.insert(kids[static_cast<std::size_t>(idx)]);
    }

    Visit v;
    v.demographics = demo;
    v.codes.assign(codes.begin(), codes.end());
    const int length = std::min(cfg.max_note_length,
                                6 + 3 * static_cast<int>(cats.size()) + std::uniform_int_distribution<int>(0, 3)(rng));
    std::uniform_int_distribution<std::size_t> pick_cat(0, cats.size() - 1);
    std::uniform_int_distribution<int> pick_sig(0, kSignatureTokens - 1);
    std::uniform_int_distribution<int> any_tok(0, cfg.note_vocab_size - 1);
    for (int i = 0; i < length; ++i) {
      if (unit(rng) < kSignatureTokenProbability) {
        const auto& sig = model.signature[static_cast<std::size_t>(cats[pick_cat(rng)])];
        v.note.push_back(sig[static_cast<std::size_t>(pick_sig(rng))]);
      } else {
        v.note.push_back(any_tok(rng));
      }
    }
    rec.visits.push_back(std::move(v));
    previous = std::move(cats);
  }
  return rec;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  std::mt19937_64 rng(config.seed);
  ds.ontology = build_ontology(config.typing_count, config.category_count, config.unique_count, rng);
  const CohortModel model = build_cohort_model(config, ds.ontology, rng);
  ds.patients.reserve(static_cast<std::size_t>(config.patient_count));
  for (int i = 0; i < config.patient_count; ++i) {
    // Independent stream per patient so generation can be split by seed.
    std::mt19937_64 patient_rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
    ds.patients.push_back(generate_patient(config, model, i, patient_rng));
  }
  return ds;
}

// ------------------------------------------------------------------ encoding

EncodedVisit encode_missing(const Visit& visit, const DatasetConfig& config) {
  EncodedVisit e;
  e.present = visit.present;
  if (visit.present[Modality::kDemographics]) {
    e.demographics = visit.demographics;
  } else {
    e.demographics = config.demographic_cardinalities;
  }
  if (visit.present[Modality::kNote]) {
    e.note = visit.note;
  } else {
    e.note.assign(static_cast<std::size_t>(config.max_note_length), config.unk_token());
  }
  if (visit.present[Modality::kCodes]) {
    e.codes = visit.codes;
  } else {
    e.codes = {config.code_sentinel()};
  }
  return e;
}

// ------------------------------------------------------------------ serialization

void write_dataset(std::ostream& out, const Dataset& dataset) {
  json header{{"format", kFormatName},
              {"version", kFormatVersion},
              {"config", dataset.config},
              {"ontology",
               {{"category_of_unique", dataset.ontology.category_of_unique},
                {"typing_of_category", dataset.ontology.typing_of_category}}},
              {"sentinels",
               {{"code", dataset.config.code_sentinel()},
                {"demographics", dataset.config.demographic_cardinalities},
                {"note_unk", dataset.config.unk_token()}}},
              {"records", dataset.patients.size()}};
  out << header.dump() << '\n';
  for (const auto& r : dataset.patients) out << record_to_json(r).dump() << '\n';
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DatasetFormatError(line_no, "missing header");

  Dataset ds;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format").get<std::string>() != kFormatName) {
      throw DatasetFormatError(line_no, "unknown format tag");
    }
    if (header.at("version").get<int>() != kFormatVersion) {
      throw DatasetFormatError(line_no, "unsupported format version");
    }
    ds.config = header.at("config").get<DatasetConfig>();
    ds.config.validate();
    ds.ontology.typing_count = ds.config.typing_count;
    ds.ontology.category_count = ds.config.category_count;
    ds.ontology.unique_count = ds.config.unique_count;
    ds.ontology.category_of_unique = header.at("ontology").at("category_of_unique").get<std::vector<int>>();
    ds.ontology.typing_of_category = header.at("ontology").at("typing_of_category").get<std::vector<int>>();
    ds.ontology.validate();
    expected = header.at("records").get<std::size_t>();
  } catch (const DatasetFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetFormatError(line_no, std::string("malformed header: ") + e.what());
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    PatientRecord rec;
    json j;
    try {
      j = json::parse(line);
      rec.patient_id = j.at("id").get<std::int64_t>();
    } catch (const std::exception& e) {
      throw DatasetFormatError(line_no, std::string("truncated or malformed record: ") + e.what());
    }
    try {
      for (const auto& jv : j.at("visits")) {
        Visit v;
        v.demographics = jv.at("d").get<std::vector<int>>();
        v.note = jv.at("n").get<std::vector<int>>();
        v.codes = jv.at("c").get<std::vector<int>>();
        const auto p = jv.at("p").get<std::vector<int>>();
        if (p.size() != 3) throw std::invalid_argument("presence needs three flags");
        v.present.flags = {p[0] != 0, p[1] != 0, p[2] != 0};
        validate_visit(v, ds.config);
        rec.visits.push_back(std::move(v));
      }
      if (rec.visits.size() < 2) throw std::invalid_argument("fewer than two visits");
    } catch (const std::exception& e) {
      throw DatasetFormatError(line_no, "patient " + std::to_string(rec.patient_id) + ": " + e.what());
    }
    ds.patients.push_back(std::move(rec));
  }
  if (ds.patients.size() != expected) {
    throw DatasetFormatError(line_no, "expected " + std::to_string(expected) + " records, found " +
                                          std::to_string(ds.patients.size()));
  }
  return ds;
}

std::string serialize_dataset(const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  return out.str();
}

Dataset deserialize_dataset(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_dataset(in);
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset(in);
}

// ------------------------------------------------------------------ split

DatasetSplit split_dataset(const std::vector<PatientRecord>& records, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    check(r > 0.0, "split: ratios must be positive");
    total += r;
  }
  check(std::abs(total - 1.0) < 1e-9, "split: ratios must sum to 1");
  check(records.size() >= 3, "split: fewer patients than splits");

  const auto n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  auto n_valid = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_valid = std::clamp<std::size_t>(n_valid, 1, n - n_train - 1);

  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[order[i]];
    if (i < n_train) {
      s.train.push_back(r);
    } else if (i < n_train + n_valid) {
      s.valid.push_back(r);
    } else {
      s.test.push_back(r);
    }
  }
  return s;
}

// ------------------------------------------------------------------ stats

std::vector<int> categories_of(const std::vector<int>& codes, const Ontology& ontology) {
  std::set<int> out;
  for (int c : codes) out.insert(ontology.category_of_unique[static_cast<std::size_t>(c)]);
  return {out.begin(), out.end()};
}

std::vector<int> typings_of(const std::vector<int>& codes, const Ontology& ontology) {
  std::set<int> out;
  for (int c : codes) out.insert(ontology.typing_of_unique(c));
  return {out.begin(), out.end()};
}

DatasetStats compute_stats(const Dataset& dataset) {
  DatasetStats s;
  s.patients = dataset.patients.size();
  s.unique_codes = dataset.ontology.unique_count;
  s.category_codes = dataset.ontology.category_count;
  s.typing_codes = dataset.ontology.typing_count;
  double u = 0, c = 0, t = 0;
  for (const auto& p : dataset.patients) {
    s.visits += p.visits.size();
    s.max_visits_per_patient = std::max(s.max_visits_per_patient, p.visits.size());
    for (const auto& v : p.visits) {
      const auto cats = categories_of(v.codes, dataset.ontology);
      const auto typs = typings_of(v.codes, dataset.ontology);
      u += static_cast<double>(v.codes.size());
      c += static_cast<double>(cats.size());
      t += static_cast<double>(typs.size());
      s.max_unique_per_visit = std::max(s.max_unique_per_visit, v.codes.size());
      s.max_category_per_visit = std::max(s.max_category_per_visit, cats.size());
      s.max_typing_per_visit = std::max(s.max_typing_per_visit, typs.size());
    }
  }
  if (s.patients > 0) s.avg_visits_per_patient = static_cast<double>(s.visits) / static_cast<double>(s.patients);
  if (s.visits > 0) {
    const auto nv = static_cast<double>(s.visits);
    s.avg_unique_per_visit = u / nv;
    s.avg_category_per_visit = c / nv;
    s.avg_typing_per_visit = t / nv;
  }
  return s;
}

std::string format_stats(const DatasetStats& s) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "# of Patients\t" << s.patients << '\n'
      << "# of Unique Codes\t" << s.unique_codes << '\n'
      << "# of Category Codes\t" << s.category_codes << '\n'
      << "# of Typing Codes\t" << s.typing_codes << '\n'
      << "# of Visits\t" << s.visits << '\n'
      << "Avg / Max # Visit per Patient\t" << s.avg_visits_per_patient << " / " << s.max_visits_per_patient << '\n'
      << "Avg / Max # Unique Codes per Visit\t" << s.avg_unique_per_visit << " / " << s.max_unique_per_visit << '\n'
      << "Avg / Max # Category Codes per Visit\t" << s.avg_category_per_visit << " / " << s.max_category_per_visit
      << '\n'
      << "Avg / Max # Typing Codes per Visit\t" << s.avg_typing_per_visit << " / " << s.max_typing_per_visit << '\n';
  return out.str();
}

}  // namespace necho
