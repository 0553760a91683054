// Acceptance gate. Prints one PASS/FAIL line per criterion; with no
// arguments runs all eight, otherwise only the listed criterion numbers.
// Exit status is nonzero when any selected criterion fails.

#include <malloc.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "necho/checkpoint.hpp"
#include "necho/cli.hpp"
#include "necho/distillation.hpp"
#include "necho/missingness.hpp"
#include "necho/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace necho;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

Targets random_targets(const test::BundleShape& s, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  Targets t{ag::Matrix::Zero(s.patients, s.categories), ag::Matrix::Zero(s.patients, s.typings)};
  for (ag::Index i = 0; i < t.categories.size(); ++i) t.categories.data()[i] = coin(rng);
  for (ag::Index i = 0; i < t.typings.size(); ++i) t.typings.data()[i] = coin(rng);
  return t;
}

std::vector<bool> random_mask(std::size_t rows, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(0.8);
  std::vector<bool> mask(rows);
  for (std::size_t i = 0; i < rows; ++i) mask[i] = keep(rng);
  mask[rng() % rows] = true;
  return mask;
}

// ------------------------------------------------------------------ 1

Verdict loss_identity() {
  const auto start = Clock::now();
  const Dataset data = generate_dataset(DatasetConfig{});
  double worst = 0.0;
  int cases = 0;
  for (FusionVariant fusion : {FusionVariant::kCMAG, FusionVariant::kMAG}) {
    NechoModel model(ModelConfig::for_dataset(data.config, fusion));
    int taken = 0;
    for (const auto& record : data.patients) {
      if (record.visits.size() != 2 || taken >= 40) continue;  // one input visit: K = 1
      const std::vector<PatientRecord> batch{record};
      const ModelInput input = build_input(batch, data.config, data.ontology);
      ag::NoGradGuard guard;
      const auto t = model.forward(input, {});
      const auto s = model.forward(input, {});
      std::mt19937_64 rng(cases);
      for (double v : {mwcd_loss(t, s, 0.1, 0.25).item(), mwhd_loss(t, s).item(), mwd_loss(t, s, 0.1, 0.25).item(),
                       tr2d_loss(t, s, Tr2dSelection::kAll, rng).item(),
                       tr2d_loss(t, s, Tr2dSelection::kRandom, rng).item(), magd_loss(t, s).item(),
                       ld_loss(t, s).item(), hrchy_ld_loss(t, s).item(), dual_ld_loss(t, s).item()}) {
        worst = std::max(worst, std::abs(v));
      }
      const auto parts = total_loss(&t, s, Targets{input.category_targets, input.typing_targets}, LossWeights{},
                                    Tr2dSelection::kRandom, rng)
                             .parts;
      for (double v : {parts.mwcd, parts.mwhd, parts.tr2d, parts.magd, parts.dual_ld}) {
        worst = std::max(worst, std::abs(v));
      }
      ++taken;
      ++cases;
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-9 && elapsed < 60.0,
          "max |component| " + fmt(worst) + " over " + std::to_string(cases) + " single-visit batches (tol 1e-9), " + fmt(elapsed) + " s (< 60)"};
}

// ------------------------------------------------------------------ 2

Verdict oracle_equivalence() {
  std::mt19937_64 rng(2);
  std::map<std::string, double> worst{{"mwcd", 0.0}, {"tr2d", 0.0}, {"dual_ld", 0.0}, {"topk", 0.0}};
  const int instances = 200;
  for (int trial = 0; trial < instances; ++trial) {
    test::BundleShape shape;
    shape.rows = 2 + static_cast<ag::Index>(rng() % 10);
    shape.patients = 1 + static_cast<ag::Index>(rng() % 4);
    shape.hidden = 4 + static_cast<ag::Index>(rng() % 16);
    const auto tf = test::random_fields(shape, rng);
    const auto sf = test::random_fields(shape, rng);
    const auto mask = random_mask(static_cast<std::size_t>(shape.rows), rng);
    const auto t = test::constant_bundle(tf, mask);
    const auto s = test::constant_bundle(sf, mask);
    const double tau = 0.05 + 0.5 * std::uniform_real_distribution<double>()(rng);
    const double alpha = std::uniform_real_distribution<double>()(rng);
    worst["mwcd"] = std::max(worst["mwcd"], std::abs(mwcd_loss(t, s, tau, alpha).item() -
                                                     oracle::mwcd(tf, sf, tau, alpha, mask)));
    worst["tr2d"] = std::max(worst["tr2d"], std::abs(tr2d_loss(t, s, Tr2dSelection::kAll, rng).item() -
                                                     oracle::tr2d_all(tf, sf, mask)));
    worst["dual_ld"] = std::max(worst["dual_ld"], std::abs(dual_ld_loss(t, s).item() - oracle::dual_ld(tf, sf)));

    const int n = 1 + static_cast<int>(rng() % 20);
    const int classes = 5 + static_cast<int>(rng() % 40);
    const ag::Matrix logits = test::random_matrix(n, classes, rng);
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int>> ranked, truth;
    for (int i = 0; i < n; ++i) {
      scores.emplace_back(logits.row(i).data(), logits.row(i).data() + classes);
      ranked.push_back(rank_logits(logits, i));
      std::set<int> tset;
      for (int j = static_cast<int>(rng() % 8); j > 0; --j) tset.insert(static_cast<int>(rng() % classes));
      truth.emplace_back(tset.begin(), tset.end());
    }
    for (int k : {10, 20}) {
      worst["topk"] = std::max(worst["topk"], std::abs(compute_topk_accuracy(ranked, truth, k).accuracy -
                                                       oracle::topk(scores, truth, k)));
    }
  }
  bool pass = true;
  std::string detail;
  for (const auto& [name, err] : worst) {
    pass = pass && err <= 1e-6;
    detail += name + " " + fmt(err) + ", ";
  }
  return {pass, detail + "max abs error over " + std::to_string(instances) + " instances each (tol 1e-6)"};
}

// ------------------------------------------------------------------ 3

Verdict gradients() {
  std::mt19937_64 rng(3);
  test::BundleShape shape;
  shape.rows = 7;
  shape.patients = 3;
  const auto tf = test::random_fields(shape, rng);
  const auto sf = test::random_fields(shape, rng);
  const auto mask = std::vector<bool>{true, true, false, true, true, true, false};
  const auto teacher = test::constant_bundle(tf, mask);
  const Targets targets = random_targets(shape, rng);

  using Component = std::function<ag::Var(const RepresentationBundle&)>;
  const std::vector<std::pair<std::string, Component>> components{
      {"mwcd", [&](const RepresentationBundle& s) { return mwcd_loss(teacher, s, 0.1, 0.25); }},
      {"mwhd", [&](const RepresentationBundle& s) { return mwhd_loss(teacher, s); }},
      {"tr2d(all)", [&](const RepresentationBundle& s) {
         std::mt19937_64 r(1);
         return tr2d_loss(teacher, s, Tr2dSelection::kAll, r);
       }},
      {"tr2d(random)", [&](const RepresentationBundle& s) {
         std::mt19937_64 r(1);
         return tr2d_loss(teacher, s, Tr2dSelection::kRandom, r);
       }},
      {"magd", [&](const RepresentationBundle& s) { return magd_loss(teacher, s); }},
      {"ld", [&](const RepresentationBundle& s) { return ld_loss(teacher, s); }},
      {"hrchy_ld", [&](const RepresentationBundle& s) { return hrchy_ld_loss(teacher, s); }},
      {"dual_ce", [&](const RepresentationBundle& s) { return dual_ce_loss(s, targets, 0.1); }},
      {"total", [&](const RepresentationBundle& s) {
         std::mt19937_64 r(1);
         return total_loss(&teacher, s, targets, LossWeights{}, Tr2dSelection::kRandom, r).total;
       }},
  };
  bool pass = true;
  std::string detail;
  for (const auto& [name, fn] : components) {
    const double err = test::gradient_error(
        [&](const std::vector<ag::Var>& v) { return fn(test::bundle_from(v, mask)); }, sf, rng, 20, 1e-4);
    pass = pass && err < 1e-4;
    detail += name + " " + fmt(err, 2) + ", ";
  }
  return {pass, detail + "max rel error, 20 probes per field, h 1e-4 (tol 1e-4)"};
}

// ------------------------------------------------------------------ 4

Verdict missingness() {
  const MissingnessSpec spec{0.5, 0.5, 0.5};
  const Dataset data = generate_dataset(DatasetConfig{});
  std::mt19937_64 rng(4);
  std::array<long, 8> patterns{};
  std::array<double, 3> missing{};
  long visits = 0;
  while (visits < 100000) {
    for (const auto& record : data.patients) {
      const auto c = apply_missingness(record, spec, rng);
      for (std::size_t t = 0; t + 1 < c.visits.size(); ++t) {
        const auto& p = c.visits[t].present;
        ++patterns[static_cast<std::size_t>(p.pattern_id())];
        for (std::size_t m = 0; m < 3; ++m) missing[m] += p.flags[m] ? 0.0 : 1.0;
        ++visits;
      }
      if (visits >= 100000) break;
    }
  }
  // Enumerated: P(missing m | not all missing) over the 8 Bernoulli masks.
  std::array<double, 3> expected{};
  double kept = 0.0;
  for (int mask = 0; mask < 7; ++mask) {  // bit set = missing; mask 7 (all missing) rejected
    const double w = 0.125;
    kept += w;
    for (int m = 0; m < 3; ++m) expected[static_cast<std::size_t>(m)] += (mask >> m & 1) ? w : 0.0;
  }
  int seen = 0;
  for (int id = 1; id < 8; ++id) seen += patterns[static_cast<std::size_t>(id)] > 0;
  double worst = 0.0;
  std::string rates;
  for (std::size_t m = 0; m < 3; ++m) {
    const double observed = missing[m] / static_cast<double>(visits);
    worst = std::max(worst, std::abs(observed - expected[m] / kept));
    rates += fmt(observed, 4) + " ";
  }
  const bool pass = seen == 7 && patterns[0] == 0 && worst <= 0.01;
  return {pass, std::to_string(visits) + " visits, " + std::to_string(seen) + " patterns, all-missing " +
                    std::to_string(patterns[0]) + ", marginals " + rates + "vs " + fmt(expected[0] / kept, 4) +
                    ", max dev " + fmt(worst, 2) + " (tol 0.01)"};
}

// ------------------------------------------------------------------ 5

Verdict curriculum() {
  const CurriculumSchedule s;
  std::mt19937_64 rng(5);
  const int draws = 30000;
  double worst = 0.0;
  bool support_ok = true;
  auto check = [&](int epoch, ErasePhase phase, const std::vector<double>& menu) {
    std::map<double, int> counts;
    for (int i = 0; i < draws; ++i) counts[sample_erase_probability(epoch, phase, s, rng)]++;
    if (counts.size() != menu.size()) support_ok = false;
    for (double p : menu) {
      const auto it = counts.find(p);
      if (it == counts.end()) {
        support_ok = false;
        continue;
      }
      worst = std::max(worst, std::abs(it->second / double(draws) - 1.0 / static_cast<double>(menu.size())));
    }
  };
  for (int e = 0; e < 5; ++e) check(e, ErasePhase::kTeacherTraining, {0.0, 0.1});
  for (int e : {5, 6, 10, 50}) check(e, ErasePhase::kTeacherTraining, {0.0, 0.1, 0.2});
  for (int e = 0; e < 10; ++e) check(e, ErasePhase::kDistillation, {0.0});
  for (int e : {10, 11, 50}) check(e, ErasePhase::kDistillation, {0.0, 0.1});
  return {support_ok && worst <= 0.02,
          "e1 = " + std::to_string(s.e1) + ", e2 = " + std::to_string(s.e2) + ", menus exact: " +
              (support_ok ? "yes" : "no") + ", max frequency dev " + fmt(worst, 2) + " at 30000 draws (tol 0.02)"};
}

// ------------------------------------------------------------------ 6

Verdict frozen_teacher(const fs::path& work) {
  DatasetConfig dc;
  dc.patient_count = 200;
  const Dataset data = generate_dataset(dc);
  const auto split = split_dataset(data.patients, {0.8, 0.1, 0.1}, 6);
  ModelConfig mc = ModelConfig::for_dataset(dc, FusionVariant::kCMAG);
  mc.hidden_dim = 32;
  mc.layers = 1;
  mc.ffn_dim = 64;
  NechoModel teacher(mc);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 2;
  train_teacher(teacher, data, split.train, split.valid, tc, LossWeights{});
  const fs::path ckpt = work / "frozen_teacher.ckpt";
  save_checkpoint(ckpt.string(), teacher);
  const auto before = teacher.parameters().digest();

  // Past e2 so the distillation-phase erasing is exercised too.
  tc.max_epochs = 12;
  tc.patience = 11;
  ModelConfig sc = mc;
  sc.fusion = FusionVariant::kMAG;
  sc.init_seed = 2;
  NechoModel student(sc);
  const auto result = distill_student(&teacher, student, data, split.train, split.valid, tc, LossWeights{});
  const auto after = teacher.parameters().digest();
  const auto reloaded = load_checkpoint(ckpt.string()).model->parameters().digest();
  bool no_grad = true;
  for (const auto& p : teacher.parameters().all()) no_grad = no_grad && p.var.grad().size() == 0;
  std::ostringstream detail;
  detail << std::hex << "digest " << before << " before, " << after << " after, " << reloaded << " on disk"
         << std::dec << ", " << result.epochs_run << " distillation epochs, teacher grads "
         << (no_grad ? "none" : "present");
  return {before == after && after == reloaded && no_grad, detail.str()};
}

// ------------------------------------------------------------------ 7

struct E2eSettings {
  int seeds = 5;
  int max_epochs = 18;
  int patience = 5;
};

Verdict directional(const fs::path& work, const E2eSettings& settings) {
  const auto start = Clock::now();
  const Dataset data = generate_dataset(DatasetConfig{});
  const auto split = split_dataset(data.patients, RunConfig{}.split_ratios, RunConfig{}.split_seed);
  const std::vector<MissingnessSpec> specs{{0.5, 0.5, 0.5}, {0.8, 0.2, 0.8}};
  std::map<std::string, int> wins;
  nlohmann::json summary = nlohmann::json::array();

  for (int seed = 1; seed <= settings.seeds; ++seed) {
    TrainConfig tc;
    tc.max_epochs = settings.max_epochs;
    tc.patience = settings.patience;
    tc.seed = static_cast<std::uint64_t>(seed);
    ModelConfig teacher_config = ModelConfig::for_dataset(data.config, FusionVariant::kCMAG);
    teacher_config.init_seed = mix_seed(static_cast<std::uint64_t>(seed), 1);
    NechoModel teacher(teacher_config);
    const auto tr = train_teacher(teacher, data, split.train, split.valid, tc, LossWeights{});
    const double teacher_complete = evaluate(teacher, split.test, data, {}, tc.eval_seed).top10;

    for (const auto& spec : specs) {
      tc.student_spec = spec;
      ModelConfig student_config = ModelConfig::for_dataset(data.config, FusionVariant::kMAG);
      student_config.init_seed = mix_seed(static_cast<std::uint64_t>(seed), 2);
      NechoModel kd(student_config);
      NechoModel no_kd(student_config);
      const auto kr = distill_student(&teacher, kd, data, split.train, split.valid, tc, LossWeights{});
      const auto nr = distill_student(nullptr, no_kd, data, split.train, split.valid, tc, LossWeights{});
      const double kd_top10 = evaluate(kd, split.test, data, spec, tc.eval_seed).top10;
      const double no_kd_top10 = evaluate(no_kd, split.test, data, spec, tc.eval_seed).top10;
      const double teacher_at_spec = evaluate(teacher, split.test, data, spec, tc.eval_seed).top10;
      wins[spec.to_string()] += kd_top10 >= no_kd_top10;
      summary.push_back({{"seed", seed},
                         {"spec", spec.to_string()},
                         {"kd_top10", kd_top10},
                         {"no_kd_top10", no_kd_top10},
                         {"teacher_complete_top10", teacher_complete},
                         {"teacher_at_spec_top10", teacher_at_spec},
                         {"teacher_epochs", tr.epochs_run},
                         {"kd_epochs", kr.epochs_run},
                         {"no_kd_epochs", nr.epochs_run},
                         {"elapsed_s", seconds_since(start)}});
      std::cout << "  seed " << seed << " " << spec.to_string() << ": kd " << fmt(kd_top10, 4) << " vs no-kd "
                << fmt(no_kd_top10, 4) << " (teacher complete " << fmt(teacher_complete, 4) << ", at spec "
                << fmt(teacher_at_spec, 4) << "), " << fmt(seconds_since(start), 4) << " s" << std::endl;
    }
  }
  const double elapsed = seconds_since(start);
  std::ofstream(work / "acceptance_e2e.json") << summary.dump(2) << '\n';
  bool pass = elapsed < 5400.0;
  std::string detail;
  for (const auto& spec : specs) {
    const int w = wins[spec.to_string()];
    pass = pass && w >= 4;
    detail += spec.to_string() + " kd >= no-kd in " + std::to_string(w) + "/" + std::to_string(settings.seeds) + ", ";
  }
  return {pass, detail + "need >= 4/5 each; " + fmt(elapsed / 60.0, 3) + " min (< 90)"};
}

// ------------------------------------------------------------------ 8

Verdict ablation_grid(const fs::path& work) {
  const fs::path dir = work / "ablation";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> base = {"data.patient_count=120", "model.hidden_dim=32", "model.layers=1",
                                   "model.ffn_dim=64",       "train.max_epochs=2",  "train.patience=1",
                                   "spec=(0.2, 0.2, 0.2)"};
  std::ostringstream sink;
  const RunConfig base_config = resolve_run_config("", base);
  cli::cmd_gen_data(base_config, dir, sink);
  cli::cmd_train_teacher(base_config, dir, sink);

  const std::vector<std::pair<std::string, std::string>> toggles{{"full", ""},
                                                                 {"w/o mwcd", "loss.use_mwcd=false"},
                                                                 {"w/o tr2d", "loss.lambda_tr2d=0"},
                                                                 {"w/o magd", "loss.lambda_magd=0"},
                                                                 {"w/o hrchy_ld", "loss.use_hrchy_ld=false"},
                                                                 {"tr2d not random", "train.tr2d_selection=all"}};
  std::vector<std::string> logs;
  for (const auto& [label, set] : toggles) {
    auto sets = base;
    if (!set.empty()) sets.push_back(set);
    const std::string log = "metrics_" + std::to_string(logs.size()) + ".jsonl";
    sets.push_back("paths.metrics=" + log);
    sets.push_back("paths.student=student_" + std::to_string(logs.size()) + ".ckpt");
    const RunConfig config = resolve_run_config("", sets);
    if (derive_label(config) != label) return {false, "toggle " + set + " labelled " + derive_label(config)};
    cli::cmd_distill(config, dir, sink);
    logs.push_back((dir / log).string());
  }
  std::ostringstream text;
  const auto grid = cli::cmd_report(logs, dir / "ablation_report.json", text);
  std::set<std::string> rows;
  for (const auto& row : grid.at("rows")) {
    if (row.at("cells").contains("(0.2, 0.2, 0.2)")) rows.insert(row.at("label").get<std::string>());
  }
  bool grid_ok = true;
  for (const auto& [label, set] : toggles) grid_ok = grid_ok && rows.count(label) == 1;

  // Isolation: on a fixed real batch, a toggle changes no logged component
  // and moves the total by exactly the removed weighted term.
  const Checkpoint teacher = load_checkpoint((dir / "teacher.ckpt").string());
  const Dataset data = load_dataset((dir / "dataset.jsonl").string());
  NechoModel student(base_config.model.model_for(data.config, FusionVariant::kMAG));
  std::mt19937_64 corrupt(8);
  std::vector<PatientRecord> s_batch, t_batch;
  for (std::size_t i = 0; i < 8; ++i) {
    t_batch.push_back(data.patients[i]);
    s_batch.push_back(apply_missingness(data.patients[i], {0.5, 0.5, 0.5}, corrupt));
  }
  const ModelInput s_in = build_input(s_batch, data.config, data.ontology);
  const ModelInput t_in = build_input(t_batch, data.config, data.ontology);
  ag::NoGradGuard guard;
  const auto t = teacher.model->forward(t_in, {});
  const auto s = student.forward(s_in, {});
  const Targets targets{s_in.category_targets, s_in.typing_targets};
  auto run = [&](const RunConfig& c) {
    std::mt19937_64 r(99);
    return total_loss(&t, s, targets, c.loss, c.train.tr2d_selection, r).parts;
  };
  const LossBreakdown full = run(base_config);
  const LossWeights w = base_config.loss;
  double worst = 0.0;
  for (const auto& [label, set] : toggles) {
    if (set.empty()) continue;
    auto sets = base;
    sets.push_back(set);
    const LossBreakdown p = run(resolve_run_config("", sets));
    double removed = 0.0;
    if (label == "w/o mwcd") removed = w.lambda_mwd * full.mwcd;
    if (label == "w/o tr2d") removed = w.lambda_tr2d * full.tr2d;
    if (label == "w/o magd") removed = w.lambda_magd * full.magd;
    if (label == "w/o hrchy_ld") removed = w.lambda_dual_ld * full.hrchy_ld;
    const bool tr2d_changes = label == "tr2d not random";
    for (auto [a, b] : {std::pair{p.mwcd, full.mwcd}, {p.mwhd, full.mwhd}, {p.magd, full.magd}, {p.ld, full.ld},
                        {p.hrchy_ld, full.hrchy_ld}, {p.dual_ld, full.dual_ld}, {p.dual_ce, full.dual_ce}}) {
      worst = std::max(worst, std::abs(a - b));
    }
    if (tr2d_changes) {
      removed = w.lambda_tr2d * (full.tr2d - p.tr2d);
    } else {
      worst = std::max(worst, std::abs(p.tr2d - full.tr2d));
    }
    worst = std::max(worst, std::abs((full.total - p.total) - removed));
  }
  return {grid_ok && worst <= 1e-9, "grid rows " + std::to_string(rows.size()) + "/6 written to " +
                                        (dir / "ablation_report.json").string() + ", max cross-component change " +
                                        fmt(worst) + " (tol 1e-9)"};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  std::set<int> selected;
  E2eSettings e2e;
  fs::path work = fs::temp_directory_path() / "necho_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--seeds" && i + 1 < argc) {
      e2e.seeds = std::stoi(argv[++i]);
    } else if (a == "--max-epochs" && i + 1 < argc) {
      e2e.max_epochs = std::stoi(argv[++i]);
    } else if (a == "--patience" && i + 1 < argc) {
      e2e.patience = std::stoi(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      selected.insert(std::stoi(a));
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"loss identity", loss_identity},
      {"oracle equivalence", oracle_equivalence},
      {"gradients", gradients},
      {"missingness patterns", missingness},
      {"curriculum schedule", curriculum},
      {"frozen teacher", [&] { return frozen_teacher(work); }},
      {"directional end-to-end", [&] { return directional(work, e2e); }},
      {"ablation grid", [&] { return ablation_grid(work); }},
  };
  int failures = 0;
  for (int n : selected) {
    if (n < 1 || n > 8) {
      std::cerr << "unknown criterion " << n << '\n';
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
