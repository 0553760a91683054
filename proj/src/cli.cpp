#include "necho/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "necho/checkpoint.hpp"
#include "necho/json_io.hpp"

namespace necho::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void append_line(const fs::path& path, const json& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for appending");
  out << line.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

struct Loaded {
  Dataset dataset;
  DatasetSplit split;
};

Loaded load_split(const RunConfig& config, const fs::path& out_dir) {
  Loaded l;
  l.dataset = load_dataset(resolve_path(out_dir, config.paths.dataset).string());
  l.split = split_dataset(l.dataset.patients, config.split_ratios, config.split_seed);
  return l;
}

const std::vector<PatientRecord>& split_named(const DatasetSplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw std::invalid_argument("unknown split " + name + " (expected train|valid|test)");
}

json test_line(const std::string& phase, const std::string& label, const MissingnessSpec& spec,
               std::uint64_t seed, int epoch, const EvalReport& report) {
  MetricsRecord r{phase, "test", epoch, report.top10, report.top20, report.loss_means};
  json line = metrics_line(r, label, spec, seed);
  line["per_pattern"] = report_json(report).at("per_pattern");
  return line;
}

std::string percent(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * x;
  return s.str();
}

}  // namespace

fs::path resolve_path(const fs::path& out_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : out_dir / p;
}

json metrics_line(const MetricsRecord& r, const std::string& label, const MissingnessSpec& spec, std::uint64_t seed) {
  json line{{"phase", r.phase},
            {"label", label},
            {"spec", spec.to_string()},
            {"seed", seed},
            {"epoch", r.epoch},
            {"split", r.split},
            {"mwcd", r.losses.mwcd},
            {"mwhd", r.losses.mwhd},
            {"tr2d", r.losses.tr2d},
            {"magd", r.losses.magd},
            {"ld", r.losses.ld},
            {"hrchy_ld", r.losses.hrchy_ld},
            {"dual_ld", r.losses.dual_ld},
            {"dual_ce", r.losses.dual_ce},
            {"total", r.losses.total}};
  if (r.split == "train") {
    line["top10"] = nullptr;
    line["top20"] = nullptr;
  } else {
    // Evaluation computes the task loss only.
    line["top10"] = r.top10;
    line["top20"] = r.top20;
    for (const char* key : {"mwcd", "mwhd", "tr2d", "magd", "ld", "hrchy_ld", "dual_ld", "total"}) line[key] = nullptr;
  }
  return line;
}

json report_json(const EvalReport& report) {
  json rows = json::array();
  for (int id = 1; id < 8; ++id) {
    const auto& row = report.per_pattern[static_cast<std::size_t>(id)];
    rows.push_back({{"pattern", Presence::from_pattern_id(id).label()},
                    {"pattern_id", id},
                    {"count", row.count},
                    {"top10", row.top10},
                    {"top20", row.top20}});
  }
  return json{{"top10", report.top10},
              {"top20", report.top20},
              {"evaluated", report.evaluated},
              {"excluded", report.excluded},
              {"dual_ce", report.loss_means.dual_ce},
              {"per_pattern", rows}};
}

std::string format_report(const EvalReport& report, const MissingnessSpec& spec) {
  std::ostringstream out;
  out << "spec " << spec.to_string() << "  targets " << report.evaluated << "  excluded " << report.excluded << '\n';
  out << std::left << std::setw(10) << "pattern" << std::right << std::setw(8) << "count" << std::setw(10) << "top-10"
      << std::setw(10) << "top-20" << '\n';
  out << std::left << std::setw(10) << "all" << std::right << std::setw(8) << report.evaluated << std::setw(10)
      << percent(report.top10) << std::setw(10) << percent(report.top20) << '\n';
  for (int id = 1; id < 8; ++id) {
    const auto& row = report.per_pattern[static_cast<std::size_t>(id)];
    out << std::left << std::setw(10) << Presence::from_pattern_id(id).label() << std::right << std::setw(8)
        << row.count << std::setw(10) << (row.count ? percent(row.top10) : "-") << std::setw(10)
        << (row.count ? percent(row.top20) : "-") << '\n';
  }
  return out.str();
}

void cmd_gen_data(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const Dataset dataset = generate_dataset(config.data);
  const fs::path path = resolve_path(out_dir, config.paths.dataset);
  save_dataset(path.string(), dataset);
  const std::string stats = format_stats(compute_stats(dataset));
  write_text(resolve_path(out_dir, config.paths.stats), stats);
  out << "wrote " << path.string() << '\n' << stats;
}

void cmd_train_teacher(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const Loaded l = load_split(config, out_dir);
  NechoModel teacher(config.model.model_for(l.dataset.config, FusionVariant::kCMAG));
  const fs::path metrics = resolve_path(out_dir, config.paths.metrics);
  const MissingnessSpec complete{};
  const std::uint64_t seed = config.train.seed;

  const TrainResult result =
      train_teacher(teacher, l.dataset, l.split.train, l.split.valid, config.train, config.loss,
                    [&](const MetricsRecord& r) { append_line(metrics, metrics_line(r, "teacher", complete, seed)); });

  const EvalReport at_complete = evaluate(teacher, l.split.test, l.dataset, complete, config.train.eval_seed,
                                          config.train.eval_batch_size);
  const EvalReport at_spec = evaluate(teacher, l.split.test, l.dataset, config.train.student_spec,
                                      config.train.eval_seed, config.train.eval_batch_size);
  append_line(metrics, test_line("teacher", "teacher", complete, seed, result.best_epoch, at_complete));
  append_line(metrics, test_line("teacher", "teacher", config.train.student_spec, seed, result.best_epoch, at_spec));

  const fs::path ckpt = resolve_path(out_dir, config.paths.teacher);
  save_checkpoint(ckpt.string(), teacher,
                  json{{"role", "teacher"},
                       {"config", to_flat_json(config)},
                       {"best_epoch", result.best_epoch},
                       {"epochs_run", result.epochs_run}});
  out << "teacher: " << result.epochs_run << " epochs, best epoch " << result.best_epoch << ", valid top-10 "
      << percent(result.best_valid_top10) << "\n"
      << "test (complete data)\n"
      << format_report(at_complete, complete) << "test (student spec)\n"
      << format_report(at_spec, config.train.student_spec) << "wrote " << ckpt.string() << '\n';
}

void cmd_distill(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  Checkpoint teacher;
  if (!config.no_kd) {
    const fs::path path = resolve_path(out_dir, config.paths.teacher);
    if (!fs::exists(path)) throw std::runtime_error("teacher checkpoint not found: " + path.string());
    teacher = load_checkpoint(path.string());
    if (!teacher.frozen) throw std::runtime_error("teacher checkpoint " + path.string() + " is not frozen");
    if (teacher.model->config().fusion != FusionVariant::kCMAG) {
      throw std::runtime_error("teacher checkpoint " + path.string() + " is not a CMAG model");
    }
  }
  const Loaded l = load_split(config, out_dir);
  NechoModel student(config.model.model_for(l.dataset.config, FusionVariant::kMAG));
  const fs::path metrics = resolve_path(out_dir, config.paths.metrics);
  const std::string label = derive_label(config);
  const MissingnessSpec& spec = config.train.student_spec;
  const std::uint64_t seed = config.train.seed;

  const TrainResult result =
      distill_student(teacher.model.get(), student, l.dataset, l.split.train, l.split.valid, config.train,
                      config.loss,
                      [&](const MetricsRecord& r) { append_line(metrics, metrics_line(r, label, spec, seed)); });
  student.freeze();
  const EvalReport report =
      evaluate(student, l.split.test, l.dataset, spec, config.train.eval_seed, config.train.eval_batch_size);
  append_line(metrics, test_line("student", label, spec, seed, result.best_epoch, report));

  const fs::path ckpt = resolve_path(out_dir, config.paths.student);
  save_checkpoint(ckpt.string(), student,
                  json{{"role", "student"},
                       {"label", label},
                       {"config", to_flat_json(config)},
                       {"best_epoch", result.best_epoch},
                       {"epochs_run", result.epochs_run}});
  out << "student [" << label << "]: " << result.epochs_run << " epochs, best epoch " << result.best_epoch
      << ", valid top-10 " << percent(result.best_valid_top10) << "\n"
      << "test\n"
      << format_report(report, spec) << "wrote " << ckpt.string() << '\n';
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& out_dir, const std::string& checkpoint,
                        const MissingnessSpec& spec, const std::string& split, std::ostream& out) {
  const fs::path path = resolve_path(out_dir, checkpoint);
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  const Checkpoint ck = load_checkpoint(path.string());
  const Loaded l = load_split(config, out_dir);
  const EvalReport report = evaluate(*ck.model, split_named(l.split, split), l.dataset, spec, config.train.eval_seed,
                                     config.train.eval_batch_size);
  json j = report_json(report);
  j["checkpoint"] = path.string();
  j["split"] = split;
  j["spec"] = spec.to_string();
  write_text(resolve_path(out_dir, config.paths.evaluation), j.dump(2) + "\n");
  out << format_report(report, spec);
  return report;
}

json cmd_report(const std::vector<std::string>& logs, const fs::path& json_path, std::ostream& out) {
  struct Cell {
    double top10 = 0.0;
    double top20 = 0.0;
    int runs = 0;
  };
  std::vector<std::string> labels;
  std::vector<std::string> specs;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  auto remember = [](std::vector<std::string>& v, const std::string& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };

  for (const auto& log : logs) {
    std::ifstream in(log);
    if (!in) throw std::runtime_error("cannot open metrics log " + log);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error(log + ":" + std::to_string(number) + ": not a JSON object");
      }
      if (j.value("split", "") != "test") continue;
      const std::string label = j.at("label").get<std::string>();
      const std::string spec = j.at("spec").get<std::string>();
      remember(labels, label);
      remember(specs, spec);
      Cell& c = cells[{label, spec}];
      c.top10 += j.at("top10").get<double>();
      c.top20 += j.at("top20").get<double>();
      ++c.runs;
    }
  }

  json grid{{"specs", specs}, {"rows", json::array()}};
  std::size_t width = 5;
  for (const auto& l : labels) width = std::max(width, l.size());
  out << std::left << std::setw(static_cast<int>(width)) << "label";
  for (const auto& s : specs) out << " | " << std::setw(19) << s;
  out << '\n' << std::setw(static_cast<int>(width)) << "";
  for (std::size_t i = 0; i < specs.size(); ++i) out << " | " << std::setw(9) << "top-10" << ' ' << std::setw(9) << "top-20";
  out << '\n';
  for (const auto& label : labels) {
    json row{{"label", label}, {"cells", json::object()}};
    out << std::setw(static_cast<int>(width)) << label;
    for (const auto& spec : specs) {
      const auto it = cells.find({label, spec});
      if (it == cells.end()) {
        out << " | " << std::setw(9) << "-" << ' ' << std::setw(9) << "-";
        continue;
      }
      const Cell& c = it->second;
      const double t10 = c.top10 / c.runs;
      const double t20 = c.top20 / c.runs;
      row["cells"][spec] = {{"top10", t10}, {"top20", t20}, {"runs", c.runs}};
      out << " | " << std::setw(9) << percent(t10) << ' ' << std::setw(9) << percent(t20);
    }
    out << '\n';
    grid["rows"].push_back(row);
  }
  if (!json_path.empty()) write_text(json_path, grid.dump(2) + "\n");
  return grid;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Teacher-student distillation for sequential diagnosis prediction under missing modalities", "necho"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir_flag;
  bool print_config = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "Flat JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "Override one key, key=value (repeatable)");
    sub->add_option("-o,--out-dir", out_dir_flag, std::string("Output directory (default $") + kOutDirEnv + " or .)");
    sub->add_flag("--print-config", print_config, "Print the resolved config as flat JSON and exit");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic cohort and its stats table");
  common(gen);
  auto* teach = app.add_subcommand("train-teacher", "Train and freeze the CMAG teacher on complete data");
  common(teach);
  bool no_kd = false;
  auto* distill = app.add_subcommand("distill", "Distill the frozen teacher into the MAG student");
  common(distill);
  distill->add_flag("--no-kd", no_kd, "Train the student on the task loss alone");
  std::string checkpoint;
  std::string spec_text;
  std::string split = "test";
  auto* eval = app.add_subcommand("evaluate", "Top-10/20 overall and per presence pattern");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (default paths.student)");
  eval->add_option("--spec", spec_text, "Missingness \"(p_D, p_N, p_C)\" (default: the spec key)");
  eval->add_option("--split", split, "train | valid | test")->check(CLI::IsMember({"train", "valid", "test"}));
  std::vector<std::string> logs;
  std::string report_json_path;
  auto* report = app.add_subcommand("report", "Grid of test top-10/20 by label and missingness spec");
  common(report);
  report->add_option("logs", logs, "Metrics logs")->required();
  report->add_option("--json", report_json_path, "Machine-readable grid (default paths.report)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (no_kd) sets.emplace_back("run.no_kd=true");
    const RunConfig config = resolve_run_config(config_file, sets);
    if (print_config) {
      out << to_flat_json(config).dump(2) << '\n';
      return 0;
    }
    fs::path out_dir = ".";
    if (!out_dir_flag.empty()) {
      out_dir = out_dir_flag;
    } else if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
      out_dir = env;
    }
    fs::create_directories(out_dir);

    if (*gen) {
      cmd_gen_data(config, out_dir, out);
    } else if (*teach) {
      cmd_train_teacher(config, out_dir, out);
    } else if (*distill) {
      cmd_distill(config, out_dir, out);
    } else if (*eval) {
      const MissingnessSpec spec = spec_text.empty() ? config.train.student_spec : MissingnessSpec::parse(spec_text);
      cmd_evaluate(config, out_dir, checkpoint.empty() ? config.paths.student : checkpoint, spec, split, out);
    } else if (*report) {
      const fs::path json_path =
          resolve_path(out_dir, report_json_path.empty() ? config.paths.report : report_json_path);
      cmd_report(logs, json_path, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace necho::cli
