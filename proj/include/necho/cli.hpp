#pragma once

// Subcommands behind the `necho` executable: gen-data, train-teacher,
// distill, evaluate, report.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "necho/run_config.hpp"
#include "necho/training.hpp"

namespace necho::cli {

// Relative paths resolve against the output directory: `--out-dir`, else
// $NECHO_OUT_DIR, else the working directory.
inline constexpr const char* kOutDirEnv = "NECHO_OUT_DIR";

std::filesystem::path resolve_path(const std::filesystem::path& out_dir, const std::string& path);

void cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);
void cmd_train_teacher(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);
void cmd_distill(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);
EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& out_dir, const std::string& checkpoint,
                        const MissingnessSpec& spec, const std::string& split, std::ostream& out);
// Returns the machine-readable grid; the text grid goes to `out`.
nlohmann::json cmd_report(const std::vector<std::string>& logs, const std::filesystem::path& json_path,
                          std::ostream& out);

// One metrics line. Train rows carry null top-k values.
nlohmann::json metrics_line(const MetricsRecord& record, const std::string& label, const MissingnessSpec& spec,
                            std::uint64_t seed);
nlohmann::json report_json(const EvalReport& report);
std::string format_report(const EvalReport& report, const MissingnessSpec& spec);

// Parses and dispatches; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace necho::cli
