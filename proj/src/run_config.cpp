#include "necho/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "necho/json_io.hpp"

namespace necho {

using json = nlohmann::json;

namespace {

const char* erase_mode_name(EraseMode m) { return m == EraseMode::kSinglePoint ? "single_point" : "per_visit"; }

EraseMode parse_erase_mode(const std::string& s) {
  if (s == "single_point") return EraseMode::kSinglePoint;
  if (s == "per_visit") return EraseMode::kPerVisit;
  throw ConfigError("train.erase_mode: expected single_point|per_visit, got " + s);
}

json model_json(const ArchitectureConfig& a) {
  return json{{"hidden_dim", a.hidden_dim},
              {"dropout", a.dropout},
              {"heads", a.heads},
              {"layers", a.layers},
              {"ffn_dim", a.ffn_dim},
              {"note_dim", a.note_dim},
              {"note_layers", a.note_layers},
              {"note_heads", a.note_heads},
              {"note_ffn_dim", a.note_ffn_dim},
              {"teacher_init_seed", a.teacher_init_seed},
              {"student_init_seed", a.student_init_seed}};
}

void read_model(const json& j, ArchitectureConfig& a) {
  j.at("hidden_dim").get_to(a.hidden_dim);
  j.at("dropout").get_to(a.dropout);
  j.at("heads").get_to(a.heads);
  j.at("layers").get_to(a.layers);
  j.at("ffn_dim").get_to(a.ffn_dim);
  j.at("note_dim").get_to(a.note_dim);
  j.at("note_layers").get_to(a.note_layers);
  j.at("note_heads").get_to(a.note_heads);
  j.at("note_ffn_dim").get_to(a.note_ffn_dim);
  j.at("teacher_init_seed").get_to(a.teacher_init_seed);
  j.at("student_init_seed").get_to(a.student_init_seed);
}

json train_json(const TrainConfig& t) {
  return json{{"batch_size", t.batch_size},
              {"max_epochs", t.max_epochs},
              {"patience", t.patience},
              {"learning_rate", t.learning_rate},
              {"note_learning_rate", t.note_learning_rate},
              {"weight_decay", t.weight_decay},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_epsilon", t.adam_epsilon},
              {"seed", t.seed},
              {"per_batch_erase_draw", t.per_batch_erase_draw},
              {"erase_in_teacher_training", t.erase_in_teacher_training},
              {"erase_in_distillation", t.erase_in_distillation},
              {"erase_mode", erase_mode_name(t.erase.mode)},
              {"erase_points_per_record", t.erase.points_per_record},
              {"all_prefixes", t.all_prefixes},
              {"eval_batch_size", t.eval_batch_size},
              {"eval_seed", t.eval_seed},
              {"tr2d_selection", tr2d_selection_name(t.tr2d_selection)}};
}

void read_train(const json& j, TrainConfig& t) {
  j.at("batch_size").get_to(t.batch_size);
  j.at("max_epochs").get_to(t.max_epochs);
  j.at("patience").get_to(t.patience);
  j.at("learning_rate").get_to(t.learning_rate);
  j.at("note_learning_rate").get_to(t.note_learning_rate);
  j.at("weight_decay").get_to(t.weight_decay);
  j.at("beta1").get_to(t.beta1);
  j.at("beta2").get_to(t.beta2);
  j.at("adam_epsilon").get_to(t.adam_epsilon);
  j.at("seed").get_to(t.seed);
  j.at("per_batch_erase_draw").get_to(t.per_batch_erase_draw);
  j.at("erase_in_teacher_training").get_to(t.erase_in_teacher_training);
  j.at("erase_in_distillation").get_to(t.erase_in_distillation);
  t.erase.mode = parse_erase_mode(j.at("erase_mode").get<std::string>());
  j.at("erase_points_per_record").get_to(t.erase.points_per_record);
  j.at("all_prefixes").get_to(t.all_prefixes);
  j.at("eval_batch_size").get_to(t.eval_batch_size);
  j.at("eval_seed").get_to(t.eval_seed);
  t.tr2d_selection = parse_tr2d_selection(j.at("tr2d_selection").get<std::string>());
}

json paths_json(const PathConfig& p) {
  return json{{"dataset", p.dataset},       {"stats", p.stats},       {"teacher", p.teacher},
              {"student", p.student},       {"metrics", p.metrics},   {"evaluation", p.evaluation},
              {"report", p.report}};
}

void read_paths(const json& j, PathConfig& p) {
  j.at("dataset").get_to(p.dataset);
  j.at("stats").get_to(p.stats);
  j.at("teacher").get_to(p.teacher);
  j.at("student").get_to(p.student);
  j.at("metrics").get_to(p.metrics);
  j.at("evaluation").get_to(p.evaluation);
  j.at("report").get_to(p.report);
}

// Sections in output order. "spec" is the only undotted key.
json nested_of(const RunConfig& c) {
  json n;
  n["data"] = c.data;
  n["model"] = model_json(c.model);
  n["train"] = train_json(c.train);
  n["schedule"] = c.train.schedule;
  n["loss"] = c.loss;
  n["spec"] = c.train.student_spec;
  n["split"] = json{{"ratios", c.split_ratios}, {"seed", c.split_seed}};
  n["paths"] = paths_json(c.paths);
  n["run"] = json{{"label", c.label}, {"no_kd", c.no_kd}};
  return n;
}

RunConfig config_of(const json& n) {
  RunConfig c;
  n.at("data").get_to(c.data);
  read_model(n.at("model"), c.model);
  read_train(n.at("train"), c.train);
  n.at("schedule").get_to(c.train.schedule);
  n.at("loss").get_to(c.loss);
  n.at("spec").get_to(c.train.student_spec);
  n.at("split").at("ratios").get_to(c.split_ratios);
  n.at("split").at("seed").get_to(c.split_seed);
  read_paths(n.at("paths"), c.paths);
  n.at("run").at("label").get_to(c.label);
  n.at("run").at("no_kd").get_to(c.no_kd);
  return c;
}

bool same_kind(const json& expected, const json& given) {
  if (expected.is_boolean()) return given.is_boolean();
  if (expected.is_number_integer()) return given.is_number_integer() && (!expected.is_number_unsigned() || given >= 0);
  if (expected.is_number()) return given.is_number();
  if (expected.is_array()) return given.is_array();
  return given.is_string();
}

}  // namespace

ModelConfig ArchitectureConfig::model_for(const DatasetConfig& data, FusionVariant fusion) const {
  ModelConfig m = ModelConfig::for_dataset(data, fusion);
  m.hidden_dim = hidden_dim;
  m.dropout = dropout;
  m.heads = heads;
  m.layers = layers;
  m.ffn_dim = ffn_dim;
  m.note_dim = note_dim;
  m.note_layers = note_layers;
  m.note_heads = note_heads;
  m.note_ffn_dim = note_ffn_dim;
  m.init_seed = fusion == FusionVariant::kCMAG ? teacher_init_seed : student_init_seed;
  return m;
}

void RunConfig::validate() const {
  data.validate();
  model.model_for(data, FusionVariant::kCMAG).validate();
  train.validate();
  loss.validate();
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0)) throw ConfigError("split.ratios: every ratio must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split.ratios: ratios must sum to 1");
}

json to_flat_json(const RunConfig& config) {
  json flat = json::object();
  const json nested = nested_of(config);
  for (const auto& [section, value] : nested.items()) {
    if (!value.is_object()) {
      flat[section] = value;
      continue;
    }
    for (const auto& [key, v] : value.items()) flat[section + "." + key] = v;
  }
  return flat;
}

RunConfig from_flat_json(const json& flat) {
  if (!flat.is_object()) throw ConfigError("run config: expected a JSON object of dotted keys");
  json nested = nested_of(RunConfig{});
  for (const auto& [key, value] : flat.items()) {
    const auto dot = key.find('.');
    json* slot = nullptr;
    if (dot == std::string::npos) {
      if (nested.contains(key) && !nested[key].is_object()) slot = &nested[key];
    } else {
      const std::string section = key.substr(0, dot);
      const std::string field = key.substr(dot + 1);
      if (nested.contains(section) && nested[section].is_object() && nested[section].contains(field)) {
        slot = &nested[section][field];
      }
    }
    if (slot == nullptr) throw ConfigError("unknown config key \"" + key + "\"");
    // The missingness spec also accepts a 3-element array.
    const bool spec_array = key == "spec" && value.is_array();
    if (!spec_array && !same_kind(*slot, value)) {
      throw ConfigError("config key \"" + key + "\": expected a value like " + slot->dump() + ", got " +
                        value.dump());
    }
    *slot = value;
  }
  try {
    return config_of(nested);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

std::pair<std::string, json> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got \"" + text + "\"");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

RunConfig resolve_run_config(const std::string& file, const std::vector<std::string>& overrides) {
  json flat = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file);
    json parsed = json::parse(in, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) throw ConfigError(file + ": not a JSON object");
    flat = std::move(parsed);
  }
  for (const auto& text : overrides) {
    auto [key, value] = parse_assignment(text);
    flat[key] = std::move(value);
  }
  RunConfig config = from_flat_json(flat);
  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config;
}

std::string derive_label(const RunConfig& c) {
  if (!c.label.empty()) return c.label;
  if (c.no_kd) return "no_kd";
  std::vector<std::string> parts;
  if (c.loss.lambda_mwd == 0.0) {
    parts.emplace_back("w/o mwd");
  } else if (!c.loss.use_mwcd) {
    parts.emplace_back("w/o mwcd");
  }
  if (c.loss.lambda_tr2d == 0.0) parts.emplace_back("w/o tr2d");
  if (c.loss.lambda_magd == 0.0) parts.emplace_back("w/o magd");
  if (c.loss.lambda_dual_ld == 0.0) {
    parts.emplace_back("w/o dual_ld");
  } else if (!c.loss.use_hrchy_ld) {
    parts.emplace_back("w/o hrchy_ld");
  }
  if (c.train.tr2d_selection == Tr2dSelection::kAll) parts.emplace_back("tr2d not random");
  if (!c.train.erase_in_teacher_training && !c.train.erase_in_distillation) {
    parts.emplace_back("erase not for both");
  } else if (!c.train.erase_in_teacher_training) {
    parts.emplace_back("erase only during distillation");
  } else if (!c.train.erase_in_distillation) {
    parts.emplace_back("erase only during teacher training");
  }
  if (parts.empty()) return "full";
  std::ostringstream out;
  for (std::size_t i = 0; i < parts.size(); ++i) out << (i ? ", " : "") << parts[i];
  return out.str();
}

}  // namespace necho
