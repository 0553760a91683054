#include "necho/json_io.hpp"

#include <stdexcept>
#include <string>

namespace necho {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw std::invalid_argument(where + ": unknown key \"" + key + "\"");
  }
}

void to_json(json& j, const DatasetConfig& c) {
  j = json{{"typing_count", c.typing_count},
           {"category_count", c.category_count},
           {"unique_count", c.unique_count},
           {"demographic_cardinalities", c.demographic_cardinalities},
           {"note_vocab_size", c.note_vocab_size},
           {"max_note_length", c.max_note_length},
           {"max_visits", c.max_visits},
           {"patient_count", c.patient_count},
           {"transition_sharpness", c.transition_sharpness},
           {"seed", c.seed}};
}

void from_json(const json& j, DatasetConfig& c) {
  reject_unknown_keys(j,
                      {"typing_count", "category_count", "unique_count", "demographic_cardinalities",
                       "note_vocab_size", "max_note_length", "max_visits", "patient_count",
                       "transition_sharpness", "seed"},
                      "dataset config");
  j.at("typing_count").get_to(c.typing_count);
  j.at("category_count").get_to(c.category_count);
  j.at("unique_count").get_to(c.unique_count);
  j.at("demographic_cardinalities").get_to(c.demographic_cardinalities);
  j.at("note_vocab_size").get_to(c.note_vocab_size);
  j.at("max_note_length").get_to(c.max_note_length);
  j.at("max_visits").get_to(c.max_visits);
  j.at("patient_count").get_to(c.patient_count);
  j.at("transition_sharpness").get_to(c.transition_sharpness);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"hidden_dim", c.hidden_dim},
           {"dropout", c.dropout},
           {"heads", c.heads},
           {"layers", c.layers},
           {"ffn_dim", c.ffn_dim},
           {"note_dim", c.note_dim},
           {"note_layers", c.note_layers},
           {"note_heads", c.note_heads},
           {"note_ffn_dim", c.note_ffn_dim},
           {"fusion", fusion_name(c.fusion)},
           {"init_seed", c.init_seed},
           {"unique_count", c.unique_count},
           {"category_count", c.category_count},
           {"typing_count", c.typing_count},
           {"demographic_cardinalities", c.demographic_cardinalities},
           {"note_vocab_size", c.note_vocab_size},
           {"max_note_length", c.max_note_length},
           {"max_visits", c.max_visits}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown_keys(j,
                      {"hidden_dim", "dropout", "heads", "layers", "ffn_dim", "note_dim", "note_layers",
                       "note_heads", "note_ffn_dim", "fusion", "init_seed", "unique_count", "category_count",
                       "typing_count", "demographic_cardinalities", "note_vocab_size", "max_note_length",
                       "max_visits"},
                      "model config");
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("dropout").get_to(c.dropout);
  j.at("heads").get_to(c.heads);
  j.at("layers").get_to(c.layers);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("note_dim").get_to(c.note_dim);
  j.at("note_layers").get_to(c.note_layers);
  j.at("note_heads").get_to(c.note_heads);
  j.at("note_ffn_dim").get_to(c.note_ffn_dim);
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  j.at("init_seed").get_to(c.init_seed);
  j.at("unique_count").get_to(c.unique_count);
  j.at("category_count").get_to(c.category_count);
  j.at("typing_count").get_to(c.typing_count);
  j.at("demographic_cardinalities").get_to(c.demographic_cardinalities);
  j.at("note_vocab_size").get_to(c.note_vocab_size);
  j.at("max_note_length").get_to(c.max_note_length);
  j.at("max_visits").get_to(c.max_visits);
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"lambda_mwd", w.lambda_mwd},         {"lambda_tr2d", w.lambda_tr2d},
           {"lambda_magd", w.lambda_magd},       {"lambda_dual_ld", w.lambda_dual_ld},
           {"lambda_dual_ce", w.lambda_dual_ce}, {"alpha", w.alpha},
           {"tau", w.tau},                       {"hrchy_weight", w.hrchy_weight},
           {"use_mwcd", w.use_mwcd},             {"use_hrchy_ld", w.use_hrchy_ld}};
}

void from_json(const json& j, LossWeights& w) {
  reject_unknown_keys(j,
                      {"lambda_mwd", "lambda_tr2d", "lambda_magd", "lambda_dual_ld", "lambda_dual_ce", "alpha",
                       "tau", "hrchy_weight", "use_mwcd", "use_hrchy_ld"},
                      "loss weights");
  j.at("lambda_mwd").get_to(w.lambda_mwd);
  j.at("lambda_tr2d").get_to(w.lambda_tr2d);
  j.at("lambda_magd").get_to(w.lambda_magd);
  j.at("lambda_dual_ld").get_to(w.lambda_dual_ld);
  j.at("lambda_dual_ce").get_to(w.lambda_dual_ce);
  j.at("alpha").get_to(w.alpha);
  j.at("tau").get_to(w.tau);
  j.at("hrchy_weight").get_to(w.hrchy_weight);
  j.at("use_mwcd").get_to(w.use_mwcd);
  j.at("use_hrchy_ld").get_to(w.use_hrchy_ld);
}

void to_json(json& j, const CurriculumSchedule& s) {
  j = json{{"e1", s.e1},
           {"e2", s.e2},
           {"teacher_early_menu", s.teacher_early_menu},
           {"teacher_late_menu", s.teacher_late_menu},
           {"distill_late_menu", s.distill_late_menu}};
}

void from_json(const json& j, CurriculumSchedule& s) {
  reject_unknown_keys(j, {"e1", "e2", "teacher_early_menu", "teacher_late_menu", "distill_late_menu"},
                      "curriculum schedule");
  j.at("e1").get_to(s.e1);
  j.at("e2").get_to(s.e2);
  j.at("teacher_early_menu").get_to(s.teacher_early_menu);
  j.at("teacher_late_menu").get_to(s.teacher_late_menu);
  j.at("distill_late_menu").get_to(s.distill_late_menu);
}

void to_json(json& j, const MissingnessSpec& s) { j = s.to_string(); }

void from_json(const json& j, MissingnessSpec& s) {
  if (j.is_string()) {
    s = MissingnessSpec::parse(j.get<std::string>());
  } else if (j.is_array() && j.size() == 3) {
    s = MissingnessSpec{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    s.validate();
  } else {
    throw std::invalid_argument("missingness: expected \"(p_D, p_N, p_C)\" or a 3-element array");
  }
}

}  // namespace necho
