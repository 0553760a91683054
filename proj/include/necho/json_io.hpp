#pragma once

// nlohmann::json conversions for the configuration structs. Readers are
// strict: every field is required and unknown fields are rejected.

#include <nlohmann/json.hpp>

#include "necho/distillation.hpp"
#include "necho/ehr_data.hpp"
#include "necho/missingness.hpp"
#include "necho/model.hpp"

namespace necho {

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

void to_json(nlohmann::json& j, const CurriculumSchedule& s);
void from_json(const nlohmann::json& j, CurriculumSchedule& s);

void to_json(nlohmann::json& j, const MissingnessSpec& s);
void from_json(const nlohmann::json& j, MissingnessSpec& s);

// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace necho
