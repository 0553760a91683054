#pragma once

// Checkpoint archive: a magic line, a JSON header line (model config, frozen
// flag, parameter digest, free-form metadata), then one binary record per
// named parameter array.

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "necho/model.hpp"

namespace necho {

struct Checkpoint {
  std::unique_ptr<NechoModel> model;
  bool frozen = false;
  nlohmann::json metadata;
};

void save_checkpoint(const std::string& path, const NechoModel& model, const nlohmann::json& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace necho
