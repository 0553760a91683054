#pragma once

// Teacher training with curriculum erasing, offline distillation into the
// student, AdamW with per-group learning rates, early stopping and top-k
// evaluation.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "necho/distillation.hpp"
#include "necho/ehr_data.hpp"
#include "necho/missingness.hpp"
#include "necho/model.hpp"

namespace necho {

struct TrainConfig {
  int batch_size = 4;
  int max_epochs = 100;
  int patience = 5;
  double learning_rate = 1e-4;
  double note_learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 7;
  MissingnessSpec student_spec = {0.5, 0.5, 0.5};
  CurriculumSchedule schedule;
  EraseOptions erase;
  bool per_batch_erase_draw = true;  // one erase probability per batch, else per record
  bool erase_in_teacher_training = true;
  bool erase_in_distillation = true;
  bool all_prefixes = false;  // every visit t >= 1 becomes a target, not only the last
  int eval_batch_size = 64;
  std::uint64_t eval_seed = 2024;
  Tr2dSelection tr2d_selection = Tr2dSelection::kRandom;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, long step)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  int epoch() const { return epoch_; }
  long step() const { return step_; }

 private:
  int epoch_;
  long step_;
};

// Decoupled-weight-decay Adam with one learning rate per parameter group.
class AdamW {
 public:
  AdamW(nn::ParameterStore& params, const TrainConfig& config);
  void step();
  double learning_rate_for(const nn::Parameter& p) const;

 private:
  nn::ParameterStore& params_;
  TrainConfig config_;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
  long t_ = 0;
};

struct TopkResult {
  double accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // targets with an empty truth set
};

// Mean over targets of |top-k ∩ truth| / min(k, |truth|). `ranked` lists
// category ids best-first.
TopkResult compute_topk_accuracy(std::span<const std::vector<int>> ranked,
                                 std::span<const std::vector<int>> truth, int k);

// Category ids ordered by descending logit, ties by id.
std::vector<int> rank_logits(const ag::Matrix& logits, ag::Index row);

struct PatternRow {
  std::size_t count = 0;
  double top10 = 0.0;
  double top20 = 0.0;
};

struct EvalReport {
  double top10 = 0.0;
  double top20 = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  // Indexed by the presence pattern id (1..7) of each patient's most recent
  // input visit; entry 0 is unused.
  std::array<PatternRow, 8> per_pattern{};
  LossBreakdown loss_means;
  int epoch = -1;
};

EvalReport evaluate(const NechoModel& model, std::span<const PatientRecord> records, const Dataset& dataset,
                    const MissingnessSpec& spec, std::uint64_t seed, int batch_size = 64);

// One line of the metrics stream.
struct MetricsRecord {
  std::string phase;  // teacher | student
  std::string split;  // train | valid | test
  int epoch = 0;
  double top10 = 0.0;
  double top20 = 0.0;
  LossBreakdown losses;
};
using MetricsSink = std::function<void(const MetricsRecord&)>;

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_valid_top10 = 0.0;
  bool early_stopped = false;
  std::vector<EvalReport> validation;  // one per epoch
  std::vector<LossBreakdown> train_losses;
};

// Trains a CMAG model on complete data with curriculum erasing and the task
// loss, early-stopping on complete-data validation top-10. The model is left
// at its best-validation parameters and frozen.
TrainResult train_teacher(NechoModel& teacher, const Dataset& dataset, std::span<const PatientRecord> train,
                          std::span<const PatientRecord> valid, const TrainConfig& config,
                          const LossWeights& weights, const MetricsSink& sink = {});

// Offline distillation of a frozen teacher into the student. The student sees
// inputs corrupted by `config.student_spec`; the teacher sees the complete
// batch, erased per the distillation curriculum. A null teacher trains the
// student on the task loss alone (the no-distillation baseline).
TrainResult distill_student(const NechoModel* teacher, NechoModel& student, const Dataset& dataset,
                            std::span<const PatientRecord> train, std::span<const PatientRecord> valid,
                            const TrainConfig& config, const LossWeights& weights, const MetricsSink& sink = {});

// Expands each record into one record per target visit (visits 0..t).
std::vector<PatientRecord> expand_prefixes(std::span<const PatientRecord> records);

}  // namespace necho
